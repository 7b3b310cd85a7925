//! Matrix Market coordinate files (real and integer fields).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let f = File::open(path)?;
    parse_matrix_market(BufReader::new(f))
}

/// Symmetric and skew-symmetric storage is expanded; duplicates are summed.
pub fn parse_matrix_market(reader: impl BufRead) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(
            1,
            "expected '%%MatrixMarket matrix <format> <field> <symmetry>'",
        ));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format {:?}", tokens[2])));
    }
    match tokens[3].as_str() {
        "real" | "double" | "integer" => {}
        other => return Err(parse_err(1, format!("unsupported field {other:?}"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry {other:?}"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut trip = Vec::new();
    let mut read = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "size line needs rows, columns and entry count"));
                }
                let nums: Vec<usize> = fields
                    .iter()
                    .map(|t| t.parse::<usize>().map_err(|e| parse_err(lineno, e.to_string())))
                    .collect::<Result<_>>()?;
                if nums[0] != nums[1] {
                    return Err(parse_err(
                        lineno,
                        format!("matrix is {}x{}, not square", nums[0], nums[1]),
                    ));
                }
                size = Some((nums[0], nums[2]));
                trip.reserve(if symmetry == Symmetry::General {
                    nums[2]
                } else {
                    2 * nums[2]
                });
            }
            Some((n, nnz)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "entry needs row, column and value"));
                }
                let i: usize = fields[0].parse().map_err(|_| parse_err(lineno, "bad row index"))?;
                let j: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| parse_err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) outside 1..={n}")));
                }
                if !v.is_finite() {
                    return Err(parse_err(lineno, "non-finite value"));
                }
                read += 1;
                if read > nnz {
                    return Err(parse_err(lineno, format!("more than {nnz} entries")));
                }
                let (r, c) = (i - 1, j - 1);
                trip.push((r, c, v));
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric if r != c => trip.push((c, r, v)),
                    Symmetry::SkewSymmetric if r == c => {
                        return Err(parse_err(lineno, "diagonal entry in skew-symmetric file"))
                    }
                    Symmetry::SkewSymmetric => trip.push((c, r, -v)),
                    Symmetry::Symmetric => {}
                }
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if read != nnz {
        return Err(parse_err(0, format!("expected {nnz} entries, found {read}")));
    }
    CsrMatrix::from_triplets(n, &trip)
}

/// Writes every stored entry as a general real coordinate file.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &CsrMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market_to(&mut w, a)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_to(w: &mut impl Write, a: &CsrMatrix) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n(), a.n(), a.nnz())?;
    for r in 0..a.n() {
        for (c, v) in a.row(r) {
            // LowerExp prints the shortest representation that reads back exactly
            writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<CsrMatrix> {
        parse_matrix_market(s.as_bytes())
    }

    #[test]
    fn single_entry() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n% c\n2 2 1\n2 1 -3.5\n").unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(1, 0), -3.5);
    }

    #[test]
    fn symmetric_expansion_and_duplicates() {
        let a = parse("%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 1 1\n3 2 4\n2 1 1\n").unwrap();
        assert_eq!(a, a.transpose());
        assert_eq!(a.get(0, 1), 2.0);
        assert_eq!(a.nnz(), 5);
    }

    #[test]
    fn skew_and_integer() {
        let a = parse("%%MatrixMarket matrix coordinate integer skew-symmetric\n2 2 1\n2 1 3\n").unwrap();
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(0, 1), -3.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").is_err());
        assert!(parse("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n").is_err());
        assert!(parse("%%MatrixMarket matrix array real general\n1 1\n1\n").is_err());
        assert!(parse("%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n").is_err());
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n").is_err());
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 3 0\n").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let a = CsrMatrix::from_triplets(
            3,
            &[
                (0, 0, 0.1),
                (0, 2, -1.0 / 3.0),
                (1, 1, 1e-300),
                (2, 0, 6.02e23),
                (2, 2, f64::MIN_POSITIVE),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_matrix_market_to(&mut buf, &a).unwrap();
        let b = parse_matrix_market(buf.as_slice()).unwrap();
        assert_eq!(a, b);
    }
}
