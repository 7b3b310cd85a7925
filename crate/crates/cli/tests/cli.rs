use std::process::{Command, Output};

/// Runs the binary with whitespace-separated arguments.
fn run(args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gera"))
        .args(args.split_whitespace())
        .output()
        .unwrap()
}

/// Header plus rows, split on commas.
fn table(out: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(String::from).collect::<Vec<_>>());
    let header = lines.next().expect("header row");
    let rows: Vec<_> = lines.collect();
    for r in &rows {
        assert_eq!(r.len(), header.len());
    }
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn matfun_reports_oracle_error() {
    let out = run("matfun --problem toeplitz --n 300 --p 3 --f sqrt --method gera --dim 20 --shifts linear:0.1:10");
    let (h, rows) = table(&out);
    assert_eq!(rows.len(), 1);
    let rel: f64 = rows[0][col(&h, "rel_error")].parse().unwrap();
    assert!(rel <= 1e-9, "{rel}");
    assert_eq!(rows[0][col(&h, "dim")], "20");
    assert_eq!(rows[0][col(&h, "method")], "GERA");
}

#[test]
fn matfun_is_deterministic() {
    let args = "matfun --problem blockdiag --n 100 --p 2 --f log --method sga --seed 3";
    let strip_time = |o: Output| {
        let (h, rows) = table(&o);
        let t = col(&h, "time_s");
        rows.into_iter()
            .map(|mut r| {
                r.remove(t);
                r
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip_time(run(args)), strip_time(run(args)));
}

#[test]
fn shifted_converges_every_sigma() {
    let out = run("shifted --problem cfdd-L1 --n0 20 --p 3 --sigmas uniform:-5:0:6 --m 5 --tol 1e-10");
    let (h, rows) = table(&out);
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r[col(&h, "converged")], "true");
        assert!(r[col(&h, "residual")].parse::<f64>().unwrap() <= 1e-10);
    }
}

#[test]
fn expode_rows_per_time() {
    let out = run("expode --problem cfdd-L3 --n0 20 --t 1/10,1 --tol 1e-8");
    let (h, rows) = table(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][col(&h, "p")], "3");
    for r in &rows {
        assert_eq!(r[col(&h, "converged")], "true");
    }
    let d0: usize = rows[0][col(&h, "dim")].parse().unwrap();
    let d1: usize = rows[1][col(&h, "dim")].parse().unwrap();
    assert!(d1 <= d0);
}

#[test]
fn bench_table1_small() {
    let (h, rows) = table(&run("bench --table 1 --n0 15 --p 2"));
    assert_eq!(rows.len(), 6);
    let cycles = |m: &str, method: &str| -> usize {
        rows.iter()
            .find(|r| r[col(&h, "m")] == m && r[col(&h, "method")] == method)
            .unwrap()[col(&h, "cycles")]
        .parse()
        .unwrap()
    };
    assert!(cycles("10", "GFOM") >= cycles("10", "GERAM"));
}

#[test]
fn invalid_input_fails() {
    assert!(!run("matfun --problem toeplitz --f sqrt").status.success());
    assert!(!run("matfun --problem nope --n 10 --f sqrt").status.success());
    assert!(!run("matfun --problem toeplitz --n 10 --f cosh").status.success());
    assert!(!run("shifted --problem cfdd-L1 --n0 5 --sigmas linear:1")
        .status
        .success());
    assert!(!run("bench --table 3").status.success());
    assert!(!run("matfun --problem mtx:/nonexistent/a.mtx --f sqrt").status.success());
    assert!(!run("frobnicate").status.success());
}
