//! Direct factorizations of `A - sI` for the shift-inverted basis blocks.
//!
//! The matrix is reordered with reverse Cuthill–McKee and factored as a band
//! matrix with partial pivoting (the `gbtf2` scheme). Dense matrices simply
//! become a full band.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use crate::block::Block;
use crate::error::{shape_err, Error, Result};
use crate::sparse::{reverse_cuthill_mckee, CsrMatrix};

/// LU factors of `P (A - sI) Pᵀ` in band storage.
#[derive(Debug, Clone)]
pub struct ShiftedFactorization {
    shift: f64,
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    // perm[new] = old
    perm: Vec<usize>,
}

impl ShiftedFactorization {
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidths of the reordered matrix.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Bytes held by the factors.
    pub fn storage_bytes(&self) -> usize {
        self.ab.len() * std::mem::size_of::<f64>() + (self.ipiv.len() + self.perm.len()) * std::mem::size_of::<usize>()
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.ab[c * self.ldab + r]
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let kv = self.kl + self.ku;
        let n = self.n;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = self.kl.min(n - 1 - j);
                for k in 1..=km {
                    b[j + k] -= self.at(kv + k, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.at(kv, j);
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for (i, bi) in b[lo..j].iter_mut().enumerate().map(|(d, bi)| (lo + d, bi)) {
                    *bi -= self.at(kv + i - j, j) * bj;
                }
            }
        }
    }
}

/// Factors `A - sI`.
pub fn factor_shifted(a: &CsrMatrix, shift: f64) -> Result<ShiftedFactorization> {
    if !shift.is_finite() {
        return Err(Error::InvalidInput(format!("shift {shift} is not finite")));
    }
    let n = a.n();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let rcm = reverse_cuthill_mckee(a);
    let reordered = a.permute_symmetric(&rcm);
    let (perm, b) = if bandwidth_sum(&reordered) < bandwidth_sum(a) {
        (rcm, reordered)
    } else {
        ((0..n).collect(), a.clone())
    };
    let (kl, ku) = b.bandwidths();
    let kv = kl + ku;
    let ldab = 2 * kl + ku + 1;
    let mut ab = vec![0.0; ldab * n];
    let mut scale = shift.abs();
    for r in 0..n {
        for (c, v) in b.row(r) {
            ab[c * ldab + kv + r - c] = v;
        }
        ab[r * ldab + kv] -= shift;
    }
    for c in 0..n {
        for r in 0..ldab {
            scale = scale.max(ab[c * ldab + r].abs());
        }
    }
    let tiny = f64::EPSILON * scale;

    let mut ipiv = vec![0usize; n];
    let mut ju = 0usize;
    for j in 0..n {
        let km = kl.min(n - 1 - j);
        let col = j * ldab;
        let mut jp = 0;
        let mut best = ab[col + kv].abs();
        for k in 1..=km {
            let v = ab[col + kv + k].abs();
            if v > best {
                best = v;
                jp = k;
            }
        }
        ipiv[j] = j + jp;
        if best <= tiny {
            return Err(Error::SingularShift { shift });
        }
        ju = ju.max((j + ku + jp).min(n - 1));
        if jp != 0 {
            for c in j..=ju {
                ab.swap(c * ldab + kv + j - c, c * ldab + kv + j + jp - c);
            }
        }
        let pivot = ab[col + kv];
        for k in 1..=km {
            ab[col + kv + k] /= pivot;
        }
        for c in j + 1..=ju {
            let u = ab[c * ldab + kv + j - c];
            if u == 0.0 {
                continue;
            }
            for k in 1..=km {
                let l = ab[col + kv + k];
                ab[c * ldab + kv + j + k - c] -= l * u;
            }
        }
    }
    Ok(ShiftedFactorization {
        shift,
        n,
        kl,
        ku,
        ldab,
        ab,
        ipiv,
        perm,
    })
}

fn bandwidth_sum(a: &CsrMatrix) -> usize {
    let (kl, ku) = a.bandwidths();
    kl + ku
}

/// Solves `(A - sI) X = B` column by column.
pub fn solve_shifted(f: &ShiftedFactorization, b: &Block) -> Result<Block> {
    if b.rows() != f.n {
        return Err(shape_err(format!("{} rows", f.n), format!("{} rows", b.rows())));
    }
    let mut out = Block::zeros(b.rows(), b.cols());
    let mut work = vec![0.0; f.n];
    for j in 0..b.cols() {
        let src = b.column(j);
        for (new, &old) in f.perm.iter().enumerate() {
            work[new] = src[old];
        }
        f.solve_in_place(&mut work);
        let dst = out.column_mut(j);
        for (new, &old) in f.perm.iter().enumerate() {
            dst[old] = work[new];
        }
    }
    Ok(out)
}

/// Factorizations of one matrix keyed by the exact bit pattern of the shift.
///
/// Evicts the oldest entry once the byte budget is exceeded, but always keeps
/// at least two factorizations. Not shared across threads.
#[derive(Debug)]
pub struct FactorCache {
    entries: HashMap<u64, Arc<ShiftedFactorization>>,
    order: VecDeque<u64>,
    budget_bytes: usize,
    hits: usize,
    misses: usize,
}

impl Default for FactorCache {
    fn default() -> Self {
        Self::with_budget(256 << 20)
    }
}

impl FactorCache {
    pub fn with_budget(budget_bytes: usize) -> Self {
        Self {
            entries: HashMap::new(),
            order: VecDeque::new(),
            budget_bytes,
            hits: 0,
            misses: 0,
        }
    }

    pub fn get_or_factor(&mut self, a: &CsrMatrix, shift: f64) -> Result<Arc<ShiftedFactorization>> {
        let key = shift.to_bits();
        if let Some(f) = self.entries.get(&key) {
            self.hits += 1;
            return Ok(Arc::clone(f));
        }
        self.misses += 1;
        let f = Arc::new(factor_shifted(a, shift)?);
        let bytes = f.storage_bytes();
        while self.entries.len() >= 2 && (self.entries.len() + 1) * bytes > self.budget_bytes {
            match self.order.pop_front() {
                Some(old) => {
                    self.entries.remove(&old);
                }
                None => break,
            }
        }
        self.entries.insert(key, Arc::clone(&f));
        self.order.push_back(key);
        Ok(f)
    }

    pub fn solve(&mut self, a: &CsrMatrix, shift: f64, b: &Block) -> Result<Block> {
        let f = self.get_or_factor(a, shift)?;
        solve_shifted(&f, b)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(hits, misses)`.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits, self.misses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag23() -> CsrMatrix {
        CsrMatrix::from_diagonal(&[2.0, 3.0]).unwrap()
    }

    #[test]
    fn diagonal_solve() {
        let f = factor_shifted(&diag23(), 1.0).unwrap();
        let x = solve_shifted(&f, &Block::from_column_slice(2, 1, &[1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 0.5]);
        let f0 = factor_shifted(&diag23(), 0.0).unwrap();
        let x = solve_shifted(&f0, &Block::from_column_slice(2, 1, &[2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0]);
        assert_eq!(solve_shifted(&f0, &Block::zeros(2, 1)).unwrap(), Block::zeros(2, 1));
    }

    #[test]
    fn exact_eigenvalue_is_singular() {
        match factor_shifted(&diag23(), 2.0) {
            Err(Error::SingularShift { shift }) => assert_eq!(shift, 2.0),
            other => panic!("expected singular shift, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_rows() {
        let f = factor_shifted(&diag23(), 0.0).unwrap();
        assert!(solve_shifted(&f, &Block::zeros(3, 1)).is_err());
    }

    #[test]
    fn random_diagonally_dominant_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let mut trip = Vec::new();
        for i in 0..n {
            let mut off = 0.0;
            for _ in 0..4 {
                let j = rng.random_range(0..n);
                if j != i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    off += v.abs();
                    trip.push((i, j, v));
                }
            }
            trip.push((i, i, off + 1.0 + rng.random_range(0.0..1.0)));
        }
        let a = CsrMatrix::from_triplets(n, &trip).unwrap();
        let b = Block::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0)).unwrap();
        for s in [0.0, -0.3, 0.4] {
            let f = factor_shifted(&a, s).unwrap();
            let x = solve_shifted(&f, &b).unwrap();
            let r = a.mul_block_shifted(s, &x).unwrap().sub(&b).unwrap();
            assert!(r.frobenius_norm() <= 1e-10 * b.frobenius_norm());
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0,1],[1,0]] needs a row swap
        let a = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let f = factor_shifted(&a, 0.0).unwrap();
        let x = solve_shifted(&f, &Block::from_column_slice(2, 1, &[3.0, 5.0]).unwrap()).unwrap();
        assert_eq!(x.as_slice(), &[5.0, 3.0]);
    }

    #[test]
    fn dense_nonsymmetric_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = nalgebra::DMatrix::from_fn(12, 12, |_, _| rng.random_range(-1.0..1.0));
        let a = CsrMatrix::from_dense(&d).unwrap();
        let b = Block::from_fn(12, 2, |_, _| rng.random_range(-1.0..1.0)).unwrap();
        let x = solve_shifted(&factor_shifted(&a, 0.25).unwrap(), &b).unwrap();
        let shifted = &d - nalgebra::DMatrix::identity(12, 12) * 0.25;
        let oracle = shifted.lu().solve(b.as_matrix()).unwrap();
        assert!((x.as_matrix() - oracle).norm() < 1e-10);
    }

    #[test]
    fn cache_reuses_and_evicts() {
        let a = diag23();
        let mut cache = FactorCache::with_budget(0);
        let f1 = cache.get_or_factor(&a, 0.5).unwrap();
        let f2 = cache.get_or_factor(&a, 0.5).unwrap();
        assert!(Arc::ptr_eq(&f1, &f2));
        assert_eq!(cache.stats(), (1, 1));
        cache.get_or_factor(&a, 0.25).unwrap();
        cache.get_or_factor(&a, 0.75).unwrap();
        assert_eq!(cache.len(), 2);
        // -0.0 and 0.0 are distinct keys
        cache.get_or_factor(&a, 0.0).unwrap();
        cache.get_or_factor(&a, -0.0).unwrap();
        assert_eq!(cache.stats().1, 5);
    }
}
