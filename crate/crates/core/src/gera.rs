//! The global extended-rational Arnoldi process.
//!
//! Step `j` appends two F-orthonormal blocks: `V_{2j+1}` from `A V_{2j-1}` and
//! `V_{2j+2}` from `(A - s_j I)^{-1} V_{2j}`. The shift `s_1` also produces
//! `V_2` from `V`, so `s_1` appears twice among the poles of the space.
//!
//! The projected matrix `T_{2m} = 𝒱ᵀ ⋄ A𝒱` is rebuilt from the Gram–Schmidt
//! coefficients without further products with `A`; [`direct_projection`]
//! computes it the expensive way for verification.

use nalgebra::DMatrix;

use crate::block::{dot, Block};
use crate::error::{shape_err, Error, Result};
use crate::factor::FactorCache;
use crate::sparse::CsrMatrix;

/// Normalizers below this fraction of the raw block norm end the process.
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Coefficients of `V = α11 V_1` and `(A - s_1 I)^{-1} V = α12 V_1 + α22 V_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

/// Where and how the process stopped early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakdown {
    /// Usable subspace dimension.
    pub dim: usize,
    /// The usable subspace is `A`-invariant, so projections on it are exact.
    pub exact: bool,
    /// Relative size of the vanished normalizer.
    pub ratio: f64,
}

/// The F-orthonormal blocks produced so far.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    blocks: Vec<Block>,
}

impl KrylovBasis {
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("empty basis".into()));
        }
        let shape = blocks[0].shape();
        if let Some(b) = blocks.iter().find(|b| b.shape() != shape) {
            return Err(shape_err(
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", b.rows(), b.cols()),
            ));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n(&self) -> usize {
        self.blocks[0].rows()
    }

    pub fn p(&self) -> usize {
        self.blocks[0].cols()
    }

    /// `𝒱ᵀ ⋄ 𝒱` over the first `k` blocks.
    pub fn gram(&self, k: usize) -> Result<DMatrix<f64>> {
        let k = k.min(self.blocks.len());
        crate::block::diamond_product(&self.blocks[..k], &self.blocks[..k])
    }

    /// Largest deviation of the Gram matrix from the identity, split into
    /// (off-diagonal, diagonal) parts.
    pub fn orthonormality_defect(&self) -> (f64, f64) {
        let g = self.gram(self.blocks.len()).expect("basis blocks share a shape");
        let mut off: f64 = 0.0;
        let mut diag: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i == j {
                    diag = diag.max((g[(i, j)] - 1.0).abs());
                } else {
                    off = off.max(g[(i, j)].abs());
                }
            }
        }
        (off, diag)
    }
}

/// Recursion coefficients of a (possibly partial) run.
#[derive(Debug, Clone)]
pub struct ProjectionData {
    // h_cols[k] holds column k+1 of H̃, one entry per block existing when it was computed
    h_cols: Vec<Vec<f64>>,
    alpha: Alpha,
    shifts: Vec<f64>,
    norm_v: f64,
    steps: usize,
    breakdown: Option<Breakdown>,
}

impl ProjectionData {
    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    /// `s_1, ..., s_m`; `s_j` produced `V_{2j+2}` (and `s_1` also `V_2`).
    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn norm_v(&self) -> f64 {
        self.norm_v
    }

    /// Completed odd half-steps; `T_{2m}` is available for `m = steps`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn breakdown(&self) -> Option<Breakdown> {
        self.breakdown
    }

    /// Dimension of the subspace the projection lives on.
    pub fn dim(&self) -> usize {
        match self.breakdown {
            Some(b) => b.dim,
            None => 2 * self.steps,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.breakdown.is_some_and(|b| b.exact)
    }

    /// `h_{i,j}` with 1-based indices; zero outside the computed pattern.
    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.h_cols
            .get(j - 1)
            .and_then(|c| c.get(i - 1))
            .copied()
            .unwrap_or(0.0)
    }

    /// The coefficient matrix H̃ with one row per basis block.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let cols = self.h_cols.len();
        let rows = self.h_cols.iter().map(Vec::len).max().unwrap_or(0);
        DMatrix::from_fn(rows, cols, |i, j| self.h(i + 1, j + 1))
    }

    /// Poles of the space spanned by the first `2k` blocks: `s_1, s_1, s_2, ..., s_{k-1}`.
    pub fn poles(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(k);
        if k == 0 {
            return out;
        }
        out.push(self.shifts[0]);
        out.extend(self.shifts.iter().take(k - 1));
        out
    }
}

/// `T_{2m}` and the coupling row `τ = [t_{2m+1,2m-1}, t_{2m+1,2m}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMatrix {
    pub t: DMatrix<f64>,
    /// Zero when the subspace is invariant.
    pub tau: [f64; 2],
}

impl ProjectedMatrix {
    pub fn dim(&self) -> usize {
        self.t.nrows()
    }
}

/// Incremental process over `(A, V)`; shifts may be chosen between steps.
pub struct GeraProcess<'a> {
    a: &'a CsrMatrix,
    cache: &'a mut FactorCache,
    blocks: Vec<Block>,
    pd: ProjectionData,
    even_done: bool,
}

impl<'a> GeraProcess<'a> {
    /// Builds `V_1 = V/‖V‖_F` and `V_2` from `(A - s_1 I)^{-1} V`.
    pub fn new(a: &'a CsrMatrix, v: &Block, s1: f64, cache: &'a mut FactorCache) -> Result<Self> {
        if v.rows() != a.n() {
            return Err(shape_err(format!("{} rows", a.n()), format!("{} rows", v.rows())));
        }
        check_shift(s1)?;
        let a11 = v.frobenius_norm();
        if a11 == 0.0 {
            return Err(Error::InvalidInput("starting block is zero".into()));
        }
        let v1 = v.scaled(1.0 / a11);
        let mut w = cache.solve(a, s1, v)?;
        let raw = w.frobenius_norm();
        let c = cgs2(&mut w, std::slice::from_ref(&v1));
        let a12 = c[0];
        let a22 = w.frobenius_norm();
        let mut pd = ProjectionData {
            h_cols: Vec::new(),
            alpha: Alpha { a11, a12, a22 },
            shifts: vec![s1],
            norm_v: a11,
            steps: 0,
            breakdown: None,
        };
        let mut blocks = vec![v1];
        if a22 <= BREAKDOWN_TOL * raw {
            pd.breakdown = Some(Breakdown {
                dim: 1,
                exact: true,
                ratio: a22 / raw,
            });
        } else {
            w.scale_mut(1.0 / a22);
            blocks.push(w);
        }
        Ok(Self {
            a,
            cache,
            blocks,
            pd,
            even_done: true,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn data(&self) -> &ProjectionData {
        &self.pd
    }

    pub fn steps(&self) -> usize {
        self.pd.steps
    }

    pub fn is_stopped(&self) -> bool {
        self.pd.breakdown.is_some()
    }

    /// True when the next call must be [`extend_even`](Self::extend_even).
    pub fn awaiting_even(&self) -> bool {
        !self.even_done
    }

    /// The shift the next even half-step must use, if it is forced (`s_1` at step 1).
    pub fn forced_shift(&self) -> Option<f64> {
        (self.pd.steps == 1 && !self.even_done).then(|| self.pd.shifts[0])
    }

    fn stopped_err(&self) -> Error {
        let b = self.pd.breakdown.expect("called on stopped process");
        Error::Breakdown {
            step: self.pd.steps,
            norm: b.ratio,
        }
    }

    /// Appends `V_{2j+1}` from `A V_{2j-1}`.
    pub fn extend_odd(&mut self) -> Result<()> {
        if self.is_stopped() {
            return Err(self.stopped_err());
        }
        if !self.even_done {
            return Err(Error::InvalidInput("even half-step pending".into()));
        }
        let j = self.pd.steps + 1;
        let mut w = self.a.mul_block(&self.blocks[2 * j - 2])?;
        let raw = w.frobenius_norm();
        let mut h = cgs2(&mut w, &self.blocks);
        let norm = w.frobenius_norm();
        h.push(norm);
        self.pd.h_cols.push(h);
        self.pd.steps = j;
        self.even_done = false;
        if norm <= BREAKDOWN_TOL * raw {
            self.pd.breakdown = Some(Breakdown {
                dim: 2 * j,
                exact: true,
                ratio: if raw > 0.0 { norm / raw } else { 0.0 },
            });
        } else {
            w.scale_mut(1.0 / norm);
            self.blocks.push(w);
        }
        Ok(())
    }

    /// Appends `V_{2j+2}` from `(A - s_j I)^{-1} V_{2j}`.
    pub fn extend_even(&mut self, shift: f64) -> Result<()> {
        if self.is_stopped() {
            return Err(self.stopped_err());
        }
        if self.even_done {
            return Err(Error::InvalidInput("odd half-step pending".into()));
        }
        check_shift(shift)?;
        let j = self.pd.steps;
        if let Some(s1) = self.forced_shift() {
            if s1.to_bits() != shift.to_bits() {
                return Err(Error::InvalidInput(format!(
                    "the first even half-step reuses s_1 = {s1}, got {shift}"
                )));
            }
        }
        let mut w = self.cache.solve(self.a, shift, &self.blocks[2 * j - 1])?;
        if j >= 2 {
            self.pd.shifts.push(shift);
        }
        let raw = w.frobenius_norm();
        let mut h = cgs2(&mut w, &self.blocks);
        let norm = w.frobenius_norm();
        h.push(norm);
        self.pd.h_cols.push(h);
        self.even_done = true;
        if norm <= BREAKDOWN_TOL * raw {
            self.pd.breakdown = Some(Breakdown {
                dim: 2 * j,
                exact: false,
                ratio: norm / raw,
            });
        } else {
            w.scale_mut(1.0 / norm);
            self.blocks.push(w);
        }
        Ok(())
    }

    /// `T` and `τ` for the current state.
    pub fn projection(&self) -> Result<ProjectedMatrix> {
        recover_t(&self.pd)
    }

    pub fn finish(self) -> (KrylovBasis, ProjectionData) {
        (KrylovBasis { blocks: self.blocks }, self.pd)
    }
}

fn check_shift(s: f64) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("shift {s} is not finite")))
    }
}

/// Classical Gram–Schmidt with one reorthogonalization pass; returns the
/// accumulated coefficients.
pub(crate) fn cgs2(w: &mut Block, basis: &[Block]) -> Vec<f64> {
    let mut h = vec![0.0; basis.len()];
    for _ in 0..2 {
        let c: Vec<f64> = basis.iter().map(|v| dot(w.as_slice(), v.as_slice())).collect();
        for (v, &ci) in basis.iter().zip(&c) {
            w.axpy(-ci, v);
        }
        for (hi, ci) in h.iter_mut().zip(c) {
            *hi += ci;
        }
    }
    h
}

/// Runs `m = shifts.len()` full steps with the given shifts.
pub fn gera_build(a: &CsrMatrix, v: &Block, shifts: &[f64]) -> Result<(KrylovBasis, ProjectionData)> {
    let mut cache = FactorCache::default();
    gera_build_cached(a, v, shifts, &mut cache)
}

pub fn gera_build_cached(
    a: &CsrMatrix,
    v: &Block,
    shifts: &[f64],
    cache: &mut FactorCache,
) -> Result<(KrylovBasis, ProjectionData)> {
    if shifts.is_empty() {
        return Err(Error::InvalidInput("at least one shift is required".into()));
    }
    gera_build_with(a, v, shifts[0], shifts.len(), cache, |p| Ok(shifts[p.steps() - 1]))
}

/// Runs `m` full steps; `next_shift` picks `s_j` for `j >= 2` once `T_{2j}` exists.
pub fn gera_build_with(
    a: &CsrMatrix,
    v: &Block,
    s1: f64,
    m: usize,
    cache: &mut FactorCache,
    mut next_shift: impl FnMut(&GeraProcess<'_>) -> Result<f64>,
) -> Result<(KrylovBasis, ProjectionData)> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    let mut proc = GeraProcess::new(a, v, s1, cache)?;
    while !proc.is_stopped() && proc.steps() < m {
        proc.extend_odd()?;
        if proc.is_stopped() {
            break;
        }
        let s = match proc.forced_shift() {
            Some(s) => s,
            None => next_shift(&proc)?,
        };
        proc.extend_even(s)?;
    }
    Ok(proc.finish())
}

fn unit(k: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; k];
    e[i] = 1.0;
    e
}

/// Rebuilds `T_{2m}` and `τ` from the recursion coefficients.
///
/// Odd columns are copied from H̃; even columns follow from applying
/// `A - s_j I` to the expansion of `(A - s_j I)^{-1} V_{2j}`. Columns live in
/// `ℝ^{2m+2}` and are truncated at the end.
pub fn recover_t(pd: &ProjectionData) -> Result<ProjectedMatrix> {
    if let Some(t) = one_dim(pd) {
        return t;
    }
    let m = pd.steps;
    if m == 0 {
        return Err(Error::InvalidInput("no odd half-step completed yet".into()));
    }
    let Alpha { a11, a12, a22 } = pd.alpha;
    let k = 2 * m + 2;
    // cols[c] is column c+1 of T̃
    let mut cols: Vec<Vec<f64>> = vec![vec![0.0; k]; 2 * m];
    for j in 1..=m {
        for i in 1..=k {
            cols[2 * j - 2][i - 1] = pd.h(i, 2 * j - 1);
        }
    }
    let s1 = pd.shifts[0];
    guard(a22, 0, s1)?;
    let (first, rest) = cols.split_at_mut(1);
    for (c, &x) in rest[0].iter_mut().zip(&first[0]).take(k) {
        *c = -a12 * x / a22;
    }
    cols[1][0] += (a11 + s1 * a12) / a22;
    cols[1][1] += s1;
    for j in 1..m {
        let sj = pd.shifts[j - 1];
        let hn = pd.h(2 * j + 2, 2 * j);
        guard(hn, j, sj)?;
        let mut acc = unit(k, 2 * j + 1);
        acc[2 * j + 1] *= sj * hn;
        acc[2 * j - 1] += 1.0;
        for i in 1..=2 * j + 1 {
            let hij = pd.h(i, 2 * j);
            if hij == 0.0 {
                continue;
            }
            for (r, a) in acc.iter_mut().enumerate() {
                *a -= hij * cols[i - 1][r];
            }
            acc[i - 1] += hij * sj;
        }
        for a in acc.iter_mut() {
            *a /= hn;
        }
        cols[2 * j + 1] = acc;
    }
    finish_projection(pd, &cols)
}

fn guard(norm: f64, step: usize, _shift: f64) -> Result<()> {
    if norm == 0.0 || !norm.is_finite() {
        Err(Error::Breakdown { step, norm })
    } else {
        Ok(())
    }
}

fn one_dim(pd: &ProjectionData) -> Option<Result<ProjectedMatrix>> {
    let b = pd.breakdown?;
    if b.dim != 1 {
        return None;
    }
    // (A - s_1 I)^{-1} V_1 = (α12/α11) V_1
    let Alpha { a11, a12, .. } = pd.alpha;
    let lambda = pd.shifts[0] + a11 / a12;
    Some(Ok(ProjectedMatrix {
        t: DMatrix::from_element(1, 1, lambda),
        tau: [0.0, 0.0],
    }))
}

fn finish_projection(pd: &ProjectionData, cols: &[Vec<f64>]) -> Result<ProjectedMatrix> {
    let m = pd.steps;
    let d = 2 * m;
    let t = DMatrix::from_fn(d, d, |i, j| cols[j][i]);
    let tau = if pd.is_exact() {
        [0.0, 0.0]
    } else {
        [cols[d - 2][d], cols[d - 1][d]]
    };
    Ok(ProjectedMatrix { t, tau })
}

/// The pentadiagonal shortcut for symmetric `A`; only the nontrivial entries
/// are formed and the result is symmetrized.
pub fn recover_t_symmetric(pd: &ProjectionData) -> Result<ProjectedMatrix> {
    if let Some(t) = one_dim(pd) {
        return t;
    }
    let m = pd.steps;
    if m == 0 {
        return Err(Error::InvalidInput("no odd half-step completed yet".into()));
    }
    let Alpha { a11, a12, a22 } = pd.alpha;
    let k = 2 * m + 2;
    let mut t = DMatrix::<f64>::zeros(k, 2 * m);
    let mut set = DMatrix::<bool>::from_element(k, 2 * m, false);
    let mut put = |t: &mut DMatrix<f64>, i: usize, j: usize, v: f64| {
        t[(i - 1, j - 1)] = v;
        set[(i - 1, j - 1)] = true;
    };
    for j in 1..=m {
        let c = 2 * j - 1;
        for i in c.saturating_sub(2).max(1)..=(c + 2).min(k) {
            put(&mut t, i, c, pd.h(i, c));
        }
    }
    let s1 = pd.shifts[0];
    guard(a22, 0, s1)?;
    let v12 = (a11 - (t[(0, 0)] - s1) * a12) / a22;
    let v22 = s1 - t[(1, 0)] * a12 / a22;
    let v32 = -t[(2, 0)] * a12 / a22;
    put(&mut t, 1, 2, v12);
    put(&mut t, 2, 2, v22);
    put(&mut t, 3, 2, v32);
    for j in 1..m {
        let sj = pd.shifts[j - 1];
        let hn = pd.h(2 * j + 2, 2 * j);
        guard(hn, j, sj)?;
        let hb = pd.h(2 * j + 1, 2 * j);
        // t_{2j+1,i} for i = 2j-1, 2j, 2j+1; the middle one sits below the diagonal of column 2j
        let row = [t[(2 * j, 2 * j - 2)], t[(2 * j, 2 * j - 1)], t[(2 * j, 2 * j)]];
        let hs = [pd.h(2 * j - 1, 2 * j), pd.h(2 * j, 2 * j), hb];
        let dotp: f64 = row.iter().zip(hs).map(|(a, b)| a * b).sum();
        let up = (sj * hb - dotp) / hn;
        let diag = sj - t[(2 * j + 1, 2 * j)] * hb / hn;
        let low = -t[(2 * j + 2, 2 * j)] * hb / hn;
        put(&mut t, 2 * j + 1, 2 * j + 2, up);
        put(&mut t, 2 * j + 2, 2 * j + 2, diag);
        put(&mut t, 2 * j + 3, 2 * j + 2, low);
    }
    let d = 2 * m;
    let sym = DMatrix::from_fn(d, d, |i, j| match (set[(i, j)], set[(j, i)]) {
        (true, true) => 0.5 * (t[(i, j)] + t[(j, i)]),
        (true, false) => t[(i, j)],
        (false, true) => t[(j, i)],
        (false, false) => 0.0,
    });
    let tau = if pd.is_exact() {
        [0.0, 0.0]
    } else {
        [t[(d, d - 2)], t[(d, d - 1)]]
    };
    Ok(ProjectedMatrix { t: sym, tau })
}

/// `𝒱_kᵀ ⋄ A𝒱_k` plus the coupling entries against `V_{k+1}` when it exists.
pub fn direct_projection(a: &CsrMatrix, blocks: &[Block], dim: usize) -> Result<ProjectedMatrix> {
    if dim == 0 || dim > blocks.len() {
        return Err(Error::InvalidInput(format!(
            "projection dimension {dim} with {} blocks",
            blocks.len()
        )));
    }
    let av: Vec<Block> = blocks[..dim].iter().map(|b| a.mul_block(b)).collect::<Result<_>>()?;
    let t = crate::block::diamond_product(&blocks[..dim], &av)?;
    let tau = match blocks.get(dim) {
        Some(next) if dim >= 2 => [
            dot(av[dim - 2].as_slice(), next.as_slice()),
            dot(av[dim - 1].as_slice(), next.as_slice()),
        ],
        _ => [0.0, 0.0],
    };
    Ok(ProjectedMatrix { t, tau })
}

/// `‖A𝒱_k - 𝒱_k(T ⊗ I_p) - V_{k+1}(τ E_mᵀ ⊗ I_p)‖_F / ‖A𝒱_k‖_F`.
pub fn arnoldi_residual(a: &CsrMatrix, blocks: &[Block], proj: &ProjectedMatrix) -> Result<f64> {
    let d = proj.dim();
    if d > blocks.len() {
        return Err(shape_err(format!("at least {d} blocks"), format!("{}", blocks.len())));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..d {
        let mut r = a.mul_block(&blocks[c])?;
        den += r.frobenius_norm().powi(2);
        for (i, b) in blocks[..d].iter().enumerate() {
            let tic = proj.t[(i, c)];
            if tic != 0.0 {
                r.axpy(-tic, b);
            }
        }
        if d >= 2 && c + 2 >= d {
            let coeff = proj.tau[c + 2 - d];
            if coeff != 0.0 {
                let next = blocks
                    .get(d)
                    .ok_or_else(|| shape_err(format!("{} blocks", d + 1), format!("{}", blocks.len())))?;
                r.axpy(-coeff, next);
            }
        }
        num += r.frobenius_norm().powi(2);
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}
