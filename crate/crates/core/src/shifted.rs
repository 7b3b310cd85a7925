//! Restarted solution of `(A - σI) X = B` for a family of real `σ` on one
//! shared extended-rational subspace per cycle.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::baselines::sga_build;
use crate::block::{basis_combine, Block};
use crate::dense::ritz_values;
use crate::error::{Error, Result};
use crate::factor::FactorCache;
use crate::gera::{recover_t, GeraProcess, ProjectedMatrix};
use crate::matfun::reduced_solve;
use crate::shifts::{log_abs_g, GOrder, ShiftState};
use crate::sparse::CsrMatrix;

/// `Y` with `(T - σI) Y = β e_1`.
pub fn reduced_shifted_solve(t: &DMatrix<f64>, sigma: f64, beta: f64) -> Result<DVector<f64>> {
    let d = t.nrows();
    let shifted = t - DMatrix::identity(d, d) * sigma;
    let mut rhs = DMatrix::zeros(d, 1);
    rhs[(0, 0)] = beta;
    let y = reduced_solve(shifted, &rhs).ok_or(Error::RitzCoincident { sigma })?;
    Ok(DVector::from_column_slice(y.as_slice()))
}

/// `|τ · (Y_{2m-1}, Y_{2m})|`, the residual norm of the Galerkin iterate
/// when the coupling block has unit norm.
pub fn shifted_residual_norm(proj: &ProjectedMatrix, sigma: f64, beta: f64) -> Result<f64> {
    Ok(residual_coefficient(proj, &reduced_shifted_solve(&proj.t, sigma, beta)?).abs())
}

/// `c` with `R = c V_{2m+1}`.
fn residual_coefficient(proj: &ProjectedMatrix, y: &DVector<f64>) -> f64 {
    let d = y.len();
    match d {
        0 => 0.0,
        1 => -proj.tau[1] * y[0],
        _ => -(proj.tau[0] * y[d - 2] + proj.tau[1] * y[d - 1]),
    }
}

/// The active `σ` maximizing `1/|g_{2m}(σ)|`; ties go to the smaller `σ`.
///
/// Candidates where `g` is zero or infinite are skipped. If none remain,
/// the `σ` farthest from every existing shift is returned.
pub fn next_shift_sigma(ritz: &[Complex64], shifts: &[f64], active: &[f64]) -> Result<f64> {
    if active.is_empty() {
        return Err(Error::InvalidInput("no active sigma".into()));
    }
    // the interval is unused by the objective
    let state = ShiftState::new(ritz.to_vec(), shifts.to_vec(), 0.0, 0.0)?;
    let mut best: Option<(f64, f64)> = None;
    for &sigma in active {
        let obj = -log_abs_g(sigma, &state, GOrder::TwoM);
        if !obj.is_finite() {
            continue;
        }
        best = match best {
            Some((b, s)) if b > obj || (b == obj && s <= sigma) => Some((b, s)),
            _ => Some((obj, sigma)),
        };
    }
    if let Some((_, s)) = best {
        return Ok(s);
    }
    let dist = |s: f64| shifts.iter().map(|&p| (s - p).abs()).fold(f64::INFINITY, f64::min);
    Ok(active
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, active[0]), |(bd, bs), s| {
            let d = dist(s);
            if d > bd || (d == bd && s < bs) {
                (d, s)
            } else {
                (bd, bs)
            }
        })
        .1)
}

/// How the subspace of each cycle is built.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftStrategy {
    /// `s_1` is the active `σ` farthest from zero, later shifts come from [`next_shift_sigma`].
    Adaptive,
    /// Every shift zero: the extended global Arnoldi space.
    Zero,
    /// `s_1, ..., s_m` as given, reused every cycle.
    Fixed(Vec<f64>),
    /// Plain global Arnoldi with `2m` blocks.
    Polynomial,
}

#[derive(Debug, Clone)]
pub struct ShiftedProblem<'a> {
    pub a: &'a CsrMatrix,
    pub b: &'a Block,
    pub sigmas: Vec<f64>,
    /// Absolute bound on `‖B - (A - σI) X(σ)‖_F`.
    pub tol: f64,
    /// Outer steps per cycle.
    pub m: usize,
    pub max_cycles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaResult {
    pub sigma: f64,
    pub x: Block,
    /// Residual norm from the reduced system, as of the last cycle that touched `σ`.
    pub residual_norm: f64,
    /// Cycles in which `σ` was still active.
    pub cycles: usize,
    pub converged: bool,
    /// Set when `T - σI` became singular; `σ` was then dropped.
    pub ritz_coincident: bool,
}

/// One row per active `σ` and cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub cycle: usize,
    pub sigma: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSolution {
    pub results: Vec<SigmaResult>,
    pub cycles: usize,
    pub history: Vec<HistoryRow>,
}

impl ShiftedSolution {
    pub fn all_converged(&self) -> bool {
        self.results.iter().all(|r| r.converged)
    }

    pub fn max_residual(&self) -> f64 {
        self.results.iter().map(|r| r.residual_norm).fold(0.0, f64::max)
    }
}

/// One cycle's subspace: the blocks, the projection and `‖seed‖_F`.
pub struct CycleBasis {
    pub blocks: Vec<Block>,
    pub proj: ProjectedMatrix,
    pub norm_seed: f64,
}

impl CycleBasis {
    /// The next restart seed `V_{d+1}`, absent for an invariant subspace.
    fn next_seed(&self) -> Option<&Block> {
        if self.proj.tau == [0.0, 0.0] {
            None
        } else {
            self.blocks.get(self.proj.dim())
        }
    }
}

pub fn build_cycle(
    a: &CsrMatrix,
    seed: &Block,
    strategy: &ShiftStrategy,
    active: &[f64],
    m: usize,
    cache: &mut FactorCache,
) -> Result<CycleBasis> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    let first = match strategy {
        ShiftStrategy::Polynomial => {
            let (basis, proj) = sga_build(a, seed, 2 * m)?;
            return Ok(CycleBasis {
                blocks: basis.blocks().to_vec(),
                proj,
                norm_seed: seed.frobenius_norm(),
            });
        }
        ShiftStrategy::Zero => 0.0,
        ShiftStrategy::Fixed(s) => {
            if s.len() < m {
                return Err(Error::InvalidInput(format!("{} fixed shifts for m = {m}", s.len())));
            }
            s[0]
        }
        ShiftStrategy::Adaptive => active
            .iter()
            .copied()
            .fold(None, |acc: Option<f64>, s| match acc {
                Some(b) if b.abs() >= s.abs() => Some(b),
                _ => Some(s),
            })
            .ok_or_else(|| Error::InvalidInput("no active sigma".into()))?,
    };
    let mut proc = GeraProcess::new(a, seed, first, cache)?;
    while !proc.is_stopped() && proc.steps() < m {
        proc.extend_odd()?;
        let j = proc.steps();
        if proc.is_stopped() || j == m {
            break;
        }
        let s = match (proc.forced_shift(), strategy) {
            (Some(s), _) => s,
            (None, ShiftStrategy::Zero) => 0.0,
            (None, ShiftStrategy::Fixed(s)) => s[j - 1],
            (None, _) => {
                let cur = recover_t(proc.data())?;
                next_shift_sigma(&ritz_values(&cur.t), &proc.data().poles(j), active)?
            }
        };
        proc.extend_even(s)?;
    }
    let (basis, pd) = proc.finish();
    let proj = recover_t(&pd)?;
    Ok(CycleBasis {
        blocks: basis.blocks().to_vec(),
        proj,
        norm_seed: pd.norm_v(),
    })
}

/// Restarted Galerkin solver; every `σ` starts from `X = 0`.
pub fn solve_restarted(problem: &ShiftedProblem<'_>, strategy: &ShiftStrategy) -> Result<ShiftedSolution> {
    let mut cache = FactorCache::default();
    solve_restarted_cached(problem, strategy, &mut cache)
}

pub fn solve_restarted_cached(
    problem: &ShiftedProblem<'_>,
    strategy: &ShiftStrategy,
    cache: &mut FactorCache,
) -> Result<ShiftedSolution> {
    let ShiftedProblem {
        a,
        b,
        ref sigmas,
        tol,
        m,
        max_cycles,
    } = *problem;
    if b.rows() != a.n() {
        return Err(crate::error::shape_err(
            format!("{} rows", a.n()),
            format!("{} rows", b.rows()),
        ));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    if sigmas.is_empty() || sigmas.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("sigmas must be nonempty and finite".into()));
    }
    if max_cycles == 0 {
        return Err(Error::InvalidInput("max_cycles must be at least 1".into()));
    }
    let b_norm = b.frobenius_norm();
    if b_norm == 0.0 {
        return Err(Error::InvalidInput("right-hand side is zero".into()));
    }
    let mut results: Vec<SigmaResult> = sigmas
        .iter()
        .map(|&sigma| SigmaResult {
            sigma,
            x: Block::zeros(b.rows(), b.cols()),
            residual_norm: b_norm,
            cycles: 0,
            converged: false,
            ritz_coincident: false,
        })
        .collect();
    // R(σ) = coeff[σ] · seed
    let mut coeff = vec![1.0; sigmas.len()];
    let mut seed = b.clone();
    let mut history = Vec::new();
    let mut cycles = 0;
    let is_active = |r: &SigmaResult| !r.converged && !r.ritz_coincident;
    while cycles < max_cycles && results.iter().any(is_active) {
        cycles += 1;
        let active: Vec<f64> = results.iter().filter(|r| is_active(r)).map(|r| r.sigma).collect();
        let cb = build_cycle(a, &seed, strategy, &active, m, cache)?;
        let d = cb.proj.dim();
        for (k, r) in results.iter_mut().enumerate() {
            if !is_active(r) {
                continue;
            }
            r.cycles += 1;
            let y = match reduced_shifted_solve(&cb.proj.t, r.sigma, coeff[k] * cb.norm_seed) {
                Ok(y) => y,
                Err(Error::RitzCoincident { .. }) => {
                    r.ritz_coincident = true;
                    continue;
                }
                Err(e) => return Err(e),
            };
            r.x.axpy(1.0, &basis_combine(&cb.blocks[..d], y.as_slice())?);
            let c = residual_coefficient(&cb.proj, &y);
            r.residual_norm = c.abs();
            coeff[k] = c;
            r.converged = r.residual_norm <= tol;
            history.push(HistoryRow {
                cycle: cycles,
                sigma: r.sigma,
                residual_norm: r.residual_norm,
            });
        }
        match cb.next_seed() {
            Some(s) => seed = s.clone(),
            None => break,
        }
    }
    Ok(ShiftedSolution {
        results,
        cycles,
        history,
    })
}

/// `‖B - (A - σI) X‖_F` computed with the matrix.
pub fn direct_shifted_residual(a: &CsrMatrix, b: &Block, sigma: f64, x: &Block) -> Result<f64> {
    Ok(b.sub(&a.mul_block_shifted(sigma, x)?)?.frobenius_norm())
}
