//! `f(A)V ≈ ‖V‖_F 𝒱_{2m} (f(T_{2m}) e_1 ⊗ I_p)` and the adaptive driver for `e^{-tA}V`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::block::{basis_combine, Block};
use crate::dense::{ritz_values, EigenDecomposition};
use crate::error::{Error, Result};
use crate::factor::FactorCache;
use crate::gera::{recover_t, GeraProcess, ProjectedMatrix};
use crate::shifts::{estimate_spectrum, next_shift_exp, ShiftState, SpectrumEstimate};
use crate::sparse::CsrMatrix;

pub type ScalarFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// The scalar function applied to the matrix.
#[derive(Clone)]
pub enum MatFunSpec {
    /// `e^{-tz}`, `t >= 0`
    ExpNeg {
        t: f64,
    },
    Sqrt,
    Log,
    /// `e^{-√z}`
    ExpNegSqrt,
    /// `(z - σ)^{-1}`
    Resolvent {
        sigma: f64,
    },
    /// Should satisfy `f(conj z) = conj f(z)` so that real matrices map to real matrices.
    Custom {
        name: String,
        f: ScalarFn,
    },
}

impl fmt::Debug for MatFunSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl MatFunSpec {
    pub fn exp_neg(t: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidInput(format!("time {t} must be finite and nonnegative")));
        }
        Ok(Self::ExpNeg { t })
    }

    pub fn resolvent(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma {sigma} is not finite")));
        }
        Ok(Self::Resolvent { sigma })
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::ExpNeg { t } => format!("exp-neg:{t}"),
            Self::Sqrt => "sqrt".into(),
            Self::Log => "log".into(),
            Self::ExpNegSqrt => "exp-neg-sqrt".into(),
            Self::Resolvent { sigma } => format!("resolvent:{sigma}"),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            Self::ExpNeg { t } => (-z * *t).exp(),
            Self::Sqrt => z.sqrt(),
            Self::Log => z.ln(),
            Self::ExpNegSqrt => (-z.sqrt()).exp(),
            Self::Resolvent { sigma } => 1.0 / (z - *sigma),
            Self::Custom { f, .. } => f(z),
        }
    }

    /// Rejects spectra on which the function is undefined.
    pub fn check_spectrum(&self, eigs: &[Complex64]) -> Result<()> {
        match self {
            Self::Sqrt | Self::Log | Self::ExpNegSqrt => {
                if let Some(z) = eigs.iter().find(|z| z.re.is_nan() || z.re <= 0.0) {
                    return Err(Error::Domain(format!(
                        "{} needs a spectrum in the open right half-plane, found {z}",
                        self.name()
                    )));
                }
            }
            Self::Resolvent { sigma } => {
                if eigs.iter().any(|z| *z == Complex64::new(*sigma, 0.0)) {
                    return Err(Error::RitzCoincident { sigma: *sigma });
                }
            }
            Self::ExpNeg { .. } | Self::Custom { .. } => {}
        }
        Ok(())
    }
}

impl std::str::FromStr for MatFunSpec {
    type Err = Error;

    /// `sqrt`, `log`, `exp-neg-sqrt`, `exp-neg:<t>`, `resolvent:<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number {v:?} in function {s:?}")))
        };
        match s {
            "sqrt" => Ok(Self::Sqrt),
            "log" => Ok(Self::Log),
            "exp-neg-sqrt" => Ok(Self::ExpNegSqrt),
            _ => match s.split_once(':') {
                Some(("exp-neg", t)) => Self::exp_neg(parse(t)?),
                Some(("resolvent", v)) => Self::resolvent(parse(v)?),
                _ => Err(Error::InvalidInput(format!("unknown function {s:?}"))),
            },
        }
    }
}

/// `f(M) R` given a decomposition of `M`.
///
/// The resolvent is applied by an LU solve. Otherwise the eigendecomposition
/// is used when its eigenvector matrix is well conditioned; the exponential
/// then falls back to scaling and squaring.
pub(crate) fn apply_with(
    eig: &EigenDecomposition,
    m: &DMatrix<f64>,
    f: &MatFunSpec,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    f.check_spectrum(&eig.eigenvalues())?;
    if let MatFunSpec::Resolvent { sigma } = f {
        let shifted = m - DMatrix::identity(m.nrows(), m.ncols()) * *sigma;
        return reduced_solve(shifted, rhs).ok_or(Error::RitzCoincident { sigma: *sigma });
    }
    if eig.is_well_conditioned() {
        return eig.apply(&|z| f.eval(z), rhs);
    }
    match f {
        MatFunSpec::ExpNeg { t } => Ok((m * -*t).exp() * rhs),
        _ => Err(Error::Domain(format!(
            "eigenvector condition {:.2e} too large for {}",
            eig.cond(),
            f.name()
        ))),
    }
}

/// LU solve that refuses pivots at rounding level.
pub(crate) fn reduced_solve(m: DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = m.abs().max();
    let lu = m.lu();
    let u = lu.u();
    if (0..u.nrows()).any(|i| u[(i, i)].abs() <= f64::EPSILON * scale) {
        return None;
    }
    lu.solve(rhs)
}

/// `f(T)` for a small dense matrix.
pub fn small_matfun(t: &DMatrix<f64>, f: &MatFunSpec) -> Result<DMatrix<f64>> {
    let eig = EigenDecomposition::new(t)?;
    apply_with(&eig, t, f, &DMatrix::identity(t.nrows(), t.ncols()))
}

/// `f(T) e_1`.
pub fn small_matfun_e1(t: &DMatrix<f64>, f: &MatFunSpec) -> Result<DVector<f64>> {
    let eig = EigenDecomposition::new(t)?;
    let mut e1 = DMatrix::zeros(t.nrows(), 1);
    e1[(0, 0)] = 1.0;
    let col = apply_with(&eig, t, f, &e1)?;
    Ok(DVector::from_column_slice(col.as_slice()))
}

/// `‖V‖_F Σ_i (f(T) e_1)_i V_i` over the first `dim T` blocks.
pub fn approx_fav(blocks: &[Block], t: &DMatrix<f64>, f: &MatFunSpec, norm_v: f64) -> Result<Block> {
    let d = t.nrows();
    if d == 0 || d > blocks.len() {
        return Err(Error::InvalidInput(format!(
            "projection of order {d} with {} blocks",
            blocks.len()
        )));
    }
    let y = small_matfun_e1(t, f)? * norm_v;
    basis_combine(&blocks[..d], y.as_slice())
}

/// `‖V‖_F |τ E_mᵀ e^{-tT} e_1|`, the norm of `U' + AU` for the projected solution.
pub fn exp_residual_norm(proj: &ProjectedMatrix, t: f64, norm_v: f64) -> Result<f64> {
    let d = proj.dim();
    if d < 2 || proj.tau == [0.0, 0.0] {
        return Ok(0.0);
    }
    let y = small_matfun_e1(&proj.t, &MatFunSpec::exp_neg(t)?)?;
    Ok(norm_v * (proj.tau[0] * y[d - 2] + proj.tau[1] * y[d - 1]).abs())
}

/// Outcome of one adaptive exponential run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpRunReport {
    pub t: f64,
    /// Outer steps taken when the returned iterate was formed.
    pub iterations: usize,
    /// Subspace dimension of the returned iterate.
    pub dim: usize,
    /// Residual norm after each outer step.
    pub residual_history: Vec<f64>,
    /// Poles of the returned subspace, `s_1, s_1, s_2, ...`; one per step.
    pub shifts_used: Vec<f64>,
    pub converged: bool,
    pub spectrum: SpectrumEstimate,
}

impl ExpRunReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history
            .get(self.iterations.saturating_sub(1))
            .copied()
            .unwrap_or(0.0)
    }
}

/// `e^{-tA}V` with adaptively chosen shifts, stopping at the first residual `<= tol`.
pub fn exp_action_adaptive(
    a: &CsrMatrix,
    v: &Block,
    t: f64,
    tol: f64,
    itermax: usize,
) -> Result<(Block, ExpRunReport)> {
    let mut out = exp_action_adaptive_multi(a, v, &[t], tol, itermax)?;
    Ok(out.pop().expect("one result per time"))
}

/// Several times share one basis since the shift choice does not depend on `t`.
pub fn exp_action_adaptive_multi(
    a: &CsrMatrix,
    v: &Block,
    ts: &[f64],
    tol: f64,
    itermax: usize,
) -> Result<Vec<(Block, ExpRunReport)>> {
    let spectrum = estimate_spectrum(a)?;
    exp_action_adaptive_with(a, v, ts, tol, itermax, spectrum)
}

pub fn exp_action_adaptive_with(
    a: &CsrMatrix,
    v: &Block,
    ts: &[f64],
    tol: f64,
    itermax: usize,
    spectrum: SpectrumEstimate,
) -> Result<Vec<(Block, ExpRunReport)>> {
    if ts.is_empty() {
        return Err(Error::InvalidInput("no times given".into()));
    }
    for &t in ts {
        MatFunSpec::exp_neg(t)?;
    }
    if tol.is_nan() || tol <= 0.0 || itermax == 0 {
        return Err(Error::InvalidInput(
            "tolerance must be positive and itermax at least 1".into(),
        ));
    }
    let (lmin, lmax) = (spectrum.lambda_min, spectrum.lambda_max);
    let mut cache = FactorCache::default();
    let mut proc = GeraProcess::new(a, v, -lmin, &mut cache)?;
    let norm_v = proc.data().norm_v();
    let mut hist: Vec<Vec<f64>> = vec![Vec::new(); ts.len()];
    let mut done: Vec<Option<usize>> = vec![None; ts.len()];
    let mut last: Option<ProjectedMatrix> = None;
    loop {
        if proc.is_stopped() {
            break;
        }
        proc.extend_odd()?;
        let proj = recover_t(proc.data())?;
        let j = proc.steps();
        for (k, &t) in ts.iter().enumerate() {
            if done[k].is_some() {
                continue;
            }
            let r = exp_residual_norm(&proj, t, norm_v)?;
            hist[k].push(r);
            if r <= tol {
                done[k] = Some(j);
            }
        }
        let exact = proc.data().is_exact();
        last = Some(proj);
        if exact || done.iter().all(Option::is_some) || j >= itermax {
            break;
        }
        let shift = match proc.forced_shift() {
            Some(s) => s,
            None => {
                let t_now = &last.as_ref().expect("just set").t;
                let state = ShiftState::new(ritz_values(t_now), proc.data().poles(j), lmin, lmax)?;
                next_shift_exp(&state)
            }
        };
        proc.extend_even(shift)?;
    }
    let exact = proc.data().is_exact();
    let (basis, pd) = proc.finish();
    let proj = match last {
        Some(p) => p,
        None => recover_t(&pd)?,
    };
    let steps_total = pd.steps();
    let mut out = Vec::with_capacity(ts.len());
    for (k, &t) in ts.iter().enumerate() {
        let (step, converged) = match done[k] {
            Some(j) => (j, true),
            None if exact => (steps_total, true),
            None => {
                let best = hist[k]
                    .iter()
                    .enumerate()
                    .min_by(|x, y| x.1.total_cmp(y.1))
                    .map(|(i, _)| i + 1)
                    .unwrap_or(steps_total);
                (best, false)
            }
        };
        let d = if step == steps_total { proj.dim() } else { 2 * step };
        let t_sub = proj.t.view((0, 0), (d, d)).into_owned();
        let u = approx_fav(basis.blocks(), &t_sub, &MatFunSpec::exp_neg(t)?, norm_v)?;
        let shifts_used = pd.poles(step);
        out.push((
            u,
            ExpRunReport {
                t,
                iterations: step,
                dim: d,
                residual_history: hist[k].clone(),
                shifts_used,
                converged,
                spectrum,
            },
        ));
    }
    Ok(out)
}
