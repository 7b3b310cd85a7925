//! Skeleton approximation of `(λ - s)^{-1}` and adaptive shift selection.
//!
//! With Ritz values `λ_1..λ_{2m}` and poles `s_1..s_m`,
//!
//! ```text
//! g_{2m}(z) = Π (z - λ_i) / Π (z - s_j)
//! ```
//!
//! and `g_m` keeps only the first `m` nodes in ascending order. Poles use
//! the library convention, i.e. the shifts `s` of `(A - sI)^{-1}`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::factor::{factor_shifted, solve_shifted};
use crate::sparse::CsrMatrix;

/// Which `g` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GOrder {
    M,
    TwoM,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftState {
    nodes: Vec<Complex64>,
    poles: Vec<f64>,
    lambda_min: f64,
    lambda_max: f64,
}

impl ShiftState {
    /// Nodes are sorted by real part (then imaginary part).
    pub fn new(mut nodes: Vec<Complex64>, poles: Vec<f64>, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if nodes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || poles.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite node or pole".into()));
        }
        if !(lambda_min.is_finite() && lambda_max.is_finite() && lambda_min <= lambda_max) {
            return Err(Error::InvalidInput(format!(
                "bad spectral interval [{lambda_min}, {lambda_max}]"
            )));
        }
        nodes.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Ok(Self {
            nodes,
            poles,
            lambda_min,
            lambda_max,
        })
    }

    pub fn real(nodes: &[f64], poles: &[f64], lambda_min: f64, lambda_max: f64) -> Result<Self> {
        Self::new(
            nodes.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            poles.to_vec(),
            lambda_min,
            lambda_max,
        )
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn poles(&self) -> &[f64] {
        &self.poles
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    fn order_nodes(&self, order: GOrder) -> &[Complex64] {
        match order {
            GOrder::TwoM => &self.nodes,
            GOrder::M => &self.nodes[..self.poles.len().min(self.nodes.len())],
        }
    }

    fn real_nodes(&self) -> Result<Vec<f64>> {
        let scale = self.nodes.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        self.nodes
            .iter()
            .map(|z| {
                if z.im.abs() <= 1e-12 * scale {
                    Ok(z.re)
                } else {
                    Err(Error::InvalidInput(format!("node {z} is not real")))
                }
            })
            .collect()
    }
}

/// `log|g(z)|`; `-∞` at a node, `+∞` at a pole.
pub fn log_abs_g(z: f64, state: &ShiftState, order: GOrder) -> f64 {
    let zc = Complex64::new(z, 0.0);
    let mut acc = 0.0;
    for &node in state.order_nodes(order) {
        let d = (zc - node).norm();
        if d == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += d.ln();
    }
    for &pole in &state.poles {
        let d = (z - pole).abs();
        if d == 0.0 {
            return f64::INFINITY;
        }
        acc -= d.ln();
    }
    acc
}

/// `g(λ)/g(s)` as a product of ratios, keeping the sign.
pub fn g_ratio(lambda: f64, s: f64, state: &ShiftState, order: GOrder) -> f64 {
    let (l, sc) = (Complex64::new(lambda, 0.0), Complex64::new(s, 0.0));
    let mut r = Complex64::new(1.0, 0.0);
    for &node in state.order_nodes(order) {
        r *= (l - node) / (sc - node);
    }
    for &pole in &state.poles {
        r *= (s - pole) / (lambda - pole);
    }
    r.re
}

/// The skeleton approximation `f_{2m,m}(λ, s)` of `1/(λ - s)`.
///
/// `f_{m,m} = Σ_j x_j/(λ - s_j)` interpolates on the first `m` nodes; the
/// Cauchy system `Σ_j x_j/(λ_i - s_j) = 1/(λ_i - s)` is solved through its
/// explicit inverse,
/// `x_j = Π_i (s_j - λ_i)/(s - λ_i) · Π_{k≠j} (s - s_k)/(s_j - s_k)`,
/// which stays accurate where elimination on the Cauchy matrix does not.
/// The correction term makes the relative error equal `g_{2m}(λ)/g_{2m}(s)`.
/// Poles must be distinct.
pub fn skeleton_f(lambda: f64, s: f64, state: &ShiftState) -> Result<f64> {
    let m = state.poles.len();
    if m == 0 || state.nodes.len() < m {
        return Err(Error::InvalidInput(format!(
            "skeleton needs m >= 1 poles and at least m nodes, got {} and {}",
            m,
            state.nodes.len()
        )));
    }
    let nodes = state.real_nodes()?;
    let poles = &state.poles;
    for (j, &sj) in poles.iter().enumerate() {
        if poles[..j].contains(&sj) {
            return Err(Error::Domain(format!("pole {sj} is repeated")));
        }
        if nodes[..m].contains(&sj) {
            return Err(Error::Domain(format!("pole {sj} is also a node")));
        }
    }
    if poles.contains(&lambda) {
        return Err(Error::Domain(format!("λ = {lambda} is a pole")));
    }
    if nodes.contains(&s) {
        return Err(Error::Domain(format!("s = {s} is a node")));
    }
    let mut fmm = 0.0;
    for (j, &sj) in poles.iter().enumerate() {
        let mut xj: f64 = nodes[..m].iter().map(|&li| (sj - li) / (s - li)).product();
        for (k, &sk) in poles.iter().enumerate() {
            if k != j {
                xj *= (s - sk) / (sj - sk);
            }
        }
        fmm += xj / (lambda - sj);
    }
    if lambda == s {
        // limit of the correction: d/dλ log(g_{2m}/g_m) at λ = s
        let extra: f64 = nodes[m..].iter().map(|&li| 1.0 / (s - li)).sum();
        return Ok(fmm - extra);
    }
    let corr = g_ratio(lambda, s, state, GOrder::TwoM) - g_ratio(lambda, s, state, GOrder::M);
    Ok(fmm - corr / (lambda - s))
}

fn distinct_count(nodes: &[Complex64]) -> usize {
    let scale = nodes.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let mut count = 0;
    for (i, z) in nodes.iter().enumerate() {
        if nodes[..i].iter().all(|w| (z - w).norm() > 1e-12 * scale) {
            count += 1;
        }
    }
    count
}

const SCAN_POINTS: usize = 33;
const GOLDEN_ITERS: usize = 200;

/// Next shift for the exponential.
///
/// Maximizes `1/|g_{2m}(-μ)|` for `μ ∈ [λ_min, λ_max]` and returns `-μ`, the
/// shift of `(A - sI)^{-1}` mirrored to the negative axis. Each sub-interval
/// between consecutive singular points is scanned at 33 points and the best
/// point refined by golden-section search.
pub fn next_shift_exp(state: &ShiftState) -> f64 {
    let (lo, hi) = (state.lambda_min, state.lambda_max);
    if distinct_count(&state.nodes) < 2 || lo == hi {
        return -0.5 * (lo + hi);
    }
    let objective = |mu: f64| -log_abs_g(-mu, state, GOrder::TwoM);
    let mut breaks = vec![lo, hi];
    breaks.extend(state.poles.iter().map(|&s| -s));
    breaks.extend(state.nodes.iter().map(|z| -z.re));
    breaks.retain(|&x| x >= lo && x <= hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut best = (f64::NEG_INFINITY, lo);
    let consider = |mu: f64, val: f64, best: &mut (f64, f64)| {
        let far_from_poles = state.poles.iter().all(|&s| (-mu - s).abs() > 1e-12 * s.abs().max(1.0));
        if far_from_poles && (val > best.0 || (val == best.0 && mu < best.1)) {
            *best = (val, mu);
        }
    };
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let logscale = a > 0.0 && b / a > 10.0;
        let (ta, tb) = if logscale { (a.ln(), b.ln()) } else { (a, b) };
        let to_mu = |t: f64| if logscale { t.exp() } else { t };
        let grid: Vec<f64> = (0..SCAN_POINTS)
            .map(|k| ta + (tb - ta) * k as f64 / (SCAN_POINTS - 1) as f64)
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&t| objective(to_mu(t).clamp(a, b))).collect();
        let k = (0..SCAN_POINTS)
            .max_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(j.cmp(&i)))
            .unwrap();
        consider(to_mu(grid[k]).clamp(a, b), vals[k], &mut best);
        let (mut x0, mut x1) = (grid[k.saturating_sub(1)], grid[(k + 1).min(SCAN_POINTS - 1)]);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = x1 - phi * (x1 - x0);
        let mut d = x0 + phi * (x1 - x0);
        let mut fc = objective(to_mu(c).clamp(a, b));
        let mut fd = objective(to_mu(d).clamp(a, b));
        for _ in 0..GOLDEN_ITERS {
            if (x1 - x0).abs() <= 1e-12 * x0.abs().max(x1.abs()).max(1e-300) {
                break;
            }
            if fc >= fd {
                x1 = d;
                d = c;
                fd = fc;
                c = x1 - phi * (x1 - x0);
                fc = objective(to_mu(c).clamp(a, b));
            } else {
                x0 = c;
                c = d;
                fc = fd;
                d = x0 + phi * (x1 - x0);
                fd = objective(to_mu(d).clamp(a, b));
            }
        }
        let (tm, fm) = if fc >= fd { (c, fc) } else { (d, fd) };
        consider(to_mu(tm).clamp(a, b), fm, &mut best);
    }
    -best.1
}

/// Extreme eigenvalue magnitudes from power and inverse power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Both iterations met the relative tolerance within the iteration cap.
    pub converged: bool,
}

pub const SPECTRUM_MAX_ITERS: usize = 200;
pub const SPECTRUM_TOL: f64 = 1e-4;

pub fn estimate_spectrum(a: &CsrMatrix) -> Result<SpectrumEstimate> {
    let n = a.n();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.5).collect();
    let normalize = |x: &mut [f64]| {
        let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= s);
        s
    };

    let mut x = start.clone();
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut lmax = 0.0;
    let mut max_ok = false;
    for _ in 0..SPECTRUM_MAX_ITERS {
        a.mul_vec_into(&x, &mut y);
        let est = normalize(&mut y);
        std::mem::swap(&mut x, &mut y);
        let done = (est - lmax).abs() <= SPECTRUM_TOL * est;
        lmax = est;
        if done {
            max_ok = true;
            break;
        }
    }

    let (lmin, min_ok) = match factor_shifted(a, 0.0) {
        Err(Error::SingularShift { .. }) => (0.0, false),
        Err(e) => return Err(e),
        Ok(f) => {
            let mut x = crate::block::Block::from_column_slice(n, 1, &start)?;
            x.scale_mut(1.0 / x.frobenius_norm());
            let mut est = f64::INFINITY;
            let mut ok = false;
            for _ in 0..SPECTRUM_MAX_ITERS {
                let y = solve_shifted(&f, &x)?;
                let s = y.frobenius_norm();
                let new = 1.0 / s;
                x = y.scaled(1.0 / s);
                let done = (new - est).abs() <= SPECTRUM_TOL * new;
                est = new;
                if done {
                    ok = true;
                    break;
                }
            }
            (est, ok)
        }
    };
    Ok(SpectrumEstimate {
        lambda_min: lmin,
        lambda_max: lmax,
        converged: max_ok && min_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_g_sentinels_and_hand_value() {
        let st = ShiftState::real(&[1.0, 2.0], &[3.0], 0.0, 4.0).unwrap();
        assert_eq!(log_abs_g(1.0, &st, GOrder::TwoM), f64::NEG_INFINITY);
        assert_eq!(log_abs_g(3.0, &st, GOrder::TwoM), f64::INFINITY);
        assert!((log_abs_g(0.0, &st, GOrder::TwoM) - (2.0f64 / 3.0).ln()).abs() < 1e-15);
        // g_m keeps the smallest node only
        assert!((log_abs_g(0.0, &st, GOrder::M) - (1.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn skeleton_interpolates() {
        let st = ShiftState::real(&[1.0, 2.0], &[4.0], 0.5, 3.0).unwrap();
        for s in [-1.0, 0.3, 7.0] {
            for &node in &[1.0, 2.0] {
                let f = skeleton_f(node, s, &st).unwrap();
                assert!((f - 1.0 / (node - s)).abs() < 1e-13);
            }
        }
        for l in [-2.0, 0.7, 5.5] {
            let f = skeleton_f(l, 4.0, &st).unwrap();
            assert!((f - 1.0 / (l - 4.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn skeleton_relative_error_identity() {
        let st = ShiftState::real(&[1.0, 2.0], &[4.0], 0.5, 3.0).unwrap();
        for (l, s) in [(0.2, -3.0), (1.5, 6.0), (3.3, -0.4)] {
            let f = skeleton_f(l, s, &st).unwrap();
            let eps = 1.0 - (l - s) * f;
            let g = |z: f64| (z - 1.0) * (z - 2.0) / (z - 4.0);
            assert!((eps - g(l) / g(s)).abs() < 1e-12 * (g(l) / g(s)).abs().max(1e-3));
        }
    }

    #[test]
    fn explicit_cauchy_solution_matches_elimination() {
        use nalgebra::{DMatrix, DVector};
        let nodes = [0.5, 1.5, 3.0, 4.0, 6.0, 9.0];
        let poles = [-0.7, -2.0, -5.0];
        let st = ShiftState::real(&nodes, &poles, 0.5, 9.0).unwrap();
        let s = -1.3;
        let cauchy = DMatrix::from_fn(3, 3, |i, j| 1.0 / (nodes[i] - poles[j]));
        let rhs = DVector::from_fn(3, |i, _| 1.0 / (nodes[i] - s));
        let x = cauchy.lu().solve(&rhs).unwrap();
        for l in [0.2, 2.2, 7.7] {
            let fmm: f64 = poles.iter().zip(x.iter()).map(|(&sj, &xj)| xj / (l - sj)).sum();
            let corr = g_ratio(l, s, &st, GOrder::TwoM) - g_ratio(l, s, &st, GOrder::M);
            let via_lu = fmm - corr / (l - s);
            assert!((skeleton_f(l, s, &st).unwrap() - via_lu).abs() < 1e-12 * via_lu.abs());
        }
    }

    #[test]
    fn skeleton_rejects_repeated_poles() {
        let st = ShiftState::real(&[1.0, 2.0, 3.0, 4.0], &[-1.0, -1.0], 1.0, 4.0).unwrap();
        assert!(matches!(skeleton_f(2.5, -3.0, &st), Err(Error::Domain(_))));
    }

    #[test]
    fn skeleton_removable_point_is_continuous() {
        let st = ShiftState::real(&[1.0, 2.0, 3.0, 5.0], &[-1.0, -2.5], 1.0, 5.0).unwrap();
        let at = skeleton_f(0.3, 0.3, &st).unwrap();
        let near = skeleton_f(0.3 + 1e-7, 0.3, &st).unwrap();
        assert!((at - near).abs() < 1e-5 * at.abs().max(1.0));
    }

    #[test]
    fn skeleton_domain_errors() {
        let st = ShiftState::real(&[1.0, 2.0], &[4.0], 0.5, 3.0).unwrap();
        assert!(skeleton_f(4.0, 0.0, &st).is_err());
        assert!(skeleton_f(0.0, 2.0, &st).is_err());
    }

    #[test]
    fn exp_shift_matches_grid_search() {
        // mirrored pole at μ = 2 splits [1, 3]
        let st = ShiftState::real(&[1.0, 3.0], &[-2.0], 1.0, 3.0).unwrap();
        let s = next_shift_exp(&st);
        let n = 100_000;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..=n {
            let mu = 1.0 + 2.0 * k as f64 / n as f64;
            let v = ((mu - 2.0).abs()) / ((mu + 1.0) * (mu + 3.0));
            if v > best.0 {
                best = (v, mu);
            }
        }
        assert!((s + best.1).abs() < 1e-4, "{s} vs {}", -best.1);
    }

    #[test]
    fn single_node_gives_midpoint() {
        let st = ShiftState::real(&[2.0, 2.0], &[-1.0], 1.0, 5.0).unwrap();
        assert_eq!(next_shift_exp(&st), -3.0);
    }

    #[test]
    fn diagonal_spectrum_estimate() {
        let a = CsrMatrix::from_diagonal(&(1..=10).map(f64::from).collect::<Vec<_>>()).unwrap();
        let est = estimate_spectrum(&a).unwrap();
        assert!((est.lambda_min - 1.0).abs() < 1e-3);
        assert!((est.lambda_max - 10.0).abs() < 1e-2);
    }
}
