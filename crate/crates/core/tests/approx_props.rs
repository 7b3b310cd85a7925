use gera::dense::{ritz_values, DenseOracle};
use gera::gera::{gera_build, recover_t};
use gera::matfun::{approx_fav, exp_action_adaptive, exp_residual_norm, small_matfun, MatFunSpec};
use gera::problems::{gen_cfdd, gen_pde_block, gen_toeplitz, random_uniform_block, CfddOperator};
use gera::shifted::{
    build_cycle, direct_shifted_residual, next_shift_sigma, reduced_shifted_solve, solve_restarted, ShiftStrategy,
    ShiftedProblem,
};
use gera::shifts::{estimate_spectrum, log_abs_g, next_shift_exp, GOrder, ShiftState};
use gera::{basis_combine, diamond_product, Block, CsrMatrix, FactorCache};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(n: usize, seed: u64) -> (CsrMatrix, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let d = &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5;
    (CsrMatrix::from_dense(&d).unwrap(), d)
}

fn rel(a: &Block, b: &Block) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// `r(A)V` is reproduced exactly for `r = p/q` with `q` built on the poles of the space.
    #[test]
    fn rational_functions_are_reproduced(
        n in 20usize..60,
        m in 2usize..5,
        seed in any::<u64>(),
    ) {
        let (a, d) = random_spd(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let v = random_uniform_block(n, 2, seed.wrapping_add(3)).unwrap();
        let shifts: Vec<f64> = (0..m).map(|_| -rng.random_range(0.1..2.0)).collect();
        let (basis, pd) = gera_build(&a, &v, &shifts).unwrap();
        prop_assume!(pd.breakdown().is_none());
        let poles = pd.poles(m);
        let coeffs: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (c2, p2) = (coeffs.clone(), poles.clone());
        let r = move |z: Complex64| {
            let num = c2.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
            let den = p2.iter().fold(Complex64::new(1.0, 0.0), |acc, &s| acc * (z - s));
            num / den
        };
        let f = MatFunSpec::custom("rational", r);
        let proj = recover_t(&pd).unwrap();
        let approx = approx_fav(&basis.blocks()[..2 * m], &proj.t, &f, pd.norm_v()).unwrap();

        // oracle: Horner on p(A)V followed by dense solves with each pole
        let vm = v.as_matrix().clone();
        let mut pv = DMatrix::zeros(n, 2);
        for &c in coeffs.iter().rev() {
            pv = &d * pv + &vm * c;
        }
        for &s in &poles {
            pv = (&d - DMatrix::identity(n, n) * s).lu().solve(&pv).unwrap();
        }
        let exact = Block::new(pv).unwrap();
        prop_assert!(rel(&approx, &exact) <= 1e-8, "error {}", rel(&approx, &exact));
    }

    #[test]
    fn sigma_choice_matches_brute_force(
        ritz in prop::collection::vec(0.5f64..20.0, 2..10),
        shifts in prop::collection::vec(-5.0f64..-0.1, 0..5),
        sigmas in prop::collection::vec(-6.0f64..0.0, 1..20),
    ) {
        let nodes: Vec<Complex64> = ritz.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let got = next_shift_sigma(&nodes, &shifts, &sigmas).unwrap();
        let g = |z: f64| {
            let num: f64 = ritz.iter().map(|&l| (z - l).abs()).product();
            let den: f64 = shifts.iter().map(|&s| (z - s).abs()).product();
            num / den
        };
        let best = sigmas.iter().copied().filter(|&s| g(s).is_finite() && g(s) > 0.0)
            .fold(f64::INFINITY, |acc, s| acc.min(g(s)));
        prop_assert!(sigmas.contains(&got));
        prop_assert!((g(got) - best).abs() <= 1e-10 * best);
    }

    #[test]
    fn log_g_matches_direct_product(
        nodes in prop::collection::vec(-5.0f64..5.0, 1..8),
        poles in prop::collection::vec(-5.0f64..5.0, 0..4),
        z in -6.0f64..6.0,
    ) {
        let st = ShiftState::real(&nodes, &poles, -6.0, 6.0).unwrap();
        let direct = nodes.iter().map(|&l| (z - l).abs()).product::<f64>()
            / poles.iter().map(|&s| (z - s).abs()).product::<f64>();
        prop_assume!(direct.is_finite() && direct > 0.0);
        let got = log_abs_g(z, &st, GOrder::TwoM).exp();
        prop_assert!((got - direct).abs() <= 1e-12 * direct.max(1e-300) * 10.0);
    }
}

#[test]
fn identity_and_linear_functions_are_exact() {
    let a = gen_cfdd(CfddOperator::L2, 10).unwrap();
    let v = random_uniform_block(a.n(), 3, 1).unwrap();
    let (basis, pd) = gera_build(&a, &v, &[-0.5, -1.0, -2.0]).unwrap();
    let proj = recover_t(&pd).unwrap();
    let one = MatFunSpec::custom("one", |_| Complex64::new(1.0, 0.0));
    let got = approx_fav(&basis.blocks()[..6], &proj.t, &one, pd.norm_v()).unwrap();
    assert!(rel(&got, &v) <= 1e-14);
    let lin = MatFunSpec::custom("z", |z| z);
    let got = approx_fav(&basis.blocks()[..6], &proj.t, &lin, pd.norm_v()).unwrap();
    assert!(rel(&got, &a.mul_block(&v).unwrap()) <= 1e-9);
}

#[test]
fn log_of_spd_round_trips_through_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
    let t = &g * g.transpose() + DMatrix::identity(10, 10);
    let l = small_matfun(&t, &MatFunSpec::Log).unwrap();
    // independent route: scaling and squaring
    let back = l.exp();
    assert!((back - &t).abs().max() <= 1e-11 * t.abs().max());
    let eig = SymmetricEigen::new(t.clone());
    let tr: f64 = eig.eigenvalues.iter().map(|x| x.ln()).sum();
    assert!((l.trace() - tr).abs() <= 1e-11 * tr.abs().max(1.0));
}

#[test]
fn exponential_residual_matches_ode_residual() {
    let a = gen_cfdd(CfddOperator::L3, 30).unwrap();
    let v = gen_pde_block(30).unwrap();
    let shifts: Vec<f64> = (0..8).map(|j| -20.0 * 2f64.powi(j)).collect();
    let (basis, pd) = gera_build(&a, &v, &shifts).unwrap();
    let proj = recover_t(&pd).unwrap();
    let t = 1.0;
    let blocks = &basis.blocks()[..16];
    let u = approx_fav(blocks, &proj.t, &MatFunSpec::exp_neg(t).unwrap(), pd.norm_v()).unwrap();
    let e = (&proj.t * -t).exp();
    let du_coef = -(&proj.t * e.column(0)) * pd.norm_v();
    let du = basis_combine(blocks, du_coef.as_slice()).unwrap();
    let r = Block::new(du.as_matrix() + a.mul_block(&u).unwrap().as_matrix()).unwrap();
    let closed = exp_residual_norm(&proj, t, pd.norm_v()).unwrap();
    let direct = r.frobenius_norm();
    assert!((closed - direct).abs() <= 1e-8 * direct, "{closed} vs {direct}");
    assert!(exp_residual_norm(&proj, 0.0, pd.norm_v()).unwrap() <= 1e-12 * pd.norm_v());
}

#[test]
fn eigenvector_start_converges_at_once() {
    let a = CsrMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
    let v = Block::from_column_slice(2, 1, &[1.0, 0.0]).unwrap();
    let (u, rep) = exp_action_adaptive(&a, &v, 1.0, 1e-12, 10).unwrap();
    assert!(rep.converged);
    assert!(rep.iterations <= 1);
    assert!((u.as_slice()[0] - (-1.0f64).exp()).abs() <= 1e-12);
    assert!(u.as_slice()[1].abs() <= 1e-12);
}

#[test]
fn adaptive_exponential_matches_dense_oracle() {
    let a = gen_cfdd(CfddOperator::L3, 15).unwrap();
    let v = gen_pde_block(15).unwrap();
    let (u, rep) = exp_action_adaptive(&a, &v, 0.5, 1e-10, 30).unwrap();
    assert!(rep.converged);
    assert!(rep.final_residual() <= 1e-10);
    assert_eq!(rep.shifts_used.len(), rep.iterations);
    let exact = DenseOracle::new(&a)
        .unwrap()
        .apply(&MatFunSpec::exp_neg(0.5).unwrap(), &v)
        .unwrap();
    assert!(u.sub(&exact).unwrap().frobenius_norm() <= 1e-8);
}

/// One cycle at zero initial guess is the resolvent approximation.
#[test]
fn one_cycle_equals_resolvent_approximation() {
    let a = gen_cfdd(CfddOperator::L1, 15).unwrap();
    let b = random_uniform_block(a.n(), 3, 2).unwrap();
    let shifts = vec![-1.0, -2.0, -3.0];
    for sigma in [-0.5, -2.5, -4.0] {
        let problem = ShiftedProblem {
            a: &a,
            b: &b,
            sigmas: vec![sigma],
            tol: 1e-300,
            m: 3,
            max_cycles: 1,
        };
        let sol = solve_restarted(&problem, &ShiftStrategy::Fixed(shifts.clone())).unwrap();
        let (basis, pd) = gera_build(&a, &b, &shifts).unwrap();
        let proj = recover_t(&pd).unwrap();
        let f = MatFunSpec::resolvent(sigma).unwrap();
        let approx = approx_fav(&basis.blocks()[..6], &proj.t, &f, pd.norm_v()).unwrap();
        assert!(rel(&sol.results[0].x, &approx) <= 1e-10);
    }
}

/// Closed-form residual, Galerkin orthogonality and colinearity with the next block.
#[test]
fn shifted_residual_structure() {
    let a = gen_cfdd(CfddOperator::L1, 20).unwrap();
    let b = random_uniform_block(a.n(), 5, 3).unwrap();
    let mut cache = FactorCache::default();
    let sigmas = [-5.0, -2.5, 0.0];
    // shifts away from every sigma keep the residuals far above roundoff
    let strategy = ShiftStrategy::Fixed(vec![-8.0, -9.0]);
    let cb = build_cycle(&a, &b, &strategy, &sigmas, 2, &mut cache).unwrap();
    let d = cb.proj.dim();
    let vnext = &cb.blocks[d];
    for &sigma in &sigmas {
        let y = reduced_shifted_solve(&cb.proj.t, sigma, cb.norm_seed).unwrap();
        let x = basis_combine(&cb.blocks[..d], y.as_slice()).unwrap();
        let r = b.sub(&a.mul_block_shifted(sigma, &x).unwrap()).unwrap();
        let rn = r.frobenius_norm();
        let closed = gera::shifted::shifted_residual_norm(&cb.proj, sigma, cb.norm_seed).unwrap();
        assert!((closed - rn).abs() <= 1e-8 * rn, "{closed} vs {rn}");
        let orth = diamond_product(&cb.blocks[..d], std::slice::from_ref(&r)).unwrap();
        assert!(orth.abs().max() <= 1e-9 * b.frobenius_norm());
        let c = gera::frobenius_inner(&r, vnext).unwrap();
        assert!(r.sub(&vnext.scaled(c)).unwrap().frobenius_norm() <= 1e-8 * rn);
    }
}

#[test]
fn restarted_solution_meets_direct_residual() {
    let a = gen_cfdd(CfddOperator::L1, 20).unwrap();
    let b = random_uniform_block(a.n(), 3, 5).unwrap();
    let sigmas: Vec<f64> = (0..6).map(|i| -i as f64).collect();
    let tol = 1e-8;
    for strategy in [ShiftStrategy::Adaptive, ShiftStrategy::Zero, ShiftStrategy::Polynomial] {
        let problem = ShiftedProblem {
            a: &a,
            b: &b,
            sigmas: sigmas.clone(),
            tol,
            m: 3,
            max_cycles: 200,
        };
        let sol = solve_restarted(&problem, &strategy).unwrap();
        assert!(sol.all_converged(), "{strategy:?}");
        for r in &sol.results {
            assert!(direct_shifted_residual(&a, &b, r.sigma, &r.x).unwrap() <= 10.0 * tol);
        }
        assert!(sol.history.iter().all(|h| h.cycle >= 1 && h.cycle <= sol.cycles));
    }
}

#[test]
fn ritz_values_of_symmetric_projection_are_real() {
    let (a, _) = random_spd(30, 8);
    let v = random_uniform_block(30, 2, 9).unwrap();
    let (_, pd) = gera_build(&a, &v, &[-0.3, -0.6]).unwrap();
    let ritz = ritz_values(&recover_t(&pd).unwrap().t);
    assert_eq!(ritz.len(), 4);
    assert!(ritz.iter().all(|z| z.im.abs() <= 1e-10 && z.re > 0.0));
}

#[test]
fn spectrum_estimate_brackets_ritz_values() {
    let a = gen_toeplitz(200).unwrap();
    let est = estimate_spectrum(&a).unwrap();
    assert!(est.converged);
    let v = random_uniform_block(200, 2, 4).unwrap();
    let shifts: Vec<f64> = (1..=6).map(|j| -0.2 * j as f64).collect();
    let (_, pd) = gera_build(&a, &v, &shifts).unwrap();
    for z in ritz_values(&recover_t(&pd).unwrap().t) {
        assert!(
            z.re >= est.lambda_min * (1.0 - 1e-3) && z.re <= est.lambda_max * (1.0 + 1e-3),
            "{z}"
        );
    }
}

/// The chosen pole lowers the peak of `1/|g|` on the spectral interval more than repeating `s_1`.
#[test]
fn exp_shift_beats_repeating_the_first_pole() {
    let a = gen_cfdd(CfddOperator::L3, 20).unwrap();
    let v = gen_pde_block(20).unwrap();
    let est = estimate_spectrum(&a).unwrap();
    let (lmin, lmax) = (est.lambda_min, est.lambda_max);
    let shifts: Vec<f64> = (0..4).map(|j| -lmin * 8f64.powi(j)).collect();
    let (_, pd) = gera_build(&a, &v, &shifts).unwrap();
    let ritz = ritz_values(&recover_t(&pd).unwrap().t);
    let poles = pd.poles(4);
    let st = ShiftState::new(ritz.clone(), poles.clone(), lmin, lmax).unwrap();
    let s = next_shift_exp(&st);
    assert!(-s >= lmin && -s <= lmax);
    assert!(poles.iter().all(|&p| (p - s).abs() > 1e-12 * p.abs()));
    let peak = |extra: f64| {
        let mut with = poles.clone();
        with.push(extra);
        let st = ShiftState::new(ritz.clone(), with, lmin, lmax).unwrap();
        (0..=20_000)
            .map(|k| lmin * (lmax / lmin).powf(k as f64 / 20_000.0))
            .map(|mu| -log_abs_g(-mu, &st, GOrder::TwoM))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    assert!(peak(s) < peak(poles[0]), "{} vs {}", peak(s), peak(poles[0]));
}
