//! `gera` command-line experiments. Every subcommand writes CSV with a header
//! row to stdout; columns are described in `docs/csv_schema.md`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gera::baselines::{MethodKind, Projection};
use gera::dense::DenseOracle;
use gera::matfun::{approx_fav, exp_action_adaptive_multi, MatFunSpec};
use gera::problems::{BlockKind, CfddOperator, MatrixSource, ProblemSpec};
use gera::shifted::{solve_restarted_cached, ShiftStrategy, ShiftedProblem};
use gera::{Block, CsrMatrix, Error, FactorCache};

/// Largest `n` for which errors are measured against the dense oracle.
const DENSE_LIMIT: usize = 2000;

#[derive(Parser)]
#[command(name = "gera", version, about = "Global extended-rational Arnoldi experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate f(A)V with one subspace method.
    Matfun(MatfunArgs),
    /// Solve (A - σI)X = B for a family of σ with restarts.
    Shifted(ShiftedArgs),
    /// Adaptive approximation of exp(-tA)V for several t.
    Expode(ExpodeArgs),
    /// Reproduce one of the experiment tables.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// cfdd-L1, cfdd-L2, cfdd-L3, toeplitz, hankel, blockdiag or mtx:<path>
    #[arg(long)]
    problem: String,
    /// Interior grid points per direction for cfdd problems (n = n0²).
    #[arg(long)]
    n0: Option<usize>,
    /// Order for toeplitz, hankel and blockdiag.
    #[arg(long)]
    n: Option<usize>,
    /// Block columns.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum)]
    block: Option<BlockArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BlockArg {
    Random,
    Pde,
    Unit,
}

impl From<BlockArg> for BlockKind {
    fn from(b: BlockArg) -> Self {
        match b {
            BlockArg::Random => BlockKind::RandomUniform,
            BlockArg::Pde => BlockKind::PdeSines,
            BlockArg::Unit => BlockKind::Unit,
        }
    }
}

impl ProblemArgs {
    fn spec(&self, default_block: BlockKind) -> Result<ProblemSpec, Error> {
        let source = parse_source(&self.problem, self.n0, self.n)?;
        let block = self.block.map(BlockKind::from).unwrap_or(default_block);
        let p = match (block, self.p) {
            (BlockKind::PdeSines, None) => 3,
            (_, Some(p)) => p,
            (_, None) => 1,
        };
        Ok(ProblemSpec {
            source,
            block,
            p,
            seed: self.seed,
        })
    }
}

fn parse_source(problem: &str, n0: Option<usize>, n: Option<usize>) -> Result<MatrixSource, Error> {
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| Error::InvalidInput(format!("problem {problem} needs --{flag}")))
    };
    if let Some(path) = problem.strip_prefix("mtx:") {
        return Ok(MatrixSource::MatrixMarket(PathBuf::from(path)));
    }
    let lower = problem.to_ascii_lowercase();
    if let Some(op) = lower.strip_prefix("cfdd-") {
        let op = CfddOperator::from_str(op)?;
        return Ok(MatrixSource::Cfdd {
            op,
            n0: need(n0, "n0")?,
        });
    }
    match lower.as_str() {
        "toeplitz" => Ok(MatrixSource::Toeplitz { n: need(n, "n")? }),
        "hankel" => Ok(MatrixSource::Hankel { n: need(n, "n")? }),
        "blockdiag" => Ok(MatrixSource::BlockDiag { n: need(n, "n")? }),
        _ => Err(Error::InvalidInput(format!("unknown problem {problem:?}"))),
    }
}

fn problem_label(src: &MatrixSource) -> String {
    match src {
        MatrixSource::Cfdd { op, n0 } => format!("cfdd-{op:?}/n0={n0}"),
        MatrixSource::Toeplitz { n } => format!("toeplitz/n={n}"),
        MatrixSource::Hankel { n } => format!("hankel/n={n}"),
        MatrixSource::BlockDiag { n } => format!("blockdiag/n={n}"),
        MatrixSource::MatrixMarket(p) => p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "mtx".into()),
    }
}

/// `linear:a:k` gives `a, 2a, ..., ka`; `values:x,y,...` lists them.
///
/// Values are poles of `(A + sI)^{-1}` and reach the library negated.
fn parse_shifts(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidInput(format!("bad shift spec {spec:?}"));
    let poles: Vec<f64> = if let Some(rest) = spec.strip_prefix("linear:") {
        let (a, k) = rest.split_once(':').ok_or_else(bad)?;
        let a: f64 = a.parse().map_err(|_| bad())?;
        let k: usize = k.parse().map_err(|_| bad())?;
        (1..=k).map(|i| a * i as f64).collect()
    } else if let Some(rest) = spec.strip_prefix("values:") {
        rest.split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    } else {
        return Err(bad());
    };
    if poles.is_empty() || poles.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    Ok(poles.into_iter().map(|x| -x).collect())
}

/// `uniform:a:b[:k]` gives `k` (default 20) equally spaced values from `a` to `b`.
fn parse_sigmas(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidInput(format!("bad sigma spec {spec:?}"));
    let out: Vec<f64> = if let Some(rest) = spec.strip_prefix("uniform:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 && parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].parse().map_err(|_| bad())?;
        let b: f64 = parts[1].parse().map_err(|_| bad())?;
        let k: usize = match parts.get(2) {
            Some(k) => k.parse().map_err(|_| bad())?,
            None => 20,
        };
        match k {
            0 => return Err(bad()),
            1 => vec![a],
            _ => (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect(),
        }
    } else if let Some(rest) = spec.strip_prefix("values:") {
        rest.split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    } else {
        return Err(bad());
    };
    if out.is_empty() || out.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    Ok(out)
}

fn parse_times(spec: &str) -> Result<Vec<f64>, Error> {
    spec.split(',')
        .map(|x| {
            let x = x.trim();
            let value = match x.split_once('/') {
                Some((a, b)) => a
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .zip(b.trim().parse::<f64>().ok())
                    .map(|(a, b)| a / b),
                None => x.parse().ok(),
            };
            value
                .filter(|t: &f64| t.is_finite() && *t >= 0.0)
                .ok_or_else(|| Error::InvalidInput(format!("bad time {x:?}")))
        })
        .collect()
}

#[derive(Args)]
struct MatfunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// sqrt, log, exp-neg-sqrt, exp-neg:<t> or resolvent:<σ>
    #[arg(long)]
    f: String,
    /// gera, gea, ra or sga
    #[arg(long, default_value = "gera")]
    method: String,
    /// Subspace dimension: 2m for gera and gea, the number of blocks for sga.
    #[arg(long, default_value_t = 20)]
    dim: usize,
    /// Poles for gera and ra; defaults to linear:0.1:dim/2 and linear:0.05:dim.
    #[arg(long)]
    shifts: Option<String>,
}

#[derive(Args)]
struct ShiftedArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "uniform:-5:0:20")]
    sigmas: String,
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Absolute tolerance on ‖B - (A - σI)X‖_F.
    #[arg(long, default_value_t = 2e-12)]
    tol: f64,
    /// gera (adaptive shifts), gea (zero shifts), gfom or fixed
    #[arg(long, default_value = "gera")]
    method: String,
    /// Shifts for --method fixed.
    #[arg(long)]
    shifts: Option<String>,
    #[arg(long, default_value_t = 200)]
    max_cycles: usize,
}

#[derive(Args)]
struct ExpodeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated times; fractions such as 1/3 are accepted.
    #[arg(long, default_value = "1")]
    t: String,
    #[arg(long, default_value_t = 5e-9)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    itermax: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// 1, 4, 5 or 6
    #[arg(long)]
    table: u32,
    /// Override the grid size of tables 1 and 4.
    #[arg(long)]
    n0: Option<usize>,
    /// Override the order of tables 5 and 6.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn csv_row(fields: &[String]) {
    println!("{}", fields.join(","));
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

/// Leading `d x d` part of the projection, for the change-between-dimensions proxy.
fn approx_leading(pr: &Projection, f: &MatFunSpec, d: usize) -> Result<Block, Error> {
    let t = pr.proj.t.view((0, 0), (d, d)).into_owned();
    approx_fav(&pr.basis.blocks()[..d], &t, f, pr.norm_v)
}

fn build_projection(
    kind: MethodKind,
    a: &CsrMatrix,
    v: &Block,
    dim: usize,
    shifts: Option<&str>,
) -> Result<Projection, Error> {
    let mut cache = FactorCache::default();
    let half = (dim / 2).max(1);
    match kind {
        MethodKind::Gera => {
            let s = parse_shifts(shifts.unwrap_or(&format!("linear:0.1:{half}")))?;
            Projection::gera(a, v, &s, &mut cache)
        }
        MethodKind::Gea => Projection::gea(a, v, half, &mut cache),
        MethodKind::Ra => {
            let s = parse_shifts(shifts.unwrap_or(&format!("linear:0.05:{dim}")))?;
            Projection::ra(a, v, &s, &mut cache)
        }
        MethodKind::Sga => Projection::sga(a, v, dim),
    }
}

fn run_matfun(args: &MatfunArgs) -> Result<(), Error> {
    let spec = args.problem.spec(BlockKind::RandomUniform)?;
    let (a, v) = spec.build()?;
    let f = MatFunSpec::from_str(&args.f)?;
    let kind = MethodKind::from_str(&args.method)?;
    let start = Instant::now();
    let pr = build_projection(kind, &a, &v, args.dim, args.shifts.as_deref())?;
    let approx = pr.approximate(&f)?;
    let secs = start.elapsed().as_secs_f64();
    let (abs, rel) = if a.n() <= DENSE_LIMIT {
        let exact = DenseOracle::new(&a)?.apply(&f, &v)?;
        let e = approx.sub(&exact)?.frobenius_norm();
        (sci(e), sci(e / exact.frobenius_norm()))
    } else {
        (String::new(), String::new())
    };
    let step = if matches!(kind, MethodKind::Gera | MethodKind::Gea) {
        2
    } else {
        1
    };
    let proxy = if pr.dim() > step {
        let prev = approx_leading(&pr, &f, pr.dim() - step)?;
        sci(approx.sub(&prev)?.frobenius_norm() / approx.frobenius_norm())
    } else {
        String::new()
    };
    csv_row(&["problem,n,p,f,method,dim,abs_error,rel_error,change_proxy,time_s".into()]);
    csv_row(&[
        problem_label(&spec.source),
        a.n().to_string(),
        spec.p.to_string(),
        f.name(),
        kind.to_string(),
        pr.dim().to_string(),
        abs,
        rel,
        proxy,
        format!("{secs:.4}"),
    ]);
    Ok(())
}

fn strategy_for(method: &str, shifts: Option<&str>) -> Result<(ShiftStrategy, &'static str), Error> {
    match method.to_ascii_lowercase().as_str() {
        "gera" => Ok((ShiftStrategy::Adaptive, "GERAM")),
        "gea" => Ok((ShiftStrategy::Zero, "GEAM")),
        "gfom" => Ok((ShiftStrategy::Polynomial, "GFOM")),
        "fixed" => {
            let s = shifts.ok_or_else(|| Error::InvalidInput("--method fixed needs --shifts".into()))?;
            Ok((ShiftStrategy::Fixed(parse_shifts(s)?), "FIXED"))
        }
        other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
    }
}

fn run_shifted(args: &ShiftedArgs) -> Result<bool, Error> {
    let spec = args.problem.spec(BlockKind::RandomUniform)?;
    let (a, b) = spec.build()?;
    let sigmas = parse_sigmas(&args.sigmas)?;
    let (strategy, label) = strategy_for(&args.method, args.shifts.as_deref())?;
    let problem = ShiftedProblem {
        a: &a,
        b: &b,
        sigmas,
        tol: args.tol,
        m: args.m,
        max_cycles: args.max_cycles,
    };
    let start = Instant::now();
    let sol = solve_restarted_cached(&problem, &strategy, &mut FactorCache::default())?;
    let secs = start.elapsed().as_secs_f64();
    csv_row(&["problem,n,p,method,m,sigma,residual,sigma_cycles,total_cycles,converged,time_s".into()]);
    for r in &sol.results {
        csv_row(&[
            problem_label(&spec.source),
            a.n().to_string(),
            spec.p.to_string(),
            label.into(),
            args.m.to_string(),
            format!("{}", r.sigma),
            sci(r.residual_norm),
            r.cycles.to_string(),
            sol.cycles.to_string(),
            r.converged.to_string(),
            format!("{secs:.4}"),
        ]);
    }
    Ok(sol.all_converged())
}

fn run_expode(args: &ExpodeArgs) -> Result<bool, Error> {
    let spec = args.problem.spec(BlockKind::PdeSines)?;
    let (a, v) = spec.build()?;
    let ts = parse_times(&args.t)?;
    let start = Instant::now();
    let runs = exp_action_adaptive_multi(&a, &v, &ts, args.tol, args.itermax)?;
    let secs = start.elapsed().as_secs_f64();
    csv_row(&["problem,n,p,t,iterations,dim,residual,converged,lambda_min,lambda_max,time_s".into()]);
    let mut all = true;
    for (_, rep) in &runs {
        all &= rep.converged;
        csv_row(&[
            problem_label(&spec.source),
            a.n().to_string(),
            spec.p.to_string(),
            format!("{}", rep.t),
            rep.iterations.to_string(),
            rep.dim.to_string(),
            sci(rep.final_residual()),
            rep.converged.to_string(),
            sci(rep.spectrum.lambda_min),
            sci(rep.spectrum.lambda_max),
            format!("{secs:.4}"),
        ]);
    }
    Ok(all)
}

fn bench_table1(args: &BenchArgs) -> Result<(), Error> {
    let spec = ProblemSpec {
        source: MatrixSource::Cfdd {
            op: CfddOperator::L1,
            n0: args.n0.unwrap_or(50),
        },
        block: BlockKind::RandomUniform,
        p: args.p.unwrap_or(5),
        seed: args.seed,
    };
    let (a, b) = spec.build()?;
    let sigmas = parse_sigmas("uniform:-5:0:20")?;
    let mut cache = FactorCache::default();
    csv_row(&["table,problem,n,p,m,method,cycles,max_residual,converged,time_s".into()]);
    for m in [10, 20] {
        for method in ["gera", "gea", "gfom"] {
            let (strategy, label) = strategy_for(method, None)?;
            let problem = ShiftedProblem {
                a: &a,
                b: &b,
                sigmas: sigmas.clone(),
                tol: 2e-12,
                m,
                max_cycles: 500,
            };
            let start = Instant::now();
            let sol = solve_restarted_cached(&problem, &strategy, &mut cache)?;
            csv_row(&[
                "1".into(),
                problem_label(&spec.source),
                a.n().to_string(),
                spec.p.to_string(),
                m.to_string(),
                label.into(),
                sol.cycles.to_string(),
                sci(sol.max_residual()),
                sol.all_converged().to_string(),
                format!("{:.4}", start.elapsed().as_secs_f64()),
            ]);
        }
    }
    Ok(())
}

fn bench_table4(args: &BenchArgs) -> Result<(), Error> {
    let source = MatrixSource::Cfdd {
        op: CfddOperator::L3,
        n0: args.n0.unwrap_or(100),
    };
    let spec = ProblemSpec {
        source,
        block: BlockKind::PdeSines,
        p: 3,
        seed: args.seed,
    };
    let (a, v) = spec.build()?;
    csv_row(&["table,problem,n,t,dim,residual,converged,time_s".into()]);
    for t in parse_times("1/10,1/3,2/3,1")? {
        let start = Instant::now();
        let runs = exp_action_adaptive_multi(&a, &v, &[t], 5e-9, 100)?;
        let rep = &runs[0].1;
        csv_row(&[
            "4".into(),
            problem_label(&spec.source),
            a.n().to_string(),
            format!("{t}"),
            rep.dim.to_string(),
            sci(rep.final_residual()),
            rep.converged.to_string(),
            format!("{:.4}", start.elapsed().as_secs_f64()),
        ]);
    }
    Ok(())
}

fn bench_functions(args: &BenchArgs) -> Result<(), Error> {
    let n = args.n.unwrap_or(1000);
    let source = if args.table == 5 {
        MatrixSource::Toeplitz { n }
    } else {
        MatrixSource::BlockDiag { n }
    };
    let spec = ProblemSpec {
        source,
        block: BlockKind::RandomUniform,
        p: args.p.unwrap_or(5),
        seed: args.seed,
    };
    let (a, v) = spec.build()?;
    let oracle = DenseOracle::new(&a)?;
    let methods = [MethodKind::Gera, MethodKind::Ra, MethodKind::Sga];
    let mut projections = Vec::new();
    for kind in methods {
        let start = Instant::now();
        let pr = build_projection(kind, &a, &v, 20, None)?;
        projections.push((pr, start.elapsed().as_secs_f64()));
    }
    csv_row(&["table,problem,n,p,f,method,dim,abs_error,rel_error,time_s".into()]);
    for f in [MatFunSpec::Sqrt, MatFunSpec::Log, MatFunSpec::ExpNegSqrt] {
        let exact = oracle.apply(&f, &v)?;
        for (pr, build_secs) in &projections {
            let start = Instant::now();
            let e = pr.approximate(&f)?.sub(&exact)?.frobenius_norm();
            csv_row(&[
                args.table.to_string(),
                problem_label(&spec.source),
                a.n().to_string(),
                spec.p.to_string(),
                f.name(),
                pr.kind.to_string(),
                pr.dim().to_string(),
                sci(e),
                sci(e / exact.frobenius_norm()),
                format!("{:.4}", build_secs + start.elapsed().as_secs_f64()),
            ]);
        }
    }
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<(), Error> {
    match args.table {
        1 => bench_table1(args),
        4 => bench_table4(args),
        5 | 6 => bench_functions(args),
        t => Err(Error::InvalidInput(format!(
            "table {t} is not reproducible here; choose 1, 4, 5 or 6"
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Matfun(a) => run_matfun(a).map(|_| true),
        Command::Shifted(a) => run_shifted(a),
        Command::Expode(a) => run_expode(a),
        Command::Bench(a) => run_bench(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gera: not every run converged");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("gera: {e}");
            ExitCode::FAILURE
        }
    }
}
