use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use normsmooth::bench::{
    self, DataSource, LambdaRule, Method, MethodRun, ProblemSpec, Regularizer, RunSettings,
};
use normsmooth::probio::{SynthKind, TraceFormat};
use normsmooth::solver::SolverConfig;

#[derive(Parser, Debug)]
#[command(
    name = "normsmooth",
    version,
    about = "Run the normal-map semismooth Newton solver and first-order baselines",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one method and write its trace.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Method to run; `--hessian` picks the Newton variant.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum)]
        hessian: Option<HessianArg>,
    },
    /// Run several methods on one problem with a shared reference value.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Vec<MethodArg>,
    },
    /// Sweep the CG tolerance rule for both Newton variants.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Generate a synthetic instance of this kind.
    #[arg(long, value_enum, conflicts_with = "data")]
    synth: Option<LossArg>,
    /// libsvm data file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Loss for `--data`.
    #[arg(long, value_enum, default_value = "logistic")]
    loss: LossArg,
    /// Column count override for `--data`.
    #[arg(long)]
    dims: Option<usize>,
    /// Rows of the synthetic instance.
    #[arg(long = "N", default_value_t = 200)]
    nrows: usize,
    /// Columns of the synthetic instance.
    #[arg(long = "n", default_value_t = 50)]
    ncols: usize,
    /// Probability that a synthetic matrix entry is nonzero.
    #[arg(long, default_value_t = 1.0)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, value_enum, default_value = "l1")]
    reg: RegArg,
    #[arg(long, default_value_t = 16)]
    group_size: usize,
    /// Seed for the random group partition (defaults to `--seed`).
    #[arg(long)]
    group_seed: Option<u64>,
    #[arg(long, default_value_t = 0.01)]
    mu: f64,
    #[arg(long, default_value_t = 10.0, conflicts_with = "lambda_over_l")]
    lambda: f64,
    /// Use `λ = value/L` with `L` the Lipschitz bound of the gradient.
    #[arg(long)]
    lambda_over_l: Option<f64>,

    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,

    #[command(flatten)]
    overrides: Overrides,
}

/// Solver parameters. Unset values keep their defaults.
#[derive(Args, Debug)]
struct Overrides {
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Iteration budget of the first-order methods.
    #[arg(long)]
    fo_max_iter: Option<usize>,
    /// Step of the natural residual used in the stopping test.
    #[arg(long)]
    lambda_nat: Option<f64>,
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    ls_p: Option<f64>,
    #[arg(long)]
    ls_c: Option<f64>,
    #[arg(long)]
    l_bar: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    max_backtracks: Option<usize>,
    #[arg(long)]
    no_prescreen: bool,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    test_q: Option<f64>,
    #[arg(long)]
    test_c: Option<f64>,
    /// Exponent `a` of the CG tolerance `min{χ^a, b}`.
    #[arg(long)]
    cg_exp: Option<f64>,
    /// Cap `b` of the CG tolerance `min{χ^a, b}`.
    #[arg(long)]
    cg_cap: Option<f64>,
    #[arg(long)]
    cg_max_iter: Option<usize>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LossArg {
    Logistic,
    SigmoidLs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum RegArg {
    None,
    L1,
    BoxL1,
    Group,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum MethodArg {
    LsssnLbfgs,
    LsssnExact,
    Fista,
    ProxGrad,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum HessianArg {
    Lbfgs,
    Exact,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::LsssnLbfgs => Method::LsssnLbfgs,
            MethodArg::LsssnExact => Method::LsssnExact,
            MethodArg::Fista => Method::Fista,
            MethodArg::ProxGrad => Method::ProxGrad,
        }
    }
}

impl From<LossArg> for SynthKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Logistic => SynthKind::Logistic,
            LossArg::SigmoidLs => SynthKind::SigmoidLeastSquares,
        }
    }
}

impl Common {
    fn problem_spec(&self) -> ProblemSpec {
        let (loss, source) = match (&self.data, self.synth) {
            (Some(path), _) => (
                self.loss.into(),
                DataSource::File {
                    path: path.clone(),
                    dims: self.dims,
                },
            ),
            (None, kind) => (
                kind.unwrap_or(LossArg::Logistic).into(),
                DataSource::Synthetic {
                    nrows: self.nrows,
                    ncols: self.ncols,
                    sparsity: self.sparsity,
                    seed: self.seed,
                },
            ),
        };
        let regularizer = match self.reg {
            RegArg::None => Regularizer::Zero,
            RegArg::L1 => Regularizer::L1,
            RegArg::BoxL1 => Regularizer::BoxL1,
            RegArg::Group => Regularizer::Group {
                size: self.group_size,
                seed: self.group_seed.unwrap_or(self.seed),
            },
        };
        ProblemSpec {
            loss,
            source,
            regularizer,
            mu: self.mu,
            lambda: match self.lambda_over_l {
                Some(scale) => LambdaRule::OverLipschitz(scale),
                None => LambdaRule::Absolute(self.lambda),
            },
        }
    }

    fn format(&self) -> TraceFormat {
        match self.format {
            FormatArg::Csv => TraceFormat::Csv,
            FormatArg::Jsonl => TraceFormat::JsonLines,
        }
    }

    fn settings(&self) -> RunSettings {
        let mut s = RunSettings::default();
        let o = &self.overrides;
        for cfg in [&mut s.lbfgs, &mut s.exact] {
            apply_overrides(cfg, o);
        }
        if let Some(v) = o.stop_tol {
            s.first_order.stop_tol = v;
        }
        if let Some(v) = o.lambda_nat {
            s.first_order.lambda_nat = v;
        }
        if let Some(v) = o.fo_max_iter {
            s.first_order.max_iter = v;
        }
        s
    }
}

fn apply_overrides(cfg: &mut SolverConfig, o: &Overrides) {
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.stop_tol, o.stop_tol);
    set(&mut cfg.lambda_nat, o.lambda_nat);
    let ls = &mut cfg.linesearch;
    set(&mut ls.sigma, o.sigma);
    set(&mut ls.rho, o.rho);
    set(&mut ls.gamma, o.gamma);
    set(&mut ls.nu, o.nu);
    set(&mut ls.p, o.ls_p);
    set(&mut ls.c, o.ls_c);
    set(&mut ls.l_bar, o.l_bar);
    set(&mut ls.tau_init, o.tau0);
    if let Some(v) = o.max_backtracks {
        ls.max_backtracks = v;
    }
    if o.no_prescreen {
        ls.prescreen = false;
    }
    set(&mut cfg.test.eta, o.eta);
    set(&mut cfg.test.q, o.test_q);
    set(&mut cfg.test.c, o.test_c);
    set(&mut cfg.cg.tol_exponent, o.cg_exp);
    set(&mut cfg.cg.tol_cap, o.cg_cap);
    if let Some(v) = o.cg_max_iter {
        cfg.cg.max_iter = v;
        cfg.cg.refined_max_iter = cfg.cg.refined_max_iter.max(v);
    }
    if let Some(v) = o.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = o.memory {
        cfg.memory = v;
    }
}

fn print_summary(runs: &[MethodRun], psi_star: Option<f64>) {
    println!(
        "{:<24} {:<20} {:>7} {:>22} {:>11} {:>11}",
        "method", "status", "iters", "psi", "rel_err", "nat_res"
    );
    for r in runs {
        let rel = psi_star.map_or(f64::NAN, |s| normsmooth::probio::relative_error(r.psi, s));
        println!(
            "{:<24} {:<20} {:>7} {:>22.15e} {:>11.3e} {:>11.3e}",
            r.label,
            r.status.as_str(),
            r.iterations,
            r.psi,
            rel,
            r.nat_res
        );
        if let Some(f) = &r.failure {
            eprintln!("{}: {f}", r.label);
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, normsmooth::SolverError> {
    let (common, methods, mode) = match cli.command {
        Command::Solve {
            common,
            method,
            hessian,
        } => {
            let m = match (method, hessian) {
                (Some(m), _) => m.into(),
                (None, Some(HessianArg::Exact)) => Method::LsssnExact,
                (None, _) => Method::LsssnLbfgs,
            };
            (common, vec![m], "solve")
        }
        Command::Compare { common, methods } => {
            let methods = if methods.is_empty() {
                Method::ALL.to_vec()
            } else {
                methods.into_iter().map(Method::from).collect()
            };
            (common, methods, "compare")
        }
        Command::Ablate { common } => (common, Vec::new(), "ablate"),
    };
    let spec = common.problem_spec();
    let settings = common.settings();
    let threads = bench::worker_threads();
    let config = serde_json::json!({
        "command": mode,
        "problem": spec,
        "methods": methods,
        "settings": settings,
        "format": common.format(),
        "out": common.out,
        "generator": normsmooth::probio::GENERATOR,
        "threads": threads,
    });
    if common.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let ds = bench::load_dataset(&spec)?;
    let problem = bench::build_problem(&spec, &ds)?;
    let runs = if mode == "ablate" {
        bench::ablate(&problem, &settings, threads)?
    } else {
        bench::compare(&problem, &methods, &settings, threads)?
    };
    let psi_star = bench::psi_star(&runs);
    bench::write_outputs(&runs, &common.out, common.format(), psi_star)?;
    std::fs::write(
        common.out.join("config.json"),
        serde_json::to_string_pretty(&config)? + "\n",
    )?;
    print_summary(&runs, psi_star);
    if runs.iter().any(|r| r.status.is_failure()) {
        Ok(ExitCode::from(2))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
