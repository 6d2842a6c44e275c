//! Problem assembly and multi-method runs behind the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_first_order, FirstOrderConfig, FirstOrderMethod};
use crate::error::{Result, SolverError};
use crate::normal::{EvalCounts, ProblemHandle};
use crate::probio::{self, load_libsvm, synth_problem, Dataset, SynthKind, TraceFormat};
use crate::prox::ProxOperator;
use crate::solver::{solve, SolveStatus, SolverConfig};
use crate::trace::TraceRecord;

/// Environment variable capping the number of parallel runs.
pub const THREADS_ENV: &str = "NORMSMOOTH_THREADS";

/// `(a, b)` pairs for `ε_k = min{χ_k^a, b}` swept by [`ablate`].
pub const ABLATION_RULES: [(f64, f64); 4] = [(1.5, 0.1), (2.0, 0.05), (2.5, 0.01), (3.0, 0.001)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LsssnLbfgs,
    LsssnExact,
    Fista,
    ProxGrad,
}

impl Method {
    pub const ALL: [Method; 4] = [Self::LsssnLbfgs, Self::LsssnExact, Self::Fista, Self::ProxGrad];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LsssnLbfgs => "lsssn-lbfgs",
            Self::LsssnExact => "lsssn-exact",
            Self::Fista => "fista",
            Self::ProxGrad => "prox-grad",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic {
        nrows: usize,
        ncols: usize,
        sparsity: f64,
        seed: u64,
    },
    File {
        path: PathBuf,
        dims: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Regularizer {
    Zero,
    L1,
    BoxL1,
    /// Random groups of `size` drawn from `seed`.
    Group {
        size: usize,
        seed: u64,
    },
}

/// `λ` given directly or as `scale/L` with `L` the Lipschitz bound of `∇f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "kebab-case")]
pub enum LambdaRule {
    Absolute(f64),
    OverLipschitz(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub loss: SynthKind,
    pub source: DataSource,
    pub regularizer: Regularizer,
    pub mu: f64,
    pub lambda: LambdaRule,
}

pub fn load_dataset(spec: &ProblemSpec) -> Result<Dataset> {
    match &spec.source {
        DataSource::Synthetic {
            nrows,
            ncols,
            sparsity,
            seed,
        } => synth_problem(spec.loss, *nrows, *ncols, *sparsity, *seed),
        DataSource::File { path, dims } => load_libsvm(path, *dims),
    }
}

/// Builds the problem for `spec` on an already loaded dataset.
pub fn build_problem(spec: &ProblemSpec, ds: &Dataset) -> Result<ProblemHandle> {
    let smooth = spec.loss.objective(ds)?;
    let n = ds.ncols();
    let prox = match spec.regularizer {
        Regularizer::Zero => ProxOperator::zero(),
        Regularizer::L1 => ProxOperator::l1(spec.mu)?,
        Regularizer::BoxL1 => ProxOperator::box_l1(spec.mu)?,
        Regularizer::Group { size, seed } => {
            ProxOperator::group_l2(spec.mu, probio::random_groups(n, size, seed)?)?
        }
    };
    let lambda = match spec.lambda {
        LambdaRule::Absolute(l) => l,
        LambdaRule::OverLipschitz(scale) => {
            let l = smooth.lipschitz_bound()?;
            if !(l > 0.0 && l.is_finite()) {
                return Err(SolverError::NotAvailable(
                    "lambda = scale/L needs a positive Lipschitz bound".into(),
                ));
            }
            scale / l
        }
    };
    ProblemHandle::new(smooth, prox, lambda)
}

/// Solver settings shared by every run of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub lbfgs: SolverConfig,
    pub exact: SolverConfig,
    pub first_order: FirstOrderConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            lbfgs: SolverConfig::lbfgs(),
            exact: SolverConfig::exact(),
            first_order: FirstOrderConfig::new(FirstOrderMethod::Fista),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    /// Output file stem, e.g. `fista` or `lsssn-lbfgs-a2.5-b0.01`.
    pub label: String,
    pub method: Method,
    pub status: SolveStatus,
    pub iterations: usize,
    pub psi: f64,
    pub nat_res: f64,
    pub counts: EvalCounts,
    pub wall_clock: f64,
    pub failure: Option<String>,
    pub trace: Vec<TraceRecord>,
}

pub fn run_method(problem: &ProblemHandle, method: Method, settings: &RunSettings) -> Result<MethodRun> {
    run_labeled(problem, method, method.as_str().to_string(), settings)
}

fn run_labeled(
    problem: &ProblemHandle,
    method: Method,
    label: String,
    settings: &RunSettings,
) -> Result<MethodRun> {
    let x0 = vec![0.0; problem.dim()];
    let (status, iterations, psi, counts, failure, trace) = match method {
        Method::LsssnLbfgs | Method::LsssnExact => {
            let cfg = if method == Method::LsssnLbfgs {
                &settings.lbfgs
            } else {
                &settings.exact
            };
            let res = solve(problem, cfg, &x0)?;
            (
                res.status,
                res.iterations,
                res.point.psi(),
                res.counts,
                res.failure,
                res.trace,
            )
        }
        Method::Fista | Method::ProxGrad => {
            let cfg = FirstOrderConfig {
                method: if method == Method::Fista {
                    FirstOrderMethod::Fista
                } else {
                    FirstOrderMethod::ProxGrad
                },
                ..settings.first_order
            };
            let res = run_first_order(problem, &cfg, &x0)?;
            (res.status, res.iterations, res.psi, res.counts, None, res.trace)
        }
    };
    let last = trace.last();
    Ok(MethodRun {
        label,
        method,
        status,
        iterations,
        psi,
        nat_res: last.map_or(f64::NAN, |r| r.nat_res),
        counts,
        wall_clock: last.map_or(0.0, |r| r.wall_clock),
        failure,
        trace,
    })
}

/// Worker count from `NORMSMOOTH_THREADS`, defaulting to the available
/// parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

fn run_jobs(
    problem: &ProblemHandle,
    jobs: Vec<(Method, String, RunSettings)>,
    threads: usize,
) -> Result<Vec<MethodRun>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| SolverError::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        jobs.into_par_iter()
            .map(|(m, label, s)| run_labeled(problem, m, label, &s))
            .collect()
    })
}

/// Runs `methods` on one problem. Results keep the order of `methods`.
pub fn compare(
    problem: &ProblemHandle,
    methods: &[Method],
    settings: &RunSettings,
    threads: usize,
) -> Result<Vec<MethodRun>> {
    let jobs = methods
        .iter()
        .map(|&m| (m, m.as_str().to_string(), settings.clone()))
        .collect();
    run_jobs(problem, jobs, threads)
}

/// Runs both Newton variants under every CG tolerance rule in
/// [`ABLATION_RULES`].
pub fn ablate(problem: &ProblemHandle, settings: &RunSettings, threads: usize) -> Result<Vec<MethodRun>> {
    let mut jobs = Vec::new();
    for method in [Method::LsssnLbfgs, Method::LsssnExact] {
        for (a, b) in ABLATION_RULES {
            let mut s = settings.clone();
            let cfg = if method == Method::LsssnLbfgs {
                &mut s.lbfgs
            } else {
                &mut s.exact
            };
            cfg.cg.tol_exponent = a;
            cfg.cg.tol_cap = b;
            jobs.push((method, format!("{}-a{a}-b{b}", method.as_str()), s));
        }
    }
    run_jobs(problem, jobs, threads)
}

/// Lowest objective value recorded anywhere in the given runs.
pub fn psi_star(runs: &[MethodRun]) -> Option<f64> {
    runs.iter()
        .flat_map(|r| r.trace.iter().map(|t| t.psi))
        .filter(|v| v.is_finite())
        .reduce(f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub status: SolveStatus,
    pub iterations: usize,
    pub psi: f64,
    pub rel_err: Option<f64>,
    pub nat_res: f64,
    pub n_f: u64,
    pub n_grad: u64,
    pub n_prox: u64,
    pub wall_clock: f64,
}

pub fn summarize(runs: &[MethodRun], psi_star: Option<f64>) -> Vec<SummaryRow> {
    runs.iter()
        .map(|r| SummaryRow {
            method: r.label.clone(),
            status: r.status,
            iterations: r.iterations,
            psi: r.psi,
            rel_err: psi_star.map(|s| probio::relative_error(r.psi, s)),
            nat_res: r.nat_res,
            n_f: r.counts.f,
            n_grad: r.counts.grad,
            n_prox: r.counts.prox,
            wall_clock: r.wall_clock,
        })
        .collect()
}

/// Writes `<label>.<ext>` per run and `summary.csv` into `dir`, with relative
/// errors taken against `psi_star`.
pub fn write_outputs(
    runs: &[MethodRun],
    dir: &Path,
    format: TraceFormat,
    psi_star: Option<f64>,
) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(dir)?;
    for r in runs {
        let path = dir.join(format!("{}.{}", r.label, format.extension()));
        probio::write_trace(&r.trace, &path, format, psi_star)?;
    }
    let rows = summarize(runs, psi_star);
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ProblemSpec {
        ProblemSpec {
            loss: SynthKind::Logistic,
            source: DataSource::Synthetic {
                nrows: 40,
                ncols: 10,
                sparsity: 1.0,
                seed: 5,
            },
            regularizer: Regularizer::L1,
            mu: 0.01,
            lambda: LambdaRule::Absolute(10.0),
        }
    }

    #[test]
    fn lambda_over_lipschitz() {
        let mut spec = small_spec();
        spec.lambda = LambdaRule::OverLipschitz(10.0);
        let ds = load_dataset(&spec).unwrap();
        let p = build_problem(&spec, &ds).unwrap();
        let l = p.smooth.lipschitz_bound().unwrap();
        assert_eq!(p.lambda, 10.0 / l);
    }

    #[test]
    fn compare_keeps_method_order_and_agrees() {
        let spec = small_spec();
        let ds = load_dataset(&spec).unwrap();
        let p = build_problem(&spec, &ds).unwrap();
        let runs = compare(&p, &Method::ALL, &RunSettings::default(), 2).unwrap();
        let labels: Vec<_> = runs.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["lsssn-lbfgs", "lsssn-exact", "fista", "prox-grad"]);
        let star = psi_star(&runs).unwrap();
        for r in &runs {
            assert_eq!(r.status, SolveStatus::Converged, "{}", r.label);
            assert!(probio::relative_error(r.psi, star) <= 1e-6, "{}", r.label);
        }
    }

    #[test]
    fn ablation_labels() {
        let spec = small_spec();
        let ds = load_dataset(&spec).unwrap();
        let p = build_problem(&spec, &ds).unwrap();
        let runs = ablate(&p, &RunSettings::default(), 1).unwrap();
        assert_eq!(runs.len(), 8);
        assert_eq!(runs[0].label, "lsssn-lbfgs-a1.5-b0.1");
        assert_eq!(runs[7].label, "lsssn-exact-a3-b0.001");
    }
}
