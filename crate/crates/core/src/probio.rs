//! Datasets and result files.
//!
//! Synthetic instances are drawn with `ChaCha8Rng` (the ChaCha stream cipher
//! with 8 rounds, seeded from a `u64` through `SeedableRng::seed_from_u64`),
//! so a seed reproduces the same bytes on every platform. The generator name
//! is recorded in each dataset's provenance.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::newton_cg::{CgStatus, StepFlag};
use crate::prox::GroupPartition;
use crate::smooth::SmoothObjective;
use crate::sparse::CsrMatrix;
use crate::trace::TraceRecord;

pub const GENERATOR: &str = "chacha8";

/// Fraction of labels flipped in synthetic logistic data.
pub const LABEL_FLIP_RATE: f64 = 0.05;
/// Standard deviation of the additive noise on synthetic sigmoid targets.
pub const SIGMOID_NOISE: f64 = 0.01;
/// Fraction of nonzero entries in the synthetic ground truth.
pub const TRUTH_DENSITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Provenance {
    File { path: String },
    Synthetic { seed: u64, generator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub name: String,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }
}

/// Reads a libsvm text file. `dims` fixes the column count when trailing
/// features never occur in the data; it must cover the largest index seen.
pub fn load_libsvm(path: &Path, dims: Option<usize>) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let name = path
        .file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    let mut ds = parse_libsvm(reader, dims)?;
    ds.name = name;
    ds.provenance = Provenance::File {
        path: path.display().to_string(),
    };
    Ok(ds)
}

pub fn parse_libsvm<R: BufRead>(reader: R, dims: Option<usize>) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut max_col = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or("");
        let label: f64 = label_tok.parse().map_err(|_| SolverError::Parse {
            line: lineno,
            detail: format!("bad label {label_tok:?}"),
        })?;
        if !label.is_finite() {
            return Err(SolverError::Parse {
                line: lineno,
                detail: format!("non-finite label {label_tok:?}"),
            });
        }
        let mut prev: Option<usize> = None;
        for tok in tokens {
            let bad = || SolverError::Parse {
                line: lineno,
                detail: format!("bad feature token {tok:?}"),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(bad)?;
            let idx: usize = idx.parse().map_err(|_| bad())?;
            let val: f64 = val.parse().map_err(|_| bad())?;
            if idx == 0 || !val.is_finite() {
                return Err(bad());
            }
            let col = idx - 1;
            if prev.is_some_and(|p| col <= p) {
                return Err(SolverError::Format {
                    line: lineno,
                    detail: format!("feature index {idx} does not increase"),
                });
            }
            prev = Some(col);
            max_col = max_col.max(idx);
            indices.push(col);
            values.push(val);
        }
        labels.push(label);
        indptr.push(indices.len());
    }
    if labels.is_empty() {
        return Err(SolverError::invalid("dataset has no rows"));
    }
    let ncols = match dims {
        Some(d) if d < max_col => {
            return Err(SolverError::invalid(format!(
                "--dims {d} is smaller than the largest feature index {max_col}"
            )))
        }
        Some(d) => d,
        None => max_col,
    };
    if ncols == 0 {
        return Err(SolverError::invalid("dataset has no features"));
    }
    relabel_binary(&mut labels);
    Ok(Dataset {
        a: CsrMatrix::new(labels.len(), ncols, indptr, indices, values)?,
        b: labels,
        name: "data".to_string(),
        provenance: Provenance::File { path: String::new() },
    })
}

/// Maps exactly two distinct labels to `{−1, +1}`, smaller to `−1`.
fn relabel_binary(labels: &mut [f64]) {
    let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < hi && labels.iter().all(|&v| v == lo || v == hi) {
        for v in labels.iter_mut() {
            *v = if *v == lo { -1.0 } else { 1.0 };
        }
    }
}

pub fn write_libsvm(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut line = String::new();
    for (r, label) in ds.b.iter().enumerate() {
        line.clear();
        write!(line, "{label}").unwrap();
        for (c, v) in ds.a.row(r) {
            write!(line, " {}:{v}", c + 1).unwrap();
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Logistic,
    SigmoidLeastSquares,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::SigmoidLeastSquares => "sigmoid-ls",
        }
    }

    /// The matching smooth loss for a dataset of this kind.
    pub fn objective(self, ds: &Dataset) -> Result<SmoothObjective> {
        match self {
            Self::Logistic => SmoothObjective::logistic(ds.a.clone(), ds.b.clone()),
            Self::SigmoidLeastSquares => SmoothObjective::sigmoid_least_squares(ds.a.clone(), ds.b.clone()),
        }
    }
}

/// Draws a random instance. Each entry of `A` is nonzero with probability
/// `sparsity` and then standard normal; rows are never left empty. The
/// ground truth has `⌈TRUTH_DENSITY·n⌉` standard normal entries.
pub fn synth_problem(
    kind: SynthKind,
    nrows: usize,
    ncols: usize,
    sparsity: f64,
    seed: u64,
) -> Result<Dataset> {
    if nrows == 0 || ncols == 0 {
        return Err(SolverError::invalid("synthetic shape must be at least 1x1"));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(SolverError::invalid(format!(
            "sparsity must lie in (0, 1], got {sparsity}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth_nnz = ((TRUTH_DENSITY * ncols as f64).ceil() as usize).clamp(1, ncols);
    let mut support: Vec<usize> = (0..ncols).collect();
    support.shuffle(&mut rng);
    let mut truth = vec![0.0; ncols];
    for &j in &support[..truth_nnz] {
        truth[j] = StandardNormal.sample(&mut rng);
    }

    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut b = Vec::with_capacity(nrows);
    for _ in 0..nrows {
        let start = indices.len();
        for j in 0..ncols {
            if sparsity >= 1.0 || rng.random::<f64>() < sparsity {
                indices.push(j);
                values.push(StandardNormal.sample(&mut rng));
            }
        }
        if indices.len() == start {
            indices.push(rng.random_range(0..ncols));
            values.push(StandardNormal.sample(&mut rng));
        }
        let margin: f64 = indices[start..]
            .iter()
            .zip(&values[start..])
            .map(|(&j, v)| v * truth[j])
            .sum();
        let label = match kind {
            SynthKind::Logistic => {
                let sign = if margin >= 0.0 { 1.0 } else { -1.0 };
                if rng.random::<f64>() < LABEL_FLIP_RATE {
                    -sign
                } else {
                    sign
                }
            }
            SynthKind::SigmoidLeastSquares => {
                let noise: f64 = StandardNormal.sample(&mut rng);
                1.0 / (1.0 + (-margin).exp()) + SIGMOID_NOISE * noise
            }
        };
        b.push(label);
        indptr.push(indices.len());
    }
    Ok(Dataset {
        a: CsrMatrix::new(nrows, ncols, indptr, indices, values)?,
        b,
        name: format!("synth-{}-{nrows}x{ncols}", kind.as_str()),
        provenance: Provenance::Synthetic {
            seed,
            generator: GENERATOR.to_string(),
        },
    })
}

/// A random partition of `0..n` into groups of `size` (the last one may be
/// smaller).
pub fn random_groups(n: usize, size: usize, seed: u64) -> Result<GroupPartition> {
    if size == 0 {
        return Err(SolverError::invalid("group size must be positive"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let groups: Vec<Vec<usize>> = perm.chunks(size).map(<[usize]>::to_vec).collect();
    GroupPartition::new(n, &groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceFormat {
    Csv,
    #[serde(rename = "jsonl")]
    JsonLines,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::JsonLines => "jsonl",
        }
    }
}

/// A trace record with the relative error against a reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub chi: Option<f64>,
    pub nat_res: f64,
    pub psi: f64,
    pub rel_err: Option<f64>,
    pub merit: Option<f64>,
    pub alpha: Option<f64>,
    pub flag: Option<StepFlag>,
    pub tau: Option<f64>,
    pub lipschitz: Option<f64>,
    pub nu: Option<f64>,
    pub step_norm: Option<f64>,
    pub cg_iters: Option<usize>,
    pub cg_status: Option<CgStatus>,
    pub backtracks: Option<usize>,
    pub n_f: u64,
    pub n_grad: u64,
    pub n_prox: u64,
    pub wall_clock: f64,
}

pub const TRACE_COLUMNS: [&str; 19] = [
    "k",
    "chi",
    "nat_res",
    "psi",
    "rel_err",
    "merit",
    "alpha",
    "flag",
    "tau",
    "lipschitz",
    "nu",
    "step_norm",
    "cg_iters",
    "cg_status",
    "backtracks",
    "n_f",
    "n_grad",
    "n_prox",
    "wall_clock",
];

/// `(ψ − ψ*)/max{1, ψ*}`
pub fn relative_error(psi: f64, psi_star: f64) -> f64 {
    (psi - psi_star) / psi_star.max(1.0)
}

impl TraceRow {
    pub fn from_record(r: &TraceRecord, psi_star: Option<f64>) -> Self {
        Self {
            k: r.k,
            chi: r.chi,
            nat_res: r.nat_res,
            psi: r.psi,
            rel_err: psi_star.map(|s| relative_error(r.psi, s)),
            merit: r.merit,
            alpha: r.alpha,
            flag: r.flag,
            tau: r.tau,
            lipschitz: r.lipschitz,
            nu: r.nu,
            step_norm: r.step_norm,
            cg_iters: r.cg_iters,
            cg_status: r.cg_status,
            backtracks: r.backtracks,
            n_f: r.n_f,
            n_grad: r.n_grad,
            n_prox: r.n_prox,
            wall_clock: r.wall_clock,
        }
    }
}

pub fn write_trace(
    trace: &[TraceRecord],
    path: &Path,
    format: TraceFormat,
    psi_star: Option<f64>,
) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        TraceFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(TRACE_COLUMNS)?;
            for r in trace {
                w.serialize(TraceRow::from_record(r, psi_star))?;
            }
            w.flush()?;
        }
        TraceFormat::JsonLines => {
            let mut w = file;
            for r in trace {
                serde_json::to_writer(&mut w, &TraceRow::from_record(r, psi_star))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_trace(path: &Path, format: TraceFormat) -> Result<Vec<TraceRow>> {
    let file = BufReader::new(File::open(path)?);
    match format {
        TraceFormat::Csv => {
            let mut r = csv::Reader::from_reader(file);
            r.deserialize()
                .map(|row| row.map_err(SolverError::from))
                .collect()
        }
        TraceFormat::JsonLines => file
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect(),
    }
}
