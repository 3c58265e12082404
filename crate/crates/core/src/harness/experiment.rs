use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::DEFAULT_ENERGY_THRESHOLD;
use crate::problems::{Handling, Penalty, ProblemInstance, Regularizer};
use crate::solvers::{run, SolverConfig, Trace};

use super::libsvm::{load_libsvm, normalize_rows};
use super::plot::{emit_plot, PlotAxis};
use super::refopt::{compute_reference_optimum, RefOptimum};
use super::synthetic::{make_synthetic, SyntheticSpec};

pub const TRACE_HEADER: &str = "algorithm,epoch,effective_passes,wall_time_s,objective,gap";

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Libsvm {
        path: PathBuf,
        n_features: Option<usize>,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    Ridge(f64),
    Lasso(f64),
    ElasticNet { l1: f64, l2: f64 },
}

impl LossSpec {
    pub fn regularizer(self, smooth_ridge: bool) -> Result<Regularizer> {
        match self {
            LossSpec::Ridge(l) if smooth_ridge => {
                Regularizer::new(Penalty::SquaredL2(l), Handling::SmoothGradient)
            }
            LossSpec::Ridge(l) => Regularizer::ridge(l),
            LossSpec::Lasso(l) => Regularizer::l1(l),
            LossSpec::ElasticNet { l1, l2 } => Regularizer::elastic_net(l1, l2),
        }
    }

    fn describe(self) -> String {
        match self {
            LossSpec::Ridge(l) => format!("ridge lambda={l}"),
            LossSpec::Lasso(l) => format!("lasso lambda={l}"),
            LossSpec::ElasticNet { l1, l2 } => format!("elastic-net lambda1={l1} lambda2={l2}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub loss: LossSpec,
    /// Treat the ridge term as part of the smooth loss instead of by prox.
    pub smooth_ridge: bool,
    pub algorithms: Vec<SolverConfig>,
    pub normalize: bool,
    /// Rank cap of the truncated SVD; 0 keeps `‖Ax‖²` exact.
    pub rank: usize,
    /// JSON file holding `F*`; computed and written when missing.
    pub ref_opt: Option<PathBuf>,
    pub ref_budget: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(data: DataSource, loss: LossSpec, algorithms: Vec<SolverConfig>) -> Self {
        Self {
            data,
            loss,
            smooth_ridge: false,
            algorithms,
            normalize: true,
            rank: 0,
            ref_opt: None,
            ref_budget: super::refopt::DEFAULT_REF_BUDGET,
            seed: 0,
            output: None,
            plot: None,
        }
    }

    fn describe_data(&self) -> String {
        match &self.data {
            DataSource::Libsvm { path, .. } => path.display().to_string(),
            DataSource::Synthetic(s) => format!(
                "synthetic n={} d={} noise={} sparsity={} seed={}",
                s.n, s.d, s.noise_sd, s.sparsity, s.seed
            ),
        }
    }
}

/// Loads or generates the data and assembles the problem instance.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let (a, b) = match &cfg.data {
        DataSource::Libsvm { path, n_features } => load_libsvm(path, *n_features)?,
        DataSource::Synthetic(spec) => {
            let s = make_synthetic(spec)?;
            (s.a, s.b)
        }
    };
    let a = if cfg.normalize { normalize_rows(&a) } else { a };
    let p = ProblemInstance::new(a, b, cfg.loss.regularizer(cfg.smooth_ridge)?)?;
    if cfg.rank > 0 {
        p.with_rank_r(DEFAULT_ENERGY_THRESHOLD, cfg.rank)
    } else {
        Ok(p)
    }
}

/// Seed of the `index`-th solver in an experiment.
fn sub_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn thread_cap() -> Option<usize> {
    std::env::var("VRSD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Runs every configured solver and writes the trace (and plot) when paths
/// are set. Traces of runs that diverged are still written before the error
/// is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TraceFile> {
    if cfg.algorithms.is_empty() {
        return Err(Error::InvalidConfig("no algorithms configured".into()));
    }
    let p = build_problem(cfg)?;
    let ref_opt = match &cfg.ref_opt {
        Some(path) if path.exists() => {
            let r = RefOptimum::load(path)?;
            if r.x_star.len() != p.d() {
                return Err(Error::DimensionMismatch {
                    expected: p.d(),
                    found: r.x_star.len(),
                });
            }
            Some(r)
        }
        Some(path) => {
            let r = compute_reference_optimum(&p, cfg.ref_budget, cfg.seed)?;
            r.save(path)?;
            Some(r)
        }
        None => None,
    };

    let jobs: Vec<SolverConfig> = cfg
        .algorithms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut a = a.clone();
            a.seed = sub_seed(cfg.seed, i);
            a.sd.use_rank_r = a.sd.use_rank_r || cfg.rank > 0;
            a
        })
        .collect();
    let run_all = || -> Vec<Result<Trace>> {
        jobs.par_iter()
            .map(|job| run(&p, job).map(|out| out.trace))
            .collect()
    };
    let results = match thread_cap() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };

    let mut file = TraceFile::default();
    file.metadata.push(("dataset".into(), cfg.describe_data()));
    file.metadata.push(("n".into(), p.n().to_string()));
    file.metadata.push(("d".into(), p.d().to_string()));
    file.metadata.push(("loss".into(), cfg.loss.describe()));
    file.metadata.push(("normalize".into(), cfg.normalize.to_string()));
    file.metadata.push(("seed".into(), cfg.seed.to_string()));
    if let Some(r) = &ref_opt {
        file.metadata.push(("f_star".into(), format_float(r.f_star)));
        file.metadata.push(("f_star_converged".into(), r.converged.to_string()));
    }
    let labels = unique_labels(&jobs);
    let f_star = ref_opt.as_ref().map(|r| r.f_star);
    let mut first_error = None;
    for (label, result) in labels.iter().zip(results) {
        let trace = match result {
            Ok(t) => t,
            Err(Error::Diverged { epoch, reason, trace }) => {
                log::error!("{label} diverged at epoch {epoch}: {reason}");
                let t = (*trace).clone();
                first_error.get_or_insert(Error::Diverged { epoch, reason, trace });
                t
            }
            Err(e) => {
                first_error.get_or_insert(e);
                continue;
            }
        };
        let echo = trace
            .metadata
            .iter()
            .filter(|(k, _)| k != "algorithm")
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        file.metadata.push((format!("config.{label}"), echo));
        file.append(label, &trace, f_star);
    }

    if let Some(path) = &cfg.output {
        file.save(path)?;
    }
    if let Some(err) = first_error {
        return Err(err);
    }
    if let Some(path) = &cfg.plot {
        emit_plot(&file, PlotAxis::Passes, path)?;
    }
    Ok(file)
}

fn unique_labels(jobs: &[SolverConfig]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::with_capacity(jobs.len());
    for job in jobs {
        let base = job.algorithm.name().to_string();
        let count = jobs.iter().filter(|j| j.algorithm == job.algorithm).count();
        if count == 1 {
            labels.push(base);
        } else {
            let k = labels.iter().filter(|l| l.starts_with(&format!("{base}#"))).count() + 1;
            labels.push(format!("{base}#{k}"));
        }
    }
    labels
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub algorithm: String,
    pub epoch: usize,
    pub effective_passes: f64,
    pub wall_time_s: f64,
    pub objective: f64,
    pub gap: Option<f64>,
}

/// CSV trace: `# key: value` metadata lines, a fixed header, then one row
/// per recorded epoch grouped by algorithm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceFile {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<TraceRow>,
}

impl TraceFile {
    pub fn append(&mut self, label: &str, trace: &Trace, f_star: Option<f64>) {
        for r in &trace.records {
            self.rows.push(TraceRow {
                algorithm: label.to_string(),
                epoch: r.epoch,
                effective_passes: r.effective_passes,
                wall_time_s: r.wall_time_s,
                objective: r.objective,
                gap: f_star.map(|f| r.objective - f),
            });
        }
    }

    pub fn has_gap(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.gap.is_some())
    }

    /// Algorithm labels in first-appearance order.
    pub fn algorithms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.algorithm.as_str()) {
                out.push(&r.algorithm);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.algorithm,
                r.epoch,
                format_float(r.effective_passes),
                format_float(r.wall_time_s),
                format_float(r.objective),
                r.gap.map(format_float).unwrap_or_default()
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut file = TraceFile::default();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta.split_once(':').unwrap_or((meta, ""));
                file.metadata.push((k.trim().to_string(), v.trim().to_string()));
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line.trim() != TRACE_HEADER {
                    return Err(err(format!("expected header '{TRACE_HEADER}'")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", fields.len())));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse()
                    .map_err(|_| err(format!("bad number '{}'", fields[i])))
            };
            file.rows.push(TraceRow {
                algorithm: fields[0].to_string(),
                epoch: fields[1]
                    .parse()
                    .map_err(|_| err(format!("bad epoch '{}'", fields[1])))?,
                effective_passes: num(2)?,
                wall_time_s: num(3)?,
                objective: num(4)?,
                gap: if fields[5].is_empty() { None } else { Some(num(5)?) },
            });
        }
        if !header_seen {
            return Err(Error::Parse {
                line: 0,
                message: "missing header".into(),
            });
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
