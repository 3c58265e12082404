//! Solver loops: SVRG-SD and SAGA-SD, their momentum-only variants
//! SVRG-SDI and SAGA-SDI, and the SVRG-I/II, Prox-SVRG and SAGA baselines.
//!
//! Every run is single-threaded, owns its state and is fully determined by
//! `(problem, config)`. Index sampling and the sufficient-decrease schedule
//! draw from two separate streams of one seeded ChaCha8 generator, so runs
//! that differ only in their schedule see the same sample sequence.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimators::{
    saga_estimate_into, svrg_estimate_into, EstimatorRef, SagaTable, SvrgSnapshot,
};
use crate::problems::{Handling, ProblemInstance};
use crate::sufficient_decrease::{
    penalty_weights, sd_schedule, zeta, SdConfig, ThetaOutcome, ThetaParts, ThetaSolution,
};

pub const DEFAULT_ALPHA: f64 = 19.0;
pub const DEFAULT_SIGMA: f64 = 0.5;
/// Runs abort once the objective exceeds this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e3;
/// Relative tolerance of the per-iteration decrease certificate.
pub const DECREASE_TOL: f64 = 1e-9;
pub const RNG_NAME: &str = "ChaCha8Rng";
const INDEX_STREAM: u64 = 0;
const SCHEDULE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    SvrgSd,
    SagaSd,
    SvrgI,
    SvrgII,
    ProxSvrg,
    SvrgSdi,
    SagaSdi,
    Saga,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::SvrgSd,
        Algorithm::SagaSd,
        Algorithm::SvrgI,
        Algorithm::SvrgII,
        Algorithm::ProxSvrg,
        Algorithm::SvrgSdi,
        Algorithm::SagaSdi,
        Algorithm::Saga,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SvrgSd => "svrg-sd",
            Algorithm::SagaSd => "saga-sd",
            Algorithm::SvrgI => "svrg-i",
            Algorithm::SvrgII => "svrg-ii",
            Algorithm::ProxSvrg => "prox-svrg",
            Algorithm::SvrgSdi => "svrg-sdi",
            Algorithm::SagaSdi => "saga-sdi",
            Algorithm::Saga => "saga",
        }
    }

    /// Inner iterations per epoch: `n` for SAGA-SD, `2n` otherwise.
    pub fn default_epoch_len(self, n: usize) -> usize {
        match self {
            Algorithm::SagaSd => n,
            _ => 2 * n,
        }
    }

    pub fn uses_sufficient_decrease(self) -> bool {
        matches!(self, Algorithm::SvrgSd | Algorithm::SagaSd)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

/// Strongly convex or non-strongly convex regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Sc,
    Nsc,
}

/// Logarithm used inside the momentum formulas of SVRG-SDI and SAGA-SDI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    Natural,
    Ten,
}

impl LogBase {
    fn log(self, v: f64) -> f64 {
        match self {
            LogBase::Natural => v.ln(),
            LogBase::Ten => v.log10(),
        }
    }
}

/// Snapshot rule of the plain SVRG baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotOption {
    /// Last inner iterate.
    I,
    /// Average of the inner iterates `x_1..x_m`.
    II,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Step size; `None` means `1/(L·alpha)`.
    pub eta: Option<f64>,
    pub alpha: f64,
    /// Momentum weight; `None` selects the algorithm's default.
    pub sigma: Option<f64>,
    pub sigma_log: LogBase,
    /// Inner iterations per epoch; `None` selects the algorithm's default.
    pub m: Option<usize>,
    pub epochs: usize,
    pub mode: Mode,
    pub sd: SdConfig,
    pub seed: u64,
    /// Starting point; zeros when absent.
    pub x0: Option<Vec<f64>>,
    /// Certify every sufficient-decrease step with exact objective values.
    pub verify_decrease: bool,
    /// Keep `r(φ_j)` per SAGA table entry so that variance diagnostics can
    /// evaluate `(1/n)Σ F_j(φ_j)`.
    pub track_table_objective: bool,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            eta: None,
            alpha: DEFAULT_ALPHA,
            sigma: None,
            sigma_log: LogBase::Natural,
            m: None,
            epochs: 10,
            mode: Mode::Sc,
            sd: SdConfig::default(),
            seed: 0,
            x0: None,
            verify_decrease: false,
            track_table_objective: false,
        }
    }

    pub fn step_size(&self, p: &ProblemInstance) -> f64 {
        self.eta
            .unwrap_or_else(|| 1.0 / (p.lipschitz_bound() * self.alpha))
    }

    pub fn epoch_len(&self, p: &ProblemInstance) -> usize {
        self.m
            .unwrap_or_else(|| self.algorithm.default_epoch_len(p.n()))
    }

    /// Momentum weight actually used by the run.
    pub fn resolved_sigma(&self, p: &ProblemInstance) -> f64 {
        if let Some(s) = self.sigma {
            return s;
        }
        let lambda = p.regularizer().strength();
        match self.algorithm {
            Algorithm::SvrgSd | Algorithm::SagaSd => DEFAULT_SIGMA,
            Algorithm::SvrgSdi => match self.mode {
                Mode::Sc => svrg_sdi_sigma_sc(lambda, self.sigma_log),
                Mode::Nsc => 1.0 / (self.epochs as f64 + 3.0),
            },
            Algorithm::SagaSdi => saga_sdi_sigma(lambda, self.sigma_log),
            _ => 1.0,
        }
    }

    fn validate(&self, p: &ProblemInstance) -> Result<Resolved> {
        let eta = self.step_size(p);
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size {eta} must be positive")));
        }
        if self.eta.is_none() && !(self.alpha >= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} must be at least 1", self.alpha)));
        }
        let m = self.epoch_len(p);
        if m == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("m and the epoch count must be positive".into()));
        }
        let sigma = self.resolved_sigma(p);
        if !(0.0..=1.0).contains(&sigma) {
            return Err(Error::InvalidConfig(format!("sigma {sigma} must lie in [0, 1]")));
        }
        if self.mode == Mode::Nsc && sigma <= 0.0 {
            return Err(Error::InvalidConfig("NSC mode requires sigma > 0".into()));
        }
        if self.algorithm == Algorithm::ProxSvrg && p.regularizer().handling() != Handling::Proximal {
            return Err(Error::InvalidConfig(
                "prox-svrg needs a proximally handled penalty".into(),
            ));
        }
        if let Some(x0) = &self.x0 {
            check_len(p.d(), x0.len())?;
        }
        let (zeta, m1) = if self.algorithm.uses_sufficient_decrease() {
            self.sd.validate(m)?;
            if self.sd.use_rank_r && p.svd().is_none() {
                return Err(Error::InvalidConfig(
                    "rank-r approximation requested but the problem has no SVD".into(),
                ));
            }
            (zeta(eta, p.lipschitz_bound(), self.sd.delta)?, self.sd.resolve_m1(m))
        } else {
            (0.0, 0)
        };
        Ok(Resolved {
            eta,
            m,
            m1,
            sigma,
            zeta,
        })
    }
}

/// SVRG-SDI momentum weight in the strongly convex case:
/// `0.618 − 0.382/[1 + exp(−log(6λ) − 12)]`.
pub fn svrg_sdi_sigma_sc(lambda: f64, base: LogBase) -> f64 {
    0.618 - 0.382 / (1.0 + (-base.log(6.0 * lambda) - 12.0).exp())
}

/// SAGA-SDI momentum weight: `0.5 − 0.5/[1 + exp(−log λ − 12)]`.
pub fn saga_sdi_sigma(lambda: f64, base: LogBase) -> f64 {
    0.5 - 0.5 / (1.0 + (-base.log(lambda) - 12.0).exp())
}

#[derive(Debug, Clone, Copy)]
struct Resolved {
    eta: f64,
    m: usize,
    m1: usize,
    sigma: f64,
    zeta: f64,
}

/// Gradient-evaluation counters behind the effective-pass axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PassCounter {
    pub component_grads: u64,
    pub full_grads: u64,
}

/// `component_grads/n + full_grads`.
pub fn effective_passes(counters: PassCounter, n: usize) -> f64 {
    counters.component_grads as f64 / n as f64 + counters.full_grads as f64
}

/// `y + (1 − σ)(x̂ − x̂_prev)`.
pub fn momentum_combine(y: &[f64], x_hat: &[f64], x_hat_prev: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_len(y.len(), x_hat.len())?;
    check_len(y.len(), x_hat_prev.len())?;
    let w = 1.0 - sigma;
    Ok(y.iter()
        .zip(x_hat)
        .zip(x_hat_prev)
        .map(|((y, a), b)| y + w * (a - b))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub effective_passes: f64,
    pub wall_time_s: f64,
    pub objective: f64,
}

/// Per-epoch measurements of one run plus a metadata echo of its
/// configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub metadata: Vec<(String, String)>,
}

impl Trace {
    pub fn last_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    /// Effective passes of the first record whose objective is within `gap`
    /// of `f_star`.
    pub fn passes_to_gap(&self, f_star: f64, gap: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.objective - f_star <= gap)
            .map(|r| r.effective_passes)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub counters: PassCounter,
    /// Inner iterations that solved for θ.
    pub sd_iterations: u64,
    pub degenerate_thetas: u64,
    /// Certified iterations (only with `verify_decrease`).
    pub decrease_checks: u64,
    pub decrease_violations: u64,
    pub max_decrease_excess: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub solution: Vec<f64>,
    pub trace: Trace,
    pub stats: RunStats,
}

/// State of one inner iteration before its update.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub epoch: usize,
    /// 1-based inner-iteration index within the epoch.
    pub k: usize,
    pub index: usize,
    pub x: &'a [f64],
    pub estimator: EstimatorRef<'a>,
}

#[derive(Debug, Clone, Copy)]
pub struct ThetaView<'a> {
    pub epoch: usize,
    pub k: usize,
    pub scheduled: bool,
    pub outcome: ThetaOutcome,
    pub residual_norm_sq: f64,
    pub zeta: f64,
    /// The iterate being scaled, `x_{k−1}`.
    pub x: &'a [f64],
}

/// Read-only hooks into a running solver.
pub trait Observer {
    fn epoch_start(&mut self, _epoch: usize, _x_start: &[f64], _estimator: EstimatorRef<'_>) {}
    fn before_step(&mut self, _step: &StepView<'_>) {}
    /// Called on every inner iteration of SVRG-SD and SAGA-SD.
    fn on_theta(&mut self, _view: &ThetaView<'_>) {}
    fn after_step(&mut self, _epoch: usize, _k: usize, _x: &[f64]) {}
    /// The epoch's output point (`x̃^s`, or the last iterate for single-stage
    /// SAGA variants).
    fn epoch_end(&mut self, _epoch: usize, _output: &[f64]) {}
}

pub struct NoopObserver;

impl Observer for NoopObserver {}

/// Runs `cfg.algorithm` on `p`.
pub fn run(p: &ProblemInstance, cfg: &SolverConfig) -> Result<RunOutput> {
    run_observed(p, cfg, &mut NoopObserver)
}

pub fn run_observed(
    p: &ProblemInstance,
    cfg: &SolverConfig,
    obs: &mut dyn Observer,
) -> Result<RunOutput> {
    let res = cfg.validate(p)?;
    let ctx = RunContext::new(p, cfg, res)?;
    match cfg.algorithm {
        Algorithm::SvrgSd => ctx.svrg_sd(obs),
        Algorithm::SagaSd => ctx.saga_sd(obs),
        Algorithm::SvrgI => ctx.svrg_plain(SnapshotOption::I, obs),
        Algorithm::SvrgII | Algorithm::ProxSvrg => ctx.svrg_plain(SnapshotOption::II, obs),
        Algorithm::SvrgSdi => ctx.svrg_sdi(obs),
        Algorithm::SagaSdi | Algorithm::Saga => ctx.saga_single_stage(obs),
    }
}

fn expect_algorithm(cfg: &SolverConfig, allowed: &[Algorithm]) -> Result<()> {
    if allowed.contains(&cfg.algorithm) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "configuration is for {}, expected one of {:?}",
            cfg.algorithm, allowed
        )))
    }
}

pub fn run_svrg_sd(p: &ProblemInstance, cfg: &SolverConfig) -> Result<RunOutput> {
    expect_algorithm(cfg, &[Algorithm::SvrgSd])?;
    run(p, cfg)
}

pub fn run_saga_sd(p: &ProblemInstance, cfg: &SolverConfig) -> Result<RunOutput> {
    expect_algorithm(cfg, &[Algorithm::SagaSd])?;
    run(p, cfg)
}

/// SVRG-I / SVRG-II; the option overrides the algorithm's own snapshot rule.
pub fn run_svrg_baseline(
    p: &ProblemInstance,
    cfg: &SolverConfig,
    option: SnapshotOption,
) -> Result<RunOutput> {
    expect_algorithm(cfg, &[Algorithm::SvrgI, Algorithm::SvrgII, Algorithm::ProxSvrg])?;
    let res = cfg.validate(p)?;
    RunContext::new(p, cfg, res)?.svrg_plain(option, &mut NoopObserver)
}

pub fn run_prox_svrg(p: &ProblemInstance, cfg: &SolverConfig) -> Result<RunOutput> {
    expect_algorithm(cfg, &[Algorithm::ProxSvrg])?;
    run(p, cfg)
}

pub fn run_svrg_sdi(p: &ProblemInstance, cfg: &SolverConfig) -> Result<RunOutput> {
    expect_algorithm(cfg, &[Algorithm::SvrgSdi])?;
    run(p, cfg)
}

pub fn run_saga_sdi(p: &ProblemInstance, cfg: &SolverConfig) -> Result<RunOutput> {
    expect_algorithm(cfg, &[Algorithm::SagaSdi])?;
    run(p, cfg)
}

pub fn run_saga(p: &ProblemInstance, cfg: &SolverConfig) -> Result<RunOutput> {
    expect_algorithm(cfg, &[Algorithm::Saga])?;
    run(p, cfg)
}

struct RunContext<'a> {
    p: &'a ProblemInstance,
    cfg: &'a SolverConfig,
    res: Resolved,
    index_rng: ChaCha8Rng,
    schedule_rng: ChaCha8Rng,
    stats: RunStats,
    trace: Trace,
    initial_objective: f64,
    /// Solver time, excluding trace objective evaluations.
    elapsed: f64,
    clock: Instant,
    // scratch buffers
    grad: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> RunContext<'a> {
    fn new(p: &'a ProblemInstance, cfg: &'a SolverConfig, res: Resolved) -> Result<Self> {
        let mut index_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        index_rng.set_stream(INDEX_STREAM);
        let mut schedule_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        schedule_rng.set_stream(SCHEDULE_STREAM);
        let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; p.d()]);
        let initial_objective = p.evaluate_objective(&x0)?;
        let metadata = vec![
            ("algorithm".into(), cfg.algorithm.to_string()),
            ("eta".into(), res.eta.to_string()),
            ("alpha".into(), cfg.alpha.to_string()),
            ("sigma".into(), res.sigma.to_string()),
            ("m".into(), res.m.to_string()),
            ("m1".into(), res.m1.to_string()),
            ("epochs".into(), cfg.epochs.to_string()),
            ("mode".into(), format!("{:?}", cfg.mode).to_lowercase()),
            ("delta".into(), cfg.sd.delta.to_string()),
            ("rank_r".into(), p.svd().filter(|_| cfg.sd.use_rank_r).map_or(0, |s| s.rank()).to_string()),
            ("seed".into(), cfg.seed.to_string()),
            ("rng".into(), RNG_NAME.into()),
        ];
        let mut trace = Trace {
            records: Vec::with_capacity(cfg.epochs + 1),
            metadata,
        };
        trace.records.push(TraceRecord {
            epoch: 0,
            effective_passes: 0.0,
            wall_time_s: 0.0,
            objective: initial_objective,
        });
        Ok(Self {
            p,
            cfg,
            res,
            index_rng,
            schedule_rng,
            stats: RunStats::default(),
            trace,
            initial_objective,
            elapsed: 0.0,
            clock: Instant::now(),
            grad: vec![0.0; p.d()],
            y: vec![0.0; p.d()],
        })
    }

    fn x0(&self) -> Vec<f64> {
        self.cfg.x0.clone().unwrap_or_else(|| vec![0.0; self.p.d()])
    }

    fn pause_clock(&mut self) {
        self.elapsed += self.clock.elapsed().as_secs_f64();
    }

    fn resume_clock(&mut self) {
        self.clock = Instant::now();
    }

    #[inline]
    fn sample(&mut self) -> usize {
        self.index_rng.random_range(0..self.p.n())
    }

    /// `y = prox(x − η·grad)`, skipping the prox for gradient-handled penalties.
    #[inline]
    fn forward_backward(&mut self, x: &[f64]) {
        let eta = self.res.eta;
        for ((y, v), g) in self.y.iter_mut().zip(x).zip(&self.grad) {
            *y = v - eta * g;
        }
        if self.p.regularizer().handling() == Handling::Proximal {
            self.p.regularizer().prox_in_place(&mut self.y, eta);
        }
    }

    fn new_table(&self, x0: &[f64]) -> Result<SagaTable> {
        if self.cfg.track_table_objective {
            SagaTable::with_objective_tracking(self.p, x0)
        } else {
            SagaTable::new(self.p, x0)
        }
    }

    fn schedule_mask(&mut self) -> Vec<bool> {
        let m = self.res.m;
        let mut mask = vec![false; m + 1];
        for k in sd_schedule(&mut self.schedule_rng, m, self.res.m1).expect("m1 validated") {
            mask[k] = true;
        }
        mask
    }

    /// Records the objective at `x` after `epoch`, aborting on divergence.
    fn record(&mut self, epoch: usize, x: &[f64]) -> Result<f64> {
        self.pause_clock();
        let objective = self.p.evaluate_objective(x)?;
        self.trace.records.push(TraceRecord {
            epoch,
            effective_passes: effective_passes(self.stats.counters, self.p.n()),
            wall_time_s: self.elapsed,
            objective,
        });
        let diverged = !objective.is_finite()
            || (self.initial_objective > 0.0 && objective > DIVERGENCE_FACTOR * self.initial_objective);
        if diverged {
            return Err(Error::Diverged {
                epoch,
                reason: format!(
                    "objective {objective} against initial {}",
                    self.initial_objective
                ),
                trace: Box::new(self.trace.clone()),
            });
        }
        self.resume_clock();
        Ok(objective)
    }

    fn finish(self, solution: Vec<f64>) -> RunOutput {
        RunOutput {
            solution,
            trace: self.trace,
            stats: self.stats,
        }
    }

    /// θ for the current iterate, or 1 when the iteration is not scheduled.
    fn theta_step(
        &mut self,
        epoch: usize,
        k: usize,
        scheduled: bool,
        x: &[f64],
        residual_norm_sq: f64,
        obs: &mut dyn Observer,
    ) -> Result<f64> {
        let outcome = if scheduled {
            self.stats.sd_iterations += 1;
            let (l1, l2) = penalty_weights(self.p);
            let parts = ThetaParts::compute(self.p, x, self.cfg.sd.use_rank_r)?;
            let outcome = parts.solve(residual_norm_sq, self.res.zeta, l1, l2);
            if outcome.degenerate {
                self.stats.degenerate_thetas += 1;
            }
            if self.cfg.verify_decrease {
                self.pause_clock();
                let sol = ThetaSolution::certify(self.p, x, outcome.theta, residual_norm_sq, self.res.zeta)?;
                self.stats.decrease_checks += 1;
                let excess = sol.excess(DECREASE_TOL);
                if excess > 0.0 {
                    self.stats.decrease_violations += 1;
                    if self.cfg.sd.use_rank_r {
                        log::warn!(
                            "epoch {epoch} step {k}: decrease inequality violated by {excess:e} under rank-r approximation"
                        );
                    }
                }
                if self.stats.decrease_checks == 1 || excess > self.stats.max_decrease_excess {
                    self.stats.max_decrease_excess = excess;
                }
                self.resume_clock();
            }
            outcome
        } else {
            ThetaOutcome {
                theta: 1.0,
                degenerate: false,
            }
        };
        obs.on_theta(&ThetaView {
            epoch,
            k,
            scheduled,
            outcome,
            residual_norm_sq,
            zeta: self.res.zeta,
            x,
        });
        Ok(outcome.theta)
    }

    fn svrg_sd(mut self, obs: &mut dyn Observer) -> Result<RunOutput> {
        let Resolved { m, sigma, .. } = self.res;
        let d = self.p.d();
        let w = 1.0 - sigma;
        let mut x_tilde = self.x0();
        let mut y_tilde = x_tilde.clone();
        let mut tilde_sum = vec![0.0; d];
        let mut x_hat = vec![0.0; d];
        let mut x_hat_sum = vec![0.0; d];

        for epoch in 1..=self.cfg.epochs {
            let mut x = match self.cfg.mode {
                Mode::Sc => x_tilde.clone(),
                Mode::Nsc => y_tilde.clone(),
            };
            let mut x_hat_prev = x.clone();
            let snap = SvrgSnapshot::new(self.p, &x_tilde)?;
            self.stats.counters.full_grads += 1;
            obs.epoch_start(epoch, &x, EstimatorRef::Svrg(&snap));
            let mask = self.schedule_mask();
            x_hat_sum.iter_mut().for_each(|v| *v = 0.0);

            for k in 1..=m {
                let i = self.sample();
                obs.before_step(&StepView {
                    epoch,
                    k,
                    index: i,
                    x: &x,
                    estimator: EstimatorRef::Svrg(&snap),
                });
                let res_norm = svrg_estimate_into(self.p, &snap, i, &x, &mut self.grad);
                self.stats.counters.component_grads += 1;
                self.forward_backward(&x);
                let theta = self.theta_step(epoch, k, mask[k], &x, res_norm, obs)?;
                for ((((xv, xh), xp), y), s) in x
                    .iter_mut()
                    .zip(x_hat.iter_mut())
                    .zip(x_hat_prev.iter_mut())
                    .zip(&self.y)
                    .zip(x_hat_sum.iter_mut())
                {
                    *xh = theta * *xv;
                    *xv = y + w * (*xh - *xp);
                    *xp = *xh;
                    *s += *xh;
                }
                obs.after_step(epoch, k, &x);
            }

            let inv_m = 1.0 / m as f64;
            x_tilde.iter_mut().zip(&x_hat_sum).for_each(|(t, s)| *t = s * inv_m);
            if self.cfg.mode == Mode::Nsc {
                for ((yt, xv), xh) in y_tilde.iter_mut().zip(&x).zip(&x_hat) {
                    *yt = (xv - w * xh) / sigma;
                }
            }
            tilde_sum.iter_mut().zip(&x_tilde).for_each(|(s, t)| *s += t);
            obs.epoch_end(epoch, &x_tilde);
            self.record(epoch, &x_tilde)?;
        }

        let solution = match self.cfg.mode {
            Mode::Sc => x_tilde,
            Mode::Nsc => {
                let avg: Vec<f64> = tilde_sum
                    .iter()
                    .map(|s| s / self.cfg.epochs as f64)
                    .collect();
                nsc_output(self.p, x_tilde, avg)?
            }
        };
        Ok(self.finish(solution))
    }

    fn saga_sd(mut self, obs: &mut dyn Observer) -> Result<RunOutput> {
        let Resolved { m, sigma, .. } = self.res;
        let d = self.p.d();
        let w = 1.0 - sigma;
        let mut x_tilde = self.x0();
        let mut table = self.new_table(&x_tilde)?;
        self.stats.counters.full_grads += 1;
        let mut x_hat = vec![0.0; d];
        let mut x_hat_sum = vec![0.0; d];

        for epoch in 1..=self.cfg.epochs {
            let mut x = x_tilde.clone();
            let mut x_hat_prev = x.clone();
            obs.epoch_start(epoch, &x, EstimatorRef::Saga(&table));
            let mask = self.schedule_mask();
            x_hat_sum.iter_mut().for_each(|v| *v = 0.0);

            for k in 1..=m {
                let i = self.sample();
                obs.before_step(&StepView {
                    epoch,
                    k,
                    index: i,
                    x: &x,
                    estimator: EstimatorRef::Saga(&table),
                });
                let (res_norm, new_res) = saga_estimate_into(self.p, &table, i, &x, &mut self.grad);
                self.stats.counters.component_grads += 1;
                self.forward_backward(&x);
                let theta = self.theta_step(epoch, k, mask[k], &x, res_norm, obs)?;
                table.set_residual(self.p, i, new_res);
                if table.penalty_tracking() {
                    table.set_penalty_term(i, self.p.regularizer().value(&x));
                }
                for ((((xv, xh), xp), y), s) in x
                    .iter_mut()
                    .zip(x_hat.iter_mut())
                    .zip(x_hat_prev.iter_mut())
                    .zip(&self.y)
                    .zip(x_hat_sum.iter_mut())
                {
                    *xh = theta * *xv;
                    *xv = y + w * (*xh - *xp);
                    *xp = *xh;
                    *s += *xh;
                }
                obs.after_step(epoch, k, &x);
            }

            let inv_m = 1.0 / m as f64;
            x_tilde.iter_mut().zip(&x_hat_sum).for_each(|(t, s)| *t = s * inv_m);
            obs.epoch_end(epoch, &x_tilde);
            self.record(epoch, &x_tilde)?;
        }
        Ok(self.finish(x_tilde))
    }

    fn svrg_plain(mut self, option: SnapshotOption, obs: &mut dyn Observer) -> Result<RunOutput> {
        let m = self.res.m;
        let mut x_tilde = self.x0();
        let mut sum = vec![0.0; self.p.d()];
        for epoch in 1..=self.cfg.epochs {
            let snap = SvrgSnapshot::new(self.p, &x_tilde)?;
            self.stats.counters.full_grads += 1;
            let mut x = x_tilde.clone();
            obs.epoch_start(epoch, &x, EstimatorRef::Svrg(&snap));
            sum.iter_mut().for_each(|v| *v = 0.0);
            for k in 1..=m {
                let i = self.sample();
                obs.before_step(&StepView {
                    epoch,
                    k,
                    index: i,
                    x: &x,
                    estimator: EstimatorRef::Svrg(&snap),
                });
                svrg_estimate_into(self.p, &snap, i, &x, &mut self.grad);
                self.stats.counters.component_grads += 1;
                self.forward_backward(&x);
                x.copy_from_slice(&self.y);
                sum.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
                obs.after_step(epoch, k, &x);
            }
            x_tilde = match option {
                SnapshotOption::I => x,
                SnapshotOption::II => sum.iter().map(|s| s / m as f64).collect(),
            };
            obs.epoch_end(epoch, &x_tilde);
            self.record(epoch, &x_tilde)?;
        }
        Ok(self.finish(x_tilde))
    }

    fn svrg_sdi(mut self, obs: &mut dyn Observer) -> Result<RunOutput> {
        let Resolved { m, sigma, .. } = self.res;
        let w = 1.0 - sigma;
        let mut x_tilde = self.x0();
        let mut x = x_tilde.clone();
        let mut sum = vec![0.0; self.p.d()];
        for epoch in 1..=self.cfg.epochs {
            let snap = SvrgSnapshot::new(self.p, &x_tilde)?;
            self.stats.counters.full_grads += 1;
            obs.epoch_start(epoch, &x, EstimatorRef::Svrg(&snap));
            sum.iter_mut().for_each(|v| *v = 0.0);
            for k in 1..=m {
                let i = self.sample();
                obs.before_step(&StepView {
                    epoch,
                    k,
                    index: i,
                    x: &x,
                    estimator: EstimatorRef::Svrg(&snap),
                });
                svrg_estimate_into(self.p, &snap, i, &x, &mut self.grad);
                self.stats.counters.component_grads += 1;
                self.forward_backward(&x);
                for ((s, xv), y) in sum.iter_mut().zip(x.iter_mut()).zip(&self.y) {
                    *s += y + w * (y - *xv);
                    *xv = *y;
                }
                obs.after_step(epoch, k, &x);
            }
            x_tilde = sum.iter().map(|s| s / m as f64).collect();
            obs.epoch_end(epoch, &x_tilde);
            self.record(epoch, &x_tilde)?;
        }
        Ok(self.finish(x_tilde))
    }

    /// SAGA (σ = 1) and SAGA-SDI: a single stage of `epochs·m` iterations,
    /// recorded every `m` iterations.
    fn saga_single_stage(mut self, obs: &mut dyn Observer) -> Result<RunOutput> {
        let Resolved { m, sigma, .. } = self.res;
        let w = 1.0 - sigma;
        let mut x = self.x0();
        let mut table = self.new_table(&x)?;
        self.stats.counters.full_grads += 1;
        for epoch in 1..=self.cfg.epochs {
            obs.epoch_start(epoch, &x, EstimatorRef::Saga(&table));
            for k in 1..=m {
                let i = self.sample();
                obs.before_step(&StepView {
                    epoch,
                    k,
                    index: i,
                    x: &x,
                    estimator: EstimatorRef::Saga(&table),
                });
                let (_, new_res) = saga_estimate_into(self.p, &table, i, &x, &mut self.grad);
                self.stats.counters.component_grads += 1;
                self.forward_backward(&x);
                table.set_residual(self.p, i, new_res);
                if table.penalty_tracking() {
                    table.set_penalty_term(i, self.p.regularizer().value(&x));
                }
                for (xv, y) in x.iter_mut().zip(&self.y) {
                    *xv = y + w * (y - *xv);
                }
                obs.after_step(epoch, k, &x);
            }
            obs.epoch_end(epoch, &x);
            self.record(epoch, &x)?;
        }
        Ok(self.finish(x))
    }
}

/// Returns the last epoch output unless the average of all epoch outputs has
/// a strictly lower objective.
pub fn nsc_output(p: &ProblemInstance, last: Vec<f64>, average: Vec<f64>) -> Result<Vec<f64>> {
    if p.evaluate_objective(&last)? <= p.evaluate_objective(&average)? {
        Ok(last)
    } else {
        Ok(average)
    }
}
