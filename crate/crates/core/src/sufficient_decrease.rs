//! The scalar sufficient-decrease step: choose `θ` minimizing
//! `G(θ) = F(θx) + ζ(1 − θ)²‖p̃‖²/2` and replace `x` by `θx`.
//!
//! For least squares `G` is a one-dimensional quadratic plus (for L1 terms) a
//! multiple of `|θ|`, so the minimizer is a soft-thresholded ratio.

use rand::seq::index;
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg::{approx_norm_ax_sq, norm_l1, norm_sq, soft_threshold, spmv};
use crate::problems::{Penalty, ProblemInstance};

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_THETA_MIN: f64 = -10.0;
pub const DEFAULT_THETA_MAX: f64 = 10.0;
/// Gives a grid step of 1e−4 over the default bracket.
pub const DEFAULT_GRID_POINTS: usize = 200_001;
/// Fraction of inner iterations that run the θ step by default.
pub const DEFAULT_SD_FRACTION: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdConfig {
    pub delta: f64,
    /// SD iterations per epoch; `None` means `⌊m/1000⌋`.
    pub m1: Option<usize>,
    /// Approximate `‖Ax‖²` by the problem's truncated SVD.
    pub use_rank_r: bool,
    pub theta_min: f64,
    pub theta_max: f64,
    pub grid_points: usize,
}

impl Default for SdConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            m1: None,
            use_rank_r: false,
            theta_min: DEFAULT_THETA_MIN,
            theta_max: DEFAULT_THETA_MAX,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl SdConfig {
    pub fn resolve_m1(&self, m: usize) -> usize {
        self.m1.unwrap_or(m / DEFAULT_SD_FRACTION)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!("delta {} must be positive", self.delta)));
        }
        if self.resolve_m1(m) > m {
            return Err(Error::InvalidConfig(format!(
                "m1 = {} exceeds the epoch length {m}",
                self.resolve_m1(m)
            )));
        }
        if !(self.theta_min < 1.0 && 1.0 < self.theta_max) || self.grid_points < 2 {
            return Err(Error::InvalidConfig("theta grid must bracket 1".into()));
        }
        Ok(())
    }

    pub fn grid_step(&self) -> f64 {
        (self.theta_max - self.theta_min) / (self.grid_points - 1) as f64
    }
}

/// `ζ = δη/(1 − Lη)`.
pub fn zeta(eta: f64, lipschitz: f64, delta: f64) -> Result<f64> {
    let slack = 1.0 - lipschitz * eta;
    if !(slack > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "L·eta = {} must be below 1 for the sufficient-decrease weight",
            lipschitz * eta
        )));
    }
    Ok(delta * eta / slack)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaOutcome {
    pub theta: f64,
    /// Set when the quadratic coefficient vanished and `θ = 1` was returned.
    pub degenerate: bool,
}

/// The scalar quantities of `x` that `G(θ)` depends on.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ThetaParts {
    pub n: f64,
    pub bta_x: f64,
    pub ax_norm_sq: f64,
    pub x_norm_sq: f64,
    pub x_l1: f64,
}

impl ThetaParts {
    pub(crate) fn compute(p: &ProblemInstance, x: &[f64], use_rank_r: bool) -> Result<Self> {
        check_len(p.d(), x.len())?;
        let ax_norm_sq = if use_rank_r {
            let svd = p.svd().ok_or_else(|| {
                Error::InvalidConfig("rank-r approximation requested but no SVD attached".into())
            })?;
            approx_norm_ax_sq(svd, x)?
        } else {
            norm_sq(&spmv(p.matrix(), x)?)
        };
        Ok(Self {
            n: p.n() as f64,
            bta_x: p.bta_dot(x),
            ax_norm_sq,
            x_norm_sq: norm_sq(x),
            x_l1: norm_l1(x),
        })
    }

    /// Minimizer of `G` for the penalty `l1|θ|‖x‖₁ + (l2/2)θ²‖x‖²`.
    pub(crate) fn solve(&self, residual_norm_sq: f64, zeta: f64, l1: f64, l2: f64) -> ThetaOutcome {
        let anchor = zeta * residual_norm_sq;
        let num = self.bta_x / self.n + anchor;
        let den = self.ax_norm_sq / self.n + anchor + l2 * self.x_norm_sq;
        if !(den > 0.0) {
            return ThetaOutcome {
                theta: 1.0,
                degenerate: true,
            };
        }
        let tau = l1 * self.x_l1 / den;
        ThetaOutcome {
            theta: soft_threshold(num / den, tau),
            degenerate: false,
        }
    }
}

/// Closed form for a `(λ/2)‖x‖²` penalty.
pub fn theta_ridge(
    p: &ProblemInstance,
    x: &[f64],
    residual_norm_sq: f64,
    zeta: f64,
    lambda: f64,
) -> Result<ThetaOutcome> {
    Ok(ThetaParts::compute(p, x, false)?.solve(residual_norm_sq, zeta, 0.0, lambda))
}

/// Closed form for a `λ‖x‖₁` penalty.
pub fn theta_lasso(
    p: &ProblemInstance,
    x: &[f64],
    residual_norm_sq: f64,
    zeta: f64,
    lambda: f64,
) -> Result<ThetaOutcome> {
    Ok(ThetaParts::compute(p, x, false)?.solve(residual_norm_sq, zeta, lambda, 0.0))
}

/// Closed form for `λ₁‖x‖₁ + (λ₂/2)‖x‖²`.
pub fn theta_elastic_net(
    p: &ProblemInstance,
    x: &[f64],
    residual_norm_sq: f64,
    zeta: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<ThetaOutcome> {
    Ok(ThetaParts::compute(p, x, false)?.solve(residual_norm_sq, zeta, lambda1, lambda2))
}

/// `(l1, l2)` weights of the problem's penalty as seen by `G(θ)`.
pub(crate) fn penalty_weights(p: &ProblemInstance) -> (f64, f64) {
    match p.regularizer().penalty() {
        Penalty::None => (0.0, 0.0),
        Penalty::L1(l) => (l, 0.0),
        Penalty::SquaredL2(l) => (0.0, l),
        Penalty::ElasticNet { l1, l2 } => (l1, l2),
    }
}

/// Closed form matching the problem's own penalty.
pub fn theta_closed_form(
    p: &ProblemInstance,
    x: &[f64],
    residual_norm_sq: f64,
    zeta: f64,
    use_rank_r: bool,
) -> Result<ThetaOutcome> {
    let (l1, l2) = penalty_weights(p);
    Ok(ThetaParts::compute(p, x, use_rank_r)?.solve(residual_norm_sq, zeta, l1, l2))
}

/// A θ together with the exact objective values that certify the decrease
/// inequality `F(θx) ≤ F(x) − ζ(1 − θ)²‖p̃‖²/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSolution {
    pub theta: f64,
    pub residual_norm_sq: f64,
    pub objective_at_theta: f64,
    /// `F(x) − ζ(1 − θ)²‖p̃‖²/2`.
    pub sd_bound: f64,
}

impl ThetaSolution {
    /// Evaluates both sides with the exact objective.
    pub fn certify(
        p: &ProblemInstance,
        x: &[f64],
        theta: f64,
        residual_norm_sq: f64,
        zeta: f64,
    ) -> Result<Self> {
        let scaled: Vec<f64> = x.iter().map(|v| theta * v).collect();
        let objective_at_theta = p.evaluate_objective(&scaled)?;
        let sd_bound =
            p.evaluate_objective(x)? - 0.5 * zeta * (1.0 - theta).powi(2) * residual_norm_sq;
        Ok(Self {
            theta,
            residual_norm_sq,
            objective_at_theta,
            sd_bound,
        })
    }

    /// Amount by which the inequality is violated beyond `rel_tol·(1 + |bound|)`;
    /// zero or negative when it holds.
    pub fn excess(&self, rel_tol: f64) -> f64 {
        self.objective_at_theta - self.sd_bound - rel_tol * (1.0 + self.sd_bound.abs())
    }

    pub fn holds(&self, rel_tol: f64) -> bool {
        self.excess(rel_tol) <= 0.0
    }
}

/// Brute-force minimizer of `G(θ)` over a uniform grid.
///
/// `F(θx)` is evaluated directly from the residuals `θ(Ax) − b`. Ties go to
/// the grid point nearest 1, then to the smaller θ.
pub fn theta_grid_oracle(
    p: &ProblemInstance,
    x: &[f64],
    residual_norm_sq: f64,
    zeta: f64,
    cfg: &SdConfig,
) -> Result<f64> {
    let ax = spmv(p.matrix(), x)?;
    let b = p.labels();
    let n = p.n() as f64;
    let reg = p.regularizer();
    let last = (cfg.grid_points - 1) as f64;
    let mut scaled = vec![0.0; x.len()];
    let mut best: Option<(f64, f64)> = None;
    for k in 0..cfg.grid_points {
        let t = (cfg.theta_min * (last - k as f64) + cfg.theta_max * k as f64) / last;
        let loss: f64 = ax.iter().zip(b).map(|(u, bi)| (t * u - bi).powi(2)).sum();
        scaled.iter_mut().zip(x).for_each(|(s, v)| *s = t * v);
        let g = 0.5 * loss / n + reg.value(&scaled) + 0.5 * zeta * (1.0 - t).powi(2) * residual_norm_sq;
        best = match best {
            None => Some((t, g)),
            Some((bt, bg)) => {
                let better = g < bg
                    || (g == bg
                        && ((t - 1.0).abs() < (bt - 1.0).abs()
                            || ((t - 1.0).abs() == (bt - 1.0).abs() && t < bt)));
                if better {
                    Some((t, g))
                } else {
                    Some((bt, bg))
                }
            }
        };
    }
    let closed = theta_closed_form(p, x, residual_norm_sq, zeta, false)?.theta;
    if closed < cfg.theta_min || closed > cfg.theta_max {
        return Err(Error::BracketTooSmall {
            theta: closed,
            min: cfg.theta_min,
            max: cfg.theta_max,
        });
    }
    Ok(best.expect("grid has at least two points").0)
}

/// `m1` distinct 1-based inner-iteration indices drawn uniformly from
/// `1..=m`, sorted ascending.
pub fn sd_schedule<R: Rng + ?Sized>(rng: &mut R, m: usize, m1: usize) -> Result<Vec<usize>> {
    if m1 > m {
        return Err(Error::InvalidConfig(format!("m1 = {m1} exceeds m = {m}")));
    }
    let mut picks: Vec<usize> = index::sample(rng, m, m1).into_iter().map(|k| k + 1).collect();
    picks.sort_unstable();
    Ok(picks)
}
