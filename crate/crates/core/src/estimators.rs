//! SVRG (snapshot) and SAGA (gradient table) stochastic gradient estimators.
//!
//! Both exploit that a squared-loss component gradient is `a_i` times the
//! scalar residual `a_iᵀx − b_i`, so only residuals are stored.

use crate::error::{check_len, Error, Result};
use crate::linalg::sparse_axpy;
use crate::problems::ProblemInstance;

/// Snapshot point `x̃`, its full gradient `μ̃` and the per-sample residuals
/// `a_iᵀx̃ − b_i`.
#[derive(Debug, Clone)]
pub struct SvrgSnapshot {
    x_tilde: Vec<f64>,
    mu_tilde: Vec<f64>,
    residuals: Vec<f64>,
}

impl SvrgSnapshot {
    /// Evaluates the full gradient at `x_tilde` (one effective pass).
    pub fn new(p: &ProblemInstance, x_tilde: &[f64]) -> Result<Self> {
        let (mu_tilde, residuals) = p.full_gradient_with_residuals(x_tilde)?;
        Ok(Self {
            x_tilde: x_tilde.to_vec(),
            mu_tilde,
            residuals,
        })
    }

    pub fn x_tilde(&self) -> &[f64] {
        &self.x_tilde
    }

    pub fn mu_tilde(&self) -> &[f64] {
        &self.mu_tilde
    }
}

/// SAGA table holding one scalar residual per sample plus the running average
/// `ū = (1/n)Σ_j a_j·residual_j`.
#[derive(Debug, Clone)]
pub struct SagaTable {
    residuals: Vec<f64>,
    table_average: Vec<f64>,
    updates_since_refresh: usize,
    /// `r(φ_j)` per entry, kept only when variance diagnostics are requested.
    penalty_terms: Option<Vec<f64>>,
}

impl SagaTable {
    /// Table with every `φ_j = x0`, so its average is the full loss gradient
    /// at `x0` (one effective pass).
    pub fn new(p: &ProblemInstance, x0: &[f64]) -> Result<Self> {
        let residuals = p.residuals(x0)?;
        let table_average = p.average_outer(&residuals);
        Ok(Self {
            residuals,
            table_average,
            updates_since_refresh: 0,
            penalty_terms: None,
        })
    }

    /// Same as [`SagaTable::new`] but also records `r(φ_j)` so that
    /// [`SagaTable::average_objective`] is available.
    pub fn with_objective_tracking(p: &ProblemInstance, x0: &[f64]) -> Result<Self> {
        let mut t = Self::new(p, x0)?;
        t.penalty_terms = Some(vec![p.regularizer().value(x0); p.n()]);
        Ok(t)
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn table_average(&self) -> &[f64] {
        &self.table_average
    }

    /// Replaces entry `i` with the gradient at `new_point`; other entries are
    /// untouched. The average is adjusted incrementally and recomputed from
    /// scratch every `n` updates.
    pub fn update(&mut self, p: &ProblemInstance, i: usize, new_point: &[f64]) -> Result<()> {
        check_index(p, i)?;
        check_len(p.d(), new_point.len())?;
        let new_res = p.residual(i, new_point);
        self.set_residual(p, i, new_res);
        if let Some(terms) = &mut self.penalty_terms {
            terms[i] = p.regularizer().value(new_point);
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn set_residual(&mut self, p: &ProblemInstance, i: usize, new_res: f64) {
        let delta = new_res - self.residuals[i];
        self.residuals[i] = new_res;
        if delta != 0.0 {
            let (cols, vals) = p.matrix().row(i);
            sparse_axpy(delta / p.n() as f64, cols, vals, &mut self.table_average);
        }
        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= p.n() {
            self.refresh(p);
        }
    }

    pub(crate) fn penalty_tracking(&self) -> bool {
        self.penalty_terms.is_some()
    }

    pub(crate) fn set_penalty_term(&mut self, i: usize, value: f64) {
        if let Some(terms) = &mut self.penalty_terms {
            terms[i] = value;
        }
    }

    /// Recomputes the average from the stored residuals.
    pub fn refresh(&mut self, p: &ProblemInstance) {
        self.table_average = p.average_outer(&self.residuals);
        self.updates_since_refresh = 0;
    }

    /// `(1/n)Σ_j F_j(φ_j)` with `F_j = f_j + r`; needs objective tracking.
    pub fn average_objective(&self) -> Option<f64> {
        let terms = self.penalty_terms.as_ref()?;
        let n = self.residuals.len() as f64;
        let loss: f64 = self.residuals.iter().map(|r| 0.5 * r * r).sum();
        Some((loss + terms.iter().sum::<f64>()) / n)
    }
}

fn check_index(p: &ProblemInstance, i: usize) -> Result<()> {
    if i < p.n() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index: i, len: p.n() })
    }
}

/// Writes `a_i·delta + base + c·x` into `out`, returning `delta²‖a_i‖²`.
#[inline]
fn rank_one_estimate(
    p: &ProblemInstance,
    i: usize,
    delta: f64,
    base: &[f64],
    x: &[f64],
    out: &mut [f64],
) -> f64 {
    let c = p.regularizer().smooth_coeff();
    if c == 0.0 {
        out.copy_from_slice(base);
    } else {
        for ((o, b), v) in out.iter_mut().zip(base).zip(x) {
            *o = b + c * v;
        }
    }
    let (cols, vals) = p.matrix().row(i);
    sparse_axpy(delta, cols, vals, out);
    delta * delta * p.row_norm_sq(i)
}

/// SVRG estimate written into `out`; unchecked. Returns `‖p̃‖²`.
///
/// Under smooth ridge handling the `∇r` difference between `x` and `x̃`
/// enters the estimate but not the residual norm, which is defined on the
/// loss part only.
#[inline]
pub(crate) fn svrg_estimate_into(
    p: &ProblemInstance,
    snap: &SvrgSnapshot,
    i: usize,
    x: &[f64],
    out: &mut [f64],
) -> f64 {
    let delta = p.residual(i, x) - snap.residuals[i];
    let c = p.regularizer().smooth_coeff();
    let norm = rank_one_estimate(p, i, delta, &snap.mu_tilde, x, out);
    if c != 0.0 {
        out.iter_mut().zip(&snap.x_tilde).for_each(|(o, v)| *o -= c * v);
    }
    norm
}

/// SAGA estimate written into `out`; unchecked. Returns `‖p̃‖²` and the new
/// residual `a_iᵀx − b_i` for the subsequent table update.
#[inline]
pub(crate) fn saga_estimate_into(
    p: &ProblemInstance,
    table: &SagaTable,
    i: usize,
    x: &[f64],
    out: &mut [f64],
) -> (f64, f64) {
    let new_res = p.residual(i, x);
    let delta = new_res - table.residuals[i];
    let norm = rank_one_estimate(p, i, delta, &table.table_average, x, out);
    (norm, new_res)
}

/// `∇f_i(x) − ∇f_i(x̃) + μ̃` and `‖∇f_i(x) − ∇f_i(x̃)‖²`.
pub fn svrg_estimate(
    p: &ProblemInstance,
    snap: &SvrgSnapshot,
    i: usize,
    x: &[f64],
) -> Result<(Vec<f64>, f64)> {
    check_index(p, i)?;
    check_len(p.d(), x.len())?;
    let mut out = vec![0.0; p.d()];
    let norm = svrg_estimate_into(p, snap, i, x, &mut out);
    Ok((out, norm))
}

/// `∇f_i(x) − ∇f_i(φ_i) + ū` and `‖∇f_i(x) − ∇f_i(φ_i)‖²`.
pub fn saga_estimate(
    p: &ProblemInstance,
    table: &SagaTable,
    i: usize,
    x: &[f64],
) -> Result<(Vec<f64>, f64)> {
    check_index(p, i)?;
    check_len(p.d(), x.len())?;
    let mut out = vec![0.0; p.d()];
    let (norm, _) = saga_estimate_into(p, table, i, x, &mut out);
    Ok((out, norm))
}

pub fn saga_update_table(
    table: &mut SagaTable,
    p: &ProblemInstance,
    i: usize,
    new_point: &[f64],
) -> Result<()> {
    table.update(p, i, new_point)
}

#[derive(Debug, Clone, Copy)]
pub enum EstimatorRef<'a> {
    Svrg(&'a SvrgSnapshot),
    Saga(&'a SagaTable),
}

impl EstimatorRef<'_> {
    pub fn estimate(&self, p: &ProblemInstance, i: usize, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        match self {
            EstimatorRef::Svrg(s) => svrg_estimate(p, s, i, x),
            EstimatorRef::Saga(t) => saga_estimate(p, t, i, x),
        }
    }
}

/// Both sides of the estimator variance bound at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBound {
    /// Exact `E_i‖estimate_i − ∇f(x)‖²`, by enumeration over all samples.
    pub lhs: f64,
    /// `4L[F(x) − F* + F(anchor) − F*]`; the anchor term is `F(x̃)` for SVRG
    /// and `(1/n)Σ F_j(φ_j)` for SAGA.
    pub rhs: f64,
}

impl VarianceBound {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel_tol) + f64::EPSILON * self.rhs.abs().max(1e-300)
    }
}

pub fn variance_bound_check(
    p: &ProblemInstance,
    state: EstimatorRef<'_>,
    x: &[f64],
    f_star: f64,
) -> Result<VarianceBound> {
    let grad = p.full_gradient(x)?;
    let mut lhs = 0.0;
    for i in 0..p.n() {
        let (est, _) = state.estimate(p, i, x)?;
        lhs += est.iter().zip(&grad).map(|(e, g)| (e - g).powi(2)).sum::<f64>();
    }
    lhs /= p.n() as f64;
    let anchor = match state {
        EstimatorRef::Svrg(s) => p.evaluate_objective(&s.x_tilde)?,
        EstimatorRef::Saga(t) => t.average_objective().ok_or_else(|| {
            Error::InvalidConfig("SAGA table was built without objective tracking".into())
        })?,
    };
    let fx = p.evaluate_objective(x)?;
    let rhs = 4.0 * p.lipschitz_bound() * (fx - f_star + anchor - f_star);
    Ok(VarianceBound { lhs, rhs })
}
