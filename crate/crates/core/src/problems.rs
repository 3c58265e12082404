//! Regularized least-squares objectives `F(x) = (1/2n)‖Ax − b‖² + r(x)`.

use crate::error::{check_len, Error, Result};
use crate::linalg::{
    dot, norm_l1, norm_sq, partial_svd, soft_threshold, sparse_axpy, sparse_dot, RankRFactors,
    SparseMatrix,
};

/// The penalty term `r(x)`.
///
/// `SquaredL2(λ)` is `(λ/2)‖x‖²` and `ElasticNet` is
/// `λ₁‖x‖₁ + (λ₂/2)‖x‖²`, so that the ridge proximal map is `y/(1 + ηλ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    None,
    L1(f64),
    SquaredL2(f64),
    ElasticNet { l1: f64, l2: f64 },
}

/// How the solver treats the penalty: through its proximal map, or by adding
/// `∇r` to every stochastic gradient (differentiable penalties only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handling {
    Proximal,
    SmoothGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    penalty: Penalty,
    handling: Handling,
}

impl Regularizer {
    pub fn new(penalty: Penalty, handling: Handling) -> Result<Self> {
        let ok = match penalty {
            Penalty::None => true,
            Penalty::L1(l) | Penalty::SquaredL2(l) => l >= 0.0 && l.is_finite(),
            Penalty::ElasticNet { l1, l2 } => {
                l1 >= 0.0 && l2 >= 0.0 && l1.is_finite() && l2.is_finite()
            }
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "regularization weights must be finite and nonnegative: {penalty:?}"
            )));
        }
        if handling == Handling::SmoothGradient
            && !matches!(penalty, Penalty::None | Penalty::SquaredL2(_))
        {
            return Err(Error::InvalidArgument(format!(
                "{penalty:?} is not differentiable and must be handled proximally"
            )));
        }
        Ok(Self { penalty, handling })
    }

    pub fn none() -> Self {
        Self {
            penalty: Penalty::None,
            handling: Handling::Proximal,
        }
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        Self::new(Penalty::L1(lambda), Handling::Proximal)
    }

    pub fn ridge(lambda: f64) -> Result<Self> {
        Self::new(Penalty::SquaredL2(lambda), Handling::Proximal)
    }

    pub fn elastic_net(l1: f64, l2: f64) -> Result<Self> {
        Self::new(Penalty::ElasticNet { l1, l2 }, Handling::Proximal)
    }

    pub fn penalty(&self) -> Penalty {
        self.penalty
    }

    pub fn handling(&self) -> Handling {
        self.handling
    }

    /// The single λ that parameterizes the momentum formulas of the
    /// momentum-only variants (`λ₁ + λ₂` for elastic net).
    pub fn strength(&self) -> f64 {
        match self.penalty {
            Penalty::None => 0.0,
            Penalty::L1(l) | Penalty::SquaredL2(l) => l,
            Penalty::ElasticNet { l1, l2 } => l1 + l2,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.penalty {
            Penalty::None => 0.0,
            Penalty::L1(l) => l * norm_l1(x),
            Penalty::SquaredL2(l) => 0.5 * l * norm_sq(x),
            Penalty::ElasticNet { l1, l2 } => l1 * norm_l1(x) + 0.5 * l2 * norm_sq(x),
        }
    }

    /// Coefficient `c` of the gradient term `c·x` folded into stochastic
    /// gradients under [`Handling::SmoothGradient`]; zero otherwise.
    pub(crate) fn smooth_coeff(&self) -> f64 {
        match (self.handling, self.penalty) {
            (Handling::SmoothGradient, Penalty::SquaredL2(l)) => l,
            _ => 0.0,
        }
    }

    /// In-place proximal map `argmin_x (1/2η)‖x − y‖² + r(x)`.
    pub(crate) fn prox_in_place(&self, y: &mut [f64], eta: f64) {
        match self.penalty {
            Penalty::None => {}
            Penalty::L1(l) => y.iter_mut().for_each(|v| *v = soft_threshold(*v, eta * l)),
            Penalty::SquaredL2(l) => {
                let s = 1.0 / (1.0 + eta * l);
                y.iter_mut().for_each(|v| *v *= s);
            }
            Penalty::ElasticNet { l1, l2 } => {
                let s = 1.0 / (1.0 + eta * l2);
                y.iter_mut()
                    .for_each(|v| *v = soft_threshold(*v, eta * l1) * s);
            }
        }
    }
}

/// Data, labels and penalty of one least-squares problem, with the cached
/// quantities the sufficient-decrease step relies on.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    a: SparseMatrix,
    b: Vec<f64>,
    reg: Regularizer,
    /// `bᵀA`
    bta: Vec<f64>,
    b_norm_sq: f64,
    row_norms_sq: Vec<f64>,
    svd: Option<RankRFactors>,
    lipschitz: f64,
}

impl ProblemInstance {
    pub fn new(a: SparseMatrix, b: Vec<f64>, reg: Regularizer) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        check_len(a.n_rows(), b.len())?;
        if let Some(v) = b.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("label {v} is not finite")));
        }
        let row_norms_sq: Vec<f64> = (0..a.n_rows()).map(|i| a.row_norm_sq(i)).collect();
        let max_row = row_norms_sq.iter().copied().fold(0.0, f64::max);
        if max_row <= 0.0 {
            return Err(Error::Degenerate(
                "all rows are zero, so the Lipschitz constant vanishes".into(),
            ));
        }
        let bta = a.transpose_mul(&b)?;
        let b_norm_sq = norm_sq(&b);
        let lipschitz = max_row + reg.smooth_coeff();
        Ok(Self {
            a,
            b,
            reg,
            bta,
            b_norm_sq,
            row_norms_sq,
            svd: None,
            lipschitz,
        })
    }

    /// Attaches a truncated SVD of `A` for approximate `‖Ax‖²` evaluation.
    pub fn with_rank_r(mut self, energy_threshold: f64, r_max: usize) -> Result<Self> {
        self.svd = Some(partial_svd(&self.a, energy_threshold, r_max)?);
        Ok(self)
    }

    pub fn with_regularizer(mut self, reg: Regularizer) -> Self {
        let max_row = self.row_norms_sq.iter().copied().fold(0.0, f64::max);
        self.lipschitz = max_row + reg.smooth_coeff();
        self.reg = reg;
        self
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    pub fn d(&self) -> usize {
        self.a.n_cols()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn labels(&self) -> &[f64] {
        &self.b
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    /// Cached `bᵀA`.
    pub fn bta(&self) -> &[f64] {
        &self.bta
    }

    pub fn labels_norm_sq(&self) -> f64 {
        self.b_norm_sq
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norms_sq[i]
    }

    pub fn svd(&self) -> Option<&RankRFactors> {
        self.svd.as_ref()
    }

    /// `max_i ‖a_i‖²`, plus λ when a ridge penalty is folded into the
    /// gradients.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, len: self.n() })
        }
    }

    /// Scalar residual `a_iᵀx − b_i`; unchecked.
    #[inline]
    pub(crate) fn residual(&self, i: usize, x: &[f64]) -> f64 {
        sparse_dot(self.a.row(i), x) - self.b[i]
    }

    /// All residuals `Ax − b`.
    pub fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.d(), x.len())?;
        Ok((0..self.n()).map(|i| self.residual(i, x)).collect())
    }

    /// `∇f_i(x) = a_i(a_iᵀx − b_i)`, plus `λx` under smooth ridge handling.
    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        check_len(self.d(), x.len())?;
        let c = self.reg.smooth_coeff();
        let mut g: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (cols, vals) = self.a.row(i);
        sparse_axpy(self.residual(i, x), cols, vals, &mut g);
        Ok(g)
    }

    /// `(1/n)Σ a_i r_i` for a given residual vector.
    pub(crate) fn average_outer(&self, residuals: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d()];
        for (i, r) in residuals.iter().enumerate() {
            if *r != 0.0 {
                let (cols, vals) = self.a.row(i);
                sparse_axpy(*r, cols, vals, &mut g);
            }
        }
        let inv_n = 1.0 / self.n() as f64;
        g.iter_mut().for_each(|v| *v *= inv_n);
        g
    }

    /// Full gradient together with the residual vector it was built from.
    pub fn full_gradient_with_residuals(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let residuals = self.residuals(x)?;
        let mut g = self.average_outer(&residuals);
        let c = self.reg.smooth_coeff();
        if c != 0.0 {
            g.iter_mut().zip(x).for_each(|(g, v)| *g += c * v);
        }
        Ok((g, residuals))
    }

    /// `(1/n)Σ ∇f_i(x)`; a smooth-handled penalty gradient is counted once.
    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.full_gradient_with_residuals(x)?.0)
    }

    /// `F(x) = (1/2n)‖Ax − b‖² + r(x)`.
    pub fn evaluate_objective(&self, x: &[f64]) -> Result<f64> {
        check_len(self.d(), x.len())?;
        let loss: f64 = (0..self.n()).map(|i| self.residual(i, x).powi(2)).sum();
        Ok(0.5 * loss / self.n() as f64 + self.reg.value(x))
    }

    /// `argmin_x (1/2η)‖x − y‖² + r(x)`.
    pub fn prox_step(&self, y: &[f64], eta: f64) -> Result<Vec<f64>> {
        if self.reg.handling() != Handling::Proximal {
            return Err(Error::InvalidConfig(
                "proximal step requested for a gradient-handled penalty".into(),
            ));
        }
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("step size {eta} must be positive")));
        }
        check_len(self.d(), y.len())?;
        let mut out = y.to_vec();
        self.reg.prox_in_place(&mut out, eta);
        Ok(out)
    }

    /// `bᵀAx`, from the cached `bᵀA`.
    pub fn bta_dot(&self, x: &[f64]) -> f64 {
        dot(&self.bta, x)
    }
}
