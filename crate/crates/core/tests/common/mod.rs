//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use vrsd::harness::{make_synthetic, SyntheticSpec};
use vrsd::solvers::Trace;
use vrsd::{ProblemInstance, Regularizer};

/// The desk-scale strongly convex benchmark: n = 1000, d = 20, unit rows.
pub fn synthetic_problem(seed: u64, reg: Regularizer) -> ProblemInstance {
    let s = make_synthetic(&SyntheticSpec {
        n: 1000,
        d: 20,
        noise_sd: 0.1,
        sparsity: 1.0,
        seed,
    })
    .unwrap();
    ProblemInstance::new(s.a, s.b, reg).unwrap()
}

fn dense(p: &ProblemInstance) -> (DMatrix<f64>, DVector<f64>) {
    let rows = p.matrix().to_dense();
    let a = DMatrix::from_fn(p.n(), p.d(), |i, j| rows[i][j]);
    (a, DVector::from_column_slice(p.labels()))
}

/// Objective `(1/2n)‖Ax − b‖² + r(x)` computed densely.
pub fn dense_objective(p: &ProblemInstance, x: &[f64]) -> f64 {
    let (a, b) = dense(p);
    let r = &a * DVector::from_column_slice(x) - b;
    0.5 * r.norm_squared() / p.n() as f64 + p.regularizer().value(x)
}

/// Minimizer of `(1/2n)‖Ax − b‖² + (λ/2)‖x‖²` from the normal equations.
pub fn ridge_optimum(p: &ProblemInstance, lambda: f64) -> (Vec<f64>, f64) {
    let (a, b) = dense(p);
    let n = p.n() as f64;
    let h = a.transpose() * &a / n + DMatrix::identity(p.d(), p.d()) * lambda;
    let g = a.transpose() * b / n;
    let x = h.cholesky().expect("positive definite").solve(&g);
    let x: Vec<f64> = x.iter().copied().collect();
    let f = dense_objective(p, &x);
    (x, f)
}

/// Cyclic coordinate descent for `(1/2n)‖Ax − b‖² + λ‖x‖₁`, run until the
/// largest coordinate move is below 1e−15.
pub fn lasso_optimum(p: &ProblemInstance, lambda: f64) -> (Vec<f64>, f64) {
    let (a, b) = dense(p);
    let n = p.n() as f64;
    let d = p.d();
    let col_sq: Vec<f64> = (0..d).map(|j| a.column(j).norm_squared() / n).collect();
    let mut x: DVector<f64> = DVector::zeros(d);
    let mut r = -b.clone();
    for _ in 0..100_000 {
        let mut moved = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho: f64 = a.column(j).dot(&r) / n - col_sq[j] * x[j];
            let z = -rho;
            let new = z.signum() * (z.abs() - lambda).max(0.0) / col_sq[j];
            let delta = new - x[j];
            if delta != 0.0 {
                r += a.column(j) * delta;
                x[j] = new;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    let x: Vec<f64> = x.iter().copied().collect();
    let f = dense_objective(p, &x);
    (x, f)
}

/// Effective passes at which the gap first reaches `target`, interpolating
/// linearly in log-gap between consecutive records.
pub fn passes_to_gap(trace: &Trace, f_star: f64, target: f64) -> Option<f64> {
    let r = &trace.records;
    if r.first().map_or(false, |r0| r0.objective - f_star <= target) {
        return Some(r[0].effective_passes);
    }
    for w in r.windows(2) {
        let (g0, g1) = (w[0].objective - f_star, w[1].objective - f_star);
        if g1 <= target {
            let (p0, p1) = (w[0].effective_passes, w[1].effective_passes);
            if g1 <= 0.0 {
                return Some(p1);
            }
            let t = (g0.ln() - target.ln()) / (g0.ln() - g1.ln());
            return Some(p0 + t * (p1 - p0));
        }
    }
    None
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
