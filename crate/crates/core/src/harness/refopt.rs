use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{Handling, ProblemInstance};
use crate::solvers::{run, Algorithm, SolverConfig};

pub const DEFAULT_REF_BUDGET: usize = 1000;
/// Step size `1/(REF_ALPHA·L)` for the reference solve.
const REF_ALPHA: f64 = 4.0;
const REF_RTOL: f64 = 1e-14;
/// Consecutive settled epochs required before stopping.
const REF_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefOptimum {
    pub f_star: f64,
    pub x_star: Vec<f64>,
    /// False when the budget ran out before the objective settled.
    pub converged: bool,
    pub epochs: usize,
}

impl RefOptimum {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Runs Prox-SVRG one epoch at a time until the objective has changed by
/// less than `1e−14·(1 + |F|)` for three consecutive epochs, returning the
/// best iterate seen.
pub fn compute_reference_optimum(p: &ProblemInstance, budget: usize, seed: u64) -> Result<RefOptimum> {
    if budget == 0 {
        return Err(Error::InvalidConfig("reference budget must be positive".into()));
    }
    let algorithm = match p.regularizer().handling() {
        Handling::Proximal => Algorithm::ProxSvrg,
        Handling::SmoothGradient => Algorithm::SvrgII,
    };
    let mut cfg = SolverConfig::new(algorithm);
    cfg.alpha = REF_ALPHA;
    cfg.epochs = 1;
    let mut x = vec![0.0; p.d()];
    let mut f = p.evaluate_objective(&x)?;
    let mut best = (f, x.clone());
    let mut settled_run = 0;
    for epoch in 1..=budget {
        cfg.seed = seed.wrapping_add(epoch as u64);
        cfg.x0 = Some(x);
        let out = run(p, &cfg)?;
        x = out.solution;
        let f_new = p.evaluate_objective(&x)?;
        if f_new < best.0 {
            best = (f_new, x.clone());
        }
        if (f - f_new).abs() < REF_RTOL * (1.0 + f_new.abs()) {
            settled_run += 1;
        } else {
            settled_run = 0;
        }
        f = f_new;
        if settled_run == REF_PATIENCE {
            return Ok(RefOptimum {
                f_star: best.0,
                x_star: best.1,
                converged: true,
                epochs: epoch,
            });
        }
    }
    log::warn!("reference optimum did not settle within {budget} epochs");
    Ok(RefOptimum {
        f_star: best.0,
        x_star: best.1,
        converged: false,
        epochs: budget,
    })
}
