//! Variance-reduced stochastic solvers with sufficient decrease for
//! composite least-squares problems `F(x) = (1/2n)‖Ax − b‖² + r(x)`.
//!
//! The crate provides SVRG-SD and SAGA-SD, their momentum-only variants
//! SVRG-SDI and SAGA-SDI, the SVRG/Prox-SVRG/SAGA baselines, and a small
//! experiment harness (LIBSVM input, synthetic data, CSV traces, SVG plots).

pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod solvers;
pub mod sufficient_decrease;

pub use error::{Error, Result};
pub use linalg::{RankRFactors, SparseMatrix};
pub use problems::{Handling, Penalty, ProblemInstance, Regularizer};
pub use solvers::{run, Algorithm, Mode, RunOutput, SolverConfig, Trace, TraceRecord};
pub use sufficient_decrease::SdConfig;
