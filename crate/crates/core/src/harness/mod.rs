//! Experiment plumbing: data loading, synthetic problems, reference optima,
//! trace files and plots.

mod experiment;
mod libsvm;
mod plot;
mod refopt;
mod synthetic;

pub use experiment::{
    build_problem, format_float, run_experiment, DataSource, ExperimentConfig, LossSpec, TraceFile,
    TraceRow,
};
pub use libsvm::{load_libsvm, normalize_rows, parse_libsvm, write_libsvm};
pub use plot::{emit_plot, PlotAxis};
pub use refopt::{compute_reference_optimum, RefOptimum, DEFAULT_REF_BUDGET};
pub use synthetic::{make_synthetic, Synthetic, SyntheticSpec};
