use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand, ValueEnum};

use vrsd::harness::{
    build_problem, compute_reference_optimum, emit_plot, run_experiment, DataSource,
    ExperimentConfig, LossSpec, PlotAxis, SyntheticSpec, TraceFile, DEFAULT_REF_BUDGET,
};
use vrsd::solvers::{LogBase, DEFAULT_ALPHA};
use vrsd::{Algorithm, Error, Mode, Result, SdConfig, SolverConfig};

#[derive(Parser)]
#[command(name = "vrsd", version, about = "Variance-reduced solvers with sufficient decrease")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more solvers and write a CSV trace.
    Run(RunArgs),
    /// Compute and store a reference optimum F*.
    RefOpt(RefOptArgs),
    /// Render a trace file as an SVG plot with a tabular sidecar.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Ridge,
    Lasso,
    ElasticNet,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sc,
    Nsc,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogArg {
    Natural,
    Ten,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Passes,
    Time,
}

#[derive(Args)]
struct DataArgs {
    /// LIBSVM data file.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic problem, e.g. n=1000,d=20,noise=0.1,sparsity=1,seed=0.
    #[arg(long)]
    synthetic: Option<String>,
    /// Feature count for LIBSVM input (default: largest index).
    #[arg(long)]
    features: Option<usize>,
    #[arg(long, value_enum, default_value = "ridge")]
    loss: LossArg,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Scale rows to unit norm (default).
    #[arg(long, overrides_with = "no_normalize")]
    normalize: bool,
    #[arg(long, overrides_with = "normalize")]
    no_normalize: bool,
    /// Fold the ridge term into the smooth loss instead of its prox.
    #[arg(long)]
    smooth_ridge: bool,
    /// Rank cap of the ‖Ax‖² approximation; 0 keeps it exact.
    #[arg(long, default_value_t = 0)]
    rank: usize,
}

impl DataArgs {
    fn source(&self) -> Result<DataSource> {
        match (&self.data, &self.synthetic) {
            (Some(path), _) => Ok(DataSource::Libsvm {
                path: path.clone(),
                n_features: self.features,
            }),
            (None, Some(spec)) => Ok(DataSource::Synthetic(spec.parse::<SyntheticSpec>()?)),
            (None, None) => Err(Error::InvalidArgument("--data or --synthetic is required".into())),
        }
    }

    fn loss(&self) -> Result<LossSpec> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::InvalidArgument(format!("--{name} is required for this loss")))
        };
        Ok(match self.loss {
            LossArg::Ridge => LossSpec::Ridge(need(self.lambda, "lambda")?),
            LossArg::Lasso => LossSpec::Lasso(need(self.lambda, "lambda")?),
            LossArg::ElasticNet => LossSpec::ElasticNet {
                l1: need(self.lambda1, "lambda1")?,
                l2: need(self.lambda2, "lambda2")?,
            },
        })
    }

    fn experiment(&self, algorithms: Vec<SolverConfig>, seed: u64) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.source()?, self.loss()?, algorithms);
        cfg.normalize = !self.no_normalize;
        cfg.smooth_ridge = self.smooth_ridge;
        cfg.rank = self.rank;
        cfg.seed = seed;
        Ok(cfg)
    }
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse::<Algorithm>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Solver to run; repeat for several.
    #[arg(long = "algo", required = true, value_parser = parse_algorithm)]
    algos: Vec<Algorithm>,
    /// Step size (default 1/(L·alpha)).
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Momentum weight (default 0.5 for the SD solvers, formula-driven for SDI).
    #[arg(long)]
    sigma: Option<f64>,
    /// Inner iterations per epoch (default 2n; n for saga-sd).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Sufficient-decrease iterations per epoch (default m/1000).
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value = "sc")]
    mode: ModeArg,
    /// Logarithm inside the SDI momentum formulas.
    #[arg(long, value_enum, default_value = "natural")]
    log_base: LogArg,
    /// Certify the sufficient-decrease inequality at every θ step.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference optimum JSON; computed and written when missing.
    #[arg(long)]
    ref_opt: Option<PathBuf>,
    /// Trace CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot (needs --ref-opt).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct RefOptArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_REF_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Trace CSV produced by `run`.
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "passes")]
    x: AxisArg,
    #[arg(long)]
    out: PathBuf,
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let solvers = args
        .algos
        .iter()
        .map(|&a| {
            let mut c = SolverConfig::new(a);
            c.eta = args.eta;
            c.alpha = args.alpha;
            c.sigma = args.sigma;
            c.sigma_log = match args.log_base {
                LogArg::Natural => LogBase::Natural,
                LogArg::Ten => LogBase::Ten,
            };
            c.m = args.m;
            c.epochs = args.epochs;
            c.mode = match args.mode {
                ModeArg::Sc => Mode::Sc,
                ModeArg::Nsc => Mode::Nsc,
            };
            c.sd = SdConfig {
                delta: args.delta,
                m1: args.m1,
                ..SdConfig::default()
            };
            c.verify_decrease = args.verify;
            c
        })
        .collect();
    let mut cfg = args.data.experiment(solvers, args.seed)?;
    cfg.ref_opt = args.ref_opt;
    cfg.output = args.out.clone();
    cfg.plot = args.plot;
    let trace = run_experiment(&cfg)?;
    if args.out.is_none() {
        print!("{}", trace.to_csv());
    }
    Ok(())
}

fn ref_opt_cmd(args: RefOptArgs) -> Result<()> {
    let cfg = args.data.experiment(Vec::new(), args.seed)?;
    let p = build_problem(&cfg)?;
    let r = compute_reference_optimum(&p, args.budget, args.seed)?;
    r.save(&args.out)?;
    println!("f_star = {:e} (converged: {}, epochs: {})", r.f_star, r.converged, r.epochs);
    Ok(())
}

fn plot_cmd(args: PlotArgs) -> Result<()> {
    let trace = TraceFile::load(&args.trace)?;
    let axis = match args.x {
        AxisArg::Passes => PlotAxis::Passes,
        AxisArg::Time => PlotAxis::Time,
    };
    emit_plot(&trace, axis, &args.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run_cmd(a),
        Command::RefOpt(a) => ref_opt_cmd(a),
        Command::Plot(a) => plot_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
