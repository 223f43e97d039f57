//! `euclid-qft`: every check and estimator behind one command line.
//!
//! Exit codes: 0 when every verdict passes, 1 when a verdict fails or a
//! computation breaks down, 2 for configuration and usage errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use euclid_core::interaction::Method;
use euclid_core::lattice::Boundary;
use euclid_core::Error;

use crate::config::RunConfig;
use crate::report::{Format, RunReport, SCHEMA_VERSION};

pub const SEED_ENV: &str = "EUCLID_QFT_SEED";

#[derive(Parser, Debug)]
#[command(name = "euclid-qft", version, about = "Lattice Euclidean field theory checks and estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Falls back to the config, then to EUCLID_QFT_SEED, then to 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    sweeps: Option<usize>,
    #[arg(long, global = true)]
    therm_frac: Option<f64>,
    /// Write chain checkpoints every N sweeps next to the report.
    #[arg(long, global = true)]
    checkpoint_every: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Quadrature nodes per site.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    extents: Option<Vec<usize>>,
    /// Lattice spacing in physical units.
    #[arg(long, global = true)]
    spacing: Option<f64>,
    #[arg(long, global = true, value_enum)]
    boundary: Option<BoundaryArg>,
    /// Mass in physical units.
    #[arg(long, global = true)]
    mass: Option<f64>,
    /// Coefficients of P, constant term first.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    poly: Option<Vec<f64>>,
    /// Shorthand for P(φ) = λφ⁴.
    #[arg(long, global = true, conflicts_with = "poly")]
    lambda: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Reweight,
    Mcmc,
    Quadrature,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BoundaryArg {
    Periodic,
    Dirichlet,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Lattice covariance C(x, 0) along the first axis next to the continuum kernel.
    Propagator {
        /// Also run the 1D refinement scan at this physical separation.
        #[arg(long)]
        refine_at: Option<f64>,
    },
    /// Projection identity and conditional covariance across hyperplanes.
    MarkovCheck {
        #[arg(long)]
        axis: Option<usize>,
        #[arg(long)]
        plane: Option<usize>,
    },
    /// Composition and symmetry of the one-particle semigroup p(t).
    SemigroupCheck {
        #[arg(long, default_value_t = 3)]
        max_t: usize,
    },
    /// Free n-point moment by hafnian recursion and by matching enumeration.
    Hafnian {
        #[arg(long, value_delimiter = ',', required = true)]
        sites: Vec<usize>,
    },
    /// Single-mode norm ratios of Γ(A) from L^p to L^q.
    HyperCheck {
        /// ‖A‖ of the one-mode contraction.
        #[arg(long)]
        norm: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 60)]
        trials: usize,
    },
    /// Z = E e^U over the whole lattice.
    Partition,
    /// Interacting n-point function.
    Schwinger {
        #[arg(long, value_delimiter = ',', required = true)]
        points: Vec<usize>,
    },
    /// Strip transfer matrix: ground-state energy, norms and gap.
    Transfer {
        /// Spatial sites of the strip.
        #[arg(long, default_value_t = 1)]
        n_s: usize,
        /// Also compare T^n against the path sum for this n.
        #[arg(long)]
        fkn_steps: Option<usize>,
        #[arg(long, default_value_t = 3)]
        norm_steps: usize,
    },
    /// Rectangle amplitude with time along either side.
    Nelson {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        t: usize,
        /// Time spacing; must equal the spatial one.
        #[arg(long)]
        spacing_time: Option<f64>,
    },
    /// Ground-state energy per unit length for several strip widths.
    EnergyDensity {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        ells: Vec<usize>,
    },
    /// The acceptance suite.
    VerifyAll {
        /// Smaller Monte Carlo samples; tolerances unchanged.
        #[arg(long)]
        quick: bool,
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Propagator { .. } => "propagator",
            Command::MarkovCheck { .. } => "markov-check",
            Command::SemigroupCheck { .. } => "semigroup-check",
            Command::Hafnian { .. } => "hafnian",
            Command::HyperCheck { .. } => "hyper-check",
            Command::Partition => "partition",
            Command::Schwinger { .. } => "schwinger",
            Command::Transfer { .. } => "transfer",
            Command::Nelson { .. } => "nelson",
            Command::EnergyDensity { .. } => "energy-density",
            Command::VerifyAll { .. } => "verify-all",
        }
    }

    fn tabular(&self) -> bool {
        matches!(self, Command::Propagator { .. } | Command::EnergyDensity { .. })
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

/// Configuration-shaped failures exit 2; everything else is a failed run.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Geometry(_)
        | Error::Overflow(_)
        | Error::OutOfRange(_)
        | Error::InvalidParameter(_)
        | Error::GeometryMismatch { .. }
        | Error::InvalidIsometry(_)
        | Error::Budget(_)
        | Error::Config(_) => 2,
        _ => 1,
    }
}

fn merged_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    let b = &mut c.budget;
    if let Some(v) = cli.chains {
        b.chains = v;
    }
    if let Some(v) = cli.sweeps {
        b.sweeps = v;
    }
    if let Some(v) = cli.therm_frac {
        b.therm_frac = v;
    }
    if let Some(v) = cli.checkpoint_every {
        b.checkpoint_every = v;
    }
    if let Some(v) = cli.samples {
        b.samples = v;
    }
    if let Some(v) = cli.nodes {
        b.quadrature_nodes = v;
    }
    if let Some(m) = cli.method {
        c.method = match m {
            MethodArg::Reweight => Method::Reweight,
            MethodArg::Mcmc => Method::Mcmc,
            MethodArg::Quadrature => Method::Quadrature,
        };
    }
    let g = &mut c.geometry;
    if let Some(ext) = &cli.extents {
        g.extents = ext.clone();
        g.dim = cli.dim.unwrap_or(ext.len());
    } else if let Some(d) = cli.dim {
        g.dim = d;
    }
    if let Some(a) = cli.spacing {
        g.spacing_physical_units = a;
    }
    if let Some(b) = cli.boundary {
        g.boundary = match b {
            BoundaryArg::Periodic => Boundary::Periodic,
            BoundaryArg::Dirichlet => Boundary::Dirichlet,
        };
    }
    if let Some(m) = cli.mass {
        c.model.mass_physical_units = m;
    }
    if let Some(p) = &cli.poly {
        c.model.polynomial = p.clone();
    }
    if let Some(l) = cli.lambda {
        c.model.polynomial = vec![0.0, 0.0, 0.0, 0.0, l];
    }
    if cli.out.is_some() {
        c.output = cli.out.clone();
    }
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

fn resolve_seed(cli: &Cli, config: &RunConfig) -> Result<u64, String> {
    if let Some(s) = cli.seed.or(config.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let format = cli.format.unwrap_or(if cli.command.tabular() { Format::Csv } else { Format::Json });
    if format == Format::Csv && !cli.command.tabular() {
        return usage_error(report::EmitError::NotTabular(cli.command.name().into()));
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage_error("--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return usage_error(format!("cannot size the thread pool: {e}"));
        }
    }
    let config = match merged_config(&cli) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let seed = match resolve_seed(&cli, &config) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let outcome = match commands::run(&cli.command, &config, seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let pass = outcome.verdicts.iter().all(|v| v.pass);
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        command: cli.command.name().into(),
        tool_version: env!("CARGO_PKG_VERSION"),
        seed,
        config: serde_json::to_value(&config).expect("config serializes"),
        results: outcome.results,
        table: outcome.table,
        verdicts: outcome.verdicts,
        pass,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = report::emit(&report, format, config.output.as_deref()) {
        return usage_error(e);
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
