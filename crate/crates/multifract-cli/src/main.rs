//! `multifract` — command-line analysis of coin-tossing measures on the
//! binary tree: scaling exponents and their limits, Legendre spectra,
//! reweightings, staged constructions with prescribed corner moments, path
//! sampling, coarse histograms, and a consolidated self-verification suite.
//!
//! Every run is driven by one [`config::RunConfig`] assembled from an
//! optional TOML file plus command-line overrides; tabular output is CSV on
//! stdout (or `--out`), human summaries go to stderr, and exit codes are
//! fixed: 0 success, 1 failed check, 2 configuration error, 3 budget
//! violation, 4 I/O failure.

mod coarse;
mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use multifract::measure::WeightSequence;

use config::{ConstructSpec, RunConfig};

/// Process-level failure modes, one per exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// A numerical check failed: the computation ran but its verdict is red.
    #[error("check failed: {0}")]
    Check(String),
    /// The requested run is mis-specified (bad flags, bad config file, or
    /// parameters the mathematics rejects).
    #[error("configuration: {0}")]
    Config(String),
    /// The run would exceed an enumeration budget; nothing was computed.
    #[error("budget: {0}")]
    Budget(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Check(_) => 1,
            AppError::Config(_) => 2,
            AppError::Budget(_) => 3,
            AppError::Io(_) => 4,
        }
    }

    /// Split library errors into budget violations (their own exit code)
    /// and everything else, which at this boundary means the run was
    /// mis-specified.
    pub fn from_lib(e: multifract::Error) -> AppError {
        match e {
            multifract::Error::DepthBudget { .. } => AppError::Budget(e.to_string()),
            other => AppError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "multifract",
    version,
    about = "Numerical multifractal analysis of coin-tossing measures on the binary tree"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

/// Flags shared by every subcommand; each overrides the matching config
/// field after the file (if any) is loaded.
#[derive(Debug, Args)]
struct CommonOpts {
    /// TOML configuration file (flags override its fields)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Shortcut: analyse the constant sequence with this weight
    #[arg(long, value_name = "WEIGHT")]
    p: Option<f64>,
    /// Write tabular/JSON output here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Lower end of the moment grid
    #[arg(long, value_name = "Q")]
    q_min: Option<f64>,
    /// Upper end of the moment grid
    #[arg(long, value_name = "Q")]
    q_max: Option<f64>,
    /// Moment grid spacing
    #[arg(long, value_name = "STEP")]
    q_step: Option<f64>,
    /// Comma-separated depth schedule (e.g. 10,100,1000)
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    depths: Option<Vec<u64>>,
    /// Seed override for sampling and verification
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Emit finite-depth scaling exponents over the moment grid
    Tau {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Emit tail limsup/liminf estimates of the scaling exponents
    Limits {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Emit the Legendre transform of the deepest scaling curve
    Legendre {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Reweight the measure at a moment and check the structural identities
    Gibbs {
        #[command(flatten)]
        common: CommonOpts,
        /// Reweighting moment
        #[arg(long, value_name = "Q")]
        q: Option<f64>,
        /// Outer moment for the composition check
        #[arg(long, value_name = "S")]
        s: Option<f64>,
        /// Enumeration depth for the refinement check
        #[arg(long, value_name = "N")]
        depth: Option<u32>,
    },
    /// Emit running entropy averages along the depth schedule
    Entropy {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Build a measure whose envelope has corners at the target moments
    Construct {
        #[command(flatten)]
        common: CommonOpts,
        /// Comma-separated nested target pairs a2,b2,a3,b3,...
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        targets: Option<Vec<f64>>,
        /// Number of construction stages
        #[arg(long, value_name = "M")]
        stages: Option<usize>,
    },
    /// Locate corners of an upper envelope on the moment grid
    Kinks {
        #[command(flatten)]
        common: CommonOpts,
        /// Construction state JSON saved by `construct`
        #[arg(long, value_name = "FILE")]
        state: Option<PathBuf>,
    },
    /// Sample measure-typical paths and emit their local exponents
    Sample {
        #[command(flatten)]
        common: CommonOpts,
        /// Number of paths
        #[arg(long, value_name = "N")]
        count: Option<usize>,
        /// Depth of each sampled path
        #[arg(long, value_name = "N")]
        depth: Option<u64>,
    },
    /// Exhaustively histogram local exponents at a fixed depth
    CoarseSpectrum {
        #[command(flatten)]
        common: CommonOpts,
        /// Enumeration depth (bounded by the cap)
        #[arg(long, value_name = "N")]
        depth: Option<u32>,
        /// Number of histogram bins
        #[arg(long, value_name = "N")]
        bins: Option<usize>,
    },
    /// Run the consolidated identity/bound check suite
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        /// Self-test: deliberately corrupt one kernel (tau|curvature|gibbs)
        #[arg(long, value_name = "KERNEL")]
        perturb: Option<String>,
    },
}

/// Load the config file (or defaults), apply the shared overrides, and
/// re-validate so bad flags fail exactly like bad file fields.
fn build_config(common: &CommonOpts) -> Result<RunConfig, AppError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = common.p {
        let seq = WeightSequence::constant(p)
            .map_err(|e| AppError::Config(format!("--p: {e}")))?;
        cfg.sequence = Some(seq);
    }
    if let Some(v) = common.q_min {
        cfg.qgrid.min = v;
    }
    if let Some(v) = common.q_max {
        cfg.qgrid.max = v;
    }
    if let Some(v) = common.q_step {
        cfg.qgrid.step = v;
    }
    if let Some(list) = &common.depths {
        cfg.depths.list = Some(list.clone());
    }
    if let Some(seed) = common.seed {
        cfg.sample.seed = seed;
        cfg.verify.seed = seed;
    }
    if common.out.is_some() {
        cfg.output.path = common.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Cmd::Tau { common } => commands::run_tau(&build_config(&common)?),
        Cmd::Limits { common } => commands::run_limits(&build_config(&common)?),
        Cmd::Legendre { common } => commands::run_legendre(&build_config(&common)?),
        Cmd::Gibbs {
            common,
            q,
            s,
            depth,
        } => {
            let mut cfg = build_config(&common)?;
            if let Some(v) = q {
                cfg.gibbs.q = v;
            }
            if let Some(v) = s {
                cfg.gibbs.s = v;
            }
            if let Some(v) = depth {
                cfg.gibbs.depth = v;
            }
            commands::run_gibbs(&cfg)
        }
        Cmd::Entropy { common } => commands::run_entropy(&build_config(&common)?),
        Cmd::Construct {
            common,
            targets,
            stages,
        } => {
            let mut cfg = build_config(&common)?;
            if let Some(ts) = targets {
                match &mut cfg.construct {
                    Some(spec) => spec.targets = ts,
                    None => cfg.construct = Some(ConstructSpec::from_targets(ts)),
                }
            }
            if let Some(m) = stages {
                match &mut cfg.construct {
                    Some(spec) => spec.stages = Some(m),
                    None => {
                        return Err(AppError::Config(
                            "--stages needs targets (--targets or a [construct] table)".into(),
                        ))
                    }
                }
            }
            commands::run_construct(&cfg)
        }
        Cmd::Kinks { common, state } => {
            let cfg = build_config(&common)?;
            commands::run_kinks(&cfg, state.as_deref())
        }
        Cmd::Sample {
            common,
            count,
            depth,
        } => {
            let mut cfg = build_config(&common)?;
            if let Some(v) = count {
                cfg.sample.count = v;
            }
            if let Some(v) = depth {
                cfg.sample.depth = v;
            }
            cfg.validate()?;
            commands::run_sample(&cfg)
        }
        Cmd::CoarseSpectrum {
            common,
            depth,
            bins,
        } => {
            let mut cfg = build_config(&common)?;
            if let Some(v) = depth {
                cfg.coarse.depth = v;
            }
            if let Some(v) = bins {
                cfg.coarse.bins = v;
            }
            cfg.validate()?;
            commands::run_coarse(&cfg)
        }
        Cmd::Verify { common, perturb } => {
            let mut cfg = build_config(&common)?;
            if perturb.is_some() {
                cfg.verify.perturb = perturb;
            }
            commands::run_verify(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
