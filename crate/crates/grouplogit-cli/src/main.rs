//! Command-line interface: group-sparse Bayesian inference for
//! categorical responses.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// Errors carrying their process exit code: usage/config problems exit
/// with 2, I/O problems with 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "grouplogit",
    about = "Group-sparse Bayesian inference for multi-category logit models",
    version
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (falls back to $GROUPLOGIT_OUT, then to `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a design, a truth, and responses.
    Simulate {
        /// Observations.
        #[arg(long)]
        n: Option<usize>,
        /// Number of groups.
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        group_size: Option<usize>,
        /// Active groups.
        #[arg(long)]
        s0: Option<usize>,
        /// Euclidean norm of each active block.
        #[arg(long)]
        signal: Option<f64>,
        /// Response categories.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Run the transdimensional sampler on data files.
    Fit {
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        response: Option<PathBuf>,
        /// Truth file enabling distance summaries.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
        /// Prior exponent A.
        #[arg(long)]
        a: Option<f64>,
        /// Replace the prescribed slab scale.
        #[arg(long)]
        lambda_override: Option<f64>,
    },
    /// Compatibility report for a design under a declared truth.
    Diagnose {
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Threshold constant (> 3).
        #[arg(long)]
        m2: Option<f64>,
    },
    /// Run verification checks.
    Verify {
        /// Check name or `all`.
        #[arg(long)]
        check: Option<String>,
    },
    /// Run a trend experiment.
    Experiment {
        /// `dimension` or `contraction`.
        #[arg(long)]
        kind: Option<String>,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    let out = cli
        .out
        .or_else(|| std::env::var_os("GROUPLOGIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    match &cli.command {
        Command::Simulate { n, p, group_size, s0, signal, m } => {
            if let Some(v) = n {
                config.simulate.n = *v;
            }
            if let Some(v) = p {
                config.simulate.p = *v;
            }
            if let Some(v) = group_size {
                config.simulate.group_size = *v;
            }
            if let Some(v) = s0 {
                config.simulate.s0 = *v;
            }
            if let Some(v) = signal {
                config.simulate.signal = *v;
            }
            if let Some(v) = m {
                config.model.m = *v;
            }
            config.validate()?;
            commands::simulate(&mut config, &out)
        }
        Command::Fit {
            design,
            groups,
            response,
            truth,
            n_iter,
            burn_in,
            chains,
            a,
            lambda_override,
        } => {
            if let Some(v) = design {
                config.paths.design = v.to_string_lossy().into_owned();
            }
            if let Some(v) = groups {
                config.paths.groups = v.to_string_lossy().into_owned();
            }
            if let Some(v) = response {
                config.paths.response = v.to_string_lossy().into_owned();
            }
            if let Some(v) = truth {
                config.paths.truth = Some(v.to_string_lossy().into_owned());
            }
            if let Some(v) = n_iter {
                config.sampler.n_iter = *v;
            }
            if let Some(v) = burn_in {
                config.sampler.burn_in = *v;
            }
            if let Some(v) = chains {
                config.sampler.chains = *v;
            }
            if let Some(v) = a {
                config.prior.a = *v;
            }
            if let Some(v) = lambda_override {
                config.prior.lambda_override = Some(*v);
            }
            config.validate()?;
            commands::fit(&config, &out)
        }
        Command::Diagnose { design, groups, truth, m2 } => {
            if let Some(v) = design {
                config.paths.design = v.to_string_lossy().into_owned();
            }
            if let Some(v) = groups {
                config.paths.groups = v.to_string_lossy().into_owned();
            }
            if let Some(v) = truth {
                config.paths.truth = Some(v.to_string_lossy().into_owned());
            }
            if let Some(v) = m2 {
                config.geometry.m2 = *v;
            }
            config.validate()?;
            commands::diagnose(&config, &out)
        }
        Command::Verify { check } => commands::verify(&config, &out, check.as_deref()),
        Command::Experiment { kind } => commands::experiment(&config, &out, kind.as_deref()),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {}", err.message());
            std::process::exit(err.exit_code());
        }
    }
}
