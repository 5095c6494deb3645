//! `grantfree`: simulate and sweep the iterative maximum-likelihood activity
//! detector, writing CSV/JSON results for external plotting.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use grantfree_cli::{parse_config, run_request, CliError, Overrides, Profile, Request};

#[derive(Parser)]
#[command(
    name = "grantfree",
    version,
    about = "Grant-free activity-detection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Lambda,
    Snr,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (flat key = value, or JSON; a manifest config snapshot
    /// also works).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master RNG seed (falls back to config file, then GRANTFREE_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Monte-Carlo trials (per sweep point).
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 uses all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Size preset applied before config file and flags.
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Device count K.
    #[arg(long)]
    k: Option<usize>,
    /// BS antenna count M.
    #[arg(long)]
    m: Option<usize>,
    /// Preamble length T.
    #[arg(long)]
    t: Option<usize>,
    /// Per-device SNR in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Activity probability.
    #[arg(long)]
    epsilon_a: Option<f64>,
    /// CSI-uncertainty scale (0 = full CSI).
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-device transmit power.
    #[arg(long)]
    rho: Option<f64>,
    /// Coordinate-descent sweeps.
    #[arg(long)]
    sweeps: Option<usize>,
    /// False-alarm targets for slice tables (comma separated).
    #[arg(long, value_delimiter = ',')]
    target_pfa: Option<Vec<f64>>,
    /// Draw pilots once per experiment instead of per trial.
    #[arg(long)]
    fixed_pilots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write an operating-point report plus the
    /// full ROC table.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Threshold scale in dB for the report.
        #[arg(long, default_value_t = 0.0)]
        v_db: f64,
    },
    /// Initializer-convergence study (mean log-likelihood and MSE per
    /// update).
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep lambda or SNR and write ROC plus miss-detection slice tables.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Swept quantity.
        #[arg(long, value_enum)]
        axis: Axis,
        /// Sweep points (comma separated); study defaults otherwise.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Full ROC curve at the fixed configuration.
    Roc {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn overrides_from(common: &CommonArgs, values: Option<Vec<f64>>) -> Overrides {
    Overrides {
        seed: common.seed,
        trials: common.trials,
        k: common.k,
        m: common.m,
        t: common.t,
        snr_db: common.snr_db,
        epsilon_a: common.epsilon_a,
        lambda: common.lambda,
        rho: common.rho,
        n_sweeps: common.sweeps,
        sweep_values: values,
        target_pfa: common.target_pfa.clone(),
        fixed_pilots: common.fixed_pilots.then_some(true),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (request, common, values) = match cli.command {
        Command::Simulate { common, v_db } => (Request::Simulate { v_db }, common, None),
        Command::Convergence { common } => (Request::Convergence, common, None),
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let request = match axis {
                Axis::Lambda => Request::SweepLambda,
                Axis::Snr => Request::SweepSnr,
            };
            (request, common, values)
        }
        Command::Roc { common } => (Request::Roc, common, None),
    };

    let profile = common.profile.map(|p| match p {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    });
    let overrides = overrides_from(&common, values);
    let spec = parse_config(
        request.study(),
        profile,
        common.config.as_deref(),
        &overrides,
    )?;
    let written = run_request(&request, &spec, &common.out, common.workers)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.category());
            ExitCode::from(err.exit_code())
        }
    }
}
