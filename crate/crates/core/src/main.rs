use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cswitness::pipeline::{self, PipelineError};
use cswitness::NodeId;

/// Simulate slotted CSMA/CA networks and detect carrier-sense misbehavior
/// from passively sniffed traffic.
#[derive(Parser)]
#[command(name = "cswitness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; created if absent.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override the config's master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulator: transmissions.csv, deliveries.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Capture lossy sniffer traces from transmissions.csv.
    Capture {
        #[command(flatten)]
        common: Common,
    },
    /// Merge sniffer traces into merged.csv.
    Merge {
        #[command(flatten)]
        common: Common,
    },
    /// Train pair models on merged.csv: per-pair observations, models, and
    /// pairs.json.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Restrict inference to one pair, e.g. --pair A,B.
        #[arg(long, value_name = "X,Y")]
        pair: Option<String>,
    },
    /// Score pairs.json into report.json.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Override the config's flagging threshold.
        #[arg(long, value_name = "V")]
        tau_selfish: Option<f64>,
        /// Override the config's witness threshold.
        #[arg(long, value_name = "V")]
        tau_witness: Option<f64>,
    },
    /// Bucket deliveries.csv into series.csv.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Override the config's bucket width in slots.
        #[arg(long, value_name = "N")]
        bucket: Option<u64>,
    },
    /// All stages in order on one output directory.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common }
            | Command::Capture { common }
            | Command::Merge { common }
            | Command::Infer { common, .. }
            | Command::Detect { common, .. }
            | Command::Metrics { common, .. }
            | Command::Run { common } => common,
        }
    }
}

fn parse_pair(raw: &str) -> Result<(NodeId, NodeId), PipelineError> {
    let bad = |msg: String| PipelineError::BadPairFilter(msg);
    let (a, b) = raw
        .split_once(',')
        .ok_or_else(|| bad(format!("expected X,Y, got {raw:?}")))?;
    let x = NodeId::new(a.trim()).map_err(|e| bad(e.to_string()))?;
    let y = NodeId::new(b.trim()).map_err(|e| bad(e.to_string()))?;
    Ok((x, y))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let common = cli.command.common();
    let (cfg, ctx) = pipeline::load(&common.config, &common.out, common.seed)?;
    match &cli.command {
        Command::Simulate { .. } => {
            pipeline::stage_simulate(&cfg, &ctx)?;
        }
        Command::Capture { .. } => pipeline::stage_capture(&cfg, &ctx)?,
        Command::Merge { .. } => pipeline::stage_merge(&cfg, &ctx)?,
        Command::Infer { pair, .. } => {
            let filter = pair.as_deref().map(parse_pair).transpose()?;
            pipeline::stage_infer(&cfg, &ctx, filter)?;
        }
        Command::Detect {
            tau_selfish,
            tau_witness,
            ..
        } => pipeline::stage_detect(&cfg, &ctx, *tau_selfish, *tau_witness)?,
        Command::Metrics { bucket, .. } => pipeline::stage_metrics(&cfg, &ctx, *bucket)?,
        Command::Run { .. } => pipeline::run_pipeline(&cfg, &ctx)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
