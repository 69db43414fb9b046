#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{ArgAction, Args, Parser, Subcommand};
use coevo_core::contentmetrics::{ContentConfig, TextUnit, DEFAULT_ALPHA};
use coevo_core::ingest::{LogFormat, PayloadKind, DEFAULT_MAX_TARGETS};
use coevo_core::netmetrics::ConductanceConfig;
use coevo_core::stats::RegressionMethod;
use coevo_core::CoevoError;

mod analysis;
mod commands;
mod config;
mod manifest;

use config::PredictorSet;

#[derive(Parser)]
#[command(
    name = "coevo",
    version,
    about = "Relate network structure and content in segmented communication logs"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an event log and write it as a directory of segments.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: LogFormat,
        #[arg(long, default_value_t = 100)]
        segment_size: usize,
        #[arg(long)]
        payload: PayloadKind,
        #[arg(long, default_value_t = false, action = ArgAction::Set)]
        include_isolated: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_TARGETS)]
        max_targets: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-segment network metrics and the edge-repeat curve.
    Netmetrics {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long, default_value_t = ConductanceConfig::default().max_path_len)]
        max_path_len: usize,
        #[arg(long, default_value_t = ConductanceConfig::default().prune_epsilon)]
        prune_eps: f64,
        #[arg(long, default_value_t = 50)]
        max_lag: usize,
        /// Append first differences (`d_*`) of the single-segment metrics.
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        differences: bool,
        #[arg(long, default_value_t = false, action = ArgAction::Set)]
        keep_partial: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-segment content metrics.
    Contentmetrics {
        #[arg(long)]
        segments: PathBuf,
        /// Must match the payload recorded with the segments.
        #[arg(long)]
        payload: Option<PayloadKind>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = false, action = ArgAction::Set)]
        strip_quotes: bool,
        #[arg(long, value_enum, default_value = "user")]
        text_unit: TextUnitArg,
        #[arg(long, default_value_t = false, action = ArgAction::Set)]
        keep_partial: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// ADF and PP unit-root tests on every column of metric tables.
    Stationarity {
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long, default_value = "stationarity.csv")]
        out: PathBuf,
    },
    /// Spearman correlations per group, combined across groups.
    Correlate {
        /// Metric tables or directories of them.
        #[arg(long, num_args = 1.., required = true)]
        groups: Vec<PathBuf>,
        /// `all`, `cross` (network × content) or a CSV file of pairs.
        #[arg(long, default_value = "cross")]
        pairs: String,
        /// `none`, 0.01, 0.05 or 0.10.
        #[arg(long, default_value = "none")]
        screen: String,
        #[arg(long, default_value = "heatmap.csv")]
        out: PathBuf,
    },
    /// Incremental R² curves.
    Regress {
        #[arg(long, num_args = 1.., required = true)]
        series: Vec<PathBuf>,
        #[arg(long)]
        target: String,
        #[arg(long, value_enum, default_value = "all")]
        predictors: PredictorSet,
        #[arg(long, value_enum, default_value = "nw")]
        method: MethodArg,
        /// JSON list of `{"name", "predictors"}` orderings.
        #[arg(long)]
        orderings: Option<PathBuf>,
        #[arg(long, default_value = "r2_curve.csv")]
        out: PathBuf,
    },
    /// Run the message-forwarding simulator.
    Simulate(SimulateCmd),
    /// Run every stage from one configuration file.
    Pipeline {
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        config: Option<PathBuf>,
        /// Repeat the run recorded in a manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: PipelineFlags,
    },
}

#[derive(Args)]
struct PipelineFlags {
    #[arg(long, conflicts_with = "manifest")]
    input: Option<PathBuf>,
    #[arg(long, conflicts_with = "manifest")]
    payload: Option<PayloadKind>,
    #[arg(long, conflicts_with = "manifest")]
    segment_size: Option<usize>,
    #[arg(long, conflicts_with = "manifest")]
    max_path_len: Option<usize>,
    #[arg(long, conflicts_with = "manifest")]
    prune_eps: Option<f64>,
    #[arg(long, conflicts_with = "manifest")]
    max_lag: Option<usize>,
    #[arg(long, conflicts_with = "manifest")]
    screen: Option<String>,
    #[arg(long, conflicts_with = "manifest")]
    target: Option<String>,
    #[arg(long, value_enum, conflicts_with = "manifest")]
    method: Option<MethodArg>,
    #[arg(long, value_enum, conflicts_with = "manifest")]
    text_unit: Option<TextUnitArg>,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
struct SimulateCmd {
    #[command(subcommand)]
    action: Option<SimAction>,
    #[command(flatten)]
    run: SimFlags,
    /// Summary report (same directory as --out).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output event log (JSONL).
    #[arg(long, required = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimAction {
    /// Paired runs with and without topics over several seeds.
    Compare {
        #[command(flatten)]
        run: SimFlags,
        #[arg(long, conflicts_with = "manifest")]
        seeds: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SimFlags {
    /// TOML or JSON simulator configuration; defaults apply otherwise.
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Repeat the run recorded in a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, conflicts_with = "manifest")]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "manifest", action = ArgAction::Set)]
    topic: Option<bool>,
    #[arg(long, conflicts_with = "manifest")]
    messages: Option<usize>,
}

impl SimFlags {
    fn into_args(self, out: PathBuf, report: Option<PathBuf>) -> commands::SimArgs {
        commands::SimArgs {
            config: self.config,
            manifest: self.manifest,
            seed: self.seed,
            topic: self.topic,
            messages: self.messages,
            out,
            report,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Ols,
    Nw,
}

impl From<MethodArg> for RegressionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ols => RegressionMethod::Ols,
            MethodArg::Nw => RegressionMethod::Nw,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TextUnitArg {
    User,
    Document,
}

impl From<TextUnitArg> for TextUnit {
    fn from(u: TextUnitArg) -> Self {
        match u {
            TextUnitArg::User => TextUnit::User,
            TextUnitArg::Document => TextUnit::Document,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CoevoError::config("--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Ingest {
            input,
            format,
            segment_size,
            payload,
            include_isolated,
            max_targets,
            out,
        } => commands::ingest(&commands::IngestArgs {
            input,
            format,
            segment_size,
            payload,
            include_isolated,
            max_targets,
            out,
        }),
        Command::Netmetrics {
            segments,
            max_path_len,
            prune_eps,
            max_lag,
            differences,
            keep_partial,
            out,
        } => commands::netmetrics(&commands::NetArgs {
            segments,
            conductance: ConductanceConfig::new(max_path_len, prune_eps)?,
            max_lag,
            differences,
            keep_partial,
            out,
        }),
        Command::Contentmetrics {
            segments,
            payload,
            alpha,
            strip_quotes,
            text_unit,
            keep_partial,
            out,
        } => commands::contentmetrics(&commands::ContentArgs {
            segments,
            payload,
            config: ContentConfig {
                alpha,
                strip_quotes,
                text_unit: text_unit.into(),
            },
            keep_partial,
            out,
        }),
        Command::Stationarity { metrics, out } => commands::stationarity(&metrics, &out),
        Command::Correlate {
            groups,
            pairs,
            screen,
            out,
        } => commands::correlate(&groups, &pairs, &screen, &out),
        Command::Regress {
            series,
            target,
            predictors,
            method,
            orderings,
            out,
        } => commands::regress(&commands::RegressArgs {
            series,
            target,
            predictors,
            method: method.into(),
            orderings,
            out,
        }),
        Command::Simulate(cmd) => match cmd.action {
            Some(SimAction::Compare { run, seeds, out }) => {
                commands::simulate_compare(&commands::CompareArgs {
                    sim: run.into_args(out, None),
                    seeds,
                })
            }
            None => {
                let out = cmd.out.expect("required by clap");
                commands::simulate(&cmd.run.into_args(out, cmd.report))
            }
        },
        Command::Pipeline {
            config,
            manifest,
            out,
            overrides: f,
        } => commands::pipeline(&commands::PipelineArgs {
            config,
            manifest,
            out,
            overrides: commands::PipelineOverrides {
                input: f.input,
                payload: f.payload,
                segment_size: f.segment_size,
                max_path_len: f.max_path_len,
                prune_eps: f.prune_eps,
                max_lag: f.max_lag,
                screen: f.screen,
                target: f.target,
                method: f.method.map(Into::into),
                text_unit: f.text_unit.map(Into::into),
            },
        }),
    }
}

/// 2: configuration, 3: input, 4: numerical failure, 1: anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoevoError>() {
            return match e {
                CoevoError::Config(_) => 2,
                CoevoError::Parse { .. }
                | CoevoError::InvalidArgument(_)
                | CoevoError::Io(_)
                | CoevoError::Csv(_)
                | CoevoError::Json(_) => 3,
                CoevoError::Degenerate(_)
                | CoevoError::StructureUnreachable { .. }
                | CoevoError::Deadlock { .. } => 4,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
        if cause.is::<rayon::ThreadPoolBuildError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            for cause in err.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
