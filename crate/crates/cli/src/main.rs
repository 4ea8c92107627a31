mod bench;
mod config;
mod failure;
mod pipeline;
mod stages;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::PipelineConfig;
use failure::{exit_code, InputContext};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use toolpref_core::critique::Mode;
use toolpref_core::pref::{BinSpec, PairConfig, DEFAULT_COMPLEXITY_CAP};

#[derive(Parser)]
#[command(name = "toolpref", version, about = "Tool-calling preference data pipeline and judge benchmarks")]
struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    log_format: LogFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogFormat {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Map a raw corpus onto the trajectory format.
    Normalize {
        /// Adapter preset, or the source label when --adapter is given.
        #[arg(long)]
        source: String,
        /// Adapter JSON file.
        #[arg(long)]
        adapter: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ingest report destination.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Cut trajectories into segments and drop failed or invalid ones.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        failure_markers: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sample responses for every segment from every endpoint.
    SampleResponses {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        endpoints: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Samples per endpoint and segment.
        #[arg(long, default_value_t = 1)]
        n: u32,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score sampled responses against segment ground truth.
    Score {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build preference pairs from scored responses.
    BuildPairs {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        scored: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COMPLEXITY_CAP)]
        complexity_cap: usize,
        #[arg(long)]
        max_pairs_per_context: Option<usize>,
        /// "default" or comma-separated edges such as "0,0.5,1".
        #[arg(long, default_value = "default")]
        bins: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Balanced down-sampling of the pair pool.
    Bmds {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "default")]
        bins: String,
        #[arg(long)]
        out: PathBuf,
        /// Recorded only; selection is deterministic given the pool order.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Seeded train/validation split stratified by source and bin.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        holdout: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render pairwise critique queries.
    Render {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "think")]
        mode: Mode,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Group-normalized advantages over consecutive reward groups.
    Advantage {
        #[arg(long)]
        rewards: PathBuf,
        #[arg(long)]
        group_size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Judge benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run pipeline stages from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// "all" or one stage name.
        #[arg(long, default_value = "all")]
        stage: String,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config cache directory.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct JudgeArgs {
    /// Endpoint JSON for the judge.
    #[arg(long)]
    judge: PathBuf,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Pair oracle answers with failed outputs.
    BuildPairs {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Both-order pairwise accuracy.
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        #[command(flatten)]
        judge: JudgeArgs,
        #[arg(long, default_value = "think")]
        mode: Mode,
        /// Score report destination.
        #[arg(long)]
        report: PathBuf,
        /// Per-pair records.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Best-of-N selection.
    Bon {
        /// Largest accepted candidate count.
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long)]
        tasks: PathBuf,
        #[command(flatten)]
        judge: JudgeArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Policy answer, critic pass and editor revision.
    SelfCorrect {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        critic: PathBuf,
        #[arg(long)]
        editor: PathBuf,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

fn init_logging(format: LogFormat) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    match format {
        LogFormat::Json => builder.json().init(),
        LogFormat::Text => builder.init(),
    }
}

fn bins(spec: &str) -> Result<BinSpec> {
    BinSpec::parse(spec).input(|| format!("invalid bins {spec:?}"))
}

fn endpoint(path: &Path, cache_dir: Option<&Path>) -> Result<toolpref_client::Endpoint> {
    let config = pipeline::load_endpoint_file(path)?;
    Ok(stages::build_endpoints(vec![config], cache_dir)?.remove(0))
}

fn emit(report: &stages::StageReport, path: Option<&Path>) -> Result<()> {
    tracing::info!(stage = %report.stage, input = report.input, output = report.output, dropped = ?report.dropped, "done");
    match path {
        Some(p) => stages::write_json(p, report),
        None => Ok(()),
    }
}

fn run_single(stage: &str, f: impl FnOnce() -> Result<()>) -> Result<()> {
    f().with_context(|| format!("stage {stage} failed"))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Normalize { source, adapter, input, out, report } => run_single("normalize", || {
            let adapter = match adapter {
                Some(path) => stages::resolve_adapter(&path.display().to_string(), Some(&source))?,
                None => stages::resolve_adapter(&source, None)?,
            };
            let (_, ingest) = stages::normalize(&[stages::NormalizeInput { adapter, path: input }], &out)?;
            match report {
                Some(p) => stages::write_json(&p, &ingest),
                None => Ok(()),
            }
        }),
        Command::Segment { input, out, failure_markers, report } => run_single("segment", || {
            let markers = stages::load_markers(failure_markers.as_deref())?;
            emit(&stages::segment(&input, &out, &markers)?, report.as_deref())
        }),
        Command::SampleResponses { segments, endpoints, out, cache_dir, n, report } => {
            run_single("sample-responses", || {
                let configs = toolpref_client::EndpointConfig::load_all(&endpoints)
                    .input(|| format!("cannot load endpoints {}", endpoints.display()))?;
                let endpoints = stages::build_endpoints(configs, cache_dir.as_deref())?;
                emit(&stages::sample_responses(&segments, &endpoints, n, &out)?, report.as_deref())
            })
        }
        Command::Score { segments, responses, out, report } => run_single("score", || {
            emit(&stages::score(&segments, &responses, &out)?, report.as_deref())
        }),
        Command::BuildPairs { segments, scored, out, complexity_cap, max_pairs_per_context, bins: spec, report } => {
            run_single("build-pairs", || {
                let config = PairConfig { complexity_cap, max_pairs_per_context };
                let r = stages::build_pair_dataset(&segments, &scored, &bins(&spec)?, &config, &out)?;
                emit(&r, report.as_deref())
            })
        }
        Command::Bmds { pairs, n, bins: spec, out, seed, report } => run_single("bmds", || {
            let mut r = stages::bmds(&pairs, &bins(&spec)?, n, &out)?;
            if let (Some(seed), Some(extra)) = (seed, r.extra.as_object_mut()) {
                extra.insert("seed".into(), seed.into());
            }
            emit(&r, report.as_deref())
        }),
        Command::Split { input, holdout, seed, train, val, report } => run_single("split", || {
            emit(&stages::split(&input, holdout, seed, &train, &val)?, report.as_deref())
        }),
        Command::Render { pairs, mode, seed, out, report } => run_single("render", || {
            emit(&stages::render(&pairs, mode, seed, &out)?, report.as_deref())
        }),
        Command::Advantage { rewards, group_size, out, report } => run_single("advantage", || {
            emit(&stages::advantage(&rewards, group_size, &out)?, report.as_deref())
        }),
        Command::Bench(cmd) => dispatch_bench(cmd),
        Command::Run { config, stage, seed, cache_dir } => {
            let mut config = PipelineConfig::load(&config)?;
            if seed.is_some() {
                config.seed = seed;
            }
            if cache_dir.is_some() {
                config.cache_dir = cache_dir;
            }
            let run = pipeline::Run::new(config)?;
            let (report, outcome) = run.execute(&stage);
            tracing::info!(status = %report.status, stages = report.stages.len(), "run finished");
            outcome
        }
    }
}

fn dispatch_bench(cmd: BenchCommand) -> Result<()> {
    match cmd {
        BenchCommand::BuildPairs { tasks, out, report } => run_single("bench-build-pairs", || {
            let (r, _) = bench::build_pairs(&tasks, &out)?;
            emit(&r, report.as_deref())
        }),
        BenchCommand::Eval { pairs, judge, mode, report, records } => run_single("bench-eval", || {
            let judge = endpoint(&judge.judge, judge.cache_dir.as_deref())?;
            emit(&bench::eval(&pairs, &judge, mode, &report, records.as_deref())?, None)
        }),
        BenchCommand::Bon { n, tasks, judge, out, report } => run_single("bench-bon", || {
            let judge = endpoint(&judge.judge, judge.cache_dir.as_deref())?;
            emit(&bench::bon(&tasks, &judge, n, &out, &report)?, None)
        }),
        BenchCommand::SelfCorrect { tasks, policy, critic, editor, cache_dir, out, report } => {
            run_single("bench-self-correct", || {
                let cache = cache_dir.as_deref();
                let (policy, critic, editor) = (endpoint(&policy, cache)?, endpoint(&critic, cache)?, endpoint(&editor, cache)?);
                emit(&bench::self_correction(&tasks, &policy, &critic, &editor, &out, &report)?, None)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_format);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
