use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use memebot_cli::commands::{self, CliError, GenerateArgs, TrainArgs};
use memebot_cli::service::{self, AppState, DEFAULT_TOP_K};
use memebot_core::eval::Metric;
use memebot_core::generation::{DEFAULT_ALPHA, DEFAULT_BEAM_SIZE};
use memebot_core::models::ModelKind;
use serde::Serialize;

/// Sentence-to-meme generation: training, generation, evaluation and serving.
///
/// Paths default to locations under $MEMEBOT_DATA_DIR (or ./data).
#[derive(Parser)]
#[command(name = "memebot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct TrainFlags {
    /// Training config (JSON); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus, one JSON object per line.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Output directory for the checkpoint and report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ModelFlags {
    /// Directory with selector.mbck and generator.mbck.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Coherence,
    Relevance,
    Likes,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Coherence => Metric::Coherence,
            MetricArg::Relevance => Metric::Relevance,
            MetricArg::Likes => Metric::Likes,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the template selector.
    TrainSelector(TrainFlags),
    /// Train the caption generator.
    TrainGenerator(TrainFlags),
    /// Generate one meme and write it as PNG.
    Generate {
        sentence: String,
        /// Force this template (name as in the catalog).
        #[arg(long)]
        template: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
        beam: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Corpus BLEU of a hypothesis file against a reference file.
    EvalBleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Cohen's kappa between the two raters of every meme.
    EvalKappa {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, value_enum)]
        metric: MetricArg,
    },
    /// Mean scores and score histograms.
    EvalRatings {
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[command(flatten)]
        model: ModelFlags,
        /// Directory for `?format=url` images.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("report serializes"));
}

fn model_paths(flags: ModelFlags) -> (PathBuf, PathBuf) {
    let root = commands::data_root();
    (
        flags.checkpoints.unwrap_or_else(|| root.join("checkpoints")),
        flags.catalog.unwrap_or_else(|| root.join("catalog.json")),
    )
}

fn train_args(flags: TrainFlags) -> TrainArgs {
    let root = commands::data_root();
    TrainArgs {
        config: flags.config,
        data: flags.data.unwrap_or_else(|| root.join("corpus.jsonl")),
        catalog: flags.catalog.unwrap_or_else(|| root.join("catalog.json")),
        out: flags.out.unwrap_or_else(|| root.join("checkpoints")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::TrainSelector(flags) => print_json(&commands::train(ModelKind::Selector, &train_args(flags))?),
        Command::TrainGenerator(flags) => print_json(&commands::train(ModelKind::Generator, &train_args(flags))?),
        Command::Generate {
            sentence,
            template,
            beam,
            alpha,
            seed,
            output,
            model,
        } => {
            let (checkpoints, catalog) = model_paths(model);
            let pipeline = commands::load_pipeline(&checkpoints, &catalog)?;
            let args = GenerateArgs {
                sentence,
                template,
                beam,
                alpha,
                seed,
                output,
            };
            print_json(&commands::generate(&pipeline, &args)?);
        }
        Command::EvalBleu { hyp, reference } => print_json(&commands::eval_bleu(&hyp, &reference)?),
        Command::EvalKappa { ratings, metric } => print_json(&commands::eval_kappa(&ratings, metric.into())?),
        Command::EvalRatings { ratings } => print_json(&commands::eval_ratings(&ratings)?),
        Command::Serve {
            addr,
            model,
            static_dir,
            top_k,
        } => {
            let (checkpoints, catalog) = model_paths(model);
            let pipeline = commands::load_pipeline(&checkpoints, &catalog)?;
            let static_dir = static_dir.unwrap_or_else(|| commands::data_root().join("static"));
            std::fs::create_dir_all(&static_dir)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", static_dir.display())))?;
            let state = AppState {
                pipeline,
                static_dir: Some(static_dir),
                top_k,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
            rt.block_on(service::serve(addr, state))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memebot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
