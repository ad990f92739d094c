//! Subcommand implementations, callable without spawning the binary.

use std::fs;
use std::path::{Path, PathBuf};

use memebot_core::corpus::{load_corpus, split_corpus, SplitRatios, TemplateCatalog};
use memebot_core::eval::{
    aggregate_ratings, bleu, cohen_kappa, rating_pairs, read_ratings, score_distribution, BleuReport, EvalError,
    KappaResult, Metric, RatingSummary, ScoreDistribution,
};
use memebot_core::generation::{generate_meme, DecodeParams, GenerationError, MemePipeline};
use memebot_core::models::{
    train_generator, train_selector, CaptionGenerator, ModelError, ModelKind, TemplateSelector, TrainConfig,
    TrainReport, TrainingMeta,
};
use memebot_core::neural::NeuralError;
use memebot_core::text::{build_vocab, tokenize, TagLexicon};
use serde::Serialize;

pub const SELECTOR_FILE: &str = "selector.mbck";
pub const GENERATOR_FILE: &str = "generator.mbck";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or flags (exit 2).
    Config(String),
    /// Missing or malformed input data (exit 3).
    Data(String),
    /// Forced template not in the catalog (exit 4).
    UnknownTemplate(String),
    /// Anything else, e.g. an unwritable output path (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::UnknownTemplate(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::UnknownTemplate(m) => write!(f, "unknown template: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownMetric(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::InvalidConfig(_) | ModelError::Neural(NeuralError::InvalidConfig(_)) => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Data(e.to_string()),
    }
}

/// `$MEMEBOT_DATA_DIR`, or `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("MEMEBOT_DATA_DIR").map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

/// Defaults when `path` is `None`.
pub fn load_config(path: Option<&Path>) -> Result<TrainConfig, CliError> {
    let config = match path {
        None => TrainConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    config.validate().map_err(model_error)?;
    Ok(config)
}

pub fn load_catalog(path: &Path) -> Result<TemplateCatalog, CliError> {
    TemplateCatalog::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub catalog: PathBuf,
    pub out: PathBuf,
}

/// Trains one model, then writes `<kind>.mbck`, `<kind>_report.json` and
/// `vocab.txt` under `args.out`. The checkpoint carries its own copy of the
/// vocabulary; the text file is for inspection.
pub fn train(kind: ModelKind, args: &TrainArgs) -> Result<TrainReport, CliError> {
    let config = load_config(args.config.as_deref())?;
    let catalog = load_catalog(&args.catalog)?;
    let samples =
        load_corpus(&args.data, &catalog).map_err(|e| CliError::Data(format!("{}: {e}", args.data.display())))?;
    let split =
        split_corpus(&samples, SplitRatios::default(), config.seed).map_err(|e| CliError::Data(e.to_string()))?;
    let vocab = build_vocab(&split.train, &catalog, config.min_freq);
    fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    let vocab_path = args.out.join(VOCAB_FILE);
    fs::write(&vocab_path, vocab.to_text()).map_err(|e| CliError::Runtime(format!("{}: {e}", vocab_path.display())))?;
    let (path, mut report) = match kind {
        ModelKind::Selector => {
            let (model, report) = train_selector(&split, &vocab, &config).map_err(model_error)?;
            let path = args.out.join(SELECTOR_FILE);
            model
                .save(&path, meta(&config, &report))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            (path, report)
        }
        ModelKind::Generator => {
            let (model, report) =
                train_generator(&split, &vocab, &TagLexicon::embedded(), &config).map_err(model_error)?;
            let path = args.out.join(GENERATOR_FILE);
            model
                .save(&path, meta(&config, &report))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            (path, report)
        }
    };
    report.checkpoint = Some(path);
    let report_path = args.out.join(format!("{kind}_report.json"));
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json).map_err(|e| CliError::Runtime(format!("{}: {e}", report_path.display())))?;
    Ok(report)
}

fn meta(config: &TrainConfig, report: &TrainReport) -> TrainingMeta {
    TrainingMeta {
        seed: config.seed,
        step: report.steps,
        loss: report
            .epochs
            .get(report.best_epoch)
            .map(|e| e.validation_loss.unwrap_or(e.train_loss)),
    }
}

/// Loads both checkpoints from `dir` against `catalog`.
pub fn load_pipeline(dir: &Path, catalog: &Path) -> Result<MemePipeline, CliError> {
    let catalog = load_catalog(catalog)?;
    let sel_path = dir.join(SELECTOR_FILE);
    let gen_path = dir.join(GENERATOR_FILE);
    let (selector, _) =
        TemplateSelector::load(&sel_path).map_err(|e| CliError::Data(format!("{}: {e}", sel_path.display())))?;
    let (generator, _) =
        CaptionGenerator::load(&gen_path).map_err(|e| CliError::Data(format!("{}: {e}", gen_path.display())))?;
    MemePipeline::new(selector, generator, catalog).map_err(|e| CliError::Data(e.to_string()))
}

/// `None`, empty and `auto` mean "let the selector choose".
pub fn resolve_template(
    catalog: &TemplateCatalog,
    name: Option<&str>,
) -> Result<Option<memebot_core::corpus::TemplateId>, CliError> {
    match name.map(str::trim) {
        None | Some("") => Ok(None),
        Some(n) if n.eq_ignore_ascii_case("auto") => Ok(None),
        Some(n) => catalog
            .find(n)
            .map(Some)
            .ok_or_else(|| CliError::UnknownTemplate(n.to_string())),
    }
}

pub struct GenerateArgs {
    pub sentence: String,
    pub template: Option<String>,
    pub beam: usize,
    pub alpha: f64,
    pub seed: u64,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub template: String,
    pub template_id: usize,
    pub probability: Option<f64>,
    pub caption: String,
    pub score: f64,
    pub image_variant: usize,
    pub output: PathBuf,
}

pub fn generate(pipeline: &MemePipeline, args: &GenerateArgs) -> Result<GenerateSummary, CliError> {
    let params = DecodeParams {
        beam_size: args.beam,
        alpha: args.alpha,
        forced_template: resolve_template(&pipeline.catalog, args.template.as_deref())?,
        ..DecodeParams::default()
    };
    let meme = generate_meme(&args.sentence, pipeline, &params, args.seed).map_err(|e| match e {
        GenerationError::InvalidParams(_) | GenerationError::EmptyInput => CliError::Config(e.to_string()),
        GenerationError::UnknownTemplate { .. } => CliError::UnknownTemplate(e.to_string()),
        _ => CliError::Data(e.to_string()),
    })?;
    fs::write(&args.output, &meme.png).map_err(|e| CliError::Runtime(format!("{}: {e}", args.output.display())))?;
    Ok(GenerateSummary {
        template: meme.template_name,
        template_id: meme.template.0,
        probability: meme.probability,
        caption: meme.caption,
        score: meme.score,
        image_variant: meme.image_variant,
        output: args.output.clone(),
    })
}

fn read_lines(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(tokenize).collect())
}

/// One sentence per line in each file.
pub fn eval_bleu(hyp: &Path, reference: &Path) -> Result<BleuReport, CliError> {
    Ok(bleu(&read_lines(hyp)?, &read_lines(reference)?)?)
}

fn ratings(path: &Path) -> Result<Vec<memebot_core::eval::RatingRecord>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    read_ratings(file).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn eval_kappa(path: &Path, metric: Metric) -> Result<KappaResult, CliError> {
    Ok(cohen_kappa(&rating_pairs(&ratings(path)?, metric)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingsReport {
    pub summary: RatingSummary,
    pub distribution: ScoreDistribution,
}

pub fn eval_ratings(path: &Path) -> Result<RatingsReport, CliError> {
    let records = ratings(path)?;
    Ok(RatingsReport {
        summary: aggregate_ratings(&records)?,
        distribution: score_distribution(&records),
    })
}
