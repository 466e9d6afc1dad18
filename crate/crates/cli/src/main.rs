//! `dialemo`: split, render, parse, vote, score and report from the shell.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error.

mod config;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use dialemo::dataset::{self, DialogRecord};
use dialemo::ensemble::{self, EnsembleConfig, EnsembleError};
use dialemo::jsonl;
use dialemo::metrics::{self, EvalOptions, Smoothing};
use dialemo::prompting::{self, ParseMode, Prediction, RawOutput, Template};
use dialemo::report::{self, Format, LabeledReport, ReportBundle, RunMetadata};

use config::{FileConfig, UsageError};

const MAX_LISTED_IDS: usize = 20;

#[derive(Parser, Debug)]
#[command(name = "dialemo", version, about = "Evaluation and ensembling harness for visual-dialog emotion explanation")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = "DIALEMO_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assign dataset records to k folds.
    Split(SplitArgs),
    /// Render instruction prompts for every record.
    Render(RenderArgs),
    /// Parse raw model outputs into predictions.
    Parse(ParseArgs),
    /// Combine prediction files by hard voting.
    Vote(VoteArgs),
    /// Score predictions against the gold dataset.
    Score(ScoreArgs),
    /// Build fold or comparison tables from report bundles.
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    stratify: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    template: Option<TemplateArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct ParseArgs {
    /// Raw outputs, one `{id, model, text}` object per line.
    #[arg(long)]
    input: PathBuf,
    /// Gold dataset, used for each record's candidate emotions.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    template: Option<TemplateArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct VoteArgs {
    /// Prediction files; records are grouped by their `model` field.
    #[arg(long = "predictions", required = true, num_args = 1..)]
    predictions: Vec<PathBuf>,
    /// Ensemble config (JSON).
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Built-in configuration instead of a config file.
    #[arg(long, value_enum, conflicts_with = "ensemble")]
    preset: Option<PresetArg>,
    /// LM (ensemble) model id for `--preset hybrid-paper`.
    #[arg(long)]
    lm_model: Option<String>,
    /// LVLM model id for `--preset hybrid-paper`.
    #[arg(long)]
    lvlm_model: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    predictions: PathBuf,
    /// Report bundle directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    smoothing: Option<SmoothingArg>,
    /// Row label in the score table.
    #[arg(long, default_value = "run")]
    label: String,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long, default_value = "")]
    description: String,
    /// Attach the hyperparameters of a published training recipe.
    #[arg(long, value_enum)]
    recipe: Option<RecipeArg>,
    /// RFC 3339 timestamp recorded in the run metadata.
    #[arg(long, default_value = "1970-01-01T00:00:00Z")]
    created_at: String,
}

#[derive(clap::Args, Debug)]
struct ReportArgs {
    /// `report.json` files written by `score` (or earlier `report` runs).
    #[arg(long = "inputs", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "comparison")]
    kind: TableKind,
    /// Format printed to standard output.
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
    /// Optional bundle directory for the merged reports and tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TemplateArg {
    Lm,
    Lvlm,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Strict,
    Lenient,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SmoothingArg {
    None,
    #[value(name = "add_one", alias = "add-one")]
    AddOne,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PresetArg {
    HybridPaper,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RecipeArg {
    Lm,
    Lvlm,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TableKind {
    Folds,
    Comparison,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Markdown,
    Csv,
    Tsv,
}

impl From<TemplateArg> for Template {
    fn from(t: TemplateArg) -> Self {
        match t {
            TemplateArg::Lm => Template::Lm,
            TemplateArg::Lvlm => Template::Lvlm,
        }
    }
}

impl From<ModeArg> for ParseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => ParseMode::Strict,
            ModeArg::Lenient => ParseMode::Lenient,
        }
    }
}

impl From<SmoothingArg> for Smoothing {
    fn from(s: SmoothingArg) -> Self {
        match s {
            SmoothingArg::None => Smoothing::None,
            SmoothingArg::AddOne => Smoothing::AddOne,
        }
    }
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => Format::Markdown,
            FormatArg::Csv => Format::Csv,
            FormatArg::Tsv => Format::Tsv,
        }
    }
}

struct Ctx {
    file: FileConfig,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => match err.downcast_ref::<UsageError>() {
            Some(usage) => Cli::command()
                .error(clap::error::ErrorKind::MissingRequiredArgument, &usage.0)
                .exit(),
            None => {
                eprintln!("error: {err:#}");
                ExitCode::from(1)
            }
        },
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        file,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Split(args) => cmd_split(&ctx, args),
        Command::Render(args) => cmd_render(&ctx, args),
        Command::Parse(args) => cmd_parse(&ctx, args),
        Command::Vote(args) => cmd_vote(&ctx, args),
        Command::Score(args) => cmd_score(&ctx, args),
        Command::Report(args) => cmd_report(&ctx, args),
    }
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| UsageError(format!("missing {what} (pass the flag or set it in --config)")).into())
}

fn dataset_path(ctx: &Ctx, flag: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    require(flag.or_else(|| ctx.file.dataset.clone()), name)
}

fn load_dataset(path: &Path) -> Result<Vec<DialogRecord>> {
    dataset::load_records(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    jsonl::write_lines(BufWriter::new(file), items)
        .with_context(|| format!("writing {}", path.display()))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    jsonl::read_lines(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn cmd_split(ctx: &Ctx, args: SplitArgs) -> Result<()> {
    let k = require(args.k.or(ctx.file.k), "--k")?;
    let seed = require(ctx.seed.or(ctx.file.seed), "--seed")?;
    let input = dataset_path(ctx, args.input, "--input")?;
    let stratify = args.stratify || ctx.file.stratify.unwrap_or(false);

    let records = load_dataset(&input)?;
    let folds = dataset::split_folds(&records, k, seed, stratify)?;
    fs::write(&args.out, folds.to_json())
        .with_context(|| format!("writing {}", args.out.display()))?;
    for (fold, size) in folds.fold_sizes().iter().enumerate() {
        ctx.info(format!("fold {fold}: {size}"));
    }
    Ok(())
}

fn cmd_render(ctx: &Ctx, args: RenderArgs) -> Result<()> {
    let template = args
        .template
        .map(Template::from)
        .or(ctx.file.template()?)
        .unwrap_or(Template::Lm);
    let input = dataset_path(ctx, args.input, "--input")?;
    let records = load_dataset(&input)?;
    let prompts: Vec<_> = records
        .iter()
        .map(|r| prompting::render_prompt(r, template))
        .collect();
    write_jsonl(&args.out, &prompts)?;
    ctx.info(format!("rendered {} {template} prompts", prompts.len()));
    Ok(())
}

fn cmd_parse(ctx: &Ctx, args: ParseArgs) -> Result<()> {
    let template = args
        .template
        .map(Template::from)
        .or(ctx.file.template()?)
        .unwrap_or(Template::Lm);
    let mode = args
        .mode
        .map(ParseMode::from)
        .or(ctx.file.parse_mode()?)
        .unwrap_or_default();
    let gold = load_dataset(&dataset_path(ctx, args.dataset, "--dataset")?)?;
    let by_id: HashMap<&str, &DialogRecord> = gold.iter().map(|r| (r.id.as_str(), r)).collect();
    let raw: Vec<(usize, RawOutput)> = read_jsonl(&args.input)?;

    let mut out = Vec::with_capacity(raw.len());
    let mut fallbacks = 0usize;
    for (line, item) in raw {
        let record = by_id
            .get(item.id.as_str())
            .ok_or_else(|| anyhow!("line {line}: unknown record id `{}`", item.id))?;
        let candidates = &record.emotion_candidates;
        let (emotion, explanation) =
            match prompting::parse_response(&item.text, candidates, template, mode) {
                Ok(parsed) => parsed,
                Err(e) if mode == ParseMode::Strict => {
                    bail!("line {line} (record `{}`): {e}", item.id)
                }
                Err(e) => {
                    fallbacks += 1;
                    if !ctx.quiet {
                        eprintln!("warning: line {line} (record `{}`): {e}; using fallback", item.id);
                    }
                    (candidates[0].clone(), String::new())
                }
            };
        out.push(Prediction {
            record_id: item.id,
            model_id: item.model,
            emotion,
            explanation,
        });
    }
    write_jsonl(&args.out, &out)?;
    if fallbacks > 0 {
        eprintln!("warning: {fallbacks} unparseable output(s) replaced by fallback predictions");
    }
    ctx.info(format!("parsed {} outputs", out.len()));
    Ok(())
}

fn list_ids(ids: &[String]) -> String {
    let shown = ids.iter().take(MAX_LISTED_IDS).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > MAX_LISTED_IDS {
        format!("{shown}, ... ({} more)", ids.len() - MAX_LISTED_IDS)
    } else {
        shown
    }
}

fn ensemble_config(ctx: &Ctx, args: &VoteArgs) -> Result<EnsembleConfig> {
    if let Some(PresetArg::HybridPaper) = args.preset {
        let lm = require(args.lm_model.clone(), "--lm-model for --preset hybrid-paper")?;
        let lvlm = require(args.lvlm_model.clone(), "--lvlm-model for --preset hybrid-paper")?;
        return Ok(EnsembleConfig::hybrid_paper(lm, lvlm));
    }
    let path = require(
        args.ensemble.clone().or_else(|| ctx.file.ensemble.clone()),
        "--ensemble or --preset",
    )?;
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    EnsembleConfig::from_json(&text).with_context(|| format!("in {}", path.display()))
}

fn cmd_vote(ctx: &Ctx, args: VoteArgs) -> Result<()> {
    let config = ensemble_config(ctx, &args)?;
    let mut sets: BTreeMap<String, Vec<Prediction>> = BTreeMap::new();
    for path in &args.predictions {
        for (_, p) in read_jsonl::<Prediction>(path)? {
            sets.entry(p.model_id.clone()).or_default().push(p);
        }
    }
    let combined = match ensemble::combine(&sets, &config) {
        Ok(c) => c,
        Err(EnsembleError::CoverageMismatch(ids)) => bail!(
            "voters cover different records; {} id(s) missing from at least one voter: {}",
            ids.len(),
            list_ids(&ids)
        ),
        Err(EnsembleError::SourceMissing { model, ids }) => bail!(
            "explanation source `{model}` is missing {} record(s): {}",
            ids.len(),
            list_ids(&ids)
        ),
        Err(e) => return Err(e.into()),
    };
    write_jsonl(&args.out, &combined)?;
    ctx.info(format!(
        "combined {} voter(s) into {} predictions as `{}`",
        config.voters.len(),
        combined.len(),
        config.output_model_id()
    ));
    Ok(())
}

fn cmd_score(ctx: &Ctx, args: ScoreArgs) -> Result<()> {
    let smoothing = args
        .smoothing
        .map(Smoothing::from)
        .or(ctx.file.smoothing()?)
        .unwrap_or_default();
    let created_at: DateTime<Utc> = DateTime::parse_from_rfc3339(&args.created_at)
        .map_err(|e| UsageError(format!("--created-at `{}`: {e}", args.created_at)))?
        .with_timezone(&Utc);
    let gold = load_dataset(&dataset_path(ctx, args.dataset, "--dataset")?)?;
    let predictions: Vec<Prediction> = read_jsonl(&args.predictions)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();

    let options = EvalOptions {
        smoothing,
        ..EvalOptions::default()
    };
    let report = match metrics::evaluate(&gold, &predictions, options) {
        Ok(r) => r,
        Err(metrics::MetricsError::MissingPredictions(ids)) => bail!(
            "missing predictions for {} record(s): {}",
            ids.len(),
            list_ids(&ids)
        ),
        Err(e) => return Err(e.into()),
    };

    let run_id = args.run_id.unwrap_or_else(|| args.label.clone());
    let mut meta = match args.recipe {
        Some(RecipeArg::Lm) => RunMetadata::lm_recipe(run_id.clone(), created_at),
        Some(RecipeArg::Lvlm) => RunMetadata::lvlm_recipe(run_id.clone(), created_at),
        None => RunMetadata::new(run_id.clone(), "", created_at),
    };
    if !args.description.is_empty() {
        meta.description = args.description;
    }
    let summary_line = report.summary_line();
    let bundle = ReportBundle {
        reports: vec![LabeledReport {
            label: args.label,
            run_id: Some(run_id),
            report,
        }],
        runs: vec![meta],
    };
    let table = report::comparison_table(&bundle.summaries())?;
    bundle.write(&args.out, &[("score", &table)])?;
    println!("{summary_line}");
    Ok(())
}

fn cmd_report(ctx: &Ctx, args: ReportArgs) -> Result<()> {
    let mut merged = ReportBundle::default();
    for path in &args.inputs {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let bundle =
            ReportBundle::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        merged.reports.extend(bundle.reports);
        merged.runs.extend(bundle.runs);
    }
    merged.validate()?;
    let rows = merged.summaries();
    let (name, table) = match args.kind {
        TableKind::Folds => ("folds", report::fold_table(&rows)?),
        TableKind::Comparison => ("comparison", report::comparison_table(&rows)?),
    };
    if let Some(dir) = &args.out {
        merged.write(dir, &[(name, &table)])?;
    }
    if !ctx.quiet || args.out.is_none() {
        let text = report::emit(&table, args.format.into())?;
        std::io::stdout().write_all(text.as_bytes())?;
    }
    Ok(())
}
