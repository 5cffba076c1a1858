//! The `qsup` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every command that
//! writes output also writes `<subcommand>.run.json` next to it with the
//! seed and the effective configuration.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use crate::augment::{
    generate_exemplars, simulate_answered_fraction, simulate_unanswered, AugmentMode, Exemplar,
    ImageRecord,
};
use crate::dataio::{
    load_dataset, load_features, load_model, load_vqa, read_jsonl, save_dataset, save_model,
    write_file, write_jsonl, write_run_snapshot, DatasetManifest, RunConfig, CONFIG_ENV,
};
use crate::eval::{
    bootstrap_ci, fuse_max, mean_average_precision, per_class_pr, vqa_accuracy,
    vqa_accuracy_consensus, AccuracyReport, MapReport, PrReport,
};
use crate::exec::Exec;
use crate::model::{
    predict, predict_multiple_choice, train, FeatureTable, LinearModel, PredictRequest,
    TrainReport,
};
use crate::qparse::{ExtractOptions, Extractor, ObjectVocabulary, Question, QuestionTypeTable};
use crate::vocab::{build_vocabulary, target_space, word_targets, Vocabulary, WordTargetMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qsup", version, about = "Supervision from visual questions")]
pub struct Cli {
    /// Use the data-parallel code paths where available.
    #[arg(long, global = true)]
    pub parallel: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract object labels from questions, one record per image.
    Extract(ExtractArgs),
    /// Generate training exemplars (newline-delimited JSON, ids only).
    Augment(AugmentArgs),
    /// Build the bag-of-words vocabulary of a dataset.
    Vocab(VocabArgs),
    /// Multi-label word targets per image.
    WordTargets(WordTargetArgs),
    /// Strip answers to simulate unanswered questions.
    Simulate(SimulateArgs),
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Answer the questions of a dataset with a trained model.
    Predict(PredictArgs),
    /// Evaluation reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Percentile bootstrap interval of a vector of per-example scores.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct TableArgs {
    /// Object vocabulary table (TOML); built-in when omitted.
    #[arg(long = "vocab", value_name = "FILE")]
    pub objects: Option<PathBuf>,
    /// Question-type table (TOML); built-in when omitted.
    #[arg(long = "types", value_name = "FILE")]
    pub types: Option<PathBuf>,
    /// Skip object words used as modifiers of a following noun.
    #[arg(long)]
    pub adjective_filter: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    /// Native dataset manifest, or VQA questions file with `--annotations`/`--vqa`.
    #[arg(long = "in", alias = "questions", alias = "dataset", value_name = "FILE")]
    pub input: PathBuf,
    /// Read `--in` as an official VQA questions file.
    #[arg(long)]
    pub vqa: bool,
    /// VQA annotation file (implies `--vqa`).
    #[arg(long, value_name = "FILE")]
    pub annotations: Option<PathBuf>,
}

impl DatasetArgs {
    fn load(&self) -> Result<DatasetManifest> {
        let m = if self.vqa || self.annotations.is_some() {
            load_vqa(&self.input, self.annotations.as_deref())?
        } else {
            load_dataset(&self.input)?
        };
        Ok(m)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub tables: TableArgs,
    /// One record per question instead of per image.
    #[arg(long)]
    pub per_question: bool,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// plain, powerset, concat-only or powerset-no-empty.
    #[arg(long, default_value = "powerset")]
    #[serde(serialize_with = "display")]
    pub mode: AugmentMode,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VocabArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct WordTargetArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// full, tfidf1024 or classes80.
    #[arg(long, default_value = "full")]
    #[serde(serialize_with = "display")]
    pub mode: WordTargetMode,
    /// Word vocabulary file; built from the dataset when omitted.
    #[arg(long = "words", value_name = "FILE")]
    pub words: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[command(flatten)]
    pub tables: TableArgs,
    /// Records `{image_id, indices}`; the label space goes to `<out>.space.txt`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[group(id = "how", required = true, multiple = false, args = ["keep", "fraction"])]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Answered questions kept per image.
    #[arg(long)]
    pub keep: Option<usize>,
    /// Fraction of images that keep their answers; the rest lose all.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// With `--fraction`: where to write the answer-free images.
    #[arg(long, value_name = "FILE", requires = "fraction")]
    pub out_unanswered: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Run config (TOML); defaults to the file named by QSUP_CONFIG.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Word vocabulary the model was trained with.
    #[arg(long = "words", value_name = "FILE")]
    pub words: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Pass the other questions of each image as extras.
    #[arg(long)]
    pub extras: bool,
    /// Also choose among each question's multiple choices.
    #[arg(long)]
    pub multiple_choice: bool,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Accuracy by answer type of a predictions file.
    Vqa(EvalVqaArgs),
    /// Precision/recall of extracted labels against ground-truth labels.
    Objects(EvalObjectsArgs),
    /// mAP of classifier scores, optionally fused with extracted labels.
    Map(EvalMapArgs),
    /// Evaluate the model of a run config on its test set.
    Run(EvalRunArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BootstrapOpts {
    #[arg(long, default_value_t = 0.999)]
    pub confidence: f64,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalVqaArgs {
    #[arg(long, value_name = "FILE")]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Score against human answers with min(matches / 3, 1).
    #[arg(long)]
    pub consensus: bool,
    /// Score the multiple-choice field of the predictions.
    #[arg(long)]
    pub multiple_choice: bool,
    #[command(flatten)]
    pub bootstrap: BootstrapOpts,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalObjectsArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub tables: TableArgs,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalMapArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Records `{image_id, scores: [80 floats]}`.
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    #[command(flatten)]
    pub tables: TableArgs,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalRunArgs {
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub bootstrap: BootstrapOpts,
}

#[derive(Debug, Args, Serialize)]
pub struct BootstrapArgs {
    /// One score in [0, 1] per line.
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    #[command(flatten)]
    pub opts: BootstrapOpts,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn out_dir_of(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn tables(args: &TableArgs) -> Result<(ObjectVocabulary, QuestionTypeTable)> {
    let objects = match &args.objects {
        Some(p) => ObjectVocabulary::load(p)?,
        None => ObjectVocabulary::builtin(),
    };
    let types = match &args.types {
        Some(p) => QuestionTypeTable::load(p)?,
        None => QuestionTypeTable::builtin(),
    };
    Ok((objects, types))
}

fn extractor<'a>(
    args: &TableArgs,
    objects: &'a ObjectVocabulary,
    types: &'a QuestionTypeTable,
) -> Extractor<'a> {
    Extractor::new(objects, types).with_options(ExtractOptions {
        adjective_filter: args.adjective_filter,
    })
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let exec = if cli.parallel { Exec::available() } else { Exec::Sequential };
    match cli.command {
        Command::Extract(a) => cmd_extract(&a),
        Command::Augment(a) => cmd_augment(&a),
        Command::Vocab(a) => cmd_vocab(&a),
        Command::WordTargets(a) => cmd_word_targets(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Train(a) => cmd_train(&a, exec),
        Command::Predict(a) => cmd_predict(&a, exec),
        Command::Eval(EvalCommand::Vqa(a)) => cmd_eval_vqa(&a, exec),
        Command::Eval(EvalCommand::Objects(a)) => cmd_eval_objects(&a),
        Command::Eval(EvalCommand::Map(a)) => cmd_eval_map(&a),
        Command::Eval(EvalCommand::Run(a)) => cmd_eval_run(&a, exec),
        Command::Bootstrap(a) => cmd_bootstrap(&a, exec),
    }
}

#[derive(Debug, Serialize)]
struct LabelRecord {
    image_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    question_id: Option<u64>,
    labels: Vec<String>,
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let manifest = a.data.load()?;
    let (objects, types) = tables(&a.tables)?;
    let ex = extractor(&a.tables, &objects, &types);
    let mut out = Vec::new();
    if a.per_question {
        for q in &manifest.questions {
            let set = ex.extract(q)?;
            out.push(LabelRecord {
                image_id: q.image_id,
                question_id: Some(q.id),
                labels: set.present.into_iter().collect(),
            });
        }
    } else {
        for (image_id, qs) in manifest.groups() {
            let set = ex.extract_multi(&qs)?;
            out.push(LabelRecord {
                image_id,
                question_id: None,
                labels: set.present.into_iter().collect(),
            });
        }
    }
    write_jsonl(&a.out, &out)?;
    write_run_snapshot(&out_dir_of(&a.out), "extract", None, a)?;
    Ok(())
}

fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    let manifest = a.data.load()?;
    let mut lines = Vec::new();
    let mut skipped = 0;
    for record in manifest.records() {
        if record.answered.is_empty() {
            skipped += 1;
            continue;
        }
        for ex in generate_exemplars(&record, a.mode)? {
            lines.push(ex.record());
        }
    }
    if skipped > 0 {
        warn!("{skipped} images without answered questions produced no exemplars");
    }
    info!("{} exemplars", lines.len());
    write_jsonl(&a.out, &lines)?;
    write_run_snapshot(&out_dir_of(&a.out), "augment", None, a)?;
    Ok(())
}

fn cmd_vocab(a: &VocabArgs) -> Result<()> {
    let manifest = a.data.load()?;
    let vocab = build_vocabulary(&manifest.questions, a.min_count)?;
    write_file(&a.out, vocab.to_text().as_bytes())?;
    write_run_snapshot(&out_dir_of(&a.out), "vocab", None, a)?;
    Ok(())
}

fn load_words(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Vocabulary::from_text(&text)?)
}

fn cmd_word_targets(a: &WordTargetArgs) -> Result<()> {
    let manifest = a.data.load()?;
    let vocab = match &a.words {
        Some(p) => load_words(p)?,
        None => build_vocabulary(&manifest.questions, a.min_count)?,
    };
    let (objects, types) = tables(&a.tables)?;
    let ex = extractor(&a.tables, &objects, &types);
    let groups = manifest.groups();
    let space = target_space(&groups, a.mode, &vocab, &ex)?;
    let targets = word_targets(&groups, a.mode, &vocab, &ex)?;
    write_jsonl(&a.out, targets.iter().map(|t| t.record()))?;
    let mut space_path = a.out.clone().into_os_string();
    space_path.push(".space.txt");
    let mut text = space.join("\n");
    text.push('\n');
    write_file(Path::new(&space_path), text.as_bytes())?;
    write_run_snapshot(&out_dir_of(&a.out), "word-targets", None, a)?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let manifest = a.data.load()?;
    let records = manifest.records();
    if let Some(keep) = a.keep {
        let sim = simulate_unanswered(&records, keep, a.seed);
        save_dataset(&a.out, &manifest.with_records(&sim))?;
    } else if let Some(fraction) = a.fraction {
        let (answered, stripped) = simulate_answered_fraction(&records, fraction, a.seed)?;
        save_dataset(&a.out, &manifest.with_records(&answered))?;
        match &a.out_unanswered {
            Some(p) => save_dataset(p, &manifest.with_records(&stripped))?,
            None => warn!("{} answer-free images not written (no --out-unanswered)", stripped.len()),
        }
    }
    write_run_snapshot(&out_dir_of(&a.out), "simulate", Some(a.seed), a)?;
    Ok(())
}

fn run_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    let path = match path.clone().or_else(RunConfig::default_path) {
        Some(p) => p,
        None => bail!("no run config: pass --config or set {CONFIG_ENV}"),
    };
    Ok(RunConfig::load(&path)?)
}

/// Everything `train` produces.
#[derive(Debug)]
pub struct TrainOutput {
    pub model: LinearModel,
    pub words: Vocabulary,
    pub report: TrainReport,
}

/// Build the vocabulary, generate exemplars and train as configured.
pub fn train_from_config(cfg: &RunConfig, exec: Exec) -> Result<TrainOutput> {
    let manifest = load_dataset(&cfg.paths.dataset)?;
    let features = load_features(&cfg.paths.features)?;
    let words = build_vocabulary(&manifest.questions, cfg.modes.vocab_min_count)?;
    let records = manifest.records();
    let exemplars = training_exemplars(&records, cfg.modes.augment)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.exec = exec;
    let trained = train(exemplars, &features, &words, &train_cfg)?;
    Ok(TrainOutput {
        model: trained.model,
        words,
        report: trained.report,
    })
}

/// Exemplars of every record that has an answered question.
pub fn training_exemplars(records: &[ImageRecord], mode: AugmentMode) -> Result<Vec<Exemplar>> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| !r.answered.is_empty()) {
        out.extend(generate_exemplars(r, mode)?);
    }
    Ok(out)
}

fn cmd_train(a: &TrainArgs, exec: Exec) -> Result<()> {
    let mut cfg = run_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(dir) = &a.out_dir {
        cfg.paths.output_dir = dir.clone();
    }
    let out = train_from_config(&cfg, exec)?;
    let dir = &cfg.paths.output_dir;
    save_model(dir.join("model.qsmd"), &out.model)?;
    write_file(&dir.join("vocab.txt"), out.words.to_text().as_bytes())?;
    let report = serde_json::to_string_pretty(&out.report)?;
    write_file(&dir.join("train.report.json"), format!("{report}\n").as_bytes())?;
    write_run_snapshot(dir, "train", Some(cfg.seed), &cfg)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PredictionRecord {
    pub question_id: u64,
    pub image_id: u64,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<String>,
}

/// Answer every question of `manifest`; with `extras`, each question gets
/// the other questions of its image as the extra set.
pub fn predict_manifest(
    model: &LinearModel,
    words: &Vocabulary,
    manifest: &DatasetManifest,
    features: &FeatureTable,
    extras: bool,
    multiple_choice: bool,
    exec: Exec,
) -> Result<Vec<PredictionRecord>> {
    let refs: HashMap<u64, u64> = manifest
        .images
        .iter()
        .map(|i| (i.image_id, i.feature_key()))
        .collect();
    let groups = manifest.groups();
    let mut jobs: Vec<(&Question, Vec<Question>)> = Vec::new();
    for (_, qs) in &groups {
        for q in qs {
            let others = if extras {
                qs.iter().filter(|o| o.id != q.id).cloned().collect()
            } else {
                Vec::new()
            };
            jobs.push((q, others));
        }
    }
    let results = exec.map(&jobs, |(q, others)| -> Result<PredictionRecord> {
        let key = refs[&q.image_id];
        let image = features
            .get(&key)
            .with_context(|| format!("no features for image {} (key {key})", q.image_id))?;
        let req = PredictRequest {
            image,
            target: q,
            extra: extras.then_some(others.as_slice()),
        };
        let p = predict(model, words, &req)?;
        let choice = match (&q.choices, multiple_choice) {
            (Some(c), true) if !c.is_empty() => Some(predict_multiple_choice(model, words, &req, c)?),
            _ => None,
        };
        Ok(PredictionRecord {
            question_id: q.id,
            image_id: q.image_id,
            answer: p.answer,
            choice,
        })
    });
    results.into_iter().collect()
}

fn cmd_predict(a: &PredictArgs, exec: Exec) -> Result<()> {
    let model = load_model(&a.model)?;
    let words = load_words(&a.words)?;
    let manifest = a.data.load()?;
    let features = load_features(&a.features)?;
    let preds = predict_manifest(&model, &words, &manifest, &features, a.extras, a.multiple_choice, exec)?;
    write_jsonl(&a.out, &preds)?;
    write_run_snapshot(&out_dir_of(&a.out), "predict", None, a)?;
    Ok(())
}

/// Score predictions against the dataset answers.
pub fn score_predictions(
    preds: &[PredictionRecord],
    manifest: &DatasetManifest,
    consensus: bool,
    multiple_choice: bool,
) -> Result<AccuracyReport> {
    let questions: HashMap<u64, &Question> = manifest.questions.iter().map(|q| (q.id, q)).collect();
    let mut exact = Vec::new();
    let mut human = Vec::new();
    for p in preds {
        let q = questions
            .get(&p.question_id)
            .with_context(|| format!("prediction for unknown question {}", p.question_id))?;
        let scorable = if consensus { !q.human_answers.is_empty() } else { q.answer.is_some() };
        if !scorable {
            continue;
        }
        let answer = if multiple_choice {
            p.choice
                .clone()
                .with_context(|| format!("question {} has no multiple-choice prediction", q.id))?
        } else {
            p.answer.clone()
        };
        if consensus {
            human.push((answer, q.human_answers.clone()));
        } else if let Some(truth) = &q.answer {
            exact.push((answer, truth.clone()));
        }
    }
    let report = if consensus {
        vqa_accuracy_consensus(&human)
    } else {
        vqa_accuracy(&exact)
    };
    report.context("no predictions with ground truth to score")
}

fn write_accuracy(dir: &Path, stem: &str, report: &AccuracyReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    write_file(&dir.join(format!("{stem}.json")), format!("{json}\n").as_bytes())?;
    write_file(&dir.join(format!("{stem}.csv")), report.to_csv().as_bytes())?;
    let mut text = format!("overall accuracy {:.4} over {} questions\n", report.overall, report.n);
    for (t, c) in &report.by_type {
        text.push_str(&format!("  {t:<7} {:.4} (n = {})\n", c.accuracy, c.n));
    }
    if let Some((lo, hi)) = report.interval {
        text.push_str(&format!("  bootstrap interval [{lo:.4}, {hi:.4}]\n"));
    }
    write_file(&dir.join(format!("{stem}.txt")), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn cmd_eval_vqa(a: &EvalVqaArgs, exec: Exec) -> Result<()> {
    let preds: Vec<PredictionRecord> = read_jsonl(&a.predictions)?;
    let manifest = a.data.load()?;
    let b = &a.bootstrap;
    let report = score_predictions(&preds, &manifest, a.consensus, a.multiple_choice)?
        .with_interval(b.confidence, b.resamples, b.seed, exec)?;
    write_accuracy(&a.out_dir, "accuracy", &report)?;
    write_run_snapshot(&a.out_dir, "eval", Some(b.seed), a)?;
    Ok(())
}

fn gt_labels(manifest: &DatasetManifest, objects: &ObjectVocabulary) -> Result<Vec<Vec<u8>>> {
    manifest
        .images
        .iter()
        .map(|img| {
            let names = img
                .gt_labels
                .as_ref()
                .with_context(|| format!("image {} has no gt_labels", img.image_id))?;
            Ok(objects.label_set_from_names(names)?.vector)
        })
        .collect()
}

fn cmd_eval_objects(a: &EvalObjectsArgs) -> Result<()> {
    let manifest = a.data.load()?;
    let (objects, types) = tables(&a.tables)?;
    let ex = extractor(&a.tables, &objects, &types);
    let truth = gt_labels(&manifest, &objects)?;
    let mut predicted = Vec::new();
    let mut truth_sets = Vec::new();
    for ((_, qs), t) in manifest.groups().iter().zip(&truth) {
        predicted.push(ex.extract_multi(qs)?);
        truth_sets.push(objects.label_set(t.iter().enumerate().filter(|(_, &b)| b != 0).map(|(i, _)| i)));
    }
    let report: PrReport = per_class_pr(&predicted, &truth_sets, &objects)?;
    write_file(&a.out_dir.join("objects.csv"), report.to_csv().as_bytes())?;
    let text = format!(
        "mean precision {:.4}, mean recall {:.4} over {} images\n",
        report.mean_precision,
        report.mean_recall,
        predicted.len()
    );
    write_file(&a.out_dir.join("objects.txt"), text.as_bytes())?;
    print!("{text}");
    write_run_snapshot(&a.out_dir, "eval", None, a)?;
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct ScoreRecord {
    image_id: u64,
    scores: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct MapSummary {
    classifier: MapReport,
    fused: MapReport,
}

fn cmd_eval_map(a: &EvalMapArgs) -> Result<()> {
    let manifest = a.data.load()?;
    let (objects, types) = tables(&a.tables)?;
    let ex = extractor(&a.tables, &objects, &types);
    let truth = gt_labels(&manifest, &objects)?;
    let scores: HashMap<u64, Vec<f64>> = read_jsonl::<ScoreRecord>(&a.scores)?
        .into_iter()
        .map(|r| (r.image_id, r.scores))
        .collect();
    let mut ids = Vec::new();
    let mut xc = Vec::new();
    let mut fused = Vec::new();
    for (image_id, qs) in manifest.groups() {
        let s = scores
            .get(&image_id)
            .with_context(|| format!("no classifier scores for image {image_id}"))?;
        let xo = ex.extract_multi(&qs)?;
        fused.push(fuse_max(&xo.vector, s)?);
        xc.push(s.clone());
        ids.push(image_id);
    }
    let summary = MapSummary {
        classifier: mean_average_precision(&ids, &xc, &truth)?,
        fused: mean_average_precision(&ids, &fused, &truth)?,
    };
    let fmt = |m: Option<f64>| m.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let text = format!(
        "mAP classifier {}, fused {}\n",
        fmt(summary.classifier.map),
        fmt(summary.fused.map)
    );
    let mut csv = String::from("class,ap_classifier,ap_fused\n");
    for (c, (x, f)) in summary.classifier.per_class.iter().zip(&summary.fused.per_class).enumerate() {
        let cell = |v: &Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        csv.push_str(&format!("{},{},{}\n", objects.name(c), cell(x), cell(f)));
    }
    write_file(&a.out_dir.join("map.csv"), csv.as_bytes())?;
    write_file(&a.out_dir.join("map.txt"), text.as_bytes())?;
    let json = serde_json::to_string_pretty(&summary)?;
    write_file(&a.out_dir.join("map.json"), format!("{json}\n").as_bytes())?;
    print!("{text}");
    write_run_snapshot(&a.out_dir, "eval", None, a)?;
    Ok(())
}

fn cmd_eval_run(a: &EvalRunArgs, exec: Exec) -> Result<()> {
    let cfg = run_config(&a.config)?;
    let (Some(test), Some(test_features)) = (&cfg.paths.test_dataset, &cfg.paths.test_features) else {
        bail!("run config has no test_dataset/test_features");
    };
    let dir = &cfg.paths.output_dir;
    let model = load_model(dir.join("model.qsmd"))?;
    let words = load_words(&dir.join("vocab.txt"))?;
    let manifest = load_dataset(test)?;
    let features = load_features(test_features)?;
    let has_choices = manifest.questions.iter().any(|q| q.choices.is_some());
    let preds = predict_manifest(
        &model,
        &words,
        &manifest,
        &features,
        cfg.modes.test_extras,
        has_choices,
        exec,
    )?;
    write_jsonl(&dir.join("predictions.jsonl"), &preds)?;
    let b = &a.bootstrap;
    let open = score_predictions(&preds, &manifest, false, false)?
        .with_interval(b.confidence, b.resamples, b.seed, exec)?;
    write_accuracy(dir, "eval.open", &open)?;
    if has_choices {
        let mc = score_predictions(&preds, &manifest, false, true)?
            .with_interval(b.confidence, b.resamples, b.seed, exec)?;
        write_accuracy(dir, "eval.mc", &mc)?;
    }
    #[derive(Serialize)]
    struct EvalSnapshot<'a> {
        run: &'a RunConfig,
        bootstrap: &'a BootstrapOpts,
    }
    write_run_snapshot(dir, "eval", Some(cfg.seed), EvalSnapshot { run: &cfg, bootstrap: b })?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Interval {
    mean: f64,
    lower: f64,
    upper: f64,
    n: usize,
    confidence: f64,
    resamples: usize,
    seed: u64,
}

fn cmd_bootstrap(a: &BootstrapArgs, exec: Exec) -> Result<()> {
    let text = std::fs::read_to_string(&a.scores)
        .with_context(|| format!("reading {}", a.scores.display()))?;
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .with_context(|| format!("{}:{}: not a number", a.scores.display(), i + 1))?;
        if !(0.0..=1.0).contains(&v) {
            bail!("{}:{}: score {v} outside [0, 1]", a.scores.display(), i + 1);
        }
        scores.push(v);
    }
    let o = &a.opts;
    let (lower, upper) = bootstrap_ci(&scores, o.confidence, o.resamples, o.seed, exec)?;
    let interval = Interval {
        mean: scores.iter().sum::<f64>() / scores.len() as f64,
        lower,
        upper,
        n: scores.len(),
        confidence: o.confidence,
        resamples: o.resamples,
        seed: o.seed,
    };
    let json = serde_json::to_string_pretty(&interval)?;
    write_file(&a.out, format!("{json}\n").as_bytes())?;
    println!("{json}");
    write_run_snapshot(&out_dir_of(&a.out), "bootstrap", Some(o.seed), a)?;
    Ok(())
}
