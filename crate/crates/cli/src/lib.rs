//! `spoter-vsct` subcommands. Every command returns a process exit code:
//! 0 on success, 1 on a runtime failure, 2 on a usage, config or input
//! data error.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spoter_vsct::gradcheck::{run_suite, SUITE_OPS};
use spoter_vsct::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelError, Spoter};
use spoter_vsct::pose_data::{
    dataset_stats, load_dataset, load_dataset_with_vocabulary, map_labels, parse_mapping_tsv, save_dataset,
    ClassMapping, DataError, Dataset, GlossVocabulary, LandmarkLayout,
};
use spoter_vsct::preprocess::subsample_frames;
use spoter_vsct::rng::{stream_rng, Stream};
use spoter_vsct::run_config::RunConfig;
use spoter_vsct::synthetic::{synthetic_dataset, SyntheticSpec};
use spoter_vsct::training::{evaluate, EpochStats, TrainError, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Failure split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input data (exit 2).
    Usage(String),
    /// Anything that went wrong after validation (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_)
            | TrainError::EmptyData
            | TrainError::EmptyClass { .. }
            | TrainError::Model(ModelError::SequenceTooLong { .. }) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "spoter-vsct", version, about = "Pose-based sign recognition: train, evaluate and inspect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Relabel a dataset through a gloss mapping file.
    Map(MapArgs),
    /// Finite-difference gradient checks.
    Selftest(SelftestArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long)]
    pub val_data: Option<PathBuf>,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_normalization: bool,
    #[arg(long)]
    pub no_augmentation: bool,
    #[arg(long)]
    pub balanced_sampling: bool,
    #[arg(long)]
    pub vsct: bool,
    #[arg(long)]
    pub vsct_gamma: Option<f64>,
    #[arg(long)]
    pub vsct_tau: Option<f64>,
    /// restricted | full
    #[arg(long)]
    pub vsct_tau_base: Option<String>,
    /// faithful | standard
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub subsample_frames: Option<usize>,
    /// Extra `key=value` override, applied last; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// No per-epoch lines or summary on stdout; the run directory is unchanged.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Two-column TSV: data gloss, model gloss.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Read the mapping columns as model gloss, data gloss.
    #[arg(long, requires = "mapping")]
    pub reverse_mapping: bool,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 5])]
    pub k: Vec<usize>,
    #[arg(long)]
    pub subsample_frames: Option<usize>,
    /// Print one JSON object instead of tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct MapArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Two-column TSV: source gloss, target gloss.
    #[arg(long)]
    pub mapping: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop sequences without a mapping instead of failing.
    #[arg(long)]
    pub drop_unmapped: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SelftestArgs {
    /// Override every threshold.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Run a single check.
    #[arg(long)]
    pub op: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 3)]
    pub per_class: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Per-point noise amplitude in pixels.
    #[arg(long, default_value_t = 2.0)]
    pub noise: f64,
    /// Class ids that get `--hard-noise` instead.
    #[arg(long, value_delimiter = ',')]
    pub hard: Vec<usize>,
    #[arg(long, default_value_t = 12.0)]
    pub hard_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Stats(a) => cmd_stats(&a),
        Command::Map(a) => cmd_map(&a),
        Command::Selftest(a) => cmd_selftest(&a),
        Command::Synth(a) => cmd_synth(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn require_file(what: &str, path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(args: &TrainArgs) -> CliResult<RunConfig> {
    let usage = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        require_file("config file", path)?;
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    let t = &mut cfg.train;
    if let Some(s) = args.seed {
        t.seed = s;
    }
    if let Some(e) = args.epochs {
        t.epochs = e;
    }
    if let Some(lr) = args.lr {
        t.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        t.batch_size = b;
    }
    if args.no_normalization {
        t.use_normalization = false;
    }
    if args.no_augmentation {
        t.use_augmentation = false;
    }
    if args.balanced_sampling {
        t.use_balanced_sampling = true;
    }
    if args.vsct {
        t.use_vsct = true;
    }
    if let Some(g) = args.vsct_gamma {
        cfg.vsct.gamma = g;
    }
    if let Some(tau) = args.vsct_tau {
        cfg.vsct.tau = tau;
    }
    if let Some(b) = &args.vsct_tau_base {
        cfg.set("vsct_tau_base", b).map_err(|e| usage(&e))?;
    }
    if let Some(i) = &args.init {
        cfg.set("init", i).map_err(|e| usage(&e))?;
    }
    if let Some(n) = args.subsample_frames {
        cfg.subsample_frames = Some(n);
    }
    if let Some(p) = &args.train_data {
        cfg.train_data = Some(p.clone());
    }
    if let Some(p) = &args.val_data {
        cfg.val_data = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.out = Some(p.clone());
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| usage(&e))?;
    }

    let vsct_flags = args.vsct_gamma.is_some() || args.vsct_tau.is_some() || args.vsct_tau_base.is_some();
    if vsct_flags && !cfg.train.use_vsct {
        return Err(CliError::Usage("--vsct-* options require --vsct (or use_vsct = true)".into()));
    }
    cfg.validate().map_err(|e| usage(&e))?;
    Ok(cfg)
}

fn subsample_all(d: Dataset, max: Option<usize>) -> Dataset {
    match max {
        None => d,
        Some(n) => Dataset {
            sequences: d.sequences.iter().map(|s| subsample_frames(s, n)).collect(),
            ..d
        },
    }
}

/// What a finished training run reports.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub history: Vec<EpochStats>,
}

fn write_synced(path: &Path, contents: &[u8]) -> CliResult {
    let mut f = File::create(path).map_err(runtime(&path.display().to_string()))?;
    f.write_all(contents)
        .and_then(|_| f.sync_all())
        .map_err(runtime(&path.display().to_string()))
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainOutcome> {
    let cfg = resolve_config(args)?;
    let train_path = cfg
        .train_data
        .clone()
        .ok_or_else(|| CliError::Usage("no training data (--train-data or train_data)".into()))?;
    let run_dir = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no run directory (--out or out)".into()))?;
    require_file("training data", &train_path)?;
    if let Some(v) = &cfg.val_data {
        require_file("validation data", v)?;
    }
    if cfg.train.use_vsct && cfg.val_data.is_none() {
        eprintln!("warning: VSCT without validation data; per-class statistics come from the training split");
    }

    let layout = LandmarkLayout::STANDARD;
    let train = subsample_all(load_dataset(&train_path, &layout)?, cfg.subsample_frames);
    if train.is_empty() {
        return Err(CliError::Usage(format!("{}: no sequences", train_path.display())));
    }
    let val = match &cfg.val_data {
        Some(p) => Some(subsample_all(
            load_dataset_with_vocabulary(p, &layout, &train.vocabulary)?,
            cfg.subsample_frames,
        )),
        None => None,
    };

    let model_cfg = cfg.model.spoter_config(train.num_classes());
    let mut init_rng = stream_rng(cfg.train.seed, Stream::Init, 0, 0);
    let model = Spoter::init(model_cfg, cfg.model.init, &mut init_rng).map_err(|e| CliError::Usage(e.to_string()))?;
    let vsct = cfg.train.use_vsct.then(|| cfg.vsct.clone());
    let mut trainer = Trainer::new(model, &train, val.as_ref(), cfg.train.clone(), vsct)?;

    fs::create_dir_all(&run_dir).map_err(runtime(&run_dir.display().to_string()))?;
    write_synced(&run_dir.join("config.resolved"), cfg.to_text().as_bytes())?;
    let metrics_path = run_dir.join("metrics.jsonl");
    let mut metrics = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&metrics_path)
        .map_err(runtime(&metrics_path.display().to_string()))?;

    let started = Instant::now();
    let mut history = Vec::with_capacity(cfg.train.epochs);
    for _ in 0..cfg.train.epochs {
        let stats = trainer.run_epoch()?;
        let line = serde_json::to_string(&stats).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(metrics, "{line}")
            .and_then(|_| metrics.sync_data())
            .map_err(runtime(&metrics_path.display().to_string()))?;
        if !args.quiet {
            let val = stats.val_top1.map_or(String::new(), |v| format!(" val_top1 {v:.4}"));
            println!(
                "epoch {:>4}  loss {:.6}  train_top1 {:.4}{val}  ({} ms)",
                stats.epoch, stats.loss, stats.train_top1, stats.elapsed_ms
            );
        }
        history.push(stats);
    }

    let mut checkpoint = Checkpoint::new(trainer.into_model());
    checkpoint.vocabulary = Some(train.vocabulary.glosses().to_vec());
    checkpoint.normalize_inputs = cfg.train.use_normalization;
    save_checkpoint(&checkpoint, run_dir.join("checkpoint.sptr")).map_err(|e| CliError::Runtime(e.to_string()))?;

    let last = history.last().expect("epochs >= 1");
    let best_val = history
        .iter()
        .filter_map(|s| s.val_top1.map(|v| (s.epoch, v)))
        .fold(None, |best: Option<(usize, f64)>, (e, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((e, v)),
        });
    let summary = json!({
        "epochs": history.len(),
        "num_classes": train.num_classes(),
        "train_sequences": train.len(),
        "val_sequences": val.as_ref().map(Dataset::len),
        "param_count": checkpoint.model.config().param_count(),
        "final_loss": last.loss,
        "final_train_top1": last.train_top1,
        "final_train_top5": last.train_top5,
        "final_val_top1": last.val_top1,
        "final_val_top5": last.val_top5,
        "best_val_top1": best_val.map(|(_, v)| v),
        "best_val_epoch": best_val.map(|(e, _)| e),
        "total_updates": history.iter().map(|s| s.main_updates + s.vsct_updates).sum::<usize>(),
        "elapsed_s": started.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_synced(&run_dir.join("summary.json"), format!("{text}\n").as_bytes())?;
    if !args.quiet {
        println!("{text}");
    }
    Ok(TrainOutcome { run_dir, history })
}

/// Loads `path` with labels expressed in the model's vocabulary.
fn eval_dataset(args: &EvalArgs, model_vocab: Option<&GlossVocabulary>, classes: usize) -> CliResult<Dataset> {
    let layout = LandmarkLayout::STANDARD;
    let data = match (&args.mapping, model_vocab) {
        (Some(mapping), Some(mv)) => {
            require_file("mapping", mapping)?;
            let text =
                fs::read_to_string(mapping).map_err(|e| CliError::Usage(format!("{}: {e}", mapping.display())))?;
            let mut pairs = parse_mapping_tsv(&text)?;
            if args.reverse_mapping {
                pairs = pairs.into_iter().map(|(a, b)| (b, a)).collect();
            }
            let raw = load_dataset(&args.data, &layout)?;
            let m = ClassMapping::from_gloss_pairs(&pairs, &raw.vocabulary, Some(mv))?;
            let mapped = map_labels(&raw, &m, true)?;
            let dropped = raw.len() - mapped.len();
            if dropped > 0 {
                eprintln!("warning: {dropped} of {} sequences have no mapping and were dropped", raw.len());
            }
            mapped
        }
        (Some(_), None) => {
            return Err(CliError::Usage("checkpoint has no vocabulary; a mapping cannot be applied".into()))
        }
        (None, Some(mv)) => load_dataset_with_vocabulary(&args.data, &layout, mv).map_err(|e| match e {
            DataError::UnknownGloss { .. } => CliError::Usage(format!("vocabulary mismatch: {e}; pass --mapping")),
            e => e.into(),
        })?,
        (None, None) => {
            let d = load_dataset(&args.data, &layout)?;
            if d.num_classes() != classes {
                return Err(CliError::Usage(format!(
                    "vocabulary mismatch: data has {} classes, model has {classes}",
                    d.num_classes()
                )));
            }
            d
        }
    };
    if data.is_empty() {
        return Err(CliError::Usage(format!("{}: no sequences to evaluate", args.data.display())));
    }
    Ok(data)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<spoter_vsct::training::Evaluation> {
    require_file("checkpoint", &args.model)?;
    require_file("data", &args.data)?;
    if args.k.is_empty() || args.k.contains(&0) {
        return Err(CliError::Usage("--k values must be >= 1".into()));
    }
    let checkpoint = load_checkpoint(&args.model).map_err(|e| CliError::Usage(e.to_string()))?;
    let classes = checkpoint.model.config().num_classes;
    let model_vocab = match &checkpoint.vocabulary {
        Some(v) => Some(GlossVocabulary::new(v.iter()).map_err(|e| CliError::Usage(format!("checkpoint: {e}")))?),
        None => None,
    };
    let data = subsample_all(eval_dataset(args, model_vocab.as_ref(), classes)?, args.subsample_frames);
    let eval = evaluate(&checkpoint.model, &data, &args.k, checkpoint.normalize_inputs)?;

    let gloss = |c: usize| data.vocabulary.gloss(c).unwrap_or("?").to_owned();
    if args.json {
        let per_class: Vec<_> = eval
            .per_class
            .iter()
            .map(|(c, a)| {
                let n = eval.per_class.counts(c).unwrap_or_default();
                json!({"class": c, "gloss": gloss(c), "correct": n.correct, "total": n.total, "accuracy": a})
            })
            .collect();
        let top: serde_json::Map<_, _> = eval.accuracy.iter().map(|(k, v)| (format!("top{k}"), json!(v))).collect();
        println!("{}", json!({"samples": eval.samples, "accuracy": top, "per_class": per_class}));
    } else {
        println!("{} sequences", eval.samples);
        for (k, v) in &eval.accuracy {
            println!("top-{k:<3} {v:.4}");
        }
        println!();
        println!("{:>5}  {:<24} {:>7} {:>7} {:>8}", "class", "gloss", "correct", "total", "top-1");
        for (c, a) in eval.per_class.iter() {
            let n = eval.per_class.counts(c).unwrap_or_default();
            println!("{c:>5}  {:<24} {:>7} {:>7} {a:>8.4}", gloss(c), n.correct, n.total);
        }
    }
    Ok(eval)
}

pub fn cmd_stats(args: &StatsArgs) -> CliResult {
    require_file("data", &args.data)?;
    let d = load_dataset(&args.data, &LandmarkLayout::STANDARD)?;
    if d.is_empty() {
        return Err(CliError::Usage(format!("{}: no sequences", args.data.display())));
    }
    let s = dataset_stats(&d);
    if args.json {
        println!("{}", serde_json::to_string(&s).map_err(|e| CliError::Runtime(e.to_string()))?);
        return Ok(());
    }
    println!(
        "{} sequences / {} classes / {} signers",
        s.instance_count, s.class_count, s.signer_count
    );
    println!("mean repetitions per class: {:.2}", s.mean_repetitions);
    println!("repetitions  classes");
    for (reps, classes) in &s.repetition_histogram {
        println!("{reps:>11}  {classes}");
    }
    Ok(())
}

pub fn cmd_map(args: &MapArgs) -> CliResult {
    require_file("data", &args.data)?;
    require_file("mapping", &args.mapping)?;
    let d = load_dataset(&args.data, &LandmarkLayout::STANDARD)?;
    let text =
        fs::read_to_string(&args.mapping).map_err(|e| CliError::Usage(format!("{}: {e}", args.mapping.display())))?;
    let pairs = parse_mapping_tsv(&text)?;
    let m = ClassMapping::from_gloss_pairs(&pairs, &d.vocabulary, None)?;
    let out = map_labels(&d, &m, args.drop_unmapped)?;
    save_dataset(&out, &args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "{} of {} sequences written to {} ({} classes)",
        out.len(),
        d.len(),
        args.out.display(),
        out.num_classes()
    );
    Ok(())
}

pub fn cmd_selftest(args: &SelftestArgs) -> CliResult {
    if let Some(op) = &args.op {
        if !SUITE_OPS.contains(&op.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown op {op:?}; expected one of {}",
                SUITE_OPS.join(", ")
            )));
        }
    }
    if let Some(t) = args.tol {
        if !(t > 0.0) {
            return Err(CliError::Usage(format!("--tol must be > 0, got {t}")));
        }
    }
    let reports = run_suite(args.op.as_deref(), args.tol).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<14} {:.3e}  (< {:.0e})  {verdict}", r.op, r.max_relative_error, r.tolerance);
        if !r.passed() {
            failed.push(r.op);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("gradient check failed: {}", failed.join(", "))))
    }
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult {
    if args.classes == 0 || args.per_class == 0 || args.frames == 0 {
        return Err(CliError::Usage("--classes, --per-class and --frames must be >= 1".into()));
    }
    if let Some(&h) = args.hard.iter().find(|&&h| h >= args.classes) {
        return Err(CliError::Usage(format!("hard class {h} outside 0..{}", args.classes)));
    }
    let spec = SyntheticSpec {
        classes: args.classes,
        per_class: args.per_class,
        frames: args.frames,
        noise_px: args.noise,
        hard_classes: args.hard.clone(),
        hard_noise_px: args.hard_noise,
        seed: args.seed,
    };
    let d = synthetic_dataset(&spec);
    save_dataset(&d, &args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{} sequences written to {}", d.len(), args.out.display());
    Ok(())
}
