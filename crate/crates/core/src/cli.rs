//! The `kgesub` command line.
//!
//! Every command reads an optional TOML config and lets flags override it.
//! Errors map to exit codes 1 (usage or config), 2 (data) and 3 (numerical
//! divergence).

use std::ffi::OsString;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{singleton_rows, singleton_tsv, weights_report, weights_report_tsv};
use crate::config::{create_run_dir, ExperimentConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_runs, evaluate, AggregateReport, Split};
use crate::models::{init_params, ModelKind, ModelParams};
use crate::submodel::{
    build_weights, pretrain_submodel, score_training_triples, select_submodel, SelectionLedger,
    SubmodelSubsampling,
};
use crate::subsampling::{QueryMass, SubModelScores, SubsamplingMethod, SubsamplingSource, WeightTable};
use crate::training::{resume, TrainState};

#[derive(Debug, Parser)]
#[command(name = "kgesub", version, about = "KGE training with count-based, model-based and mixed subsampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build weights and train a model into a new run directory.
    Train(TrainArgs),
    /// Filtered link-prediction metrics of one or more checkpoints.
    Evaluate(EvaluateArgs),
    /// Write a weight table.
    BuildWeights(BuildWeightsArgs),
    /// Train a sub-model with `none` or count-based `base` subsampling.
    PretrainSubmodel(PretrainArgs),
    /// Score every training example with a sub-model.
    ScoreTriples(ScoreArgs),
    /// Appearance probabilities of the rarest queries under two weight tables.
    WeightsReport(WeightsReportArgs),
    /// Entity and relation frequencies of queries seen once.
    SingletonStats(SingletonArgs),
    /// Two-stage search over sub-models, alpha and lambda.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (train.txt, valid.txt, test.txt).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct WeightArgs {
    /// `none`, `cbs`, `mbs` or `mix`.
    #[arg(long)]
    pub subsampling: Option<String>,
    /// `base`, `freq` or `uniq`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub submodel_scores: Option<PathBuf>,
    /// Sum model-based query mass over every candidate instead of the
    /// observed answers (needs --submodel-checkpoint).
    #[arg(long)]
    pub all_candidates: bool,
    #[arg(long)]
    pub submodel_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub nu: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub adversarial_beta: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub valid_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Use a prebuilt weight table instead of building one.
    #[arg(long, conflicts_with = "subsampling")]
    pub weights_file: Option<PathBuf>,
    /// Parent directory of the timestamped run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exact run directory (created if missing) instead of a timestamped one.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Continue from a training checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model or training checkpoint; repeat to aggregate over seeds.
    #[arg(long, required = true, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Directory for `report.tsv` and per-checkpoint rank dumps.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildWeightsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// `none` or `base`.
    #[arg(long)]
    pub submodel_subsampling: Option<SubmodelSubsampling>,
    /// Checkpoint path; defaults to `<out>/<submodel id>.bin`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Provenance id; defaults to the checkpoint file stem.
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Args)]
pub struct WeightsReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub cbs: PathBuf,
    #[arg(long)]
    pub mbs: PathBuf,
    #[arg(short, long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SingletonArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sub-model score files, one per candidate, in preference order.
    #[arg(long = "submodel-scores", required = true, num_args = 1..)]
    pub submodel_scores: Vec<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// Selection ledger; existing entries are reused.
    #[arg(long)]
    pub ledger: PathBuf,
    /// Grid points trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Where to write the selected configuration.
    #[arg(long)]
    pub best_config: PathBuf,
}

fn load_config(args: &DataArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &args.data {
        cfg.data.dir = d.clone();
    }
    if let Some(s) = args.smoothing {
        cfg.data.smoothing = s;
    }
    Ok(cfg)
}

fn apply_weight_args(cfg: &mut ExperimentConfig, w: &WeightArgs) -> Result<()> {
    let s = &mut cfg.subsampling;
    if let Some(src) = &w.subsampling {
        if src.eq_ignore_ascii_case("none") {
            s.method = SubsamplingMethod::None;
        } else {
            s.source = src.parse::<SubsamplingSource>()?;
            if s.method == SubsamplingMethod::None && w.method.is_none() {
                s.method = SubsamplingMethod::Base;
            }
        }
    }
    if let Some(m) = &w.method {
        s.method = m.parse()?;
    }
    if let Some(a) = w.alpha {
        s.alpha = a;
    }
    if let Some(l) = w.lambda {
        s.lambda = l;
    }
    if let Some(p) = &w.submodel_scores {
        s.submodel_scores = Some(p.clone());
    }
    if let Some(p) = &w.submodel_checkpoint {
        s.submodel_checkpoint = Some(p.clone());
    }
    if w.all_candidates {
        s.query_mass = QueryMass::AllCandidates;
    }
    Ok(())
}

fn apply_model_args(cfg: &mut ExperimentConfig, m: &ModelArgs) {
    if let Some(k) = m.model {
        cfg.model.kind = k;
    }
    if let Some(d) = m.dim {
        cfg.model.dim = d;
    }
    if let Some(g) = m.gamma {
        cfg.model.gamma = g;
    }
    let t = &mut cfg.train;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = m.$flag { t.$field = v; })*};
    }
    set!(steps => steps, seed => seed, batch_size => batch_size, nu => nu, lr => learning_rate,
         adversarial_beta => adversarial_beta, workers => workers, valid_every => valid_every);
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    Dataset::load(&cfg.data.resolved_dir())
}

/// Loads a bare model checkpoint or the parameters of a training checkpoint.
pub fn load_params(path: &Path) -> Result<ModelParams> {
    let mut magic = [0u8; 8];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map_err(|e| Error::io(path, e))?;
    if &magic == b"KGETRAIN" {
        Ok(TrainState::load(path)?.params)
    } else {
        ModelParams::load(path)
    }
}

/// Weight table described by the config's `[subsampling]` section.
pub fn weights_from_config(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<WeightTable> {
    let spec = cfg.subsampling.spec();
    let needs_scores = spec.method != SubsamplingMethod::None && spec.source != SubsamplingSource::Cbs;
    let scores = match (&cfg.subsampling.submodel_scores, needs_scores) {
        (Some(p), true) => Some(SubModelScores::read(p)?),
        _ => None,
    };
    let submodel = match (&cfg.subsampling.submodel_checkpoint, spec.query_mass) {
        (Some(p), QueryMass::AllCandidates) if needs_scores => Some(load_params(p)?),
        _ => None,
    };
    build_weights(dataset, cfg.data.smoothing, &spec, scores.as_ref(), submodel.as_ref())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Result of `train`: where the artifacts went.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub valid_mrr: Option<f64>,
}

/// Runs the `train` command.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    let mut cfg = load_config(&args.data)?;
    apply_model_args(&mut cfg, &args.model);
    apply_weight_args(&mut cfg, &args.weights)?;
    if let Some(o) = &args.out {
        cfg.output.root = o.clone();
    }
    cfg.validate()?;
    let dataset = load_dataset(&cfg)?;
    let weights = match &args.weights_file {
        Some(p) => WeightTable::read(p)?,
        None => weights_from_config(&cfg, &dataset)?,
    };
    let state = match &args.resume {
        Some(p) => TrainState::load(p)?,
        None => TrainState::new(
            init_params(&cfg.model, dataset.num_entities(), dataset.num_relations(), cfg.train.seed)?,
            &cfg.train,
        ),
    };
    if state.params.config != cfg.model {
        return Err(Error::Config("checkpoint model settings differ from config".into()));
    }
    let run_dir = match &args.run_dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            d.clone()
        }
        None => create_run_dir(&cfg.output.root, "train")?,
    };
    write_text(&run_dir.join("config.toml"), &cfg.to_toml()?)?;
    weights.write(&run_dir.join("weights.tsv"))?;

    let mut cb = |_: usize, p: &ModelParams| evaluate(p, &dataset, Split::Valid).map(|r| r.mrr);
    let eval: Option<&mut crate::training::EvalCallback<'_>> = if dataset.valid.is_empty() { None } else { Some(&mut cb) };
    let (state, log) = resume(&dataset, &weights, state, &cfg.train, eval)?;

    let checkpoint = run_dir.join("checkpoint.bin");
    state.save(&checkpoint)?;
    log.write(&run_dir.join("train_log.tsv"))?;
    let valid_mrr = if dataset.valid.is_empty() {
        None
    } else {
        let r = evaluate(&state.params, &dataset, Split::Valid)?;
        write_text(&run_dir.join("valid_report.tsv"), &AggregateReport::from(&r).to_tsv())?;
        Some(r.mrr)
    };
    let manifest = format!(
        "created\t{}\ndata\t{}\nsteps\t{}\nseed\t{}\nweights\t{} {}\nfiles\tconfig.toml weights.tsv checkpoint.bin train_log.tsv{}\n",
        chrono::Local::now().to_rfc3339(),
        cfg.data.resolved_dir().display(),
        state.step,
        cfg.train.seed,
        weights.provenance.source,
        weights.provenance.method,
        if valid_mrr.is_some() { " valid_report.tsv" } else { "" },
    );
    write_text(&run_dir.join("manifest.tsv"), &manifest)?;
    Ok(TrainOutcome {
        run_dir,
        checkpoint,
        valid_mrr,
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<AggregateReport> {
    let cfg = load_config(&args.data)?;
    let dataset = load_dataset(&cfg)?;
    let mut reports = Vec::new();
    for (i, c) in args.checkpoint.iter().enumerate() {
        let r = evaluate(&load_params(c)?, &dataset, args.split)?;
        if let Some(dir) = &args.out {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            r.write_ranks(&dir.join(format!("ranks-{i}.tsv")))?;
        }
        reports.push(r);
    }
    let agg = aggregate_runs(&reports)?;
    if let Some(dir) = &args.out {
        write_text(&dir.join("report.tsv"), &agg.to_tsv())?;
    }
    Ok(agg)
}

pub fn cmd_build_weights(args: &BuildWeightsArgs) -> Result<WeightTable> {
    let mut cfg = load_config(&args.data)?;
    apply_weight_args(&mut cfg, &args.weights)?;
    cfg.validate()?;
    let dataset = load_dataset(&cfg)?;
    let w = weights_from_config(&cfg, &dataset)?;
    w.write(&args.output)?;
    Ok(w)
}

/// Returns the checkpoint path and sub-model id.
pub fn cmd_pretrain_submodel(args: &PretrainArgs) -> Result<(PathBuf, String)> {
    let mut cfg = load_config(&args.data)?;
    apply_model_args(&mut cfg, &args.model);
    if let Some(s) = args.submodel_subsampling {
        cfg.submodel.subsampling = s;
    }
    if let Some(k) = args.model.model {
        cfg.submodel.kind = k;
    }
    let (model, train) = cfg.submodel_settings();
    model.validate()?;
    let dataset = load_dataset(&cfg)?;
    let sub = pretrain_submodel(&dataset, &model, cfg.submodel.subsampling, &train, cfg.data.smoothing)?;
    let path = match &args.output {
        Some(p) => p.clone(),
        None => {
            fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
            args.out.join(format!("{}.bin", sub.id))
        }
    };
    sub.params.save(&path)?;
    Ok((path, sub.id))
}

pub fn cmd_score_triples(args: &ScoreArgs) -> Result<SubModelScores> {
    let cfg = load_config(&args.data)?;
    let dataset = load_dataset(&cfg)?;
    let params = load_params(&args.checkpoint)?;
    let id = match &args.id {
        Some(id) => id.clone(),
        None => args
            .checkpoint
            .file_stem()
            .map_or_else(|| "submodel".to_owned(), |s| s.to_string_lossy().into_owned()),
    };
    let scores = score_training_triples(&params, &dataset, &id)?;
    scores.write(&args.output)?;
    Ok(scores)
}

pub fn cmd_weights_report(args: &WeightsReportArgs) -> Result<String> {
    let cfg = load_config(&args.data)?;
    let dataset = load_dataset(&cfg)?;
    let cbs = WeightTable::read(&args.cbs)?;
    let mbs = WeightTable::read(&args.mbs)?;
    let (rows, clamped) = weights_report(&dataset, &cbs, &mbs, args.n, cfg.data.smoothing)?;
    if clamped {
        eprintln!("warning: only {} queries exist, n = {} clamped", rows.len(), args.n);
    }
    let tsv = weights_report_tsv(&dataset.vocab, &rows);
    emit(args.output.as_deref(), &tsv)?;
    Ok(tsv)
}

pub fn cmd_singleton_stats(args: &SingletonArgs) -> Result<String> {
    let cfg = load_config(&args.data)?;
    let dataset = load_dataset(&cfg)?;
    let tsv = singleton_tsv(&dataset.vocab, &singleton_rows(&dataset, args.stride)?);
    emit(args.output.as_deref(), &tsv)?;
    Ok(tsv)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<crate::submodel::Selection> {
    let mut cfg = load_config(&args.data)?;
    apply_model_args(&mut cfg, &args.model);
    if let Some(m) = &args.method {
        cfg.subsampling.method = m.parse()?;
    }
    if cfg.subsampling.method == SubsamplingMethod::None {
        cfg.subsampling.method = SubsamplingMethod::Base;
    }
    if let Some(g) = &args.alpha_grid {
        cfg.sweep.alpha_grid = g.clone();
    }
    if let Some(g) = &args.lambda_grid {
        cfg.sweep.lambda_grid = g.clone();
    }
    cfg.validate()?;
    let dataset = load_dataset(&cfg)?;
    let candidates: Vec<SubModelScores> = args
        .submodel_scores
        .iter()
        .map(|p| SubModelScores::read(p))
        .collect::<Result<_>>()?;
    let mut ledger = SelectionLedger::open(&args.ledger)?;
    let eval = |scores: &SubModelScores, alpha: f64, lambda: Option<f64>| -> Result<f64> {
        let mut spec = cfg.subsampling.spec();
        spec.alpha = alpha;
        spec.source = SubsamplingSource::Mbs;
        if let Some(l) = lambda {
            spec.source = SubsamplingSource::Mix;
            spec.lambda = l;
        }
        let weights = build_weights(&dataset, cfg.data.smoothing, &spec, Some(scores), None)?;
        let params = init_params(&cfg.model, dataset.num_entities(), dataset.num_relations(), cfg.train.seed)?;
        let (params, _) = crate::training::train(&dataset, &weights, params, &cfg.train, None)?;
        Ok(evaluate(&params, &dataset, Split::Valid)?.mrr)
    };
    let sel = select_submodel(
        &candidates,
        &cfg.sweep.alpha_grid,
        &cfg.sweep.lambda_grid,
        &mut ledger,
        args.jobs,
        &eval,
    )?;
    let mut best = cfg.clone();
    best.subsampling.source = SubsamplingSource::Mix;
    best.subsampling.alpha = sel.alpha;
    best.subsampling.lambda = sel.lambda;
    best.subsampling.submodel_scores = Some(args.submodel_scores[sel.candidate].clone());
    write_text(&args.best_config, &best.to_toml()?)?;
    Ok(sel)
}

/// Runs one parsed command, printing its human-readable result.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let o = cmd_train(&a)?;
            if let Some(m) = o.valid_mrr {
                println!("valid MRR {:.1}", 100.0 * m);
            }
            println!("{}", o.run_dir.display());
        }
        Command::Evaluate(a) => {
            let agg = cmd_evaluate(&a)?;
            print!("{agg}");
            if a.out.is_none() {
                print!("{}", agg.to_tsv());
            }
        }
        Command::BuildWeights(a) => {
            let w = cmd_build_weights(&a)?;
            println!("{} rows written to {}", w.len(), a.output.display());
        }
        Command::PretrainSubmodel(a) => {
            let (path, id) = cmd_pretrain_submodel(&a)?;
            println!("{id}\t{}", path.display());
        }
        Command::ScoreTriples(a) => {
            let s = cmd_score_triples(&a)?;
            println!("{} scores written to {}", s.len(), a.output.display());
        }
        Command::WeightsReport(a) => {
            cmd_weights_report(&a)?;
        }
        Command::SingletonStats(a) => {
            cmd_singleton_stats(&a)?;
        }
        Command::Sweep(a) => {
            let s = cmd_sweep(&a)?;
            let mbs = s.mbs_valid_mrr.map_or("-".to_owned(), |m| format!("{m:.4}"));
            println!(
                "selected {} alpha={} lambda={} (MBS valid MRR {mbs}, MIX valid MRR {:.4}, {} new evaluations)",
                s.submodel_id, s.alpha, s.lambda, s.mix_valid_mrr, s.evaluations
            );
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
