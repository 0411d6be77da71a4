//! The `disae` command line. Every subcommand resolves its settings, does
//! its work, writes files under `--out` and finishes with a
//! `manifest-<command>.json` describing what was run.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{ExperimentSettings, Overrides, RobustnessSettings, Settings};

use crate::data::{load_dataset, meta_path, save_dataset, split_off_fraction, Dataset, DatasetMeta, NormStats};
use crate::harness::{
    assess_targets, dominance_fraction, fit_probes, robustness_study, run_experiment, source_rows, sweep,
    write_folds_csv, write_history_csv, write_probe_csv, write_robustness_csv, write_scores_csv, write_sweep_csv,
    write_variation_csv, ExperimentPlan, ExperimentResult, HarnessError, Manifest, ModelKind, ProbeConfig,
    RobustnessPlan, SweepGrid, PROBE_NAME,
};
use crate::metrics::{model_variation, selection_score, LabelSet, MetricError};
use crate::model::{load_checkpoint, save_checkpoint, train_model, Checkpoint, DisAEModel, ModelError};
use crate::rng::derive_seed;
use crate::synth::{generate_standard, Provenance, StandardDataset, SynthError};

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "DISAE_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Invalid(_) | HarnessError::SourceCount { .. } => Self::Usage(e.to_string()),
            HarnessError::Model(ModelError::Config(_)) => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::UnknownDataset(_) | SynthError::InvalidConfig(_) => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<crate::data::DataError> for CliError {
    fn from(e: crate::data::DataError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "disae", version, about = "Disentangled autoencoders for multi-domain tabular data")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "disae-out")]
    pub out: PathBuf,
    /// TOML settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set model.lambda=2.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for folds, repeats and grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// More progress output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only print results and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset CSV (with its .meta.json sidecar) or a standard name: A, B, C, many-affines.
    #[arg(long)]
    pub data: Option<String>,
    /// Number of samples when generating a standard dataset.
    #[arg(long)]
    pub scale: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    DisAe,
    Vanilla,
    Both,
}

impl KindArg {
    fn kinds(self) -> Vec<ModelKind> {
        match self {
            Self::DisAe => vec![ModelKind::DisAe],
            Self::Vanilla => vec![ModelKind::Vanilla],
            Self::Both => vec![ModelKind::DisAe, ModelKind::Vanilla],
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a standard synthetic dataset as CSV plus metadata.
    GenData {
        /// A, B, C or many-affines; defaults to `dataset` from the config.
        name: Option<String>,
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Train one model on the source rows and save a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Train a plain autoencoder (no task or domain heads).
        #[arg(long)]
        vanilla: bool,
    },
    /// Cross-validated evaluation with target-domain assessment.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "both")]
        kind: KindArg,
    },
    /// Selection score of a checkpoint on a dataset.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Hyperparameter grid from the `[sweep]` section, ranked by score.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        vanilla: bool,
    },
    /// Variation and accuracy against target distance for several source counts.
    Robustness {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "both")]
        kind: KindArg,
    },
    /// Write the latent representation of every row, with labels.
    ExportLatent {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::GenData { .. } => "gen-data",
            Self::Train { .. } => "train",
            Self::Eval { .. } => "eval",
            Self::Score { .. } => "score",
            Self::Sweep { .. } => "sweep",
            Self::Robustness { .. } => "robustness",
            Self::ExportLatent { .. } => "export-latent",
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides::load(cli.config.as_deref(), &cli.set)?;
    let ctx = Ctx {
        out: cli.out,
        workers: cli.workers.max(1),
        verbosity: if cli.quiet { 0 } else { 1 + cli.verbose },
        seed_flag: cli.seed,
        overrides,
    };
    let name = cli.command.name();
    match cli.command {
        Command::GenData { name: ds, scale } => gen_data(&ctx, ds, scale),
        Command::Train { data, vanilla } => train(&ctx, &data, vanilla),
        Command::Eval { data, kind } => eval(&ctx, &data, kind),
        Command::Score { checkpoint, data } => score(&ctx, &checkpoint, &data),
        Command::Sweep { data, vanilla } => run_sweep(&ctx, &data, vanilla),
        Command::Robustness { data, kind } => robustness(&ctx, &data, kind),
        Command::ExportLatent { checkpoint, data } => export_latent(&ctx, &checkpoint, &data),
    }
    .map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{name}: {m}")),
        CliError::Runtime(m) => CliError::Runtime(format!("{name}: {m}")),
    })
}

struct Ctx {
    out: PathBuf,
    workers: usize,
    verbosity: u8,
    seed_flag: Option<u64>,
    overrides: Overrides,
}

struct Loaded {
    dataset: Dataset,
    provenance: Option<Provenance>,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 1 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn debug(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 2 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn seed(&self) -> Result<u64, CliError> {
        Ok(match self.seed_flag {
            Some(s) => s,
            None => self.overrides.seed()?.unwrap_or(0),
        })
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    /// Loads or generates the dataset and resolves the settings against it.
    fn load(&self, args: &DataArgs) -> Result<(Loaded, Settings), CliError> {
        let seed = self.seed()?;
        let spec = match &args.data {
            Some(d) => d.clone(),
            None => self
                .overrides
                .dataset()?
                .ok_or_else(|| CliError::Usage("no dataset given (use --data or set `dataset`)".into()))?,
        };
        let scale = match args.scale {
            Some(s) => Some(s),
            None => self.overrides.scale()?,
        };
        let loaded = load_data(&spec, seed, scale)?;
        self.info(format!(
            "data {spec}: {} rows, {} features",
            loaded.dataset.n_samples(),
            loaded.dataset.n_features()
        ));
        let mut defaults = Settings::defaults(&loaded.dataset, seed);
        defaults.dataset = Some(spec);
        defaults.scale = scale;
        defaults.source_instances = default_sources(loaded.provenance.as_ref());
        let mut settings = self.overrides.resolve(&defaults)?;
        settings.seed = seed;
        Ok((loaded, settings))
    }

    fn plan(&self, kind: ModelKind, s: &Settings) -> ExperimentPlan {
        ExperimentPlan {
            name: kind.label().to_string(),
            kind,
            model: s.model.clone(),
            folds: s.experiment.folds,
            repeats: s.experiment.repeats,
            seed: s.seed,
            source_instances: s.source_instances.clone(),
            val_fraction: s.experiment.val_fraction,
            variation: s.variation,
            probe: s.probe,
            workers: self.workers,
        }
    }

    fn finish(&self, mut manifest: Manifest, outputs: Vec<PathBuf>) -> Result<(), CliError> {
        let path = self.out_dir()?.join(format!("manifest-{}.json", manifest.command));
        manifest.outputs = outputs.iter().map(|p| file_name(p)).collect();
        manifest.write(&path)?;
        self.debug(format!("wrote {}", path.display()));
        Ok(())
    }

    fn manifest(&self, command: &str, settings: &Settings) -> Result<Manifest, CliError> {
        let mut config = serde_json::to_value(settings).map_err(|e| CliError::Runtime(e.to_string()))?;
        if let Value::Object(m) = &mut config {
            m.insert("workers".into(), json!(self.workers));
        }
        Ok(Manifest::new(command, settings.seed, config))
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// An existing file is read with its sidecar; anything else must name a
/// standard dataset, which is generated in memory.
fn load_data(spec: &str, seed: u64, scale: Option<usize>) -> Result<Loaded, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let (dataset, meta) =
            load_dataset(path).map_err(|e| CliError::Usage(format!("cannot load {}: {e}", path.display())))?;
        let provenance = Provenance::from_meta(&meta);
        return Ok(Loaded { dataset, provenance });
    }
    let name: StandardDataset = spec.parse().map_err(|_| {
        CliError::Usage(format!(
            "data `{spec}` is neither an existing file nor a standard dataset (A, B, C, many-affines)"
        ))
    })?;
    let g = generate_standard(name, seed, scale)?;
    Ok(Loaded {
        dataset: g.dataset,
        provenance: Some(g.provenance),
    })
}

/// A, B and C train on their two close instances; everything else on all rows.
fn default_sources(provenance: Option<&Provenance>) -> Option<Vec<usize>> {
    match provenance.map(|p| p.name) {
        Some(StandardDataset::A | StandardDataset::B | StandardDataset::C) => Some(vec![0, 1]),
        _ => None,
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn gen_data(ctx: &Ctx, name: Option<String>, scale: Option<usize>) -> Result<(), CliError> {
    let name = match name {
        Some(n) => n,
        None => ctx
            .overrides
            .dataset()?
            .ok_or_else(|| CliError::Usage("no dataset name given".into()))?,
    };
    let which: StandardDataset = name.parse()?;
    let seed = ctx.seed()?;
    let scale = match scale {
        Some(s) => Some(s),
        None => ctx.overrides.scale()?,
    };
    let g = generate_standard(which, seed, scale)?;
    let mut defaults = Settings::defaults(&g.dataset, seed);
    defaults.dataset = Some(which.to_string());
    defaults.scale = scale;
    defaults.source_instances = default_sources(Some(&g.provenance));
    let mut settings = ctx.overrides.resolve(&defaults)?;
    settings.seed = seed;

    let csv = ctx.out_dir()?.join(format!("{}.csv", which.to_string().to_ascii_lowercase()));
    save_dataset(&g.dataset, &g.meta(), &csv)?;
    ctx.info(format!("wrote {} ({} rows)", csv.display(), g.dataset.n_samples()));
    let mut m = ctx.manifest("gen-data", &settings)?;
    m.notes.push(format!("{} rows, {} features", g.dataset.n_samples(), g.dataset.n_features()));
    ctx.finish(m, vec![csv.clone(), meta_path(&csv)])
}

fn kind_of(vanilla: bool) -> ModelKind {
    if vanilla {
        ModelKind::Vanilla
    } else {
        ModelKind::DisAe
    }
}

fn train(ctx: &Ctx, args: &DataArgs, vanilla: bool) -> Result<(), CliError> {
    let (loaded, s) = ctx.load(args)?;
    let ds = &loaded.dataset;
    let kind = kind_of(vanilla);
    let rows = source_rows(ds, s.source_instances.as_deref())?;
    let source = ds.subset(&rows);
    let all: Vec<usize> = (0..source.n_samples()).collect();
    let (fit_idx, val_idx) = split_off_fraction(&all, s.experiment.val_fraction, derive_seed(s.seed, &[2]));
    let stats = NormStats::fit(source.subset(&fit_idx).features());
    let norm = source.with_features(stats.apply(source.features())?)?;
    let val = (!val_idx.is_empty()).then(|| norm.subset(&val_idx));
    let cfg = kind.resolve(&s.model, ds);

    let t = Instant::now();
    ctx.info(format!("training {} on {} rows ({} validation)", kind.label(), fit_idx.len(), val_idx.len()));
    let mut trained = train_model(&norm.subset(&fit_idx), val.as_ref(), &cfg)?;
    trained.model.norm = Some(stats);
    let secs = t.elapsed().as_secs_f64();
    ctx.info(format!(
        "done in {secs:.1}s, {} epochs, best epoch {}",
        trained.history.epochs.len(),
        trained.history.best_epoch
    ));

    let out = ctx.out_dir()?;
    let ckpt_path = out.join(format!("{}.ckpt", kind.label()));
    let history_path = out.join(format!("{}-history.csv", kind.label()));
    write_history_csv(&history_path, &trained.history)?;
    let ckpt = Checkpoint {
        model: trained.model,
        history: trained.history,
        metadata: json!({
            "kind": kind.label(),
            "dataset": s.dataset,
            "seed": s.seed,
            "source_instances": s.source_instances,
            "train_rows": fit_idx.len(),
        }),
    };
    save_checkpoint(&ckpt, &ckpt_path)?;
    let mut m = ctx.manifest("train", &s)?;
    m.notes.push(format!("model {}", kind.label()));
    m.notes.push(format!("training took {secs:.1}s"));
    ctx.finish(m, vec![ckpt_path, history_path])
}

fn eval(ctx: &Ctx, args: &DataArgs, kind: KindArg) -> Result<(), CliError> {
    let (loaded, s) = ctx.load(args)?;
    let ds = &loaded.dataset;
    let out = ctx.out_dir()?.to_path_buf();
    let mut results: Vec<ExperimentResult> = Vec::new();
    let mut variation = Vec::new();
    let mut probe = Vec::new();
    let mut outputs = Vec::new();
    for (i, k) in kind.kinds().into_iter().enumerate() {
        let plan = ctx.plan(k, &s);
        let t = Instant::now();
        ctx.info(format!("{}: {} folds x {} repeats", k.label(), plan.folds, plan.repeats));
        let r = run_experiment(ds, &plan)?;
        ctx.info(format!(
            "{}: score {:.4} (+/- {:.4}) accuracy {:.4} variation {:.4} reconstruction {:.4} in {:.1}s",
            k.label(),
            r.mean.score,
            r.score_std,
            r.mean.accuracy,
            r.mean.variation,
            r.mean.reconstruction,
            t.elapsed().as_secs_f64()
        ));
        for f in &r.failures {
            ctx.info(format!("  failed run: {f}"));
        }
        let a = assess_targets(ds, &r, i == 0)?;
        variation.extend(a.variation);
        probe.extend(a.probe);
        let best = r.best_fold();
        let ckpt_path = out.join(format!("{}.ckpt", k.label()));
        let ckpt = Checkpoint {
            model: best.model.clone(),
            history: best.history.clone(),
            metadata: json!({
                "kind": k.label(),
                "dataset": s.dataset,
                "seed": best.seed,
                "fold": best.fold,
                "source_instances": s.source_instances,
            }),
        };
        save_checkpoint(&ckpt, &ckpt_path)?;
        outputs.push(ckpt_path);
        results.push(r);
    }
    let refs: Vec<&ExperimentResult> = results.iter().collect();
    let dataset_name = s.dataset.clone().unwrap_or_default();
    let paths = [
        out.join("scores.csv"),
        out.join("folds.csv"),
        out.join("variation.csv"),
        out.join("probe.csv"),
    ];
    write_scores_csv(&paths[0], &dataset_name, &refs)?;
    write_folds_csv(&paths[1], &refs)?;
    write_variation_csv(&paths[2], &variation)?;
    write_probe_csv(&paths[3], &probe, PROBE_NAME)?;
    outputs.extend(paths);
    let mut m = ctx.manifest("eval", &s)?;
    for r in &results {
        m.notes.push(format!(
            "{}: accuracy from {}, {} failed runs",
            r.plan.kind.label(),
            r.plan.kind.accuracy_source(),
            r.failures.len()
        ));
    }
    ctx.finish(m, outputs)
}

/// Accuracy per task of a model without heads: a probe fitted on 80% of
/// the rows and evaluated on the rest.
fn probe_accuracies(model: &DisAEModel, eval: &Dataset, cfg: &ProbeConfig, seed: u64) -> Result<Vec<f64>, CliError> {
    let all: Vec<usize> = (0..eval.n_samples()).collect();
    let (fit, held) = split_off_fraction(&all, 0.2, derive_seed(seed, &[3]));
    let fit_ds = eval.subset(&fit);
    let held_ds = eval.subset(&held);
    let probes = fit_probes(&model.encode(fit_ds.features())?, &fit_ds, cfg)?;
    let z = model.encode(held_ds.features())?;
    probes
        .iter()
        .enumerate()
        .map(|(t, p)| Ok(p.accuracy(&z, &held_ds.task_labels()[t])?))
        .collect()
}

/// Rows of `ds` in the model's input space.
fn model_inputs(model: &DisAEModel, ds: &Dataset) -> Result<Dataset, CliError> {
    if model.config.input_dim != ds.n_features() {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} features, dataset has {}",
            model.config.input_dim,
            ds.n_features()
        )));
    }
    Ok(match &model.norm {
        Some(stats) => ds.with_features(stats.apply(ds.features())?)?,
        None => ds.clone(),
    })
}

fn load_model(path: &Path) -> Result<Checkpoint, CliError> {
    require_file(path, "checkpoint")?;
    Ok(load_checkpoint(path)?)
}

fn score(ctx: &Ctx, checkpoint: &Path, args: &DataArgs) -> Result<(), CliError> {
    let ckpt = load_model(checkpoint)?;
    let (loaded, s) = ctx.load(args)?;
    let model = &ckpt.model;
    let rows = source_rows(&loaded.dataset, s.source_instances.as_deref())?;
    let eval = model_inputs(model, &loaded.dataset.subset(&rows))?;
    let has_heads = !model.task_heads.is_empty();
    if has_heads && model.task_heads.len() != eval.n_tasks() {
        return Err(CliError::Usage(format!(
            "checkpoint has {} task heads, dataset has {} tasks",
            model.task_heads.len(),
            eval.n_tasks()
        )));
    }
    let labels = LabelSet::from_dataset(&eval, Some(&model.domain_bins))?;
    let raw = model_variation(eval.features(), &labels, &s.variation)?.v_sup;
    let external = if has_heads {
        None
    } else {
        Some(probe_accuracies(model, &eval, &s.probe, s.seed)?)
    };
    let report = selection_score(model, &eval, &labels, &s.variation, raw, external.as_deref())?;
    let source = if has_heads { "task-heads" } else { "probe" };

    println!("rows            {}", eval.n_samples());
    println!("accuracy        {:.4} ({source})", report.accuracy);
    println!("variation       {:.4}", report.variation);
    println!("reconstruction  {:.4}", report.reconstruction);
    println!("score           {:.4}", report.score);

    let path = ctx.out_dir()?.join("score.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let task_accs: Vec<String> = report.task_accuracies.iter().map(|a| a.to_string()).collect();
    w.write_record(["checkpoint", "rows", "accuracy_source", "task_accuracies", "accuracy", "variation", "reconstruction", "score", "raw_v_sup"])
        .and_then(|_| {
            w.write_record([
                file_name(checkpoint),
                eval.n_samples().to_string(),
                source.to_string(),
                task_accs.join(";"),
                report.accuracy.to_string(),
                report.variation.to_string(),
                report.reconstruction.to_string(),
                report.score.to_string(),
                raw.to_string(),
            ])
        })
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    w.flush()?;
    let mut m = ctx.manifest("score", &s)?;
    m.notes.push(format!("checkpoint {}", checkpoint.display()));
    m.notes.push(format!("accuracy from {source}"));
    ctx.finish(m, vec![path])
}

fn run_sweep(ctx: &Ctx, args: &DataArgs, vanilla: bool) -> Result<(), CliError> {
    let (loaded, s) = ctx.load(args)?;
    let grid = SweepGrid { axes: s.sweep.clone() };
    if grid.is_empty() {
        return Err(CliError::Usage("the [sweep] section defines no grid".into()));
    }
    let plan = ctx.plan(kind_of(vanilla), &s);
    ctx.info(format!("sweeping {} configurations", grid.len()));
    let rows = sweep(&loaded.dataset, &plan, &grid)?;
    for r in rows.iter().take(5) {
        let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        ctx.info(format!("#{} {} score {:.4}", r.rank, params.join(" "), r.mean.score));
    }
    let path = ctx.out_dir()?.join("sweep.csv");
    write_sweep_csv(&path, &rows)?;
    let m = ctx.manifest("sweep", &s)?;
    ctx.finish(m, vec![path])
}

fn robustness(ctx: &Ctx, args: &DataArgs, kind: KindArg) -> Result<(), CliError> {
    let (loaded, s) = ctx.load(args)?;
    let ranks = loaded
        .provenance
        .as_ref()
        .and_then(Provenance::instance_ranks)
        .ok_or_else(|| CliError::Usage("dataset carries no instance distance ranks (generate it with gen-data)".into()))?;
    let plan = RobustnessPlan {
        source_counts: s.robustness.source_counts.clone(),
        kinds: kind.kinds(),
        model: s.model.clone(),
        seed: s.seed,
        val_fraction: s.experiment.val_fraction,
        variation: s.robustness.variation,
        max_per_cell: s.robustness.max_per_cell,
        probe: s.probe,
        workers: ctx.workers,
    };
    let t = Instant::now();
    let curves = robustness_study(&loaded.dataset, &ranks, &plan)?;
    ctx.info(format!("{} curves in {:.1}s", curves.len(), t.elapsed().as_secs_f64()));
    let mut m = ctx.manifest("robustness", &s)?;
    for k in plan.kinds.iter().map(|k| k.label()) {
        let mine: Vec<_> = curves.iter().filter(|c| c.model == k).collect();
        let lo = mine.iter().min_by_key(|c| c.source_count);
        let hi = mine.iter().max_by_key(|c| c.source_count);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if let Some(d) = dominance_fraction(hi, lo).filter(|_| hi.source_count > lo.source_count) {
                let note = format!(
                    "{k}: {} sources beat {} sources on {:.0}% of target ranks",
                    hi.source_count,
                    lo.source_count,
                    100.0 * d
                );
                ctx.info(&note);
                m.notes.push(note);
            }
        }
    }
    let path = ctx.out_dir()?.join("robustness.csv");
    write_robustness_csv(&path, &curves)?;
    ctx.finish(m, vec![path])
}

fn export_latent(ctx: &Ctx, checkpoint: &Path, args: &DataArgs) -> Result<(), CliError> {
    let ckpt = load_model(checkpoint)?;
    let (loaded, s) = ctx.load(args)?;
    let inputs = model_inputs(&ckpt.model, &loaded.dataset)?;
    let z = ckpt.model.encode(inputs.features())?;
    let names = (0..z.ncols()).map(|j| format!("z{j}")).collect();
    let latent = loaded.dataset.with_representation(z, names)?;
    let path = ctx.out_dir()?.join("latent.csv");
    save_dataset(&latent, &DatasetMeta::describe(&latent), &path)?;
    ctx.info(format!("wrote {} ({} x {})", path.display(), latent.n_samples(), latent.n_features()));
    let mut m = ctx.manifest("export-latent", &s)?;
    m.notes.push(format!("checkpoint {}", checkpoint.display()));
    ctx.finish(m, vec![path.clone(), meta_path(&path)])
}
