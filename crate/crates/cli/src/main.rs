//! `mpa`: generate synthetic assessment data, train and sweep the assessment
//! networks, and rate single recordings.

mod config;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use mpa_core::data::{save_dataset, GeneratorConfig, DEFAULT_LABEL_NOISE, DEFAULT_SCORES};
use mpa_core::trainer::{self, SweepKind, TrainConfig};
use mpa_core::{Band, Criterion, Model, ModelKind};

use config::{pick, pick_opt, FileConfig, Seeds, Values};

#[derive(Debug, Parser)]
#[command(name = "mpa", version, about = "Score-informed music performance assessment")]
struct Cli {
    /// Plain-text `flag=value` file; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Train and evaluate one model per seed.
    Train(TrainArgs),
    /// Repeat training over chunk sizes or matrix resolutions.
    Sweep(SweepArgs),
    /// Rate one recording against its score with a trained checkpoint.
    Assess(AssessArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Student group: middle or symphonic.
    #[arg(long, default_value_t = Band::Middle)]
    band: Band,
    /// Number of recordings.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Number of distinct scores.
    #[arg(long, default_value_t = DEFAULT_SCORES)]
    scores: usize,
    /// Standard deviation of the noise added to every rating.
    #[arg(long, default_value_t = DEFAULT_LABEL_NOISE)]
    label_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelArg {
    One(ModelKind),
    All,
}

impl ModelArg {
    fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelArg::One(k) => vec![k],
            ModelArg::All => ModelKind::ALL.to_vec(),
        }
    }
}

impl FromStr for ModelArg {
    type Err = mpa_core::Error;

    fn from_str(s: &str) -> mpa_core::Result<Self> {
        if s == "all" {
            Ok(ModelArg::All)
        } else {
            s.parse().map(ModelArg::One)
        }
    }
}

impl fmt::Display for ModelArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelArg::One(k) => k.fmt(f),
            ModelArg::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Args)]
struct TrainingArgs {
    /// Dataset directory written by `mpa generate`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// musicality, note_accuracy or rhythmic_accuracy.
    #[arg(long, default_value_t = Criterion::NoteAccuracy)]
    criterion: Criterion,
    /// Seeds: `3`, `1,4,7` or the inclusive range `0..9`.
    #[arg(long, default_value = "0..9")]
    seeds: Seeds,
    #[arg(long, default_value_t = trainer::DEFAULT_LR)]
    lr: f64,
    #[arg(long, default_value_t = trainer::DEFAULT_BATCH)]
    batch_size: usize,
    #[arg(long, default_value_t = trainer::DEFAULT_MAX_EPOCHS)]
    max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = trainer::DEFAULT_PATIENCE)]
    patience: usize,
    /// Seed of the 8:1:1 train/validation/test split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Sakoe-Chiba radius for score alignment [default: unbanded].
    #[arg(long)]
    dtw_band: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// si_convnet, joint_embed, dist_mat, pc_baseline or all.
    #[arg(long, default_value_t = ModelArg::One(ModelKind::JointEmbed))]
    model: ModelArg,
    /// Training chunk length for the chunked models [default: 10].
    #[arg(long)]
    chunk_seconds: Option<f64>,
    /// Distance-matrix side for dist_mat [default: 400].
    #[arg(long)]
    resolution: Option<usize>,
    #[command(flatten)]
    common: TrainingArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// chunk (seconds) or resolution (matrix side).
    #[arg(long)]
    kind: Option<SweepKind>,
    /// Comma-separated values [default: 5,10 for chunk, 400,600,900 for resolution].
    #[arg(long)]
    values: Option<Values>,
    /// Model to sweep [default: joint_embed for chunk, dist_mat for resolution].
    #[arg(long)]
    model: Option<ModelKind>,
    #[command(flatten)]
    common: TrainingArgs,
}

#[derive(Debug, Args)]
struct AssessArgs {
    /// Checkpoint written by `mpa train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Performance pitch contour file.
    #[arg(long)]
    contour: PathBuf,
    /// Score file.
    #[arg(long)]
    score: PathBuf,
    /// Refuse checkpoints of any other model kind.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Refuse checkpoints trained on any other criterion.
    #[arg(long)]
    criterion: Option<Criterion>,
    /// Sakoe-Chiba radius for score alignment [default: unbanded].
    #[arg(long)]
    dtw_band: Option<usize>,
}

fn main() -> Result<()> {
    let cmd = Cli::command();
    let matches = cmd.clone().get_matches();
    let cli = Cli::from_arg_matches(&matches)?;
    let file = FileConfig::read(cli.config.as_deref())?;
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    file.check_keys(cmd.find_subcommand(name).expect("parsed subcommand exists"))?;

    let workers = trainer::workers_from_env()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("starting worker threads")?;

    match cli.command {
        Command::Generate(a) => generate(a, sub, &file),
        Command::Train(a) => train(a, sub, &file),
        Command::Sweep(a) => sweep(a, sub, &file),
        Command::Assess(a) => assess(a, sub, &file),
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.with_context(|| format!("--{flag} is required (on the command line or in --config)"))
}

fn generate(a: GenerateArgs, m: &ArgMatches, file: &FileConfig) -> Result<()> {
    let cfg = GeneratorConfig {
        n: pick(m, file, "n", a.n)?,
        band: pick(m, file, "band", a.band)?,
        scores: pick(m, file, "scores", a.scores)?,
        label_noise: pick(m, file, "label_noise", a.label_noise)?,
        seed: pick(m, file, "seed", a.seed)?,
    };
    let out = required(pick_opt(file, "out", a.out)?, "out")?;
    let ds = mpa_core::data::generate(&cfg)?;
    save_dataset(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {} recordings over {} scores to {}",
        ds.records.len(),
        ds.scores.len(),
        out.display()
    );
    Ok(())
}

/// Settings shared by `train` and `sweep`, resolved against the config file.
struct Common {
    dataset: PathBuf,
    criterion: Criterion,
    seeds: Vec<u64>,
    base: TrainConfig,
    out: PathBuf,
}

fn resolve_common(c: TrainingArgs, m: &ArgMatches, file: &FileConfig, kind: ModelKind) -> Result<Common> {
    let criterion = pick(m, file, "criterion", c.criterion)?;
    let mut base = TrainConfig::new(kind, criterion);
    base.lr = pick(m, file, "lr", c.lr)?;
    base.batch_size = pick(m, file, "batch_size", c.batch_size)?;
    base.max_epochs = pick(m, file, "max_epochs", c.max_epochs)?;
    base.patience = pick(m, file, "patience", c.patience)?;
    base.split_seed = pick(m, file, "split_seed", c.split_seed)?;
    base.dtw_band = pick_opt(file, "dtw_band", c.dtw_band)?;
    Ok(Common {
        dataset: required(pick_opt(file, "dataset", c.dataset)?, "dataset")?,
        criterion,
        seeds: pick(m, file, "seeds", c.seeds)?.0,
        base,
        out: required(pick_opt(file, "out", c.out)?, "out")?,
    })
}

fn train(a: TrainArgs, m: &ArgMatches, file: &FileConfig) -> Result<()> {
    let model = pick(m, file, "model", a.model)?;
    let chunk = pick_opt(file, "chunk_seconds", a.chunk_seconds)?;
    let resolution = pick_opt(file, "resolution", a.resolution)?;
    match model {
        ModelArg::One(ModelKind::DistMat) if chunk.is_some() => {
            bail!("--chunk-seconds does not apply to dist_mat; use --resolution")
        }
        ModelArg::One(k) if k.is_chunked() && resolution.is_some() => {
            bail!("--resolution only applies to dist_mat; use --chunk-seconds for {k}")
        }
        _ => {}
    }
    let kinds = model.kinds();
    let common = resolve_common(a.common, m, file, kinds[0])?;
    let configs: Vec<TrainConfig> = kinds
        .iter()
        .map(|&kind| {
            let mut c = TrainConfig::new(kind, common.criterion);
            c.lr = common.base.lr;
            c.batch_size = common.base.batch_size;
            c.max_epochs = common.base.max_epochs;
            c.patience = common.base.patience;
            c.split_seed = common.base.split_seed;
            c.dtw_band = common.base.dtw_band;
            if kind.is_chunked() {
                c.chunk_seconds = chunk.or(c.chunk_seconds);
            } else {
                c.matrix_resolution = resolution.or(c.matrix_resolution);
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    run::train(
        &common.dataset,
        &configs,
        &common.seeds,
        &common.out,
        model == ModelArg::All,
    )
}

fn sweep(a: SweepArgs, m: &ArgMatches, file: &FileConfig) -> Result<()> {
    let kind = required(pick_opt(file, "kind", a.kind)?, "kind")?;
    let values = pick_opt(file, "values", a.values)?.map_or_else(|| kind.default_values(), |v| v.0);
    let model = pick_opt(file, "model", a.model)?.unwrap_or(match kind {
        SweepKind::ChunkSize => ModelKind::JointEmbed,
        SweepKind::Resolution => ModelKind::DistMat,
    });
    let common = resolve_common(a.common, m, file, model)?;
    run::sweep(
        &common.dataset,
        kind,
        &values,
        &common.base,
        &common.seeds,
        &common.out,
    )
}

fn assess(a: AssessArgs, m: &ArgMatches, file: &FileConfig) -> Result<()> {
    let checkpoint = pick(m, file, "checkpoint", a.checkpoint)?;
    let expect_model = pick_opt(file, "model", a.model)?;
    let expect_criterion = pick_opt(file, "criterion", a.criterion)?;
    let dtw_band = pick_opt(file, "dtw_band", a.dtw_band)?;
    let model = load_checked(&checkpoint, expect_model, expect_criterion)?;
    let contour = mpa_core::formats::read_contour(&pick(m, file, "contour", a.contour)?)?;
    let score = mpa_core::formats::read_score(&pick(m, file, "score", a.score)?)?;
    let rating = trainer::assess(&model, &contour, &score, dtw_band)?;
    println!("{}\t{rating:.6}", model.spec().criterion);
    Ok(())
}

fn load_checked(path: &Path, kind: Option<ModelKind>, criterion: Option<Criterion>) -> Result<Model<f32>> {
    let model = Model::<f32>::load(path).with_context(|| format!("loading {}", path.display()))?;
    let spec = model.spec();
    if let Some(k) = kind {
        if spec.kind != k {
            bail!("{} holds a {} model, not {k}", path.display(), spec.kind);
        }
    }
    if let Some(c) = criterion {
        if spec.criterion != c {
            bail!("{} was trained on {}, not {c}", path.display(), spec.criterion);
        }
    }
    Ok(model)
}
