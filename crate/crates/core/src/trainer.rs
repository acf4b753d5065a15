//! Training, early stopping, multi-seed experiments, sweeps and R² evaluation.

use std::borrow::Cow;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::align::{abs_cost, dtw_align_with, FrameTickMap};
use crate::data::{
    ground_truth_ratings, split_dataset, AssessmentRecord, Band, Criterion, Dataset, DatasetSplit,
    DegradationParams, GeneratorConfig,
};
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::models::{Model, ModelKind, ModelSpec};
use crate::signal::{
    build_distance_matrix, chunk_at, expand_score_to_ticks, normalize_pitch, random_start, PitchContour,
    Score,
};
use crate::tensorcore::{sgd_step, Graph, Mode, Tensor};

pub const DEFAULT_LR: f64 = 0.05;
pub const DEFAULT_BATCH: usize = 32;
pub const DEFAULT_MAX_EPOCHS: usize = 300;
pub const DEFAULT_PATIENCE: usize = 100;
pub const DEFAULT_CHUNK_SECONDS: f64 = 10.0;
pub const DEFAULT_RESOLUTION: usize = 400;
/// Distance matrices are cached in memory up to this many bytes.
pub const DEFAULT_MATRIX_CACHE: usize = 1 << 30;
/// Loss above this multiple of the first epoch's, for `DIVERGENCE_EPOCHS` epochs in a
/// row, aborts training.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
pub const DIVERGENCE_EPOCHS: usize = 5;
/// Environment variable with the number of worker threads.
pub const WORKERS_ENV: &str = "MPA_WORKERS";

/// Worker count from `MPA_WORKERS`, defaulting to the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::invalid(format!(
                "{WORKERS_ENV}={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub criterion: Criterion,
    pub chunk_seconds: Option<f64>,
    pub matrix_resolution: Option<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Seed of the 8:1:1 split, shared by all seeds of an experiment.
    pub split_seed: u64,
    /// Sakoe-Chiba radius for score alignment; `None` aligns without a band.
    pub dtw_band: Option<usize>,
}

impl TrainConfig {
    /// Defaults for `kind`: 10 s chunks, or 400x400 matrices for `dist_mat`.
    pub fn new(kind: ModelKind, criterion: Criterion) -> Self {
        let chunked = kind.is_chunked();
        Self {
            kind,
            criterion,
            chunk_seconds: chunked.then_some(DEFAULT_CHUNK_SECONDS),
            matrix_resolution: (!chunked).then_some(DEFAULT_RESOLUTION),
            lr: DEFAULT_LR,
            batch_size: DEFAULT_BATCH,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed: 0,
            split_seed: 0,
            dtw_band: None,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            chunk_seconds: self.chunk_seconds,
            matrix_resolution: self.matrix_resolution,
            criterion: self.criterion,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec().validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if self.patience < 1 || self.max_epochs < 1 {
            return Err(Error::invalid("patience and max_epochs must be at least 1"));
        }
        Ok(())
    }

    /// The 8:1:1 split of `n` records drawn from `split_seed`.
    pub fn split(&self, n: usize) -> Result<DatasetSplit> {
        split_dataset(n, &mut ChaCha8Rng::seed_from_u64(self.split_seed))
    }

    /// The swept quantity: chunk seconds or matrix resolution.
    pub fn value(&self) -> f64 {
        self.chunk_seconds
            .or(self.matrix_resolution.map(|s| s as f64))
            .unwrap_or(f64::NAN)
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("model", self.kind).set("criterion", self.criterion);
        if let Some(s) = self.chunk_seconds {
            m.set("chunk_seconds", s);
        }
        if let Some(s) = self.matrix_resolution {
            m.set("matrix_resolution", s);
        }
        m.set("lr", self.lr)
            .set("batch_size", self.batch_size)
            .set("max_epochs", self.max_epochs)
            .set("patience", self.patience)
            .set("split_seed", self.split_seed)
            .set(
                "dtw_band",
                self.dtw_band.map_or("none".to_string(), |b| b.to_string()),
            )
            .set("eval_chunk_stride", "N/2")
            .set("validation_chunks", "start-0");
        m
    }
}

/// A dataset with everything the models read precomputed: normalized contours,
/// contour-to-score alignments and, for `dist_mat`, distance matrices.
pub struct TrainData<'a> {
    pub dataset: &'a Dataset,
    contours: Vec<Vec<f32>>,
    ticks: Vec<Vec<f64>>,
    score_of: Vec<usize>,
    maps: Vec<FrameTickMap>,
    matrices: Option<(usize, Option<Vec<Vec<f32>>>)>,
}

impl<'a> TrainData<'a> {
    /// Aligns every performance to its score (in parallel).
    pub fn new(dataset: &'a Dataset, dtw_band: Option<usize>) -> Result<Self> {
        let ticks: Vec<Vec<f64>> = dataset
            .scores
            .iter()
            .map(|(_, s)| expand_score_to_ticks(s))
            .collect();
        let score_of = dataset
            .records
            .iter()
            .map(|r| {
                dataset
                    .score_index(&r.score_id)
                    .ok_or_else(|| Error::invalid(format!("{} references unknown {}", r.id, r.score_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let maps = dataset
            .records
            .par_iter()
            .zip(&score_of)
            .map(|(r, &k)| {
                let path = dtw_align_with(r.contour.frames(), &ticks[k], abs_cost, dtw_band)?;
                FrameTickMap::new(&path)
            })
            .collect::<Result<Vec<_>>>()?;
        let contours = dataset
            .records
            .iter()
            .map(|r| {
                r.contour
                    .frames()
                    .iter()
                    .map(|&p| normalize_pitch(p) as f32)
                    .collect()
            })
            .collect();
        Ok(Self {
            dataset,
            contours,
            ticks,
            score_of,
            maps,
            matrices: None,
        })
    }

    pub fn len(&self) -> usize {
        self.contours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    /// Selects the matrix resolution; matrices are precomputed when they fit in
    /// `budget` bytes and rebuilt on every use otherwise.
    pub fn use_resolution(&mut self, s: usize, budget: usize) -> Result<()> {
        if matches!(self.matrices, Some((r, _)) if r == s) {
            return Ok(());
        }
        let bytes = self.len().saturating_mul(s * s * std::mem::size_of::<f32>());
        let cache = if bytes <= budget {
            Some(
                (0..self.len())
                    .into_par_iter()
                    .map(|i| self.compute_matrix(i, s))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        self.matrices = Some((s, cache));
        Ok(())
    }

    fn compute_matrix(&self, i: usize, s: usize) -> Result<Vec<f32>> {
        let r = &self.dataset.records[i];
        let score = &self.dataset.scores[self.score_of[i]].1;
        let m = build_distance_matrix(&r.contour, score, s)?;
        Ok(m.cells().iter().map(|&v| v as f32).collect())
    }

    fn matrix(&self, i: usize, s: usize) -> Result<Cow<'_, [f32]>> {
        match &self.matrices {
            Some((r, Some(cache))) if *r == s => Ok(Cow::Borrowed(&cache[i])),
            _ => self.compute_matrix(i, s).map(Cow::Owned),
        }
    }

    pub fn frames(&self, i: usize) -> usize {
        self.contours[i].len()
    }

    pub fn target(&self, i: usize, c: Criterion) -> f64 {
        self.dataset.records[i].ratings.get(c)
    }

    /// Normalized contour chunk and its aligned, resampled score chunk.
    pub fn chunk_pair(&self, i: usize, start: usize, n: usize) -> Result<(Vec<f32>, Vec<f32>)> {
        let pc = chunk_at(&self.contours[i], start, n).frames;
        let sc = self.maps[i]
            .score_chunk(&self.ticks[self.score_of[i]], start, n)?
            .into_iter()
            .map(|p| normalize_pitch(p) as f32)
            .collect();
        Ok((pc, sc))
    }

    /// Model inputs for `(record, chunk start)` items; starts are ignored by `dist_mat`.
    pub fn inputs(&self, spec: &ModelSpec, items: &[(usize, usize)]) -> Result<Vec<Tensor<f32>>> {
        let b = items.len();
        if let Some(n) = spec.chunk_frames() {
            let mut pcs = Vec::with_capacity(b * n);
            let mut scs = Vec::with_capacity(b * n);
            let mut stacked = Vec::with_capacity(2 * b * n);
            for &(i, start) in items {
                let (pc, sc) = self.chunk_pair(i, start, n)?;
                match spec.kind {
                    ModelKind::SiConvNet => {
                        stacked.extend_from_slice(&pc);
                        stacked.extend_from_slice(&sc);
                    }
                    _ => {
                        pcs.extend_from_slice(&pc);
                        scs.extend_from_slice(&sc);
                    }
                }
            }
            match spec.kind {
                ModelKind::SiConvNet => Ok(vec![Tensor::new([b, 2, n], stacked)?]),
                ModelKind::PcBaseline => Ok(vec![Tensor::new([b, 1, n], pcs)?]),
                _ => Ok(vec![Tensor::new([b, 1, n], pcs)?, Tensor::new([b, 1, n], scs)?]),
            }
        } else {
            let s = spec
                .matrix_resolution
                .ok_or_else(|| Error::invalid("dist_mat needs a matrix resolution"))?;
            let mut cells = Vec::with_capacity(b * s * s);
            for &(i, _) in items {
                cells.extend_from_slice(&self.matrix(i, s)?);
            }
            Ok(vec![Tensor::new([b, 1, s, s], cells)?])
        }
    }
}

/// Chunk starts `0, n/2, n, ...` that fit, plus the last full chunk.
pub fn chunk_grid(frames: usize, n: usize) -> Vec<usize> {
    if frames <= n {
        return vec![0];
    }
    let stride = (n / 2).max(1);
    let last = frames - n;
    let mut starts: Vec<usize> = (0..=last).step_by(stride).collect();
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    starts
}

/// Eval-mode predictions per record. Chunked models average over [`chunk_grid`]
/// when `grid` is set and use the start-0 chunk otherwise.
pub fn predict_records(
    model: &Model<f32>,
    data: &TrainData<'_>,
    records: &[usize],
    grid: bool,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let spec = model.spec();
    let mut items = Vec::new();
    for (slot, &i) in records.iter().enumerate() {
        match spec.chunk_frames() {
            Some(n) if grid => items.extend(chunk_grid(data.frames(i), n).into_iter().map(|s| (slot, i, s))),
            _ => items.push((slot, i, 0)),
        }
    }
    let mut sums = vec![0.0; records.len()];
    let mut counts = vec![0usize; records.len()];
    for batch in items.chunks(batch_size.max(1)) {
        let pairs: Vec<(usize, usize)> = batch.iter().map(|&(_, i, s)| (i, s)).collect();
        let preds = model.predict(&data.inputs(spec, &pairs)?)?;
        for (&(slot, _, _), p) in batch.iter().zip(preds) {
            sums[slot] += p as f64;
            counts[slot] += 1;
        }
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

/// Rating of one performance against its score, averaged over the chunk grid
/// for chunked models.
pub fn assess(
    model: &Model<f32>,
    contour: &PitchContour,
    score: &Score,
    dtw_band: Option<usize>,
) -> Result<f64> {
    let clean = DegradationParams::default();
    let ds = Dataset {
        config: GeneratorConfig::new(1, Band::Middle, 0),
        scores: vec![("score".to_string(), score.clone())],
        records: vec![AssessmentRecord {
            id: "performance".to_string(),
            score_id: "score".to_string(),
            band: Band::Middle,
            contour: contour.clone(),
            ratings: ground_truth_ratings(&clean),
            degradation: clean,
        }],
    };
    let data = TrainData::new(&ds, dtw_band)?;
    Ok(predict_records(model, &data, &[0], true, 64)?[0])
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "r2: {} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::invalid("r2 needs at least two values"));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("r2 is undefined when all targets are equal"));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / pred.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the best validation epoch.
    pub model: Model<f32>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// One optimization pass over `train` in shuffled mini-batches; returns the mean loss.
fn run_epoch<R: Rng>(
    model: &mut Model<f32>,
    data: &TrainData<'_>,
    train: &mut [usize],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    train.shuffle(rng);
    let spec = model.spec().clone();
    let mut total = 0.0;
    for batch in train.chunks(cfg.batch_size) {
        let items: Vec<(usize, usize)> = batch
            .iter()
            .map(|&i| {
                let start = spec
                    .chunk_frames()
                    .map_or(0, |n| random_start(data.frames(i), n, rng));
                (i, start)
            })
            .collect();
        let inputs = data.inputs(&spec, &items)?;
        let targets: Vec<f32> = batch
            .iter()
            .map(|&i| data.target(i, cfg.criterion) as f32)
            .collect();

        let mut g = Graph::new();
        let vars: Vec<_> = inputs.into_iter().map(|t| g.constant(t)).collect();
        let pred = model.forward(&mut g, &vars, Mode::Train, rng)?;
        let target = g.constant(Tensor::new([batch.len()], targets)?);
        let loss = g.mse_loss(pred, target)?;
        g.backward(loss)?;
        let l = g.value(loss).data()[0] as f64;
        let store = model.store_mut();
        store.accumulate_grads(&g)?;
        sgd_step(store, cfg.lr);
        total += l * batch.len() as f64;
    }
    Ok(total / train.len() as f64)
}

/// Mini-batch SGD with early stopping on validation MSE. Returns the best-validation
/// weights. Randomness (batch order, chunk starts, dropout) comes from `cfg.seed`.
pub fn train(
    mut model: Model<f32>,
    data: &TrainData<'_>,
    split: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if split.validation.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    if split.train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut train_idx = split.train.clone();
    let val_truth: Vec<f64> = split
        .validation
        .iter()
        .map(|&i| data.target(i, cfg.criterion))
        .collect();

    let mut history = Vec::new();
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let mut initial = None;
    let mut above = 0;
    for epoch in 1..=cfg.max_epochs {
        let train_loss = run_epoch(&mut model, data, &mut train_idx, cfg, &mut rng)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("training loss is {train_loss}"),
            });
        }
        let first = *initial.get_or_insert(train_loss);
        above = if train_loss > DIVERGENCE_FACTOR * first {
            above + 1
        } else {
            0
        };
        if above >= DIVERGENCE_EPOCHS {
            return Err(Error::Diverged {
                epoch,
                reason: format!(
                    "training loss {train_loss:.4} above {DIVERGENCE_FACTOR}x the first epoch's {first:.4} for {above} epochs"
                ),
            });
        }
        let val_pred = predict_records(&model, data, &split.validation, false, cfg.batch_size)?;
        let val_loss = mse(&val_pred, &val_truth);
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("validation loss is {val_loss}"),
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.2 {
            best = (model.clone(), epoch, val_loss);
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        history,
        best_epoch: best.1,
        best_val_loss: best.2,
    })
}

/// Test-set R² with chunk-grid averaging for chunked models.
pub fn evaluate(
    model: &Model<f32>,
    data: &TrainData<'_>,
    test: &[usize],
    criterion: Criterion,
) -> Result<f64> {
    let pred = predict_records(model, data, test, true, 64)?;
    let truth: Vec<f64> = test.iter().map(|&i| data.target(i, criterion)).collect();
    r2(&pred, &truth)
}

/// Five-number summary; quartiles interpolate linearly between order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxStats {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("box statistics need at least one non-NaN value"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub r2: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: TrainConfig,
    pub seeds: Vec<SeedResult>,
    pub summary: BoxStats,
    pub parameter_count: usize,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub const ROWS_HEADER: &'static str = "seed\tcriterion\tmodel\tvalue\tr2";

    /// Tab-separated `seed criterion model value r2` lines, without a header.
    pub fn rows(&self) -> String {
        let mut s = String::new();
        for r in &self.seeds {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                r.seed,
                self.config.criterion,
                self.config.kind,
                self.config.value(),
                r.r2
            );
        }
        s
    }

    /// Human-readable report. Timing is left out so identical runs give identical text.
    pub fn text(&self) -> String {
        let b = self.summary;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "model {} / criterion {}",
            self.config.kind, self.config.criterion
        );
        for (k, v) in self.config.to_manifest().entries() {
            let _ = writeln!(s, "  {k} = {v}");
        }
        let _ = writeln!(s, "  parameters = {}", self.parameter_count);
        let _ = writeln!(s, "seed\tr2\tepochs\tbest_epoch\tbest_val_mse");
        for r in &self.seeds {
            let _ = writeln!(
                s,
                "{}\t{:.4}\t{}\t{}\t{:.5}",
                r.seed, r.r2, r.epochs, r.best_epoch, r.best_val_loss
            );
        }
        let _ = writeln!(
            s,
            "r2 min {:.4}  q1 {:.4}  median {:.4}  q3 {:.4}  max {:.4}",
            b.min, b.q1, b.median, b.q3, b.max
        );
        s
    }
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    /// Best-validation model per seed, in seed order.
    pub models: Vec<Model<f32>>,
}

/// Trains and evaluates one model per seed (seeds run in parallel).
pub fn run_experiment(
    data: &TrainData<'_>,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<ExperimentOutcome> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    cfg.validate()?;
    if split.test.len() < 2 {
        return Err(Error::invalid("test set needs at least two records"));
    }
    let started = Instant::now();
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..cfg.clone() };
            let model = Model::build(&cfg.model_spec())?;
            let out = train(model, data, split, &cfg)?;
            let r2 = evaluate(&out.model, data, &split.test, cfg.criterion)?;
            Ok((
                SeedResult {
                    seed,
                    r2,
                    epochs: out.history.len(),
                    best_epoch: out.best_epoch,
                    best_val_loss: out.best_val_loss,
                },
                out.model,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (results, models): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let summary = BoxStats::new(&results.iter().map(|r| r.r2).collect::<Vec<_>>())?;
    let parameter_count = models[0].count_parameters();
    Ok(ExperimentOutcome {
        report: ExperimentReport {
            config: cfg.clone(),
            seeds: results,
            summary,
            parameter_count,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
        models,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    ChunkSize,
    Resolution,
}

impl SweepKind {
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepKind::ChunkSize => vec![5.0, 10.0],
            SweepKind::Resolution => vec![400.0, 600.0, 900.0],
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::ChunkSize => "chunk",
            SweepKind::Resolution => "resolution",
        })
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chunk" => Ok(SweepKind::ChunkSize),
            "resolution" => Ok(SweepKind::Resolution),
            _ => Err(Error::invalid(format!(
                "unknown sweep {s:?}; expected chunk or resolution"
            ))),
        }
    }
}

/// `base` with the swept quantity set to `value`.
pub fn sweep_config(kind: SweepKind, base: &TrainConfig, value: f64) -> Result<TrainConfig> {
    let mut cfg = base.clone();
    match kind {
        SweepKind::ChunkSize if base.kind.is_chunked() => cfg.chunk_seconds = Some(value),
        SweepKind::Resolution if !base.kind.is_chunked() => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::invalid(format!(
                    "resolution {value} is not a positive integer"
                )));
            }
            cfg.matrix_resolution = Some(value as usize);
        }
        _ => {
            return Err(Error::invalid(format!(
                "a {kind} sweep does not apply to {}",
                base.kind
            )))
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One experiment per value of the swept quantity.
pub fn sweep(
    kind: SweepKind,
    values: &[f64],
    base: &TrainConfig,
    data: &mut TrainData<'_>,
    split: &DatasetSplit,
    seeds: &[u64],
    matrix_budget: usize,
) -> Result<Vec<ExperimentOutcome>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let cfgs = values
        .iter()
        .map(|&v| sweep_config(kind, base, v))
        .collect::<Result<Vec<_>>>()?;
    cfgs.iter()
        .map(|cfg| {
            if let Some(s) = cfg.matrix_resolution {
                data.use_resolution(s, matrix_budget)?;
            }
            run_experiment(data, split, cfg, seeds)
        })
        .collect()
}

/// Median and quartiles per swept value, one line each.
pub fn sweep_table(kind: SweepKind, reports: &[&ExperimentReport]) -> String {
    let mut s = format!("{kind}\tmodel\tcriterion\tseeds\tq1\tmedian\tq3\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            r.config.value(),
            r.config.kind,
            r.config.criterion,
            r.seeds.len(),
            r.summary.q1,
            r.summary.median,
            r.summary.q3
        );
    }
    s
}
