//! Assessment networks: SIConvNet, JointEmbedNet, DistMatNet and the contour-only
//! PCConvNet baseline.
//!
//! Every model maps a batch to one rating per item (`[B]`). Chunked models take
//! normalized pitch sequences `[B, C, N]`; DistMatNet takes `[B, 1, S, S]` matrices.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Criterion;
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::signal::{chunk_len, FRAME_RATE};
use crate::tensorcore::{
    checkpoint, BufferId, Graph, Mode, ParamId, ParamStore, Real, RunningStats, Tensor, Var, BN_EPS,
    BN_MOMENTUM, LEAKY_SLOPE,
};

pub const ENCODER_CHANNELS: [usize; 4] = [4, 8, 16, 16];
pub const ENCODER_KERNEL: usize = 7;
pub const ENCODER_STRIDE: usize = 3;
pub const ENCODER_PADDING: usize = 3;

pub const DIST_CHANNELS: usize = 4;
pub const DIST_BLOCKS: usize = 3;
pub const DIST_POOL: usize = 3;
pub const DIST_GRID: usize = 11;
pub const DIST_HIDDEN: usize = 128;
pub const DROPOUT: f64 = 0.2;
/// Initial batch-norm gain on the pooled matrix features. Unit gain hands fc1
/// 484 unit-variance inputs, and a 0.05 step then overshoots.
pub const POOL_NORM_GAIN: f64 = 0.1;
/// Smallest matrix the signal side will build; two 3x3 poolings need only 9.
pub const MIN_MATRIX_RESOLUTION: usize = crate::signal::MIN_RESOLUTION;

pub const COSINE_EPS: f64 = 1e-8;

/// Input frames seen by one output step of the convolutional encoder.
pub fn encoder_receptive_field() -> usize {
    let mut rf = 1;
    let mut jump = 1;
    for _ in ENCODER_CHANNELS {
        rf += (ENCODER_KERNEL - 1) * jump;
        jump *= ENCODER_STRIDE;
    }
    rf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    SiConvNet,
    JointEmbed,
    DistMat,
    PcBaseline,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::SiConvNet,
        ModelKind::JointEmbed,
        ModelKind::DistMat,
        ModelKind::PcBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SiConvNet => "si_convnet",
            ModelKind::JointEmbed => "joint_embed",
            ModelKind::DistMat => "dist_mat",
            ModelKind::PcBaseline => "pc_baseline",
        }
    }

    /// Whether the model reads contour chunks (as opposed to a distance matrix).
    pub fn is_chunked(self) -> bool {
        self != ModelKind::DistMat
    }

    /// Number of input tensors `forward` expects.
    pub fn arity(self) -> usize {
        if self == ModelKind::JointEmbed {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown model {s:?}; expected si_convnet, joint_embed, dist_mat or pc_baseline"
            ))
        })
    }
}

/// What to build. Chunked kinds need `chunk_seconds`; `dist_mat` needs
/// `matrix_resolution`. Supplying the other one is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub chunk_seconds: Option<f64>,
    pub matrix_resolution: Option<usize>,
    pub criterion: Criterion,
    pub seed: u64,
}

impl ModelSpec {
    pub fn chunked(kind: ModelKind, chunk_seconds: f64, criterion: Criterion, seed: u64) -> Self {
        Self {
            kind,
            chunk_seconds: Some(chunk_seconds),
            matrix_resolution: None,
            criterion,
            seed,
        }
    }

    pub fn dist_mat(resolution: usize, criterion: Criterion, seed: u64) -> Self {
        Self {
            kind: ModelKind::DistMat,
            chunk_seconds: None,
            matrix_resolution: Some(resolution),
            criterion,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind.is_chunked(), self.chunk_seconds, self.matrix_resolution) {
            (true, Some(secs), None) => {
                let n = chunk_len(secs, FRAME_RATE);
                let rf = encoder_receptive_field();
                if !(secs > 0.0) || n < rf {
                    return Err(Error::invalid(format!(
                        "{}: chunk of {secs} s is {n} frames, shorter than the {rf}-frame receptive field",
                        self.kind
                    )));
                }
                Ok(())
            }
            (false, None, Some(s)) if s >= MIN_MATRIX_RESOLUTION => Ok(()),
            (false, None, Some(s)) => Err(Error::invalid(format!(
                "dist_mat: resolution {s} below the minimum {MIN_MATRIX_RESOLUTION}"
            ))),
            (true, _, _) => Err(Error::invalid(format!(
                "{} takes a chunk length and no matrix resolution",
                self.kind
            ))),
            (false, _, _) => Err(Error::invalid(
                "dist_mat takes a matrix resolution and no chunk length",
            )),
        }
    }

    /// Chunk length in frames for chunked models.
    pub fn chunk_frames(&self) -> Option<usize> {
        self.chunk_seconds.map(|s| chunk_len(s, FRAME_RATE))
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("kind", self.kind)
            .set("criterion", self.criterion)
            .set("seed", self.seed);
        if let Some(s) = self.chunk_seconds {
            m.set("chunk_seconds", s);
        }
        if let Some(s) = self.matrix_resolution {
            m.set("matrix_resolution", s);
        }
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let spec = Self {
            kind: m.parsed("kind")?,
            chunk_seconds: m
                .get("chunk_seconds")
                .map(|_| m.parsed("chunk_seconds"))
                .transpose()?,
            matrix_resolution: m
                .get("matrix_resolution")
                .map(|_| m.parsed("matrix_resolution"))
                .transpose()?,
            criterion: m.parsed("criterion")?,
            seed: m.parsed("seed")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
struct ConvBlock {
    w: ParamId,
    b: ParamId,
    gamma: ParamId,
    beta: ParamId,
    mean: BufferId,
    var: BufferId,
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
    mean: BufferId,
    var: BufferId,
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Residual {
    a: Dense,
    b: Dense,
}

#[derive(Debug, Clone)]
enum Arch {
    Conv {
        encoder: Vec<ConvBlock>,
        head: Dense,
    },
    Joint {
        score: Vec<ConvBlock>,
        perf: Vec<ConvBlock>,
    },
    Matrix {
        stem: Dense,
        blocks: Vec<Residual>,
        norm: Norm,
        fc1: Dense,
        fc2: Dense,
    },
}

fn add_encoder<F: Real, R: Rng>(
    store: &mut ParamStore<F>,
    prefix: &str,
    in_channels: usize,
    rng: &mut R,
) -> Vec<ConvBlock> {
    let mut c_in = in_channels;
    ENCODER_CHANNELS
        .iter()
        .enumerate()
        .map(|(i, &c_out)| {
            let name = |s: &str| format!("{prefix}.block{i}.{s}");
            let fan_in = c_in * ENCODER_KERNEL;
            let block = ConvBlock {
                w: store.add_uniform(
                    name("conv.weight"),
                    vec![c_out, c_in, ENCODER_KERNEL],
                    fan_in,
                    rng,
                ),
                b: store.add_uniform(name("conv.bias"), vec![c_out], fan_in, rng),
                gamma: store.add(name("bn.weight"), Tensor::full([c_out], F::one())),
                beta: store.add(name("bn.bias"), Tensor::zeros([c_out])),
                mean: store.add_buffer(name("bn.running_mean"), Tensor::zeros([c_out])),
                var: store.add_buffer(name("bn.running_var"), Tensor::full([c_out], F::one())),
            };
            c_in = c_out;
            block
        })
        .collect()
}

fn add_dense<F: Real, R: Rng>(
    store: &mut ParamStore<F>,
    name: &str,
    f_in: usize,
    f_out: usize,
    rng: &mut R,
) -> Dense {
    Dense {
        w: store.add_uniform(format!("{name}.weight"), vec![f_out, f_in], f_in, rng),
        b: store.add_uniform(format!("{name}.bias"), vec![f_out], f_in, rng),
    }
}

fn add_conv2d<F: Real, R: Rng>(
    store: &mut ParamStore<F>,
    name: &str,
    c_in: usize,
    c_out: usize,
    rng: &mut R,
) -> Dense {
    let fan_in = c_in * 9;
    Dense {
        w: store.add_uniform(format!("{name}.weight"), vec![c_out, c_in, 3, 3], fan_in, rng),
        b: store.add_uniform(format!("{name}.bias"), vec![c_out], fan_in, rng),
    }
}

/// A built network: its spec, parameters and running statistics.
#[derive(Debug, Clone)]
pub struct Model<F: Real> {
    spec: ModelSpec,
    store: ParamStore<F>,
    arch: Arch,
}

impl<F: Real> Model<F> {
    /// Builds and initializes the network; initialization is seeded by `spec.seed`.
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut store = ParamStore::new();
        let arch = match spec.kind {
            ModelKind::SiConvNet | ModelKind::PcBaseline => {
                let c_in = if spec.kind == ModelKind::SiConvNet { 2 } else { 1 };
                let encoder = add_encoder(&mut store, "encoder", c_in, &mut rng);
                let head = add_dense(&mut store, "head", ENCODER_CHANNELS[3], 1, &mut rng);
                Arch::Conv { encoder, head }
            }
            ModelKind::JointEmbed => Arch::Joint {
                score: add_encoder(&mut store, "score_encoder", 1, &mut rng),
                perf: add_encoder(&mut store, "perf_encoder", 1, &mut rng),
            },
            ModelKind::DistMat => {
                let stem = add_conv2d(&mut store, "stem", 1, DIST_CHANNELS, &mut rng);
                let blocks = (0..DIST_BLOCKS)
                    .map(|i| Residual {
                        a: add_conv2d(
                            &mut store,
                            &format!("res{i}.conv1"),
                            DIST_CHANNELS,
                            DIST_CHANNELS,
                            &mut rng,
                        ),
                        b: add_conv2d(
                            &mut store,
                            &format!("res{i}.conv2"),
                            DIST_CHANNELS,
                            DIST_CHANNELS,
                            &mut rng,
                        ),
                    })
                    .collect();
                let flat = DIST_CHANNELS * DIST_GRID * DIST_GRID;
                let norm = Norm {
                    gamma: store.add("pool.bn.weight", Tensor::full([flat], F::lit(POOL_NORM_GAIN))),
                    beta: store.add("pool.bn.bias", Tensor::zeros([flat])),
                    mean: store.add_buffer("pool.bn.running_mean", Tensor::zeros([flat])),
                    var: store.add_buffer("pool.bn.running_var", Tensor::full([flat], F::one())),
                };
                let fc1 = add_dense(&mut store, "fc1", flat, DIST_HIDDEN, &mut rng);
                let fc2 = add_dense(&mut store, "fc2", DIST_HIDDEN, 1, &mut rng);
                Arch::Matrix {
                    stem,
                    blocks,
                    norm,
                    fc1,
                    fc2,
                }
            }
        };
        Ok(Self {
            spec: spec.clone(),
            store,
            arch,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn store(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    /// Trainable scalar count.
    pub fn count_parameters(&self) -> usize {
        self.store.num_trainable()
    }

    fn check_inputs(&self, g: &Graph<F>, inputs: &[Var]) -> Result<()> {
        let kind = self.spec.kind;
        if inputs.len() != kind.arity() {
            return Err(Error::invalid(format!(
                "{kind} takes {} input tensor(s), got {}",
                kind.arity(),
                inputs.len()
            )));
        }
        for &v in inputs {
            let shape = g.value(v).shape();
            let ok = match (kind, shape) {
                (ModelKind::SiConvNet, &[_, 2, n]) => n >= encoder_receptive_field(),
                (ModelKind::PcBaseline | ModelKind::JointEmbed, &[_, 1, n]) => n >= encoder_receptive_field(),
                (ModelKind::DistMat, &[_, 1, h, w]) => h == w && Some(h) == self.spec.matrix_resolution,
                _ => false,
            };
            if !ok {
                let want = match kind {
                    ModelKind::SiConvNet => format!("[B, 2, N >= {}]", encoder_receptive_field()),
                    ModelKind::DistMat => {
                        let s = self.spec.matrix_resolution.unwrap_or(0);
                        format!("[B, 1, {s}, {s}]")
                    }
                    _ => format!("[B, 1, N >= {}]", encoder_receptive_field()),
                };
                return Err(Error::shape(format!("{kind} expects {want}, got {shape:?}")));
            }
        }
        if kind == ModelKind::JointEmbed && g.value(inputs[0]).shape() != g.value(inputs[1]).shape() {
            return Err(Error::shape("joint_embed score and performance shapes differ"));
        }
        Ok(())
    }

    fn encode(
        store: &mut ParamStore<F>,
        g: &mut Graph<F>,
        vars: &[Var],
        blocks: &[ConvBlock],
        input: Var,
        mode: Mode,
    ) -> Result<Var> {
        let mut h = input;
        for blk in blocks {
            h = g.conv1d(h, vars[blk.w.0], vars[blk.b.0], ENCODER_STRIDE, ENCODER_PADDING)?;
            let (mean, var) = store.buffer_pair_mut(blk.mean, blk.var);
            h = g.batchnorm1d(
                h,
                vars[blk.gamma.0],
                vars[blk.beta.0],
                RunningStats { mean, var },
                mode,
                BN_EPS,
                BN_MOMENTUM,
            )?;
            h = g.relu(h)?;
        }
        g.mean_last(h)
    }

    /// Adds the network to `g` and returns the `[B]` prediction node. Parameters are
    /// bound as the graph's trainable leaves, so after `g.backward(loss)` the caller
    /// can collect gradients with `store_mut().accumulate_grads(g)`. Train mode
    /// updates batch-norm running statistics and samples dropout masks from `rng`.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        g: &mut Graph<F>,
        inputs: &[Var],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        self.check_inputs(g, inputs)?;
        let batch = g.value(inputs[0]).shape()[0];
        let vars = g.bind(&self.store);
        let store = &mut self.store;
        let out = match &self.arch {
            Arch::Conv { encoder, head } => {
                let emb = Self::encode(store, g, &vars, encoder, inputs[0], mode)?;
                let y = g.linear(emb, vars[head.w.0], vars[head.b.0])?;
                g.leaky_relu(y, LEAKY_SLOPE)?
            }
            Arch::Joint { score, perf } => {
                let e_perf = Self::encode(store, g, &vars, perf, inputs[0], mode)?;
                let e_score = Self::encode(store, g, &vars, score, inputs[1], mode)?;
                return g.cosine_similarity(e_score, e_perf, COSINE_EPS);
            }
            Arch::Matrix {
                stem,
                blocks,
                norm,
                fc1,
                fc2,
            } => {
                let mut h = g.conv2d(inputs[0], vars[stem.w.0], vars[stem.b.0], 1, 1)?;
                h = g.relu(h)?;
                for (i, blk) in blocks.iter().enumerate() {
                    if i > 0 {
                        h = g.maxpool2d(h, DIST_POOL)?;
                        h = g.dropout(h, DROPOUT, mode, rng)?;
                    }
                    let mut r = g.conv2d(h, vars[blk.a.w.0], vars[blk.a.b.0], 1, 1)?;
                    r = g.relu(r)?;
                    r = g.conv2d(r, vars[blk.b.w.0], vars[blk.b.b.0], 1, 1)?;
                    h = g.add(r, h)?;
                    h = g.relu(h)?;
                }
                h = g.adaptive_avg_pool2d(h, DIST_GRID, DIST_GRID)?;
                // centre the pooled features; plain SGD crawls against their shared offset
                let flat = DIST_CHANNELS * DIST_GRID * DIST_GRID;
                h = g.reshape(h, vec![batch, flat, 1])?;
                let (mean, var) = store.buffer_pair_mut(norm.mean, norm.var);
                h = g.batchnorm1d(
                    h,
                    vars[norm.gamma.0],
                    vars[norm.beta.0],
                    RunningStats { mean, var },
                    mode,
                    BN_EPS,
                    BN_MOMENTUM,
                )?;
                h = g.reshape(h, vec![batch, flat])?;
                h = g.linear(h, vars[fc1.w.0], vars[fc1.b.0])?;
                h = g.relu(h)?;
                h = g.dropout(h, DROPOUT, mode, rng)?;
                g.linear(h, vars[fc2.w.0], vars[fc2.b.0])?
            }
        };
        g.reshape(out, vec![batch])
    }

    /// Eval-mode predictions, one per batch item.
    pub fn predict(&self, inputs: &[Tensor<F>]) -> Result<Vec<F>> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        // eval mode neither mutates statistics nor draws random numbers
        let mut scratch = self.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = scratch.forward(&mut g, &vars, Mode::Eval, &mut rng)?;
        Ok(g.value(y).data().to_vec())
    }

    /// Writes the checkpoint to `path` and the spec manifest beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.store, path)?;
        let mut m = self.spec.to_manifest();
        m.set("parameter_count", self.count_parameters())
            .set("dtype", F::DTYPE.name());
        let mpath = manifest_path(path);
        std::fs::write(&mpath, m.to_string()).map_err(|e| Error::io(mpath.display().to_string(), e))
    }

    /// Rebuilds a model from a checkpoint and its manifest. Values are converted to
    /// `F` if the checkpoint was written at the other precision.
    pub fn load(path: &Path) -> Result<Self> {
        let mpath = manifest_path(path);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(mpath.display().to_string(), e))?;
        let m: Manifest = text.parse()?;
        let spec = ModelSpec::from_manifest(&m)?;
        let mut model = Self::build(&spec)?;
        if let Some(n) = m.get("parameter_count") {
            if n != model.count_parameters().to_string() {
                return Err(Error::Checkpoint(format!(
                    "manifest reports {n} parameters, {} has {}",
                    spec.kind,
                    model.count_parameters()
                )));
            }
        }
        let stored = checkpoint::load::<F>(path)?;
        model.store.load_from(&stored)?;
        Ok(model)
    }
}

/// `<checkpoint>.manifest`.
pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut os = checkpoint.as_os_str().to_owned();
    os.push(".manifest");
    PathBuf::from(os)
}
