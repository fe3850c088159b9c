//! Convolutional autoencoder over preprocessed map rasters.
//!
//! The encoder halves the spatial resolution at every stage (stride-2
//! convolutions), flattens, and projects to a dense latent vector; the
//! decoder mirrors it with transposed convolutions and ends in a sigmoid
//! so reconstructions live in [0, 1] like the binary-mask inputs. The
//! latent vector doubles as the retrieval embedding.
//!
//! Everything is deterministic: parameter init and batch shuffling use
//! counter-based RNG streams derived from the config seed, and training
//! loops iterate in fixed order. Two runs from the same inputs produce
//! bit-identical parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

// sqrt on concrete floats needs the trait under no_std.
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

use crate::autodiff::{adam_step, AdamConfig, AdamState, AutodiffError, Graph, VarId};
use crate::digest::{canonical_json, f32_le_bytes, Digest};
use crate::imgproc::PreprocessedMap;
use crate::index::Embedding;
use crate::tensor::{Scalar, Tensor};
use crate::time::Timestamp;

/// Leading bytes of the serialized parameter payload.
pub const CAE_MAGIC: &[u8; 4] = b"CAE1";

/// Offset applied to the config seed for the shuffle RNG stream, so
/// init and shuffling never share a sequence.
const SHUFFLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaeConfig {
    pub in_channels: usize,
    /// Input rasters are square: input_hw x input_hw.
    pub input_hw: usize,
    /// Output channels of each encoder stage; the decoder mirrors them.
    pub enc_channels: Vec<usize>,
    pub latent_dim: usize,
    pub kernel: usize,
    pub stride: usize,
    pub seed: u64,
}

impl Default for CaeConfig {
    fn default() -> Self {
        CaeConfig {
            in_channels: 2,
            input_hw: 256,
            enc_channels: alloc::vec![32, 64, 128, 256],
            latent_dim: 256,
            kernel: 4,
            stride: 2,
            seed: 42,
        }
    }
}

impl CaeConfig {
    pub fn stages(&self) -> usize {
        self.enc_channels.len()
    }

    /// Same-ratio padding: with pad = (kernel - stride) / 2 a stage maps
    /// h -> h / stride exactly, and the transposed stage maps back.
    pub fn pad(&self) -> usize {
        (self.kernel - self.stride) / 2
    }

    /// Spatial side length at the bottleneck.
    pub fn bottleneck_hw(&self) -> usize {
        let mut hw = self.input_hw;
        for _ in 0..self.stages() {
            hw /= self.stride;
        }
        hw
    }

    /// Flattened size feeding the latent projection.
    pub fn flat_dim(&self) -> usize {
        self.enc_channels.last().copied().unwrap_or(0) * self.bottleneck_hw() * self.bottleneck_hw()
    }

    pub fn validate(&self) -> Result<(), CaeError> {
        let bad = |msg: String| Err(CaeError::Config(msg));
        if self.in_channels == 0 || self.latent_dim == 0 {
            return bad(format!(
                "in_channels ({}) and latent_dim ({}) must be positive",
                self.in_channels, self.latent_dim
            ));
        }
        if self.enc_channels.is_empty() || self.enc_channels.contains(&0) {
            return bad(String::from("enc_channels must be non-empty, all positive"));
        }
        if self.stride == 0 || self.kernel < self.stride {
            return bad(format!(
                "kernel ({}) must be >= stride ({}) and stride positive",
                self.kernel, self.stride
            ));
        }
        if (self.kernel - self.stride) % 2 != 0 {
            return bad(format!(
                "kernel - stride must be even for same-ratio padding, got {} - {}",
                self.kernel, self.stride
            ));
        }
        let mut hw = self.input_hw;
        for stage in 0..self.stages() {
            if hw % self.stride != 0 || hw / self.stride == 0 {
                return bad(format!(
                    "input_hw {} is not divisible by stride {} across {} stages \
                     (stage {stage} sees {hw})",
                    self.input_hw,
                    self.stride,
                    self.stages()
                ));
            }
            hw /= self.stride;
        }
        if hw < 1 {
            return bad(format!("bottleneck collapsed to {hw}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CaeError {
    Config(String),
    Autodiff(AutodiffError),
    EmptyDataset,
    /// Batch tensor does not match the config's expected input shape.
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    /// Rasters in one batch differ in size, channels, or preprocess config.
    MixedRasters { detail: String },
    /// Training loss went non-finite; the step was not applied.
    Diverged { epoch: usize, loss: f64 },
}

impl fmt::Display for CaeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaeError::Config(msg) => write!(f, "invalid config: {msg}"),
            CaeError::Autodiff(e) => write!(f, "autodiff failure: {e}"),
            CaeError::EmptyDataset => write!(f, "training data must contain at least one raster"),
            CaeError::ShapeMismatch { expected, got } => {
                write!(f, "batch shape {got:?}, expected {expected:?}")
            }
            CaeError::MixedRasters { detail } => write!(f, "mixed rasters in batch: {detail}"),
            CaeError::Diverged { epoch, loss } => {
                write!(f, "training diverged at epoch {epoch} (loss {loss})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CaeError {}

impl From<AutodiffError> for CaeError {
    fn from(e: AutodiffError) -> Self {
        CaeError::Autodiff(e)
    }
}

/// One convolutional stage: weight plus per-channel bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvStage<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All trainable parameters. Tensor iteration order (the "fill order")
/// is fixed: encoder stages, latent projection, latent expansion,
/// decoder stages — weight before bias within each. Serialization,
/// hashing, and optimizer state all rely on this order.
#[derive(Clone, Debug, PartialEq)]
pub struct CaeParams<T> {
    pub enc: Vec<ConvStage<T>>,
    pub to_latent: Dense<T>,
    pub from_latent: Dense<T>,
    pub dec: Vec<ConvStage<T>>,
}

fn kaiming_uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> =
        (0..n).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape/product always consistent here")
}

impl<T: Scalar> CaeParams<T> {
    /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    /// Draws happen in fill order from a ChaCha8 stream seeded by
    /// `cfg.seed`, in f64, then cast — so every float width sees the
    /// same underlying values.
    pub fn init(cfg: &CaeConfig) -> Result<Self, CaeError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let k = cfg.kernel;
        let mut enc = Vec::with_capacity(cfg.stages());
        let mut ci = cfg.in_channels;
        for &co in &cfg.enc_channels {
            enc.push(ConvStage {
                weight: kaiming_uniform(&mut rng, &[co, ci, k, k], ci * k * k),
                bias: Tensor::zeros(&[co]),
            });
            ci = co;
        }
        let flat = cfg.flat_dim();
        let to_latent = Dense {
            weight: kaiming_uniform(&mut rng, &[flat, cfg.latent_dim], flat),
            bias: Tensor::zeros(&[cfg.latent_dim]),
        };
        let from_latent = Dense {
            weight: kaiming_uniform(&mut rng, &[cfg.latent_dim, flat], cfg.latent_dim),
            bias: Tensor::zeros(&[flat]),
        };
        let mut dec = Vec::with_capacity(cfg.stages());
        let mut ci = *cfg.enc_channels.last().expect("validated non-empty");
        for i in (0..cfg.stages()).rev() {
            let co = if i == 0 { cfg.in_channels } else { cfg.enc_channels[i - 1] };
            dec.push(ConvStage {
                // Transposed-conv weights are [in, out, k, k].
                weight: kaiming_uniform(&mut rng, &[ci, co, k, k], ci * k * k),
                bias: Tensor::zeros(&[co]),
            });
            ci = co;
        }
        Ok(CaeParams { enc, to_latent, from_latent, dec })
    }

    /// Parameter tensors in fill order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for s in &self.enc {
            out.push(&s.weight);
            out.push(&s.bias);
        }
        out.push(&self.to_latent.weight);
        out.push(&self.to_latent.bias);
        out.push(&self.from_latent.weight);
        out.push(&self.from_latent.bias);
        for s in &self.dec {
            out.push(&s.weight);
            out.push(&s.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for s in &mut self.enc {
            out.push(&mut s.weight);
            out.push(&mut s.bias);
        }
        out.push(&mut self.to_latent.weight);
        out.push(&mut self.to_latent.bias);
        out.push(&mut self.from_latent.weight);
        out.push(&mut self.from_latent.bias);
        for s in &mut self.dec {
            out.push(&mut s.weight);
            out.push(&mut s.bias);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> CaeParams<U> {
        let conv = |s: &ConvStage<T>| ConvStage { weight: s.weight.cast(), bias: s.bias.cast() };
        let dense = |d: &Dense<T>| Dense { weight: d.weight.cast(), bias: d.bias.cast() };
        CaeParams {
            enc: self.enc.iter().map(conv).collect(),
            to_latent: dense(&self.to_latent),
            from_latent: dense(&self.from_latent),
            dec: self.dec.iter().map(conv).collect(),
        }
    }

    /// Rebuilds params from tensors laid out in fill order (the inverse
    /// of [`CaeParams::tensors`]); used by gradient checking.
    pub fn from_ordered_tensors(
        cfg: &CaeConfig,
        mut tensors: impl Iterator<Item = Tensor<T>>,
    ) -> Option<Self> {
        let mut next = || tensors.next();
        let mut enc = Vec::with_capacity(cfg.stages());
        for _ in 0..cfg.stages() {
            enc.push(ConvStage { weight: next()?, bias: next()? });
        }
        let to_latent = Dense { weight: next()?, bias: next()? };
        let from_latent = Dense { weight: next()?, bias: next()? };
        let mut dec = Vec::with_capacity(cfg.stages());
        for _ in 0..cfg.stages() {
            dec.push(ConvStage { weight: next()?, bias: next()? });
        }
        Some(CaeParams { enc, to_latent, from_latent, dec })
    }
}

/// Fill-order tensor shapes for a config — the layout contract of the
/// weight block in params files and of [`CaeParams::tensors`].
pub fn cae_tensor_shapes(cfg: &CaeConfig) -> Vec<Vec<usize>> {
    let k = cfg.kernel;
    let mut shapes = Vec::new();
    let mut ci = cfg.in_channels;
    for &co in &cfg.enc_channels {
        shapes.push(vec![co, ci, k, k]);
        shapes.push(vec![co]);
        ci = co;
    }
    let flat = cfg.flat_dim();
    shapes.push(vec![flat, cfg.latent_dim]);
    shapes.push(vec![cfg.latent_dim]);
    shapes.push(vec![cfg.latent_dim, flat]);
    shapes.push(vec![flat]);
    let mut ci = *cfg.enc_channels.last().expect("validated non-empty");
    for i in (0..cfg.stages()).rev() {
        let co = if i == 0 { cfg.in_channels } else { cfg.enc_channels[i - 1] };
        shapes.push(vec![ci, co, k, k]);
        shapes.push(vec![co]);
        ci = co;
    }
    shapes
}

/// Rebuilds parameters from one flat fill-order value stream (the weight
/// block of a `CAE1` file). The stream length must match exactly.
pub fn cae_params_from_flat(cfg: &CaeConfig, values: &[f32]) -> Result<CaeParams<f32>, CaeError> {
    cfg.validate()?;
    let shapes = cae_tensor_shapes(cfg);
    let want: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if values.len() != want {
        return Err(CaeError::ShapeMismatch { expected: vec![want], got: vec![values.len()] });
    }
    let mut off = 0;
    let mut tensors = Vec::with_capacity(shapes.len());
    for shape in &shapes {
        let n: usize = shape.iter().product();
        let t = Tensor::new(shape, values[off..off + n].to_vec())
            .expect("length chunked to match shape");
        tensors.push(t);
        off += n;
    }
    CaeParams::from_ordered_tensors(cfg, tensors.into_iter())
        .ok_or_else(|| CaeError::Config("tensor stream shorter than layout".into()))
}

/// Graph variable ids for one insertion of the parameters, in the same
/// structure as [`CaeParams`].
#[derive(Clone, Debug)]
pub struct CaeVars {
    pub enc: Vec<(VarId, VarId)>,
    pub to_latent: (VarId, VarId),
    pub from_latent: (VarId, VarId),
    pub dec: Vec<(VarId, VarId)>,
}

impl CaeVars {
    /// Groups a fill-ordered id slice (as handed out by gradient
    /// checking) back into the layer structure.
    pub fn from_ordered_ids(stages: usize, ids: &[VarId]) -> Option<Self> {
        if ids.len() != 4 * stages + 4 {
            return None;
        }
        let mut it = ids.iter().copied();
        let mut pair = || Some((it.next()?, it.next()?));
        let mut enc = Vec::with_capacity(stages);
        for _ in 0..stages {
            enc.push(pair()?);
        }
        let to_latent = pair()?;
        let from_latent = pair()?;
        let mut dec = Vec::with_capacity(stages);
        for _ in 0..stages {
            dec.push(pair()?);
        }
        Some(CaeVars { enc, to_latent, from_latent, dec })
    }
}

/// Inserts every parameter tensor as a graph leaf, in fill order.
pub fn insert_params<T: Scalar>(
    g: &mut Graph<T>,
    params: &CaeParams<T>,
    tracked: bool,
) -> CaeVars {
    let conv = |g: &mut Graph<T>, s: &ConvStage<T>| {
        (g.leaf(s.weight.clone(), tracked), g.leaf(s.bias.clone(), tracked))
    };
    let enc = params.enc.iter().map(|s| conv(g, s)).collect();
    let to_latent =
        (g.leaf(params.to_latent.weight.clone(), tracked), g.leaf(params.to_latent.bias.clone(), tracked));
    let from_latent = (
        g.leaf(params.from_latent.weight.clone(), tracked),
        g.leaf(params.from_latent.bias.clone(), tracked),
    );
    let dec = params.dec.iter().map(|s| conv(g, s)).collect();
    CaeVars { enc, to_latent, from_latent, dec }
}

/// Builds the encoder onto the graph: conv+ReLU stages, flatten, then a
/// linear projection (no activation — embeddings may be negative).
pub fn encode<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &CaeConfig,
    vars: &CaeVars,
    x: VarId,
) -> Result<VarId, AutodiffError> {
    let n = g.value(x).shape()[0];
    let mut h = x;
    for &(w, b) in &vars.enc {
        h = g.conv2d(h, w, b, cfg.stride, cfg.pad())?;
        h = g.relu(h);
    }
    let flat = g.reshape(h, &[n, cfg.flat_dim()])?;
    g.linear(flat, vars.to_latent.0, vars.to_latent.1)
}

/// Builds the decoder: dense expansion, reshape to the bottleneck grid,
/// transposed conv stages (ReLU between, sigmoid at the output).
pub fn decode<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &CaeConfig,
    vars: &CaeVars,
    z: VarId,
) -> Result<VarId, AutodiffError> {
    let n = g.value(z).shape()[0];
    let mut h = g.linear(z, vars.from_latent.0, vars.from_latent.1)?;
    h = g.relu(h);
    let c = *cfg.enc_channels.last().expect("validated non-empty");
    let bhw = cfg.bottleneck_hw();
    h = g.reshape(h, &[n, c, bhw, bhw])?;
    let last = vars.dec.len() - 1;
    for (i, &(w, b)) in vars.dec.iter().enumerate() {
        h = g.conv2d_transpose(h, w, b, cfg.stride, cfg.pad())?;
        h = if i == last { g.sigmoid(h) } else { g.relu(h) };
    }
    Ok(h)
}

pub fn reconstruct<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &CaeConfig,
    vars: &CaeVars,
    x: VarId,
) -> Result<VarId, AutodiffError> {
    let z = encode(g, cfg, vars, x)?;
    decode(g, cfg, vars, z)
}

/// Stacks rasters into an `[n, c, h, w]` batch tensor. All rasters must
/// agree in size, channel count, and preprocess config.
pub fn maps_to_batch(maps: &[&PreprocessedMap]) -> Result<Tensor<f32>, CaeError> {
    let first = maps.first().ok_or(CaeError::EmptyDataset)?;
    let mut data =
        Vec::with_capacity(maps.len() * first.data.len());
    for m in maps {
        if (m.width, m.height, m.channels) != (first.width, first.height, first.channels) {
            return Err(CaeError::MixedRasters {
                detail: format!(
                    "{} is {}x{}x{}, {} is {}x{}x{}",
                    m.source_id, m.width, m.height, m.channels,
                    first.source_id, first.width, first.height, first.channels
                ),
            });
        }
        if m.config_hash != first.config_hash {
            return Err(CaeError::MixedRasters {
                detail: format!(
                    "{} and {} use different preprocess configs",
                    m.source_id, first.source_id
                ),
            });
        }
        data.extend_from_slice(&m.data);
    }
    Tensor::new(
        &[maps.len(), first.channels as usize, first.height as usize, first.width as usize],
        data,
    )
    .map_err(|e| CaeError::Autodiff(AutodiffError::Tensor(e)))
}

fn check_batch(cfg: &CaeConfig, batch: &Tensor<f32>) -> Result<(), CaeError> {
    let expected =
        alloc::vec![batch.shape().first().copied().unwrap_or(0), cfg.in_channels, cfg.input_hw, cfg.input_hw];
    if batch.shape().len() != 4 || batch.shape()[1..] != expected[1..] || expected[0] == 0 {
        return Err(CaeError::ShapeMismatch { expected, got: batch.shape().to_vec() });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-3, batch_size: 8, epochs: 30 }
    }
}

/// One epoch's record. `wall_time_s` is measured only with std; the
/// training math never depends on it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainLog {
    pub epoch: usize,
    pub loss: f64,
    pub wall_time_s: Option<f64>,
}

/// Trains by MSE reconstruction with Adam. Returns the final parameters
/// and per-epoch logs; `on_epoch` fires after each epoch for progress
/// reporting. Deterministic for fixed inputs and config.
pub fn cae_train(
    cfg: &CaeConfig,
    data: &Tensor<f32>,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainLog),
) -> Result<(CaeParams<f32>, Vec<TrainLog>), CaeError> {
    cfg.validate()?;
    check_batch(cfg, data)?;
    if tc.batch_size == 0 {
        return Err(CaeError::Config(String::from("batch_size must be at least 1")));
    }
    let n = data.shape()[0];
    let chw = cfg.in_channels * cfg.input_hw * cfg.input_hw;
    let mut params = CaeParams::<f32>::init(cfg)?;
    let mut state = AdamState::new(&params.tensors());
    let acfg = AdamConfig { lr: tc.lr, ..AdamConfig::default() };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..n).collect();
    let mut logs = Vec::with_capacity(tc.epochs);

    for epoch in 1..=tc.epochs {
        #[cfg(feature = "std")]
        let started = std::time::Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(tc.batch_size) {
            let mut batch_data = Vec::with_capacity(chunk.len() * chw);
            for &i in chunk {
                batch_data.extend_from_slice(&data.data()[i * chw..(i + 1) * chw]);
            }
            let batch =
                Tensor::new(&[chunk.len(), cfg.in_channels, cfg.input_hw, cfg.input_hw], batch_data)
                    .map_err(AutodiffError::Tensor)?;

            let mut g = Graph::<f32>::new();
            let vars = insert_params(&mut g, &params, true);
            let x = g.constant(batch);
            let recon = reconstruct(&mut g, cfg, &vars, x)?;
            let loss = g.mse_loss(recon, x)?;
            let loss_val = f64::from(g.value(loss).item().map_err(AutodiffError::Tensor)?);
            if !loss_val.is_finite() {
                return Err(CaeError::Diverged { epoch, loss: loss_val });
            }
            g.backward(loss)?;
            let ids = cae_var_ids(&vars);
            let grads: Vec<Tensor<f32>> = ids
                .iter()
                .map(|&id| g.grad(id).cloned().expect("tracked leaves always get gradients"))
                .collect();
            adam_step(&acfg, &mut state, &mut params.tensors_mut(), &grads)?;
            loss_sum += loss_val * chunk.len() as f64;
        }
        let log = TrainLog {
            epoch,
            loss: loss_sum / n as f64,
            #[cfg(feature = "std")]
            wall_time_s: Some(started.elapsed().as_secs_f64()),
            #[cfg(not(feature = "std"))]
            wall_time_s: None,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok((params, logs))
}

/// Var ids in fill order, matching [`CaeParams::tensors`].
pub fn cae_var_ids(vars: &CaeVars) -> Vec<VarId> {
    let mut ids = Vec::new();
    for &(w, b) in &vars.enc {
        ids.push(w);
        ids.push(b);
    }
    ids.push(vars.to_latent.0);
    ids.push(vars.to_latent.1);
    ids.push(vars.from_latent.0);
    ids.push(vars.from_latent.1);
    for &(w, b) in &vars.dec {
        ids.push(w);
        ids.push(b);
    }
    ids
}

/// Encodes one raster to its retrieval embedding. `model_hash` is the
/// parameter hash ([`cae_param_hash`]), computed once by the caller.
pub fn cae_embed(
    cfg: &CaeConfig,
    params: &CaeParams<f32>,
    model_hash: Digest,
    map: &PreprocessedMap,
    timestamp: Timestamp,
) -> Result<Embedding, CaeError> {
    let batch = maps_to_batch(&[map])?;
    check_batch(cfg, &batch)?;
    let mut g = Graph::<f32>::new();
    let vars = insert_params(&mut g, params, false);
    let x = g.constant(batch);
    let z = encode(&mut g, cfg, &vars, x)?;
    let vector = g.value(z).data().to_vec();
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(CaeError::Autodiff(AutodiffError::NonFinite {
            context: format!("embedding for {}", map.source_id),
        }));
    }
    Ok(Embedding { source_id: map.source_id.clone(), timestamp, vector, model_hash })
}

/// Serialized parameter payload: magic, u32 LE config length, canonical
/// config JSON, then every weight as f32 LE in fill order. The payload
/// is both the on-disk format body and the hashing preimage.
pub fn cae_param_payload(cfg: &CaeConfig, params: &CaeParams<f32>) -> Vec<u8> {
    let json = canonical_json(cfg);
    let mut out = Vec::new();
    out.extend_from_slice(CAE_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&f32_le_bytes(t.data()));
    }
    out
}

/// SHA-256 over the parameter payload; identifies a trained model.
pub fn cae_param_hash(cfg: &CaeConfig, params: &CaeParams<f32>) -> Digest {
    Digest::of_bytes(&cae_param_payload(cfg, params))
}
