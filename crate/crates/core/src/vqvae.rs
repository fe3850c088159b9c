//! Vector-quantized autoencoder over preprocessed map rasters.
//!
//! The encoder produces a grid of continuous vectors; each cell snaps to
//! its nearest codebook row (squared L2, ties to the lowest index). The
//! decoder reconstructs from the quantized grid. Because quantization has
//! no gradient, the reconstruction loss reaches the encoder through a
//! straight-through estimator, while two auxiliary MSE terms move the
//! codebook toward the encoder outputs (codebook loss) and the encoder
//! toward its assigned codes (commitment loss, weighted by beta):
//!
//!   total = recon + codebook + beta * commitment
//!
//! Quantization happens outside the graph on concrete values; the graph
//! then works with the fixed index grid. That same mechanism freezes
//! assignments for gradient checking, where the argmin's discontinuity
//! would otherwise break finite differences.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

// sqrt on concrete floats is std-inherent; pull it from the trait under no_std.
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, AutodiffError, Graph, VarId};
use crate::cae::{CaeError, ConvStage, TrainConfig};
use crate::digest::{canonical_json, f32_le_bytes, Digest};
use crate::imgproc::{hsv_to_rgb_px, ImageU8, PreprocessedMap};
use crate::index::Embedding;
use crate::tensor::{Scalar, Tensor};
use crate::time::Timestamp;

/// Leading bytes of the serialized parameter payload.
pub const VQVAE_MAGIC: &[u8; 4] = b"VQV1";

/// Golden angle in degrees; spreads consecutive code hues maximally.
pub const GOLDEN_ANGLE_DEG: f64 = 137.50776405003785;

const SHUFFLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqvaeConfig {
    pub in_channels: usize,
    pub input_hw: usize,
    pub enc_channels: Vec<usize>,
    /// Codebook size K.
    pub n_codes: usize,
    /// Dimension D of each code vector.
    pub code_dim: usize,
    /// Commitment loss weight.
    pub beta: f64,
    pub kernel: usize,
    pub stride: usize,
    pub seed: u64,
}

impl Default for VqvaeConfig {
    fn default() -> Self {
        VqvaeConfig {
            in_channels: 2,
            input_hw: 256,
            enc_channels: alloc::vec![32, 64, 128, 256],
            n_codes: 64,
            code_dim: 32,
            beta: 0.25,
            kernel: 4,
            stride: 2,
            seed: 42,
        }
    }
}

impl VqvaeConfig {
    pub fn stages(&self) -> usize {
        self.enc_channels.len()
    }

    pub fn pad(&self) -> usize {
        (self.kernel - self.stride) / 2
    }

    /// Side length of the quantized grid.
    pub fn grid_hw(&self) -> usize {
        let mut hw = self.input_hw;
        for _ in 0..self.stages() {
            hw /= self.stride;
        }
        hw
    }

    /// Length of the flattened embedding: D x grid x grid.
    pub fn embed_dim(&self) -> usize {
        self.code_dim * self.grid_hw() * self.grid_hw()
    }

    pub fn validate(&self) -> Result<(), CaeError> {
        // Geometry rules are shared with the plain autoencoder.
        let as_cae = crate::cae::CaeConfig {
            in_channels: self.in_channels,
            input_hw: self.input_hw,
            enc_channels: self.enc_channels.clone(),
            latent_dim: 1,
            kernel: self.kernel,
            stride: self.stride,
            seed: self.seed,
        };
        as_cae.validate()?;
        if self.n_codes < 2 {
            return Err(CaeError::Config(format!(
                "n_codes must be at least 2, got {}",
                self.n_codes
            )));
        }
        if self.code_dim == 0 {
            return Err(CaeError::Config(String::from("code_dim must be positive")));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(CaeError::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VqvaeError {
    Cae(CaeError),
    /// Encoder emitted non-finite values, so argmin is undefined.
    NonFiniteLatent { context: String },
    GridMismatch { expected: (usize, usize, usize), got: (usize, usize, usize) },
}

impl fmt::Display for VqvaeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VqvaeError::Cae(e) => write!(f, "{e}"),
            VqvaeError::NonFiniteLatent { context } => {
                write!(f, "non-finite encoder output in {context}")
            }
            VqvaeError::GridMismatch { expected, got } => {
                write!(f, "code grid {got:?}, expected {expected:?}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for VqvaeError {}

impl From<CaeError> for VqvaeError {
    fn from(e: CaeError) -> Self {
        VqvaeError::Cae(e)
    }
}

impl From<AutodiffError> for VqvaeError {
    fn from(e: AutodiffError) -> Self {
        VqvaeError::Cae(CaeError::Autodiff(e))
    }
}

/// Code assignments for a batch: `indices[n][gy][gx]`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeGrid {
    pub n: usize,
    pub gh: usize,
    pub gw: usize,
    pub indices: Vec<u32>,
}

impl CodeGrid {
    /// Indices of one batch item.
    pub fn item(&self, i: usize) -> &[u32] {
        &self.indices[i * self.gh * self.gw..(i + 1) * self.gh * self.gw]
    }
}

/// All trainable parameters, in fill order: encoder stages, the 1x1
/// projection to code space, the codebook, the 1x1 expansion from code
/// space, decoder stages.
#[derive(Clone, Debug, PartialEq)]
pub struct VqvaeParams<T> {
    pub enc: Vec<ConvStage<T>>,
    pub to_code: ConvStage<T>,
    pub codebook: Tensor<T>,
    pub from_code: ConvStage<T>,
    pub dec: Vec<ConvStage<T>>,
}

impl<T: Scalar> VqvaeParams<T> {
    /// Kaiming-uniform conv weights, zero biases, codebook uniform in
    /// (-1/K, 1/K) — the usual small-box init that leaves all codes in
    /// contention early in training.
    pub fn init(cfg: &VqvaeConfig) -> Result<Self, CaeError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let k = cfg.kernel;
        let kaiming = |rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-bound..bound)))
        };
        let mut enc = Vec::with_capacity(cfg.stages());
        let mut ci = cfg.in_channels;
        for &co in &cfg.enc_channels {
            enc.push(ConvStage {
                weight: kaiming(&mut rng, &[co, ci, k, k], ci * k * k),
                bias: Tensor::zeros(&[co]),
            });
            ci = co;
        }
        let c_last = *cfg.enc_channels.last().expect("validated non-empty");
        let to_code = ConvStage {
            weight: kaiming(&mut rng, &[cfg.code_dim, c_last, 1, 1], c_last),
            bias: Tensor::zeros(&[cfg.code_dim]),
        };
        let cb_bound = 1.0 / cfg.n_codes as f64;
        let codebook = Tensor::from_fn(&[cfg.n_codes, cfg.code_dim], |_| {
            T::from_f64(rng.gen_range(-cb_bound..cb_bound))
        });
        let from_code = ConvStage {
            weight: kaiming(&mut rng, &[c_last, cfg.code_dim, 1, 1], cfg.code_dim),
            bias: Tensor::zeros(&[c_last]),
        };
        let mut dec = Vec::with_capacity(cfg.stages());
        let mut ci = c_last;
        for i in (0..cfg.stages()).rev() {
            let co = if i == 0 { cfg.in_channels } else { cfg.enc_channels[i - 1] };
            dec.push(ConvStage {
                weight: kaiming(&mut rng, &[ci, co, k, k], ci * k * k),
                bias: Tensor::zeros(&[co]),
            });
            ci = co;
        }
        Ok(VqvaeParams { enc, to_code, codebook, from_code, dec })
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for s in &self.enc {
            out.push(&s.weight);
            out.push(&s.bias);
        }
        out.push(&self.to_code.weight);
        out.push(&self.to_code.bias);
        out.push(&self.codebook);
        out.push(&self.from_code.weight);
        out.push(&self.from_code.bias);
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
        out.push(&mut self.to_code.weight);
        out.push(&mut self.to_code.bias);
        out.push(&mut self.codebook);
        out.push(&mut self.from_code.weight);
        out.push(&mut self.from_code.bias);
        for s in &mut self.dec {
            out.push(&mut s.weight);
            out.push(&mut s.bias);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> VqvaeParams<U> {
        let conv = |s: &ConvStage<T>| ConvStage { weight: s.weight.cast(), bias: s.bias.cast() };
        VqvaeParams {
            enc: self.enc.iter().map(conv).collect(),
            to_code: conv(&self.to_code),
            codebook: self.codebook.cast(),
            from_code: conv(&self.from_code),
            dec: self.dec.iter().map(conv).collect(),
        }
    }

    /// Rebuilds params from tensors laid out in fill order (the inverse
    /// of [`VqvaeParams::tensors`]).
    pub fn from_ordered_tensors(
        cfg: &VqvaeConfig,
        mut tensors: impl Iterator<Item = Tensor<T>>,
    ) -> Option<Self> {
        let mut next = || tensors.next();
        let mut enc = Vec::with_capacity(cfg.stages());
        for _ in 0..cfg.stages() {
            enc.push(ConvStage { weight: next()?, bias: next()? });
        }
        let to_code = ConvStage { weight: next()?, bias: next()? };
        let codebook = next()?;
        let from_code = ConvStage { weight: next()?, bias: next()? };
        let mut dec = Vec::with_capacity(cfg.stages());
        for _ in 0..cfg.stages() {
            dec.push(ConvStage { weight: next()?, bias: next()? });
        }
        Some(VqvaeParams { enc, to_code, codebook, from_code, dec })
    }
}

/// Fill-order tensor shapes — the layout contract of the weight block
/// in `VQV1` files (the codebook sits between the 1x1 projections as a
/// row-major [n_codes, code_dim] block).
pub fn vq_tensor_shapes(cfg: &VqvaeConfig) -> Vec<Vec<usize>> {
    let k = cfg.kernel;
    let mut shapes = Vec::new();
    let mut ci = cfg.in_channels;
    for &co in &cfg.enc_channels {
        shapes.push(vec![co, ci, k, k]);
        shapes.push(vec![co]);
        ci = co;
    }
    let c_last = *cfg.enc_channels.last().expect("validated non-empty");
    shapes.push(vec![cfg.code_dim, c_last, 1, 1]);
    shapes.push(vec![cfg.code_dim]);
    shapes.push(vec![cfg.n_codes, cfg.code_dim]);
    shapes.push(vec![c_last, cfg.code_dim, 1, 1]);
    shapes.push(vec![c_last]);
    let mut ci = c_last;
    for i in (0..cfg.stages()).rev() {
        let co = if i == 0 { cfg.in_channels } else { cfg.enc_channels[i - 1] };
        shapes.push(vec![ci, co, k, k]);
        shapes.push(vec![co]);
        ci = co;
    }
    shapes
}

/// Rebuilds parameters from one flat fill-order value stream (the weight
/// block of a `VQV1` file). The stream length must match exactly.
pub fn vq_params_from_flat(
    cfg: &VqvaeConfig,
    values: &[f32],
) -> Result<VqvaeParams<f32>, CaeError> {
    cfg.validate()?;
    let shapes = vq_tensor_shapes(cfg);
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
    VqvaeParams::from_ordered_tensors(cfg, tensors.into_iter())
        .ok_or_else(|| CaeError::Config("tensor stream shorter than layout".into()))
}

/// Graph ids for one insertion of the parameters.
#[derive(Clone, Debug)]
pub struct VqvaeVars {
    pub enc: Vec<(VarId, VarId)>,
    pub to_code: (VarId, VarId),
    pub codebook: VarId,
    pub from_code: (VarId, VarId),
    pub dec: Vec<(VarId, VarId)>,
}

impl VqvaeVars {
    /// Groups a fill-ordered id slice back into the layer structure.
    pub fn from_ordered_ids(stages: usize, ids: &[VarId]) -> Option<Self> {
        if ids.len() != 4 * stages + 5 {
            return None;
        }
        let mut enc = Vec::with_capacity(stages);
        for s in 0..stages {
            enc.push((ids[2 * s], ids[2 * s + 1]));
        }
        let base = 2 * stages;
        let to_code = (ids[base], ids[base + 1]);
        let codebook = ids[base + 2];
        let from_code = (ids[base + 3], ids[base + 4]);
        let mut dec = Vec::with_capacity(stages);
        for s in 0..stages {
            dec.push((ids[base + 5 + 2 * s], ids[base + 6 + 2 * s]));
        }
        Some(VqvaeVars { enc, to_code, codebook, from_code, dec })
    }
}

pub fn insert_params<T: Scalar>(
    g: &mut Graph<T>,
    params: &VqvaeParams<T>,
    tracked: bool,
) -> VqvaeVars {
    let conv = |g: &mut Graph<T>, s: &ConvStage<T>| {
        (g.leaf(s.weight.clone(), tracked), g.leaf(s.bias.clone(), tracked))
    };
    let enc = params.enc.iter().map(|s| conv(g, s)).collect();
    let to_code = conv(g, &params.to_code);
    let codebook = g.leaf(params.codebook.clone(), tracked);
    let from_code = conv(g, &params.from_code);
    let dec = params.dec.iter().map(|s| conv(g, s)).collect();
    VqvaeVars { enc, to_code, codebook, from_code, dec }
}

pub fn vq_var_ids(vars: &VqvaeVars) -> Vec<VarId> {
    let mut ids = Vec::new();
    for &(w, b) in &vars.enc {
        ids.push(w);
        ids.push(b);
    }
    ids.push(vars.to_code.0);
    ids.push(vars.to_code.1);
    ids.push(vars.codebook);
    ids.push(vars.from_code.0);
    ids.push(vars.from_code.1);
    for &(w, b) in &vars.dec {
        ids.push(w);
        ids.push(b);
    }
    ids
}

/// Encoder: strided conv+ReLU stages, then a 1x1 conv into code space.
/// Output is `[n, D, grid, grid]` with no activation.
pub fn encode<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &VqvaeConfig,
    vars: &VqvaeVars,
    x: VarId,
) -> Result<VarId, AutodiffError> {
    let mut h = x;
    for &(w, b) in &vars.enc {
        h = g.conv2d(h, w, b, cfg.stride, cfg.pad())?;
        h = g.relu(h);
    }
    g.conv2d(h, vars.to_code.0, vars.to_code.1, 1, 0)
}

/// Decoder: 1x1 conv out of code space, ReLU, transposed conv stages,
/// sigmoid output.
pub fn decode<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &VqvaeConfig,
    vars: &VqvaeVars,
    zq: VarId,
) -> Result<VarId, AutodiffError> {
    let mut h = g.conv2d(zq, vars.from_code.0, vars.from_code.1, 1, 0)?;
    h = g.relu(h);
    let last = vars.dec.len() - 1;
    for (i, &(w, b)) in vars.dec.iter().enumerate() {
        h = g.conv2d_transpose(h, w, b, cfg.stride, cfg.pad())?;
        h = if i == last { g.sigmoid(h) } else { g.relu(h) };
    }
    Ok(h)
}

/// Nearest-code assignment by squared L2 distance, computed in f64.
/// Ties go to the lowest index. Returns the index grid and the
/// quantized tensor `z_q` (each cell replaced by its code vector).
pub fn quantize<T: Scalar>(
    codebook: &Tensor<T>,
    z_e: &Tensor<T>,
) -> Result<(CodeGrid, Tensor<T>), VqvaeError> {
    let zs = z_e.shape();
    if zs.len() != 4 || codebook.shape().len() != 2 || zs[1] != codebook.shape()[1] {
        return Err(VqvaeError::Cae(CaeError::ShapeMismatch {
            expected: alloc::vec![0, codebook.shape().last().copied().unwrap_or(0), 0, 0],
            got: zs.to_vec(),
        }));
    }
    let (n, d, gh, gw) = (zs[0], zs[1], zs[2], zs[3]);
    let k_codes = codebook.shape()[0];
    let cells = gh * gw;
    let zd = z_e.data();
    let cd = codebook.data();
    if zd.iter().any(|&v| !Scalar::to_f64(v).is_finite()) {
        return Err(VqvaeError::NonFiniteLatent { context: String::from("quantize input") });
    }
    let mut indices = Vec::with_capacity(n * cells);
    let mut zq = Tensor::zeros(zs);
    let qd = zq.data_mut();
    for ni in 0..n {
        for cell in 0..cells {
            let mut best = 0usize;
            let mut best_dist = f64::INFINITY;
            for ki in 0..k_codes {
                let mut dist = 0.0f64;
                for di in 0..d {
                    let z = zd[(ni * d + di) * cells + cell].to_f64();
                    let c = cd[ki * d + di].to_f64();
                    let diff = z - c;
                    dist += diff * diff;
                }
                // Strict < keeps the lowest index on ties.
                if dist < best_dist {
                    best_dist = dist;
                    best = ki;
                }
            }
            indices.push(best as u32);
            for di in 0..d {
                qd[(ni * d + di) * cells + cell] = cd[best * d + di];
            }
        }
    }
    Ok((CodeGrid { n, gh, gw, indices }, zq))
}

/// Everything the training step needs from one forward pass.
pub struct VqForward {
    pub z_e: VarId,
    /// Codebook rows gathered by the assignment (differentiable into the
    /// codebook).
    pub lookup: VarId,
    /// Straight-through node feeding the decoder.
    pub st: VarId,
    pub recon: VarId,
    pub grid: CodeGrid,
}

/// Builds encoder, quantization, and decoder onto the graph. When
/// `frozen` is given, those assignments are used instead of re-running
/// the argmin — gradient checking needs this to stay differentiable.
pub fn vq_forward<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &VqvaeConfig,
    vars: &VqvaeVars,
    x: VarId,
    frozen: Option<&CodeGrid>,
) -> Result<VqForward, VqvaeError> {
    let z_e = encode(g, cfg, vars, x)?;
    let zs = g.value(z_e).shape().to_vec();
    let (n, gh, gw) = (zs[0], zs[2], zs[3]);
    let grid = match frozen {
        Some(grid) => {
            if (grid.n, grid.gh, grid.gw) != (n, gh, gw) {
                return Err(VqvaeError::GridMismatch {
                    expected: (n, gh, gw),
                    got: (grid.n, grid.gh, grid.gw),
                });
            }
            grid.clone()
        }
        None => quantize(g.value(vars.codebook), g.value(z_e))?.0,
    };
    let lookup = g.codebook_lookup(vars.codebook, &grid.indices, n, gh, gw)?;
    let st = g.straight_through(z_e, lookup)?;
    let recon = decode(g, cfg, vars, st)?;
    Ok(VqForward { z_e, lookup, st, recon, grid })
}

/// The three loss terms and their weighted total.
pub struct VqLosses {
    pub total: VarId,
    pub recon: VarId,
    pub codebook: VarId,
    pub commitment: VarId,
}

/// total = mse(recon, x) + mse(lookup, detach(z_e)) + beta * mse(z_e, detach(lookup))
pub fn vq_losses<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &VqvaeConfig,
    fwd: &VqForward,
    x: VarId,
) -> Result<VqLosses, AutodiffError> {
    let recon = g.mse_loss(fwd.recon, x)?;
    let e_stop = g.detach(fwd.z_e);
    let codebook = g.mse_loss(fwd.lookup, e_stop)?;
    let q_stop = g.detach(fwd.lookup);
    let commitment = g.mse_loss(fwd.z_e, q_stop)?;
    let weighted = g.scale(commitment, cfg.beta);
    let partial = g.add(recon, codebook)?;
    let total = g.add(partial, weighted)?;
    Ok(VqLosses { total, recon, codebook, commitment })
}

/// VQ loss rebuilt for numerical gradient checking. Two pieces of the
/// training loss defeat finite differences by design and are replaced
/// here with mathematically equivalent constructions whose true
/// gradient at the evaluation point equals the training gradient:
///
/// * The straight-through estimator (fake identity backward) is
///   dropped; the decoder consumes the raw lookup, which is the same
///   forward value with its honest derivative.
/// * The stop-gradient (detach) targets are pinned to the provided
///   constants `z_e_ref` / `z_q_ref` (the unperturbed values). A detach
///   in the live graph would still *change value* under perturbation —
///   finite differences would see a sensitivity the analytic gradient
///   rightly ignores. A baked-in constant moves for neither.
///
/// Assignments come frozen in `grid` so no perturbation crosses an
/// argmin boundary. The straight-through rule itself is validated as a
/// defined backward in the autodiff tests, not numerically.
pub fn vq_frozen_loss<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &VqvaeConfig,
    vars: &VqvaeVars,
    x: VarId,
    grid: &CodeGrid,
    z_e_ref: &Tensor<T>,
    z_q_ref: &Tensor<T>,
) -> Result<VarId, VqvaeError> {
    let z_e = encode(g, cfg, vars, x)?;
    let zs = g.value(z_e).shape().to_vec();
    if (grid.n, grid.gh, grid.gw) != (zs[0], zs[2], zs[3]) {
        return Err(VqvaeError::GridMismatch {
            expected: (zs[0], zs[2], zs[3]),
            got: (grid.n, grid.gh, grid.gw),
        });
    }
    let lookup = g.codebook_lookup(vars.codebook, &grid.indices, grid.n, grid.gh, grid.gw)?;
    let recon_img = decode(g, cfg, vars, lookup)?;
    let recon = g.mse_loss(recon_img, x)?;
    let e_pin = g.constant(z_e_ref.clone());
    let codebook = g.mse_loss(lookup, e_pin)?;
    let q_pin = g.constant(z_q_ref.clone());
    let commitment = g.mse_loss(z_e, q_pin)?;
    let weighted = g.scale(commitment, cfg.beta);
    let partial = g.add(recon, codebook)?;
    Ok(g.add(partial, weighted)?)
}

/// One epoch's record: loss components plus how many distinct codes the
/// epoch's batches actually used. `active_codes == 1` means the codebook
/// has collapsed; embeddings would carry no information.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VqTrainLog {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub active_codes: usize,
    pub wall_time_s: Option<f64>,
}

/// Adam training over all parameters (codebook included — the gather op
/// scatter-adds its gradients). Deterministic for fixed inputs.
pub fn vqvae_train(
    cfg: &VqvaeConfig,
    data: &Tensor<f32>,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&VqTrainLog),
) -> Result<(VqvaeParams<f32>, Vec<VqTrainLog>), VqvaeError> {
    cfg.validate()?;
    let shape_ok = data.shape().len() == 4
        && data.shape()[1] == cfg.in_channels
        && data.shape()[2] == cfg.input_hw
        && data.shape()[3] == cfg.input_hw
        && data.shape()[0] > 0;
    if !shape_ok {
        return Err(VqvaeError::Cae(CaeError::ShapeMismatch {
            expected: alloc::vec![1, cfg.in_channels, cfg.input_hw, cfg.input_hw],
            got: data.shape().to_vec(),
        }));
    }
    if tc.batch_size == 0 {
        return Err(VqvaeError::Cae(CaeError::Config(String::from(
            "batch_size must be at least 1",
        ))));
    }
    let n = data.shape()[0];
    let chw = cfg.in_channels * cfg.input_hw * cfg.input_hw;
    let mut params = VqvaeParams::<f32>::init(cfg)?;
    let mut state = AdamState::new(&params.tensors());
    let acfg = AdamConfig { lr: tc.lr, ..AdamConfig::default() };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..n).collect();
    let mut logs = Vec::with_capacity(tc.epochs);

    for epoch in 1..=tc.epochs {
        #[cfg(feature = "std")]
        let started = std::time::Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 4]; // total, recon, codebook, commitment
        let mut used = alloc::vec![false; cfg.n_codes];
        for chunk in order.chunks(tc.batch_size) {
            let mut batch_data = Vec::with_capacity(chunk.len() * chw);
            for &i in chunk {
                batch_data.extend_from_slice(&data.data()[i * chw..(i + 1) * chw]);
            }
            let batch = Tensor::new(
                &[chunk.len(), cfg.in_channels, cfg.input_hw, cfg.input_hw],
                batch_data,
            )
            .map_err(AutodiffError::Tensor)?;

            let mut g = Graph::<f32>::new();
            let vars = insert_params(&mut g, &params, true);
            let x = g.constant(batch);
            let fwd = vq_forward(&mut g, cfg, &vars, x, None)?;
            let losses = vq_losses(&mut g, cfg, &fwd, x)?;
            for &ix in &fwd.grid.indices {
                used[ix as usize] = true;
            }
            let read = |g: &Graph<f32>, id: VarId| -> Result<f64, AutodiffError> {
                Ok(f64::from(g.value(id).item().map_err(AutodiffError::Tensor)?))
            };
            let total = read(&g, losses.total)?;
            if !total.is_finite() {
                return Err(VqvaeError::Cae(CaeError::Diverged { epoch, loss: total }));
            }
            let w = chunk.len() as f64;
            sums[0] += total * w;
            sums[1] += read(&g, losses.recon)? * w;
            sums[2] += read(&g, losses.codebook)? * w;
            sums[3] += read(&g, losses.commitment)? * w;

            g.backward(losses.total)?;
            let ids = vq_var_ids(&vars);
            let grads: Vec<Tensor<f32>> = ids
                .iter()
                .map(|&id| g.grad(id).cloned().expect("tracked leaves always get gradients"))
                .collect();
            adam_step(&acfg, &mut state, &mut params.tensors_mut(), &grads)
                .map_err(CaeError::Autodiff)?;
        }
        let log = VqTrainLog {
            epoch,
            total: sums[0] / n as f64,
            recon: sums[1] / n as f64,
            codebook: sums[2] / n as f64,
            commitment: sums[3] / n as f64,
            active_codes: used.iter().filter(|&&u| u).count(),
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

/// Embeds one raster as the flattened quantized grid `z_q` (channel-
/// planar, length D x grid x grid). `model_hash` comes from
/// [`vq_param_hash`], computed once by the caller.
pub fn vqvae_embed(
    cfg: &VqvaeConfig,
    params: &VqvaeParams<f32>,
    model_hash: Digest,
    map: &PreprocessedMap,
    timestamp: Timestamp,
) -> Result<Embedding, VqvaeError> {
    let batch = crate::cae::maps_to_batch(&[map])?;
    if batch.shape()[1] != cfg.in_channels || batch.shape()[2] != cfg.input_hw {
        return Err(VqvaeError::Cae(CaeError::ShapeMismatch {
            expected: alloc::vec![1, cfg.in_channels, cfg.input_hw, cfg.input_hw],
            got: batch.shape().to_vec(),
        }));
    }
    let mut g = Graph::<f32>::new();
    let vars = insert_params(&mut g, params, false);
    let x = g.constant(batch);
    let z_e = encode(&mut g, cfg, &vars, x)?;
    let (_, zq) = quantize(&params.codebook, g.value(z_e))?;
    Ok(Embedding {
        source_id: map.source_id.clone(),
        timestamp,
        vector: zq.data().iter().map(|&v| v).collect(),
        model_hash,
    })
}

/// Assignment grid for one raster, for inspection and rendering.
pub fn code_grid_for(
    cfg: &VqvaeConfig,
    params: &VqvaeParams<f32>,
    map: &PreprocessedMap,
) -> Result<CodeGrid, VqvaeError> {
    let batch = crate::cae::maps_to_batch(&[map])?;
    let mut g = Graph::<f32>::new();
    let vars = insert_params(&mut g, params, false);
    let x = g.constant(batch);
    let z_e = encode(&mut g, cfg, &vars, x)?;
    Ok(quantize(&params.codebook, g.value(z_e))?.0)
}

/// Renders one item's assignment grid as an RGB image, one pixel per
/// cell. Code k gets hue k x golden-angle mod 360 at fixed saturation
/// and value, so nearby indices land on visually distant colors.
pub fn render_code_grid(grid: &CodeGrid, item: usize) -> ImageU8 {
    let cells = grid.item(item);
    let mut data = Vec::with_capacity(cells.len() * 3);
    for &ix in cells {
        let hue = (f64::from(ix) * GOLDEN_ANGLE_DEG) % 360.0;
        let (r, g, b) = hsv_to_rgb_px(hue as f32, 0.65, 0.95);
        data.extend_from_slice(&[r, g, b]);
    }
    ImageU8::new(grid.gw as u32, grid.gh as u32, 3, data)
        .expect("grid dimensions always consistent")
}

/// Serialized parameter payload: magic, u32 LE config length, canonical
/// config JSON, then every tensor as f32 LE in fill order (the codebook
/// sits between the projection convs, per the fill order).
pub fn vq_param_payload(cfg: &VqvaeConfig, params: &VqvaeParams<f32>) -> Vec<u8> {
    let json = canonical_json(cfg);
    let mut out = Vec::new();
    out.extend_from_slice(VQVAE_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&f32_le_bytes(t.data()));
    }
    out
}

pub fn vq_param_hash(cfg: &VqvaeConfig, params: &VqvaeParams<f32>) -> Digest {
    Digest::of_bytes(&vq_param_payload(cfg, params))
}
