//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Graph`] records one forward computation as a vector of nodes;
//! node ids are handed out in construction order, so every node's
//! parents have smaller ids and [`Graph::backward`] is a single reverse
//! sweep that finalizes each gradient exactly once. Training rebuilds
//! the graph per step; parameters live outside as plain tensors and
//! enter through [`Graph::leaf`].
//!
//! Gradients flow only through nodes marked as tracked. [`Graph::detach`]
//! produces an untracked copy, which is how the quantization losses
//! stop their gradients, and [`Graph::straight_through`] copies the
//! quantized value forward while routing the whole gradient back to the
//! encoder.

mod adam;
mod conv;
mod gradcheck;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{ConvGeom, corr_forward, corr_input_grad, corr_kernel_grad};
pub use gradcheck::{grad_check, GradCheckReport};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use conv::{add_channel_bias, channel_sums};

use crate::tensor::{Scalar, Tensor, TensorError};

#[derive(Clone, Debug, PartialEq)]
pub enum AutodiffError {
    Tensor(TensorError),
    /// Convolution output size (h + 2*pad - kh)/stride + 1 is not integral,
    /// or a transposed convolution produces an empty output.
    ConvNonIntegral { h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize },
    /// Input channel count does not match the kernel's.
    ChannelMismatch { input: usize, kernel: usize },
    BadStride,
    EmptyConvDim,
    /// Operand has the wrong rank or an unexpected dim.
    Rank { expected: &'static str, got: Vec<usize> },
    /// backward() requires a scalar loss node.
    NonScalarLoss { shape: Vec<usize> },
    /// A codebook lookup index is out of range.
    IndexOutOfRange { index: usize, len: usize },
    /// NaN or infinity where finite math is required; context names the site.
    NonFinite { context: String },
}

impl fmt::Display for AutodiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutodiffError::Tensor(e) => write!(f, "{e}"),
            AutodiffError::ConvNonIntegral { h, w, kh, kw, stride, pad } => write!(
                f,
                "non-integral conv output for input {h}x{w}, kernel {kh}x{kw}, stride {stride}, pad {pad}"
            ),
            AutodiffError::ChannelMismatch { input, kernel } => {
                write!(f, "input has {input} channels but kernel expects {kernel}")
            }
            AutodiffError::BadStride => write!(f, "stride must be at least 1"),
            AutodiffError::EmptyConvDim => write!(f, "convolution dims must all be nonzero"),
            AutodiffError::Rank { expected, got } => {
                write!(f, "expected {expected}, got shape {got:?}")
            }
            AutodiffError::NonScalarLoss { shape } => {
                write!(f, "backward needs a scalar loss, got shape {shape:?}")
            }
            AutodiffError::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            AutodiffError::NonFinite { context } => write!(f, "non-finite value in {context}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AutodiffError {}

impl From<TensorError> for AutodiffError {
    fn from(e: TensorError) -> Self {
        AutodiffError::Tensor(e)
    }
}

/// Handle to a node in a [`Graph`]. Only valid for the graph that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, f64),
    Relu(VarId),
    LeakyRelu(VarId, f64),
    Sigmoid(VarId),
    Conv2d { x: VarId, k: VarId, b: VarId, geom: ConvGeom },
    ConvTranspose2d { x: VarId, k: VarId, b: VarId, geom: ConvGeom },
    Linear { x: VarId, w: VarId, b: VarId },
    Reshape(VarId),
    Detach,
    MseLoss(VarId, VarId),
    SumAll(VarId),
    CodebookLookup { table: VarId, indices: Vec<u32> },
    StraightThrough { src: VarId },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    tracked: bool,
    op: Op,
}

/// One recorded forward computation.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, tracked: bool, op: Op) -> VarId {
        self.nodes.push(Node { value, grad: None, tracked, op });
        VarId(self.nodes.len() - 1)
    }

    fn node(&self, id: VarId) -> &Node<T> {
        &self.nodes[id.0]
    }

    fn tracked(&self, id: VarId) -> bool {
        self.node(id).tracked
    }

    /// Inserts an input tensor. Gradients are computed for it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> VarId {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> VarId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: VarId) -> &Tensor<T> {
        &self.node(id).value
    }

    /// Gradient of the last `backward` call with respect to `id`, if it
    /// was tracked.
    pub fn grad(&self, id: VarId) -> Option<&Tensor<T>> {
        self.node(id).grad.as_ref()
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, AutodiffError> {
        let v = self.node(a).value.zip_map(&self.node(b).value, |x, y| x + y)?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(v, t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId, AutodiffError> {
        let v = self.node(a).value.zip_map(&self.node(b).value, |x, y| x - y)?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(v, t, Op::Sub(a, b)))
    }

    /// Pointwise product of same-shape tensors.
    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId, AutodiffError> {
        let v = self.node(a).value.zip_map(&self.node(b).value, |x, y| x * y)?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(v, t, Op::Mul(a, b)))
    }

    /// Multiplication by a compile-time-known constant, e.g. a loss weight.
    pub fn scale(&mut self, a: VarId, factor: f64) -> VarId {
        let c = T::from_f64(factor);
        let v = self.node(a).value.map(|x| x * c);
        let t = self.tracked(a);
        self.push(v, t, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let v = self.node(a).value.map(|x| if x > T::zero() { x } else { T::zero() });
        let t = self.tracked(a);
        self.push(v, t, Op::Relu(a))
    }

    /// Leaky ReLU; the slope applies at and below zero.
    pub fn leaky_relu(&mut self, a: VarId, slope: f64) -> VarId {
        let s = T::from_f64(slope);
        let v = self.node(a).value.map(|x| if x > T::zero() { x } else { s * x });
        let t = self.tracked(a);
        self.push(v, t, Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        let v = self.node(a).value.map(sigmoid_stable);
        let t = self.tracked(a);
        self.push(v, t, Op::Sigmoid(a))
    }

    /// 2-D convolution (cross-correlation) with zero padding.
    /// `x` is `[n, ci, h, w]`, `k` is `[co, ci, kh, kw]`, `b` is `[co]`.
    pub fn conv2d(
        &mut self,
        x: VarId,
        k: VarId,
        b: VarId,
        stride: usize,
        pad: usize,
    ) -> Result<VarId, AutodiffError> {
        let (xs, ks, bs) =
            (self.node(x).value.shape(), self.node(k).value.shape(), self.node(b).value.shape());
        let ([n, ci, h, w], [co, kci, kh, kw]) = (rank4(xs)?, rank4(ks)?);
        if ci != kci {
            return Err(AutodiffError::ChannelMismatch { input: ci, kernel: kci });
        }
        if bs != [co] {
            return Err(AutodiffError::Rank { expected: "bias of shape [co]", got: bs.to_vec() });
        }
        let geom = ConvGeom::conv(n, ci, h, w, co, kh, kw, stride, pad)?;
        let mut out = Tensor::zeros(&[n, co, geom.ho, geom.wo]);
        corr_forward(&geom, self.node(x).value.data(), self.node(k).value.data(), out.data_mut());
        add_channel_bias(
            out.data_mut(),
            self.node(b).value.data(),
            n,
            co,
            geom.ho * geom.wo,
        );
        let t = self.tracked(x) || self.tracked(k) || self.tracked(b);
        Ok(self.push(out, t, Op::Conv2d { x, k, b, geom }))
    }

    /// Transposed 2-D convolution: the vector-Jacobian product of
    /// [`Graph::conv2d`] with respect to its input, plus a bias.
    /// `x` is `[n, f, h, w]`, `k` is `[f, c, kh, kw]`, `b` is `[c]`,
    /// output is `[n, c, (h-1)*stride + kh - 2*pad, ...]`.
    pub fn conv2d_transpose(
        &mut self,
        x: VarId,
        k: VarId,
        b: VarId,
        stride: usize,
        pad: usize,
    ) -> Result<VarId, AutodiffError> {
        let (xs, ks, bs) =
            (self.node(x).value.shape(), self.node(k).value.shape(), self.node(b).value.shape());
        let ([n, f, h, w], [kf, c, kh, kw]) = (rank4(xs)?, rank4(ks)?);
        if f != kf {
            return Err(AutodiffError::ChannelMismatch { input: f, kernel: kf });
        }
        if bs != [c] {
            return Err(AutodiffError::Rank { expected: "bias of shape [c]", got: bs.to_vec() });
        }
        let geom = ConvGeom::conv_transpose(n, c, h, w, f, kh, kw, stride, pad)?;
        let mut out = Tensor::zeros(&[n, c, geom.h, geom.w]);
        corr_input_grad(
            &geom,
            self.node(x).value.data(),
            self.node(k).value.data(),
            out.data_mut(),
        );
        add_channel_bias(out.data_mut(), self.node(b).value.data(), n, c, geom.h * geom.w);
        let t = self.tracked(x) || self.tracked(k) || self.tracked(b);
        Ok(self.push(out, t, Op::ConvTranspose2d { x, k, b, geom }))
    }

    /// Dense layer: `x` is `[n, in]`, `w` is `[in, out]`, `b` is `[out]`.
    pub fn linear(&mut self, x: VarId, w: VarId, b: VarId) -> Result<VarId, AutodiffError> {
        let (xs, ws, bs) =
            (self.node(x).value.shape(), self.node(w).value.shape(), self.node(b).value.shape());
        let ([n, din], [win, dout]) = (rank2(xs)?, rank2(ws)?);
        if din != win {
            return Err(AutodiffError::ChannelMismatch { input: din, kernel: win });
        }
        if bs != [dout] {
            return Err(AutodiffError::Rank { expected: "bias of shape [out]", got: bs.to_vec() });
        }
        let xd = self.node(x).value.data();
        let wd = self.node(w).value.data();
        let bd = self.node(b).value.data();
        let mut out = Tensor::zeros(&[n, dout]);
        let od = out.data_mut();
        for i in 0..n {
            let xrow = &xd[i * din..][..din];
            let orow = &mut od[i * dout..][..dout];
            orow.copy_from_slice(bd);
            for (j, &xv) in xrow.iter().enumerate() {
                let wrow = &wd[j * dout..][..dout];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
        let t = self.tracked(x) || self.tracked(w) || self.tracked(b);
        Ok(self.push(out, t, Op::Linear { x, w, b }))
    }

    pub fn reshape(&mut self, a: VarId, shape: &[usize]) -> Result<VarId, AutodiffError> {
        let v = self.node(a).value.reshaped(shape)?;
        let t = self.tracked(a);
        Ok(self.push(v, t, Op::Reshape(a)))
    }

    /// Copies the value and stops gradients.
    pub fn detach(&mut self, a: VarId) -> VarId {
        let v = self.node(a).value.clone();
        self.push(v, false, Op::Detach)
    }

    /// Mean squared error over all elements; returns a scalar node.
    pub fn mse_loss(&mut self, pred: VarId, target: VarId) -> Result<VarId, AutodiffError> {
        let p = &self.node(pred).value;
        let t = &self.node(target).value;
        p.same_shape(t)?;
        let n = T::from_f64(p.numel() as f64);
        let mut acc = T::zero();
        for (&a, &b) in p.data().iter().zip(t.data()) {
            let d = a - b;
            acc += d * d;
        }
        let v = Tensor::scalar(acc / n);
        let tr = self.tracked(pred) || self.tracked(target);
        Ok(self.push(v, tr, Op::MseLoss(pred, target)))
    }

    pub fn sum_all(&mut self, a: VarId) -> VarId {
        let mut acc = T::zero();
        for &v in self.node(a).value.data() {
            acc += v;
        }
        let t = self.tracked(a);
        self.push(Tensor::scalar(acc), t, Op::SumAll(a))
    }

    /// Gathers codebook rows: `table` is `[k_codes, d]`, `indices` has one
    /// entry per grid cell of a `[n, d, gh, gw]` activation, ordered by
    /// `(n, gh, gw)` row-major. Output is `[n, d, gh, gw]`; the backward
    /// pass scatter-adds into the selected rows.
    pub fn codebook_lookup(
        &mut self,
        table: VarId,
        indices: &[u32],
        n: usize,
        gh: usize,
        gw: usize,
    ) -> Result<VarId, AutodiffError> {
        let ts = self.node(table).value.shape();
        let [k_codes, d] = rank2(ts)?;
        let cells = gh * gw;
        if indices.len() != n * cells {
            return Err(AutodiffError::Rank {
                expected: "one index per (n, gh, gw) cell",
                got: alloc::vec![indices.len()],
            });
        }
        for &ix in indices {
            if ix as usize >= k_codes {
                return Err(AutodiffError::IndexOutOfRange { index: ix as usize, len: k_codes });
            }
        }
        let td = self.node(table).value.data();
        let mut out = Tensor::zeros(&[n, d, gh, gw]);
        let od = out.data_mut();
        for ni in 0..n {
            for cell in 0..cells {
                let row = &td[indices[ni * cells + cell] as usize * d..][..d];
                for (di, &v) in row.iter().enumerate() {
                    od[(ni * d + di) * cells + cell] = v;
                }
            }
        }
        let t = self.tracked(table);
        Ok(self.push(out, t, Op::CodebookLookup { table, indices: indices.to_vec() }))
    }

    /// Straight-through estimator: forwards the quantized value unchanged
    /// and routes the entire gradient to `src`, none to `quantized`.
    pub fn straight_through(
        &mut self,
        src: VarId,
        quantized: VarId,
    ) -> Result<VarId, AutodiffError> {
        self.node(src).value.same_shape(&self.node(quantized).value)?;
        let v = self.node(quantized).value.clone();
        let t = self.tracked(src);
        Ok(self.push(v, t, Op::StraightThrough { src }))
    }

    /// Reverse sweep from a scalar loss. Fills gradients for every
    /// tracked node; tracked leaves that did not participate get zeros.
    pub fn backward(&mut self, loss: VarId) -> Result<(), AutodiffError> {
        let loss_node = self.node(loss);
        if !loss_node.value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss { shape: loss_node.value.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].tracked {
            grads[loss.0] = Some(Tensor::full(loss_node.value.shape(), T::one()));
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.grad = grads[i].take();
            if node.grad.is_none() && node.tracked && matches!(node.op, Op::Leaf) {
                node.grad = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(())
    }

    fn accum(&self, grads: &mut [Option<Tensor<T>>], id: VarId, delta: Tensor<T>) {
        if !self.tracked(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => {
                for (gv, dv) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gv += *dv;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<(), AutodiffError> {
        // Clones the op descriptor (cheap except lookup indices) so the
        // node table stays immutably borrowed during accumulation.
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(grads, a, g.clone());
                self.accum(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, a, g.clone());
                self.accum(grads, b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let av = &self.node(a).value;
                let bv = &self.node(b).value;
                self.accum(grads, a, g.zip_map(bv, |gv, x| gv * x)?);
                self.accum(grads, b, g.zip_map(av, |gv, x| gv * x)?);
            }
            Op::Scale(a, factor) => {
                let c = T::from_f64(factor);
                self.accum(grads, a, g.map(|x| x * c));
            }
            Op::Relu(a) => {
                let av = &self.node(a).value;
                self.accum(
                    grads,
                    a,
                    g.zip_map(av, |gv, x| if x > T::zero() { gv } else { T::zero() })?,
                );
            }
            Op::LeakyRelu(a, slope) => {
                let s = T::from_f64(slope);
                let av = &self.node(a).value;
                self.accum(grads, a, g.zip_map(av, |gv, x| if x > T::zero() { gv } else { gv * s })?)
            }
            Op::Sigmoid(a) => {
                let out = &self.nodes[i].value;
                self.accum(grads, a, g.zip_map(out, |gv, y| gv * y * (T::one() - y))?);
            }
            Op::Conv2d { x, k, b, geom } => {
                let hw = geom.ho * geom.wo;
                if self.tracked(x) {
                    let mut dx = Tensor::zeros(self.node(x).value.shape());
                    corr_input_grad(&geom, g.data(), self.node(k).value.data(), dx.data_mut());
                    self.accum(grads, x, dx);
                }
                if self.tracked(k) {
                    let mut dk = Tensor::zeros(self.node(k).value.shape());
                    corr_kernel_grad(&geom, self.node(x).value.data(), g.data(), dk.data_mut());
                    self.accum(grads, k, dk);
                }
                if self.tracked(b) {
                    let sums = channel_sums(g.data(), geom.n, geom.co, hw);
                    self.accum(grads, b, Tensor::new(&[geom.co], sums)?);
                }
            }
            Op::ConvTranspose2d { x, k, b, geom } => {
                if self.tracked(x) {
                    let mut dx = Tensor::zeros(self.node(x).value.shape());
                    corr_forward(&geom, g.data(), self.node(k).value.data(), dx.data_mut());
                    self.accum(grads, x, dx);
                }
                if self.tracked(k) {
                    let mut dk = Tensor::zeros(self.node(k).value.shape());
                    corr_kernel_grad(&geom, g.data(), self.node(x).value.data(), dk.data_mut());
                    self.accum(grads, k, dk);
                }
                if self.tracked(b) {
                    let sums = channel_sums(g.data(), geom.n, geom.ci, geom.h * geom.w);
                    self.accum(grads, b, Tensor::new(&[geom.ci], sums)?);
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.node(x).value.shape().to_vec();
                let ws = self.node(w).value.shape().to_vec();
                let (n, din, dout) = (xs[0], xs[1], ws[1]);
                let gd = g.data();
                if self.tracked(x) {
                    let wd = self.node(w).value.data();
                    let mut dx = Tensor::zeros(&xs);
                    let dxd = dx.data_mut();
                    for i in 0..n {
                        for j in 0..din {
                            let wrow = &wd[j * dout..][..dout];
                            let grow = &gd[i * dout..][..dout];
                            let mut acc = T::zero();
                            for (&wv, &gv) in wrow.iter().zip(grow) {
                                acc += wv * gv;
                            }
                            dxd[i * din + j] = acc;
                        }
                    }
                    self.accum(grads, x, dx);
                }
                if self.tracked(w) {
                    let xd = self.node(x).value.data();
                    let mut dw = Tensor::zeros(&ws);
                    let dwd = dw.data_mut();
                    for i in 0..n {
                        let xrow = &xd[i * din..][..din];
                        let grow = &gd[i * dout..][..dout];
                        for (j, &xv) in xrow.iter().enumerate() {
                            let drow = &mut dwd[j * dout..][..dout];
                            for (dv, &gv) in drow.iter_mut().zip(grow) {
                                *dv += xv * gv;
                            }
                        }
                    }
                    self.accum(grads, w, dw);
                }
                if self.tracked(b) {
                    let mut db = alloc::vec![T::zero(); dout];
                    for i in 0..n {
                        for (dv, &gv) in db.iter_mut().zip(&gd[i * dout..][..dout]) {
                            *dv += gv;
                        }
                    }
                    self.accum(grads, b, Tensor::new(&[dout], db)?);
                }
            }
            Op::Reshape(a) => {
                let delta = g.reshaped(self.node(a).value.shape())?;
                self.accum(grads, a, delta);
            }
            Op::Detach => {}
            Op::MseLoss(pred, target) => {
                let p = &self.node(pred).value;
                let t = &self.node(target).value;
                let gv = g.item()?;
                let scale = T::from_f64(2.0 / p.numel() as f64) * gv;
                if self.tracked(pred) {
                    self.accum(grads, pred, p.zip_map(t, |a, b| scale * (a - b))?);
                }
                if self.tracked(target) {
                    self.accum(grads, target, p.zip_map(t, |a, b| -scale * (a - b))?);
                }
            }
            Op::SumAll(a) => {
                let gv = g.item()?;
                self.accum(grads, a, Tensor::full(self.node(a).value.shape(), gv));
            }
            Op::CodebookLookup { table, indices } => {
                if self.tracked(table) {
                    let ts = self.node(table).value.shape().to_vec();
                    let d = ts[1];
                    let out_shape = self.nodes[i].value.shape();
                    let (n, cells) = (out_shape[0], out_shape[2] * out_shape[3]);
                    let mut dt = Tensor::zeros(&ts);
                    let dtd = dt.data_mut();
                    let gd = g.data();
                    for ni in 0..n {
                        for cell in 0..cells {
                            let row = indices[ni * cells + cell] as usize;
                            for di in 0..d {
                                dtd[row * d + di] += gd[(ni * d + di) * cells + cell];
                            }
                        }
                    }
                    self.accum(grads, table, dt);
                }
            }
            Op::StraightThrough { src } => {
                self.accum(grads, src, g.clone());
            }
        }
        Ok(())
    }
}

fn rank4(shape: &[usize]) -> Result<[usize; 4], AutodiffError> {
    match shape {
        &[a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(AutodiffError::Rank { expected: "a rank-4 tensor", got: shape.to_vec() }),
    }
}

fn rank2(shape: &[usize]) -> Result<[usize; 2], AutodiffError> {
    match shape {
        &[a, b] => Ok([a, b]),
        _ => Err(AutodiffError::Rank { expected: "a rank-2 tensor", got: shape.to_vec() }),
    }
}

/// Overflow-free logistic function.
fn sigmoid_stable<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
