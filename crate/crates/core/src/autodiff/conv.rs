//! Raw 2-D cross-correlation kernels shared by conv2d and its transpose.
//!
//! Three primitives cover every case: the forward correlation, the
//! gradient with respect to the input (which is also the transposed
//! convolution's forward pass), and the gradient with respect to the
//! kernel. All loops run in a fixed order so results are bit-stable.

use alloc::vec::Vec;

use super::AutodiffError;
use crate::tensor::Scalar;

/// Validated geometry of one correlation: input `[n, ci, h, w]`,
/// kernel `[co, ci, kh, kw]`, output `[n, co, ho, wo]`, zero padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// Geometry for a forward convolution. The output size
    /// `(h + 2*pad - kh) / stride + 1` must be exact; fractional
    /// geometry is an error, not a silent floor.
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        n: usize,
        ci: usize,
        h: usize,
        w: usize,
        co: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self, AutodiffError> {
        if stride == 0 {
            return Err(AutodiffError::BadStride);
        }
        if n == 0 || ci == 0 || co == 0 || kh == 0 || kw == 0 || h == 0 || w == 0 {
            return Err(AutodiffError::EmptyConvDim);
        }
        let span_h = h + 2 * pad;
        let span_w = w + 2 * pad;
        if span_h < kh || span_w < kw || (span_h - kh) % stride != 0 || (span_w - kw) % stride != 0
        {
            return Err(AutodiffError::ConvNonIntegral {
                h,
                w,
                kh,
                kw,
                stride,
                pad,
            });
        }
        Ok(ConvGeom {
            n,
            ci,
            h,
            w,
            co,
            kh,
            kw,
            stride,
            pad,
            ho: (span_h - kh) / stride + 1,
            wo: (span_w - kw) / stride + 1,
        })
    }

    /// Geometry for a transposed convolution taking `[n, co, ho, wo]` to
    /// `[n, ci, h, w]` with `h = (ho - 1) * stride + kh - 2 * pad`. The
    /// result is the same object as the matching forward geometry, so
    /// the adjoint identity holds by construction.
    #[allow(clippy::too_many_arguments)]
    pub fn conv_transpose(
        n: usize,
        cin: usize,
        hin: usize,
        win: usize,
        cout: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self, AutodiffError> {
        if stride == 0 {
            return Err(AutodiffError::BadStride);
        }
        if n == 0 || cin == 0 || cout == 0 || kh == 0 || kw == 0 || hin == 0 || win == 0 {
            return Err(AutodiffError::EmptyConvDim);
        }
        let h = ((hin - 1) * stride + kh).checked_sub(2 * pad).unwrap_or(0);
        let w = ((win - 1) * stride + kw).checked_sub(2 * pad).unwrap_or(0);
        if h == 0 || w == 0 {
            return Err(AutodiffError::ConvNonIntegral {
                h: hin,
                w: win,
                kh,
                kw,
                stride,
                pad,
            });
        }
        let geom = ConvGeom::conv(n, cin, h, w, cout, kh, kw, stride, pad)?;
        debug_assert_eq!((geom.ho, geom.wo), (hin, win));
        Ok(geom)
    }

    pub fn in_len(&self) -> usize {
        self.n * self.ci * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.n * self.co * self.ho * self.wo
    }

    pub fn kernel_len(&self) -> usize {
        self.co * self.ci * self.kh * self.kw
    }
}

/// Output positions `o` with `0 <= o*stride + k_off - pad < in_size`,
/// clamped to `0..out_size`. Returned as a half-open range.
#[inline]
fn out_range(
    k_off: usize,
    pad: usize,
    stride: usize,
    in_size: usize,
    out_size: usize,
) -> (usize, usize) {
    let lo = if k_off >= pad {
        0
    } else {
        (pad - k_off).div_ceil(stride)
    };
    if k_off + 1 > in_size + pad {
        return (0, 0);
    }
    let hi = (in_size + pad - 1 - k_off) / stride + 1;
    (lo.min(out_size), hi.min(out_size))
}

/// out[n,co,oh,ow] += sum_{ci,i,j} input[n,ci,oh*s+i-p, ow*s+j-p] * kernel[co,ci,i,j]
pub fn corr_forward<T: Scalar>(g: &ConvGeom, input: &[T], kernel: &[T], out: &mut [T]) {
    debug_assert_eq!(input.len(), g.in_len());
    debug_assert_eq!(kernel.len(), g.kernel_len());
    debug_assert_eq!(out.len(), g.out_len());
    let (s, p) = (g.stride, g.pad);
    for n in 0..g.n {
        let xn = &input[n * g.ci * g.h * g.w..][..g.ci * g.h * g.w];
        let on = &mut out[n * g.co * g.ho * g.wo..][..g.co * g.ho * g.wo];
        for co in 0..g.co {
            let kc = &kernel[co * g.ci * g.kh * g.kw..][..g.ci * g.kh * g.kw];
            let oc = &mut on[co * g.ho * g.wo..][..g.ho * g.wo];
            for ci in 0..g.ci {
                let xp = &xn[ci * g.h * g.w..][..g.h * g.w];
                let kp = &kc[ci * g.kh * g.kw..][..g.kh * g.kw];
                for i in 0..g.kh {
                    let (oh_lo, oh_hi) = out_range(i, p, s, g.h, g.ho);
                    for oh in oh_lo..oh_hi {
                        let ih = oh * s + i - p;
                        let xrow = &xp[ih * g.w..][..g.w];
                        let orow = &mut oc[oh * g.wo..][..g.wo];
                        for j in 0..g.kw {
                            let kv = kp[i * g.kw + j];
                            let (ow_lo, ow_hi) = out_range(j, p, s, g.w, g.wo);
                            for ow in ow_lo..ow_hi {
                                orow[ow] += kv * xrow[ow * s + j - p];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// dx[n,ci,oh*s+i-p, ow*s+j-p] += sum_{co,i,j} out_side[n,co,oh,ow] * kernel[co,ci,i,j]
///
/// This is both the input gradient of [`corr_forward`] and the forward
/// pass of the transposed convolution.
pub fn corr_input_grad<T: Scalar>(g: &ConvGeom, out_side: &[T], kernel: &[T], dx: &mut [T]) {
    debug_assert_eq!(out_side.len(), g.out_len());
    debug_assert_eq!(kernel.len(), g.kernel_len());
    debug_assert_eq!(dx.len(), g.in_len());
    let (s, p) = (g.stride, g.pad);
    for n in 0..g.n {
        let yn = &out_side[n * g.co * g.ho * g.wo..][..g.co * g.ho * g.wo];
        let xn = &mut dx[n * g.ci * g.h * g.w..][..g.ci * g.h * g.w];
        for co in 0..g.co {
            let kc = &kernel[co * g.ci * g.kh * g.kw..][..g.ci * g.kh * g.kw];
            let yc = &yn[co * g.ho * g.wo..][..g.ho * g.wo];
            for ci in 0..g.ci {
                let xp = &mut xn[ci * g.h * g.w..][..g.h * g.w];
                let kp = &kc[ci * g.kh * g.kw..][..g.kh * g.kw];
                for i in 0..g.kh {
                    let (oh_lo, oh_hi) = out_range(i, p, s, g.h, g.ho);
                    for oh in oh_lo..oh_hi {
                        let ih = oh * s + i - p;
                        let yrow = &yc[oh * g.wo..][..g.wo];
                        let xrow = &mut xp[ih * g.w..][..g.w];
                        for j in 0..g.kw {
                            let kv = kp[i * g.kw + j];
                            let (ow_lo, ow_hi) = out_range(j, p, s, g.w, g.wo);
                            for ow in ow_lo..ow_hi {
                                xrow[ow * s + j - p] += kv * yrow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// dk[co,ci,i,j] += sum_{n,oh,ow} out_side[n,co,oh,ow] * input[n,ci,oh*s+i-p, ow*s+j-p]
pub fn corr_kernel_grad<T: Scalar>(g: &ConvGeom, input: &[T], out_side: &[T], dk: &mut [T]) {
    debug_assert_eq!(input.len(), g.in_len());
    debug_assert_eq!(out_side.len(), g.out_len());
    debug_assert_eq!(dk.len(), g.kernel_len());
    let (s, p) = (g.stride, g.pad);
    for n in 0..g.n {
        let xn = &input[n * g.ci * g.h * g.w..][..g.ci * g.h * g.w];
        let yn = &out_side[n * g.co * g.ho * g.wo..][..g.co * g.ho * g.wo];
        for co in 0..g.co {
            let yc = &yn[co * g.ho * g.wo..][..g.ho * g.wo];
            for ci in 0..g.ci {
                let xp = &xn[ci * g.h * g.w..][..g.h * g.w];
                let kbase = (co * g.ci + ci) * g.kh * g.kw;
                for i in 0..g.kh {
                    let (oh_lo, oh_hi) = out_range(i, p, s, g.h, g.ho);
                    for j in 0..g.kw {
                        let (ow_lo, ow_hi) = out_range(j, p, s, g.w, g.wo);
                        let mut acc = T::zero();
                        for oh in oh_lo..oh_hi {
                            let ih = oh * s + i - p;
                            let xrow = &xp[ih * g.w..][..g.w];
                            let yrow = &yc[oh * g.wo..][..g.wo];
                            for ow in ow_lo..ow_hi {
                                acc += yrow[ow] * xrow[ow * s + j - p];
                            }
                        }
                        dk[kbase + i * g.kw + j] += acc;
                    }
                }
            }
        }
    }
}

/// out[n,c,h,w] += bias[c]
pub fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], n: usize, c: usize, hw: usize) {
    debug_assert_eq!(out.len(), n * c * hw);
    debug_assert_eq!(bias.len(), c);
    for ni in 0..n {
        for (ci, &b) in bias.iter().enumerate() {
            for v in &mut out[(ni * c + ci) * hw..][..hw] {
                *v += b;
            }
        }
    }
}

/// Per-channel sums over batch and spatial dims; the bias gradient.
pub fn channel_sums<T: Scalar>(grad_out: &[T], n: usize, c: usize, hw: usize) -> Vec<T> {
    debug_assert_eq!(grad_out.len(), n * c * hw);
    let mut sums = alloc::vec![T::zero(); c];
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = T::zero();
            for &v in &grad_out[(ni * c + ci) * hw..][..hw] {
                acc += v;
            }
            sums[ci] += acc;
        }
    }
    sums
}
