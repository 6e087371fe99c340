//! 3×3×3 "same" convolution (padding 1, stride 1) over `[N, C, D, H, W]`
//! volumes, lowered to a matrix product through an im2col buffer.

use super::gemm::{gemm_abt, gemm_strided, Mat, Op};
use super::{Scalar, Tensor, TensorError};

pub const KERNEL_EXTENT: usize = 3;
pub const KERNEL_VOLUME: usize = KERNEL_EXTENT * KERNEL_EXTENT * KERNEL_EXTENT;

/// Weights `[C_out, C_in, 3, 3, 3]` and bias `[C_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self, TensorError> {
        let params = ConvParams { weights, bias };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros(in_channels: usize, out_channels: usize) -> Result<Self, TensorError> {
        Ok(ConvParams {
            weights: Tensor::zeros(vec![out_channels, in_channels, 3, 3, 3])?,
            bias: Tensor::zeros(vec![out_channels])?,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }

    fn validate(&self) -> Result<(), TensorError> {
        let w = self.weights.dims();
        if w.len() != 5 || w[2..] != [KERNEL_EXTENT; 3] {
            return Err(TensorError::shape("conv3d", format!("weights must be [C_out, C_in, 3, 3, 3], got {w:?}")));
        }
        if self.bias.dims() != [w[0]] {
            return Err(TensorError::shape(
                "conv3d",
                format!("bias {:?} does not match {} output channels", self.bias.dims(), w[0]),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Copy)]
struct Volume {
    channels: usize,
    depth: usize,
    height: usize,
    width: usize,
}

impl Volume {
    fn spatial(&self) -> usize {
        self.depth * self.height * self.width
    }
}

fn input_geometry<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    params: &ConvParams<T>,
) -> Result<(usize, Volume), TensorError> {
    params.validate()?;
    input.expect_rank(op, 5)?;
    let d = input.dims();
    if d[1] != params.in_channels() {
        return Err(TensorError::shape(
            op,
            format!("input has {} channels but weights expect {}", d[1], params.in_channels()),
        ));
    }
    Ok((d[0], Volume { channels: d[1], depth: d[2], height: d[3], width: d[4] }))
}

/// Elements of im2col buffer kept per tile, sized to stay in L2.
const TILE_ELEMENTS: usize = 1 << 17;

/// Up to this many output channels the weight gradient uses the dot-product
/// kernel; wider layers amortize GEMM packing well enough.
const NARROW_LAYER: usize = 16;

/// Output rows (one `(d, h)` pair each, `W` voxels long) per im2col tile.
fn tile_rows(vol: Volume) -> usize {
    (TILE_ELEMENTS / (vol.channels * KERNEL_VOLUME * vol.width)).clamp(1, vol.depth * vol.height)
}

/// Unfolds output rows `r0..r1` of one sample `[C, D, H, W]` into
/// `[C·27, (r1−r0)·W]`. Row `c·27 + kd·9 + kh·3 + kw` holds the input shifted
/// by `(kd−1, kh−1, kw−1)`, zero outside.
fn im2col<T: Scalar>(sample: &[T], vol: Volume, r0: usize, r1: usize, cols: &mut [T]) {
    let (dd, hh, ww) = (vol.depth, vol.height, vol.width);
    let spatial = vol.spatial();
    let len = (r1 - r0) * ww;
    for c in 0..vol.channels {
        let chan = &sample[c * spatial..(c + 1) * spatial];
        for k in 0..KERNEL_VOLUME {
            let (kd, kh, kw) = (k / 9, (k / 3) % 3, k % 3);
            let row = &mut cols[(c * KERNEL_VOLUME + k) * len..][..len];
            // valid output w range for this kw: 0 <= w + kw - 1 < W
            let w_lo = 1usize.saturating_sub(kw);
            let w_hi = (ww + 1 - kw).min(ww);
            for r in r0..r1 {
                let (sd, sh) = (r / hh + kd, r % hh + kh);
                let out = &mut row[(r - r0) * ww..][..ww];
                if sd < 1 || sd > dd || sh < 1 || sh > hh || w_lo >= w_hi {
                    out.fill(T::zero());
                    continue;
                }
                let src = &chan[((sd - 1) * hh + (sh - 1)) * ww..][..ww];
                out[..w_lo].fill(T::zero());
                out[w_hi..].fill(T::zero());
                let shift = w_lo + kw - 1;
                out[w_lo..w_hi].copy_from_slice(&src[shift..shift + (w_hi - w_lo)]);
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `[C·27, (r1−r0)·W]` back onto
/// `[C, D, H, W]`, accumulating.
fn col2im<T: Scalar>(cols: &[T], vol: Volume, r0: usize, r1: usize, sample: &mut [T]) {
    let (dd, hh, ww) = (vol.depth, vol.height, vol.width);
    let spatial = vol.spatial();
    let len = (r1 - r0) * ww;
    for c in 0..vol.channels {
        let chan = &mut sample[c * spatial..(c + 1) * spatial];
        for k in 0..KERNEL_VOLUME {
            let (kd, kh, kw) = (k / 9, (k / 3) % 3, k % 3);
            let row = &cols[(c * KERNEL_VOLUME + k) * len..][..len];
            let w_lo = 1usize.saturating_sub(kw);
            let w_hi = (ww + 1 - kw).min(ww);
            if w_lo >= w_hi {
                continue;
            }
            for r in r0..r1 {
                let (sd, sh) = (r / hh + kd, r % hh + kh);
                if sd < 1 || sd > dd || sh < 1 || sh > hh {
                    continue;
                }
                let src = &row[(r - r0) * ww..][..ww];
                let dst = &mut chan[((sd - 1) * hh + (sh - 1)) * ww..][..ww];
                let shift = w_lo + kw - 1;
                for (o, &g) in dst[shift..shift + (w_hi - w_lo)].iter_mut().zip(&src[w_lo..w_hi]) {
                    *o += g;
                }
            }
        }
    }
}

/// Output has the input's depth, height and width. Each output voxel is the
/// bias plus the sum of kernel × zero-padded 3×3×3 window over all input
/// channels.
pub fn conv3d_forward<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>, TensorError> {
    let (batch, vol) = input_geometry("conv3d_forward", input, params)?;
    input.ensure_finite("conv3d_forward", "input")?;
    let out_channels = params.out_channels();
    let spatial = vol.spatial();
    let rows = vol.channels * KERNEL_VOLUME;
    let step = tile_rows(vol);
    let mut cols = vec![T::zero(); rows * step * vol.width];
    let mut out = vec![T::zero(); batch * out_channels * spatial];
    let in_stride = vol.channels * spatial;
    let weights = Mat::new(params.weights.data(), rows, Op::Normal);
    for (n, out_n) in out.chunks_exact_mut(out_channels * spatial).enumerate() {
        let sample = &input.data()[n * in_stride..(n + 1) * in_stride];
        for (plane, &b) in out_n.chunks_exact_mut(spatial).zip(params.bias.data()) {
            plane.fill(b);
        }
        for r0 in (0..vol.depth * vol.height).step_by(step) {
            let r1 = (r0 + step).min(vol.depth * vol.height);
            let len = (r1 - r0) * vol.width;
            im2col(sample, vol, r0, r1, &mut cols);
            gemm_strided(
                out_channels,
                rows,
                len,
                weights,
                Mat::new(&cols[..rows * len], len, Op::Normal),
                T::one(),
                &mut out_n[r0 * vol.width..],
                spatial,
            );
        }
    }
    Tensor::new(vec![batch, out_channels, vol.depth, vol.height, vol.width], out)
}

/// Gradients of `sum(grad_out ⊙ conv3d_forward(input, params))` with respect
/// to the input, the weights and the bias.
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, TensorError> {
    let (grad_in, weights, bias) = backward(input, params, grad_out, true)?;
    Ok(ConvGrads { input: grad_in.expect("requested"), weights, bias })
}

/// [`conv3d_backward`] without the input gradient, for a first layer.
pub fn conv3d_backward_params<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>), TensorError> {
    let (_, weights, bias) = backward(input, params, grad_out, false)?;
    Ok((weights, bias))
}

type Grads<T> = (Option<Tensor<T>>, Tensor<T>, Tensor<T>);

fn backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> Result<Grads<T>, TensorError> {
    let (batch, vol) = input_geometry("conv3d_backward", input, params)?;
    let out_channels = params.out_channels();
    let expected = [batch, out_channels, vol.depth, vol.height, vol.width];
    if grad_out.dims() != expected {
        return Err(TensorError::shape(
            "conv3d_backward",
            format!("grad_out is {:?}, expected {expected:?}", grad_out.dims()),
        ));
    }
    let spatial = vol.spatial();
    let rows = vol.channels * KERNEL_VOLUME;
    let in_stride = vol.channels * spatial;
    let out_stride = out_channels * spatial;
    let step = tile_rows(vol);

    let mut cols = vec![T::zero(); rows * step * vol.width];
    let mut grad_cols = vec![T::zero(); if want_input { cols.len() } else { 0 }];
    let mut grad_w = vec![T::zero(); out_channels * rows];
    let mut grad_b = vec![T::zero(); out_channels];
    let mut grad_in = vec![T::zero(); if want_input { batch * in_stride } else { 0 }];

    for n in 0..batch {
        let g = &grad_out.data()[n * out_stride..(n + 1) * out_stride];
        let sample = &input.data()[n * in_stride..(n + 1) * in_stride];
        for (gb, plane) in grad_b.iter_mut().zip(g.chunks_exact(spatial)) {
            *gb += plane.iter().copied().sum::<T>();
        }
        for r0 in (0..vol.depth * vol.height).step_by(step) {
            let r1 = (r0 + step).min(vol.depth * vol.height);
            let len = (r1 - r0) * vol.width;
            let g_tile = Mat::new(&g[r0 * vol.width..], spatial, Op::Normal);
            im2col(sample, vol, r0, r1, &mut cols);
            // dW += g · colsᵀ
            if out_channels <= NARROW_LAYER {
                gemm_abt(out_channels, rows, len, &g[r0 * vol.width..], spatial, &cols, len, &mut grad_w, rows);
            } else {
                gemm_strided(
                    out_channels,
                    len,
                    rows,
                    g_tile,
                    Mat::new(&cols[..rows * len], len, Op::Transposed),
                    T::one(),
                    &mut grad_w,
                    rows,
                );
            }
            if want_input {
                // dcols = Wᵀ · g
                gemm_strided(
                    rows,
                    out_channels,
                    len,
                    Mat::new(params.weights.data(), rows, Op::Transposed),
                    g_tile,
                    T::zero(),
                    &mut grad_cols[..rows * len],
                    len,
                );
                col2im(&grad_cols, vol, r0, r1, &mut grad_in[n * in_stride..(n + 1) * in_stride]);
            }
        }
    }

    let grad_in = if want_input { Some(Tensor::new(input.dims().to_vec(), grad_in)?) } else { None };
    Ok((grad_in, Tensor::new(params.weights.dims().to_vec(), grad_w)?, Tensor::new(vec![out_channels], grad_b)?))
}
