//! 2×2×2 max pooling with stride 2 and floor semantics.

use super::{Scalar, Tensor, TensorError};

/// Winning input positions recorded by [`maxpool3d_forward`], one flat
/// offset into the input per output value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    winners: Vec<usize>,
}

impl PoolIndices {
    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }

    pub fn winners(&self) -> &[usize] {
        &self.winners
    }
}

/// Pools `[N, C, D, H, W]` to `[N, C, ⌊D/2⌋, ⌊H/2⌋, ⌊W/2⌋]`. Trailing odd
/// slices are dropped. Ties go to the first position in (d, h, w) scan order.
pub fn maxpool3d_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices), TensorError> {
    const OP: &str = "maxpool3d_forward";
    input.expect_rank(OP, 5)?;
    let d = input.dims();
    let (n, c, id, ih, iw) = (d[0], d[1], d[2], d[3], d[4]);
    let (od, oh, ow) = (id / 2, ih / 2, iw / 2);
    if od == 0 || oh == 0 || ow == 0 {
        return Err(TensorError::shape(OP, format!("pooling {d:?} would leave an empty axis")));
    }
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * od * oh * ow);
    let mut winners = Vec::with_capacity(out.capacity());
    for plane in 0..n * c {
        let base = plane * id * ih * iw;
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = base + ((2 * z) * ih + 2 * y) * iw + 2 * x;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let at = base + ((2 * z + dz) * ih + 2 * y + dy) * iw + 2 * x + dx;
                                if src[at] > src[best] {
                                    best = at;
                                }
                            }
                        }
                    }
                    out.push(src[best]);
                    winners.push(best);
                }
            }
        }
    }
    let output_dims = vec![n, c, od, oh, ow];
    Ok((Tensor::new(output_dims.clone(), out)?, PoolIndices { input_dims: d.to_vec(), output_dims, winners }))
}

/// Routes each output gradient to the input position that won its window.
pub fn maxpool3d_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    if grad_out.dims() != indices.output_dims.as_slice() {
        return Err(TensorError::shape(
            "maxpool3d_backward",
            format!(
                "grad_out is {:?} but the indices were recorded for output {:?}",
                grad_out.dims(),
                indices.output_dims
            ),
        ));
    }
    let mut grad_in = Tensor::zeros(indices.input_dims.clone())?;
    let dst = grad_in.data_mut();
    for (&at, &g) in indices.winners.iter().zip(grad_out.data()) {
        dst[at] += g;
    }
    Ok(grad_in)
}
