//! Fully connected layer: `y = x·W + b` with `x: [N, F]`, `W: [F, G]`, `b: [G]`.

use super::gemm::{gemm, Op};
use super::{Scalar, Tensor, TensorError};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn geometry<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(usize, usize, usize), TensorError> {
    input.expect_rank(op, 2)?;
    weights.expect_rank(op, 2)?;
    let (n, f) = (input.dims()[0], input.dims()[1]);
    let (wf, g) = (weights.dims()[0], weights.dims()[1]);
    if f != wf {
        return Err(TensorError::shape(op, format!("input width {f} does not match weight rows {wf}")));
    }
    Ok((n, f, g))
}

pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    const OP: &str = "dense_forward";
    let (n, f, g) = geometry(OP, input, weights)?;
    if bias.dims() != [g] {
        return Err(TensorError::shape(OP, format!("bias {:?} does not match width {g}", bias.dims())));
    }
    input.ensure_finite(OP, "input")?;
    let mut out = Vec::with_capacity(n * g);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(n, f, g, input.data(), Op::Normal, weights.data(), Op::Normal, T::one(), &mut out);
    Tensor::new(vec![n, g], out)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>, TensorError> {
    const OP: &str = "dense_backward";
    let (n, f, g) = geometry(OP, input, weights)?;
    if grad_out.dims() != [n, g] {
        return Err(TensorError::shape(OP, format!("grad_out is {:?}, expected {:?}", grad_out.dims(), [n, g])));
    }
    let mut grad_in = vec![T::zero(); n * f];
    gemm(n, g, f, grad_out.data(), Op::Normal, weights.data(), Op::Transposed, T::zero(), &mut grad_in);
    let mut grad_w = vec![T::zero(); f * g];
    gemm(f, n, g, input.data(), Op::Transposed, grad_out.data(), Op::Normal, T::zero(), &mut grad_w);
    let mut grad_b = vec![T::zero(); g];
    for row in grad_out.data().chunks_exact(g) {
        for (b, &v) in grad_b.iter_mut().zip(row) {
            *b += v;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![n, f], grad_in)?,
        weights: Tensor::new(vec![f, g], grad_w)?,
        bias: Tensor::new(vec![g], grad_b)?,
    })
}
