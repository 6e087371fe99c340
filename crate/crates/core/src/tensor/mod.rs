//! Dense row-major tensors and the numerical kernels the network is built from.
//!
//! Every kernel is a free function over borrowed tensors. Nothing here keeps
//! state between calls, so kernels can run concurrently on disjoint data.

mod activation;
mod adam;
mod conv;
mod dense;
mod gemm;
mod pool;
pub mod rng;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use thiserror::Error;

pub use activation::{relu, relu_backward, softmax_cross_entropy, CrossEntropy};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{
    conv3d_backward, conv3d_backward_params, conv3d_forward, ConvGrads, ConvParams, KERNEL_EXTENT, KERNEL_VOLUME,
};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use pool::{maxpool3d_backward, maxpool3d_forward, PoolIndices};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape error: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: non-finite value in {what}")]
    NonFinite { op: &'static str, what: String },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Shape { op, detail: detail.into() }
    }
}

/// Floating-point element type. Implemented for `f32` (training) and `f64`
/// (gradient checking).
pub trait Scalar: Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static {
    const BITS: u32;

    fn of_f64(value: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `C = A·B + beta·C` on strided matrices. Callers go through the bounds
    /// checked wrappers in `gemm`.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const BITS: u32 = 32;

    fn of_f64(value: f64) -> Self {
        value as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    const BITS: u32 = 64;

    fn of_f64(value: f64) -> Self {
        value
    }

    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

pub const MAX_RANK: usize = 5;

/// A dense array with row-major layout (last dimension fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

fn check_dims(op: &'static str, dims: &[usize]) -> Result<usize, TensorError> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(TensorError::shape(op, format!("rank {} outside 1..={MAX_RANK}", dims.len())));
    }
    if let Some(axis) = dims.iter().position(|&d| d == 0) {
        return Err(TensorError::shape(op, format!("extent of axis {axis} is zero in {dims:?}")));
    }
    Ok(dims.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self, TensorError> {
        let dims = dims.into();
        let len = check_dims("tensor", &dims)?;
        if len != data.len() {
            return Err(TensorError::shape(
                "tensor",
                format!("dims {dims:?} hold {len} values but {} were supplied", data.len()),
            ));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: T) -> Result<Self, TensorError> {
        let dims = dims.into();
        let len = check_dims("tensor", &dims)?;
        Ok(Tensor { dims, data: vec![value; len] })
    }

    /// Builds a tensor from a function of the flat (row-major) position.
    pub fn from_fn(dims: impl Into<Vec<usize>>, f: impl FnMut(usize) -> T) -> Result<Self, TensorError> {
        let dims = dims.into();
        let len = check_dims("tensor", &dims)?;
        Ok(Tensor { dims, data: (0..len).map(f).collect() })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, dims: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        let dims = dims.into();
        let len = check_dims("reshape", &dims)?;
        if len != self.data.len() {
            return Err(TensorError::shape("reshape", format!("cannot view {:?} as {dims:?}", self.dims)));
        }
        Ok(Tensor { dims, data: self.data })
    }

    /// Flat offset of a multi-index. Panics on out-of-range indices.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        index.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {index:?} out of range for {:?}", self.dims);
            acc * d + i
        })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let at = self.offset(index);
        self.data[at] = value;
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { dims: self.dims.clone(), data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, op: &'static str, what: &str) -> Result<(), TensorError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op, what: what.to_string() })
        }
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<(), TensorError> {
        if self.rank() == rank {
            Ok(())
        } else {
            Err(TensorError::shape(op, format!("expected rank {rank}, got {:?}", self.dims)))
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }
}
