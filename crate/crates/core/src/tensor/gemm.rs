//! Bounds-checked matrix products over row-major buffers.

use super::Scalar;

/// Layout of an operand: `Normal` reads the buffer as stored, `Transposed`
/// reads it as its transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Op {
    Normal,
    Transposed,
}

/// A stored row-major matrix whose rows are `ld` elements apart.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    pub data: &'a [T],
    pub ld: usize,
    pub op: Op,
}

impl<'a, T> Mat<'a, T> {
    pub fn new(data: &'a [T], ld: usize, op: Op) -> Self {
        Mat { data, ld, op }
    }

    /// Checks that the stored `rows × cols` matrix fits and returns its
    /// (row, column) strides as seen after `op`.
    fn strides(&self, rows: usize, cols: usize, what: &str) -> (isize, isize) {
        let (stored_rows, stored_cols) = match self.op {
            Op::Normal => (rows, cols),
            Op::Transposed => (cols, rows),
        };
        assert!(self.ld >= stored_cols, "gemm: {what} leading dimension");
        if stored_rows > 0 && stored_cols > 0 {
            assert!((stored_rows - 1) * self.ld + stored_cols <= self.data.len(), "gemm: {what} length");
        }
        match self.op {
            Op::Normal => (self.ld as isize, 1),
            Op::Transposed => (1, self.ld as isize),
        }
    }
}

/// `c[m×n] = op(a)·op(b) + beta·c` on contiguous buffers, where `op(a)` is
/// m×k and `op(b)` is k×n.
///
/// `a` is stored row-major as m×k (`Normal`) or k×m (`Transposed`); likewise
/// `b` as k×n or n×k.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    op_a: Op,
    b: &[T],
    op_b: Op,
    beta: T,
    c: &mut [T],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    let lda = if op_a == Op::Normal { k } else { m };
    let ldb = if op_b == Op::Normal { n } else { k };
    gemm_strided(m, k, n, Mat::new(a, lda, op_a), Mat::new(b, ldb, op_b), beta, c, n);
}

/// [`gemm`] over sub-matrices: `c` rows are `ldc` apart.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: Mat<'_, T>,
    b: Mat<'_, T>,
    beta: T,
    c: &mut [T],
    ldc: usize,
) {
    let (rsa, csa) = a.strides(m, k, "lhs");
    let (rsb, csb) = b.strides(k, n, "rhs");
    assert!(ldc >= n, "gemm: output leading dimension");
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * ldc + n <= c.len(), "gemm: output length");
    // SAFETY: `strides` and the assertion above keep every strided access
    // inside the three buffers, and `c` is exclusively borrowed.
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// `c[m×n] += a·bᵀ` where `a` is m×k and `b` is n×k, both row-major with
/// rows `lda` and `ldb` apart, and `c` rows are `ldc` apart.
///
/// Meant for long `k` with small `m` and `n`, a shape where packing-based
/// GEMM spends most of its time copying. Each dot product is summed in a
/// fixed lane order, so the result does not depend on which instruction set
/// the dispatcher picks.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_abt<T: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    lda: usize,
    b: &[T],
    ldb: usize,
    c: &mut [T],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(lda >= k && (m - 1) * lda + k <= a.len(), "gemm_abt: lhs");
    assert!(ldb >= k && (n - 1) * ldb + k <= b.len(), "gemm_abt: rhs");
    assert!(ldc >= n && (m - 1) * ldc + n <= c.len(), "gemm_abt: output");
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { abt_avx2(m, n, k, a, lda, b, ldb, c, ldc) };
            return;
        }
    }
    abt_kernel(m, n, k, a, lda, b, ldb, c, ldc);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn abt_avx2<T: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    lda: usize,
    b: &[T],
    ldb: usize,
    c: &mut [T],
    ldc: usize,
) {
    abt_kernel(m, n, k, a, lda, b, ldb, c, ldc);
}

const LANES: usize = 8;
const BLOCK_M: usize = 2;
const BLOCK_N: usize = 4;

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn abt_kernel<T: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    lda: usize,
    b: &[T],
    ldb: usize,
    c: &mut [T],
    ldc: usize,
) {
    let body = k / LANES * LANES;
    for i0 in (0..m).step_by(BLOCK_M) {
        let rows = (m - i0).min(BLOCK_M);
        for j0 in (0..n).step_by(BLOCK_N) {
            let cols = (n - j0).min(BLOCK_N);
            let mut acc = [[[T::zero(); LANES]; BLOCK_N]; BLOCK_M];
            for p in (0..body).step_by(LANES) {
                for (ii, acc_i) in acc.iter_mut().enumerate().take(rows) {
                    let x: &[T; LANES] = a[(i0 + ii) * lda + p..][..LANES].try_into().expect("lane block");
                    for (jj, acc_ij) in acc_i.iter_mut().enumerate().take(cols) {
                        let y: &[T; LANES] = b[(j0 + jj) * ldb + p..][..LANES].try_into().expect("lane block");
                        for l in 0..LANES {
                            acc_ij[l] += x[l] * y[l];
                        }
                    }
                }
            }
            for (ii, acc_i) in acc.iter().enumerate().take(rows) {
                let x = &a[(i0 + ii) * lda..][..k];
                for (jj, acc_ij) in acc_i.iter().enumerate().take(cols) {
                    let y = &b[(j0 + jj) * ldb..][..k];
                    let mut s = T::zero();
                    for &v in acc_ij {
                        s += v;
                    }
                    for p in body..k {
                        s += x[p] * y[p];
                    }
                    c[(i0 + ii) * ldc + j0 + jj] += s;
                }
            }
        }
    }
}
