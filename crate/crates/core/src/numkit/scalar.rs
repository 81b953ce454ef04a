use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use super::activation::{tanh_slice_f32, tanh_slice_f64};

/// Floating-point scalar usable by the dense kernels.
///
/// Implemented for `f32` and `f64`; the dense product dispatches to the
/// matching `matrixmultiply` kernel.
pub trait Real: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static {
    /// `c <- alpha * a · b + beta * c` over strided views.
    ///
    /// `a` is `m × k`, `b` is `k × n`, `c` is `m × n`; strides are in elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    /// In-place hyperbolic tangent of every element.
    fn tanh_slice(xs: &mut [Self]);

    /// Converts an `f64` constant, panicking only on types that cannot hold it.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal out of range")
    }
}

fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows as isize - 1) as usize * rs.unsigned_abs() + (cols as isize - 1) as usize * cs.unsigned_abs() + 1
}

macro_rules! impl_real {
    ($t:ty, $kernel:path, $tanh:path) => {
        impl Real for $t {
            fn tanh_slice(xs: &mut [Self]) {
                $tanh(xs)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
                assert!(a.len() >= extent(m, k, rsa, csa), "gemm: lhs buffer too short");
                assert!(b.len() >= extent(k, n, rsb, csb), "gemm: rhs buffer too short");
                assert!(c.len() >= extent(m, n, rsc, csc), "gemm: output buffer too short");
                // SAFETY: every strided access stays inside the slices checked above.
                unsafe {
                    $kernel(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, csc)
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm, tanh_slice_f32);
impl_real!(f64, matrixmultiply::dgemm, tanh_slice_f64);
