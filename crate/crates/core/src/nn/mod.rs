//! Minimal CPU convolutional network engine.
//!
//! Everything is NCHW and single threaded so that a run is bit-reproducible
//! given its seed. Layers expose an explicit forward/backward pair instead of
//! a tape-based autograd: a forward pass in training mode returns a cache that
//! the matching backward call consumes. This makes it cheap to apply the same
//! network several times inside one optimization step and accumulate all the
//! parameter gradients into a single buffer.

mod adam;
mod conv;
mod norm;
mod pad;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::{conv_output_len, Conv2d};
pub use norm::{BatchNorm2d, BatchNormCache};
pub use pad::{reflection_pad, reflection_pad_backward};
pub use tensor::Tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type of the engine.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + AddAssign + SubAssign + MulAssign + Sum + Send + Sync + 'static
{
    /// Name written into checkpoint manifests.
    const DTYPE: &'static str;
    /// Width in bytes of the little-endian encoding.
    const BYTES: usize;

    /// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        beta: Self,
        c: &mut [Self],
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Strides for a row-major `rows x cols` matrix, optionally viewed transposed.
#[inline]
fn strides(cols: usize, trans: bool) -> (isize, isize) {
    if trans {
        (1, cols as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $gemm:path) => {
        impl Real for $t {
            const DTYPE: &'static str = $name;
            const BYTES: usize = std::mem::size_of::<$t>();

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                // a is stored as (m x k), or (k x m) when transposed; same for b.
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                let (rsa, csa) = strides(if a_trans { m } else { k }, a_trans);
                let (rsb, csb) = strides(if b_trans { k } else { n }, b_trans);
                // SAFETY: buffer lengths checked above; strides describe
                // in-bounds row-major views of those buffers.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$t>()];
                buf.copy_from_slice(&bytes[..std::mem::size_of::<$t>()]);
                <$t>::from_le_bytes(buf)
            }
        }
    };
}

impl_real!(f32, "f32", matrixmultiply::sgemm);
impl_real!(f64, "f64", matrixmultiply::dgemm);

/// Whether batch statistics or running statistics drive normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running averages are updated when `update_running` is set.
    Train { update_running: bool },
    /// Running statistics; no cache is needed.
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// Visitor over `(value, grad)` parameter slices in a fixed order.
pub trait Parameters<T: Real> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T]));

    /// Non-trainable state (batch-norm running statistics).
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T]));

    fn zero_grad(&mut self) {
        self.visit_params(&mut |_, g| g.iter_mut().for_each(|x| *x = T::zero()));
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p, _| n += p.len());
        n
    }
}

#[inline]
pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

#[inline]
pub fn leaky_relu_inplace<T: Real>(x: &mut [T], slope: T) {
    for v in x {
        if *v < T::zero() {
            *v *= slope;
        }
    }
}

/// Masks `grad` by the sign of the activation output (ReLU and leaky ReLU
/// with a positive slope both preserve sign).
#[inline]
pub fn activation_backward<T: Real>(grad: &mut [T], output: &[T], negative_slope: T) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= T::zero() {
            *g *= negative_slope;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 + 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5 - 2.0).collect(); // 3x4
        let naive = |a: &dyn Fn(usize, usize) -> f64, b: &dyn Fn(usize, usize) -> f64| {
            let mut c = vec![0.0; 8];
            for i in 0..2 {
                for j in 0..4 {
                    c[i * 4 + j] = (0..3).map(|p| a(i, p) * b(p, j)).sum();
                }
            }
            c
        };
        let expected = naive(&|i, p| a[i * 3 + p], &|p, j| b[p * 4 + j]);
        let mut c = vec![0.0; 8];
        f64::gemm(2, 3, 4, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, expected);

        // same product through transposed storage
        let at: Vec<f64> = (0..6).map(|idx| a[(idx % 2) * 3 + idx / 2]).collect(); // 3x2
        let bt: Vec<f64> = (0..12).map(|idx| b[(idx % 3) * 4 + idx / 3]).collect(); // 4x3
        let mut c2 = vec![1.0; 8];
        f64::gemm(2, 3, 4, &at, true, &bt, true, 0.0, &mut c2);
        assert_eq!(c2, expected);

        let mut c3 = expected.clone();
        f64::gemm(2, 3, 4, &a, false, &b, false, 1.0, &mut c3);
        assert!(c3.iter().zip(&expected).all(|(x, y)| (x - 2.0 * y).abs() < 1e-12));
    }

    #[test]
    fn le_encoding_round_trips() {
        let mut buf = Vec::new();
        (-1.25f32).write_le(&mut buf);
        std::f64::consts::PI.write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), -1.25);
        assert_eq!(f64::read_le(&buf[4..]), std::f64::consts::PI);
    }
}
