use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Parameters, Real, Tensor};

/// Unpadded 2-D convolution with a square kernel.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[out_channels, in_channels * kernel * kernel]`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
}

/// Output extent of a valid convolution, `None` when the input is smaller
/// than the kernel.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    (input >= kernel && stride > 0).then(|| (input - kernel) / stride + 1)
}

impl<T: Real> Conv2d<T> {
    /// Kernels drawn from `N(0, std^2)`, zero biases.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let fan = in_channels * kernel * kernel;
        let weight = if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite positive std");
            (0..out_channels * fan)
                .map(|_| T::from_f64_lossy(normal.sample(rng)))
                .collect()
        } else {
            vec![T::zero(); out_channels * fan]
        };
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight,
            bias: vec![T::zero(); out_channels],
            grad_weight: vec![T::zero(); out_channels * fan],
            grad_bias: vec![T::zero(); out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((
            conv_output_len(h, self.kernel, self.stride)?,
            conv_output_len(w, self.kernel, self.stride)?,
        ))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.in_channels, "conv input channel mismatch");
        let (oh, ow) = self.output_hw(x.h, x.w).expect("conv input smaller than kernel");
        let p = oh * ow;
        let kk = self.fan_in();
        let mut out = Tensor::zeros(x.n, self.out_channels, oh, ow);
        let mut cols = vec![T::zero(); kk * p];
        for i in 0..x.n {
            self.im2col(x.sample(i), x.h, x.w, oh, ow, &mut cols);
            let y = out.sample_mut(i);
            for (oc, row) in y.chunks_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v = self.bias[oc]);
            }
            T::gemm(self.out_channels, kk, p, &self.weight, false, &cols, false, T::one(), y);
        }
        out
    }

    /// Accumulates parameter gradients (when `param_grad`) and returns the
    /// gradient with respect to the input `x` (when `input_grad`).
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        param_grad: bool,
        input_grad: bool,
    ) -> Option<Tensor<T>> {
        let (oh, ow) = (grad_out.h, grad_out.w);
        let p = oh * ow;
        let kk = self.fan_in();
        let mut cols = vec![T::zero(); kk * p];
        let mut rows = vec![T::zero(); kk * p];
        let mut dcols = vec![T::zero(); kk * p];
        let mut dx = input_grad.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
        for i in 0..x.n {
            let dy = grad_out.sample(i);
            if param_grad {
                for (oc, row) in dy.chunks(p).enumerate() {
                    self.grad_bias[oc] += row.iter().copied().sum::<T>();
                }
                // dW += dY . rows; a transposed right operand packs several times slower
                self.im2col(x.sample(i), x.h, x.w, oh, ow, &mut cols);
                transpose(&cols, kk, p, &mut rows);
                T::gemm(
                    self.out_channels,
                    p,
                    kk,
                    dy,
                    false,
                    &rows,
                    false,
                    T::one(),
                    &mut self.grad_weight,
                );
            }
            if let Some(dx) = dx.as_mut() {
                // dcols = W^T . dY
                T::gemm(
                    kk,
                    self.out_channels,
                    p,
                    &self.weight,
                    true,
                    dy,
                    false,
                    T::zero(),
                    &mut dcols,
                );
                self.col2im(&dcols, x.h, x.w, oh, ow, dx.sample_mut(i));
            }
        }
        dx
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [T]) {
        let k = self.kernel;
        let s = self.stride;
        let p = oh * ow;
        for ci in 0..self.in_channels {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let src = &plane[(oy * s + ky) * w..];
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            dst.copy_from_slice(&src[kx..kx + ow]);
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = src[ox * s + kx];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize, oh: usize, ow: usize, dx: &mut [T]) {
        let k = self.kernel;
        let s = self.stride;
        let p = oh * ow;
        for ci in 0..self.in_channels {
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let base = (oy * s + ky) * w + kx;
                        let src = &row[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            for (d, &g) in plane[base..base + ow].iter_mut().zip(src) {
                                *d += g;
                            }
                        } else {
                            for (ox, &g) in src.iter().enumerate() {
                                plane[base + ox * s] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `dst = src^T` for a row-major `r x c` matrix, in cache-sized blocks.
fn transpose<T: Copy>(src: &[T], r: usize, c: usize, dst: &mut [T]) {
    const B: usize = 32;
    for r0 in (0..r).step_by(B) {
        for c0 in (0..c).step_by(B) {
            for i in r0..(r0 + B).min(r) {
                for j in c0..(c0 + B).min(c) {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
    }
}

impl<T: Real> Parameters<T> for Conv2d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        f(&mut self.weight, &mut self.grad_weight);
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut [T])) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct seven-loop convolution.
    fn naive(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (oh, ow) = conv.output_hw(x.h, x.w).unwrap();
        let k = conv.kernel;
        let mut out = Tensor::zeros(x.n, conv.out_channels, oh, ow);
        for n in 0..x.n {
            for oc in 0..conv.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias[oc];
                        for ci in 0..conv.in_channels {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let wv = conv.weight[((oc * conv.in_channels + ci) * k + ky) * k + kx];
                                    let iy = oy * conv.stride + ky;
                                    let ix = ox * conv.stride + kx;
                                    acc += wv * x.data[((n * x.c + ci) * x.h + iy) * x.w + ix];
                                }
                            }
                        }
                        out.data[((n * conv.out_channels + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, s, h, w) in &[(3, 1, 7, 6), (5, 2, 11, 9), (3, 2, 8, 8), (1, 1, 4, 5)] {
            let mut conv = Conv2d::<f64>::new(2, 3, k, s, 0.5, &mut rng);
            conv.bias = vec![0.1, -0.2, 0.3];
            let data = (0..2 * 2 * h * w).map(|i| ((i * 37 % 17) as f64) / 7.0 - 1.0).collect();
            let x = Tensor::from_vec(2, 2, h, w, data);
            let a = conv.forward(&x);
            let b = naive(&conv, &x);
            assert_eq!(a.shape(), b.shape());
            for (u, v) in a.data.iter().zip(&b.data) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_gradient_is_adjoint_of_forward() {
        // <conv(x) - b, y> == <x, conv^T(y)> for the linear part.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::<f64>::new(2, 3, 5, 2, 0.3, &mut rng);
        let x = Tensor::from_vec(1, 2, 13, 12, (0..312).map(|i| (i as f64 * 0.37).sin()).collect());
        let fx = conv.forward(&x);
        let y = fx.with_data((0..fx.len()).map(|i| (i as f64 * 0.11).cos()).collect());
        let lhs: f64 = fx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let dx = conv.backward(&x, &y, false, true).unwrap();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        // bias is zero at init
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn output_length_arithmetic() {
        assert_eq!(conv_output_len(64, 5, 2), Some(30));
        assert_eq!(conv_output_len(8, 5, 2), Some(2));
        assert_eq!(conv_output_len(2, 5, 2), None);
    }
}
