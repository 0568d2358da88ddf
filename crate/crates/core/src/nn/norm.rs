use super::{Parameters, Real, Tensor};

/// Per-channel batch normalization over `(N, H, W)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// Normalized activations and inverse std saved by a training-mode forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            grad_gamma: vec![T::zero(); channels],
            grad_beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    /// Normalizes `x` in place with the running statistics.
    pub fn forward_eval(&self, x: &mut Tensor<T>) {
        assert_eq!(x.c, self.channels, "batch-norm channel mismatch");
        let hw = x.h * x.w;
        let eps = T::from_f64_lossy(self.eps);
        for c in 0..self.channels {
            let inv = (self.running_var[c] + eps).sqrt().recip();
            let (g, b, m) = (self.gamma[c], self.beta[c], self.running_mean[c]);
            for n in 0..x.n {
                let off = (n * x.c + c) * hw;
                for v in &mut x.data[off..off + hw] {
                    *v = (*v - m) * inv * g + b;
                }
            }
        }
    }

    /// Normalizes `x` in place with batch statistics.
    #[allow(clippy::needless_range_loop)]
    pub fn forward_train(&mut self, x: &mut Tensor<T>, update_running: bool) -> BatchNormCache<T> {
        assert_eq!(x.c, self.channels, "batch-norm channel mismatch");
        let hw = x.h * x.w;
        let count = x.n * hw;
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); self.channels];
        let inv_count = 1.0 / count as f64;
        for c in 0..self.channels {
            // accumulate statistics in f64 regardless of T
            let mut sum = 0.0;
            for n in 0..x.n {
                let off = (n * x.c + c) * hw;
                sum += x.data[off..off + hw].iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mean = sum * inv_count;
            let mut sq = 0.0;
            for n in 0..x.n {
                let off = (n * x.c + c) * hw;
                sq += x.data[off..off + hw]
                    .iter()
                    .map(|v| (v.as_f64() - mean).powi(2))
                    .sum::<f64>();
            }
            let var = sq * inv_count;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = T::from_f64_lossy(inv);
            let (mean_t, inv_t) = (T::from_f64_lossy(mean), inv_std[c]);
            let (g, b) = (self.gamma[c], self.beta[c]);
            for n in 0..x.n {
                let off = (n * x.c + c) * hw;
                for (v, xh) in x.data[off..off + hw].iter_mut().zip(&mut xhat[off..off + hw]) {
                    *xh = (*v - mean_t) * inv_t;
                    *v = *xh * g + b;
                }
            }
            if update_running {
                let m = self.momentum;
                let unbiased = if count > 1 {
                    var * count as f64 / (count - 1) as f64
                } else {
                    var
                };
                let rm = self.running_mean[c].as_f64();
                let rv = self.running_var[c].as_f64();
                self.running_mean[c] = T::from_f64_lossy((1.0 - m) * rm + m * mean);
                self.running_var[c] = T::from_f64_lossy((1.0 - m) * rv + m * unbiased);
            }
        }
        BatchNormCache { xhat, inv_std }
    }

    /// Converts `grad` (w.r.t. the output) into the gradient w.r.t. the input
    /// in place, accumulating `gamma`/`beta` gradients.
    pub fn backward(&mut self, cache: &BatchNormCache<T>, grad: &mut Tensor<T>) {
        let hw = grad.h * grad.w;
        let count = (grad.n * hw) as f64;
        for c in 0..self.channels {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for n in 0..grad.n {
                let off = (n * grad.c + c) * hw;
                for (dy, xh) in grad.data[off..off + hw].iter().zip(&cache.xhat[off..off + hw]) {
                    sum_dy += dy.as_f64();
                    sum_dy_xhat += dy.as_f64() * xh.as_f64();
                }
            }
            self.grad_gamma[c] += T::from_f64_lossy(sum_dy_xhat);
            self.grad_beta[c] += T::from_f64_lossy(sum_dy);
            let k = T::from_f64_lossy(self.gamma[c].as_f64() * cache.inv_std[c].as_f64() / count);
            let sum_dy_t = T::from_f64_lossy(sum_dy);
            let sum_dy_xhat_t = T::from_f64_lossy(sum_dy_xhat);
            let m = T::from_f64_lossy(count);
            for n in 0..grad.n {
                let off = (n * grad.c + c) * hw;
                for (dy, &xh) in grad.data[off..off + hw].iter_mut().zip(&cache.xhat[off..off + hw]) {
                    *dy = k * (m * *dy - sum_dy_t - xh * sum_dy_xhat_t);
                }
            }
        }
    }
}

impl<T: Real> Parameters<T> for BatchNorm2d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        f(&mut self.gamma, &mut self.grad_gamma);
        f(&mut self.beta, &mut self.grad_beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f64> {
        Tensor::from_vec(2, 2, 2, 3, (0..24).map(|i| ((i * 7 % 11) as f64) * 0.3 - 1.0).collect())
    }

    #[test]
    fn train_mode_output_is_standardized() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        let mut x = sample();
        bn.forward_train(&mut x, true);
        for c in 0..2 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|n| x.data[(n * 2 + c) * 6..(n * 2 + c) * 6 + 6].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / 12.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        assert!(bn.running_mean.iter().any(|&m| m != 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.gamma = vec![1.5, -0.7];
        bn.beta = vec![0.2, 0.1];
        let x = sample();
        let weights: Vec<f64> = (0..24).map(|i| (i as f64 * 0.9).sin()).collect();
        let loss = |bn: &mut BatchNorm2d<f64>, x: &Tensor<f64>| {
            let mut y = x.clone();
            bn.forward_train(&mut y, false);
            y.data.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut y = x.clone();
        let cache = bn.forward_train(&mut y, false);
        let mut g = x.with_data(weights.clone());
        bn.backward(&cache, &mut g);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data[i] += h;
            let mut xm = x.clone();
            xm.data[i] -= h;
            let fd = (loss(&mut bn, &xp) - loss(&mut bn, &xm)) / (2.0 * h);
            assert!((fd - g.data[i]).abs() < 1e-6, "idx {i}: {fd} vs {}", g.data[i]);
        }
    }
}
