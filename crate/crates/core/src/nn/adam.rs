use serde::{Deserialize, Serialize};

use super::{Parameters, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer. Moment buffers follow the model's parameter
/// visiting order.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new<P: Parameters<T> + ?Sized>(config: AdamConfig, model: &mut P) -> Self {
        let mut m = Vec::new();
        model.visit_params(&mut |p, _| m.push(vec![T::zero(); p.len()]));
        let v = m.clone();
        Self { config, step: 0, m, v }
    }

    pub fn step<P: Parameters<T> + ?Sized>(&mut self, model: &mut P) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step_size = T::from_f64_lossy(c.lr / bc1);
        let inv_bc2_sqrt = T::from_f64_lossy(1.0 / bc2.sqrt());
        let eps = T::from_f64_lossy(c.eps);
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params(&mut |p, g| {
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p -= step_size * *m / ((*v).sqrt() * inv_bc2_sqrt + eps);
            }
            idx += 1;
        });
    }

    /// Flattened moment state for checkpointing.
    pub fn state(&self) -> Vec<T> {
        self.m.iter().chain(self.v.iter()).flatten().copied().collect()
    }

    pub fn load_state(&mut self, flat: &[T]) -> bool {
        let total: usize = self.m.iter().chain(self.v.iter()).map(Vec::len).sum();
        if flat.len() != total {
            return false;
        }
        let mut it = flat.iter();
        for buf in self.m.iter_mut().chain(self.v.iter_mut()) {
            for x in buf.iter_mut() {
                *x = *it.next().expect("length checked");
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        x: Vec<f64>,
        g: Vec<f64>,
    }

    impl Parameters<f64> for Quadratic {
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
            f(&mut self.x, &mut self.g);
        }
        fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut [f64])) {}
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut q = Quadratic {
            x: vec![1.0, -2.0],
            g: vec![0.0; 2],
        };
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
            &mut q,
        );
        q.g = vec![4.0, -0.5];
        opt.step(&mut q);
        // bias-corrected first step has magnitude lr * g / |g|
        assert!((q.x[0] - 0.9).abs() < 1e-6);
        assert!((q.x[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut q = Quadratic {
            x: vec![3.0, -4.0],
            g: vec![0.0; 2],
        };
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.05,
                beta1: 0.9,
                ..Default::default()
            },
            &mut q,
        );
        for _ in 0..2000 {
            q.g = q.x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut q);
        }
        assert!(q.x.iter().all(|v| v.abs() < 1e-2), "{:?}", q.x);
    }
}
