//! Least-squares adversarial loss and the three self-consistency losses.
//!
//! Every squared norm is reduced by the mean over elements, so the loss
//! weights do not depend on the patch size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Real;

/// Per-step values of every objective term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_gan_d: f64,
    pub l_gan_g: f64,
    pub l_clean: f64,
    pub l_pn: f64,
    pub l_rec: f64,
    pub total_g: f64,
}

impl LossBreakdown {
    /// `(name, value)` for each component, in log-column order.
    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("l_gan_d", self.l_gan_d),
            ("l_gan_g", self.l_gan_g),
            ("l_clean", self.l_clean),
            ("l_pn", self.l_pn),
            ("l_rec", self.l_rec),
            ("total_g", self.total_g),
        ]
    }

    /// First non-finite component, if any.
    pub fn non_finite(&self) -> Option<(&'static str, f64)> {
        self.components().into_iter().find(|(_, v)| !v.is_finite())
    }
}

/// Weights of the clean, pure-noise and reconstruction terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        w1: 0.0,
        w2: 0.0,
        w3: 0.0,
    };

    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        let w = Self { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "loss weight {name} = {v} must be non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.w1, self.w2, self.w3]
    }
}

fn check_finite<T: Real>(what: &'static str, xs: &[T]) -> Result<()> {
    match xs.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite {
            component: what,
            detail: format!("element {i} is {:?}", xs[i]),
        }),
    }
}

fn check_len<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    Ok(())
}

/// `mean((x - target)^2)`, accumulated in f64.
pub fn mean_sq_to<T: Real>(x: &[T], target: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| (v.as_f64() - target).powi(2)).sum::<f64>() / x.len() as f64
}

/// `mean((a - b)^2)`, accumulated in f64.
pub fn mean_sq_diff<T: Real>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        / a.len() as f64
}

/// Gradient of `scale * mean((x - target)^2)` with respect to `x`.
pub fn mean_sq_to_grad<T: Real>(x: &[T], target: f64, scale: f64) -> Vec<T> {
    let k = T::from_f64_lossy(2.0 * scale / x.len() as f64);
    let t = T::from_f64_lossy(target);
    x.iter().map(|&v| k * (v - t)).collect()
}

/// Gradient of `scale * mean((a - b)^2)` with respect to `a`.
pub fn mean_sq_diff_grad<T: Real>(a: &[T], b: &[T], scale: f64) -> Vec<T> {
    let k = T::from_f64_lossy(2.0 * scale / a.len() as f64);
    a.iter().zip(b).map(|(&x, &y)| k * (x - y)).collect()
}

/// Least-squares GAN split: the discriminator minimizes
/// `mean((D(real) - 1)^2) + mean(D(fake)^2)`, the generator minimizes
/// `mean((D(fake) - 1)^2)`. Returns `(l_d, l_g)`.
pub fn adversarial_losses<T: Real>(d_real: &[T], d_fake: &[T]) -> Result<(f64, f64)> {
    check_finite("d_real", d_real)?;
    check_finite("d_fake", d_fake)?;
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Empty("discriminator score map"));
    }
    let l_d = mean_sq_to(d_real, 1.0) + mean_sq_to(d_fake, 0.0);
    let l_g = mean_sq_to(d_fake, 1.0);
    Ok((l_d, l_g))
}

/// Response of the generator to clean input, which should be zero.
pub fn clean_consistency_loss<T: Real>(g_on_clean: &[T]) -> f64 {
    mean_sq_to(g_on_clean, 0.0)
}

/// `mean((G(G(x)) - G(x))^2)` given `g_first = G(x)` and `g_second = G(G(x))`.
pub fn pure_noise_consistency_loss<T: Real>(g_first: &[T], g_second: &[T]) -> Result<f64> {
    check_len(g_first, g_second)?;
    Ok(mean_sq_diff(g_second, g_first))
}

/// `mean((G(J + G(x)) - G(x))^2)` given the re-extracted and original maps.
pub fn reconstruction_consistency_loss<T: Real>(g_reextracted: &[T], g_original: &[T]) -> Result<f64> {
    check_len(g_reextracted, g_original)?;
    Ok(mean_sq_diff(g_reextracted, g_original))
}

/// `l_gan_g + w1 * l_clean + w2 * l_pn + w3 * l_rec`.
pub fn total_generator_objective(b: &LossBreakdown, weights: LossWeights) -> Result<f64> {
    weights.validate()?;
    Ok(b.l_gan_g + weights.w1 * b.l_clean + weights.w2 * b.l_pn + weights.w3 * b.l_rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adversarial_examples() {
        let (d, g) = adversarial_losses(&[1.0f64; 4], &[0.0f64; 4]).unwrap();
        assert_eq!((d, g), (0.0, 1.0));
        let (d, g) = adversarial_losses(&[0.8f64], &[0.3f64]).unwrap();
        assert!((d - 0.13).abs() < 1e-12 && (g - 0.49).abs() < 1e-12);
        let (d, g) = adversarial_losses(&[0.5f64; 9], &[0.5f64; 9]).unwrap();
        assert!((d - 0.5).abs() < 1e-12 && (g - 0.25).abs() < 1e-12);
        assert!(matches!(
            adversarial_losses(&[f64::NAN], &[0.0]),
            Err(Error::NonFinite {
                component: "d_real",
                ..
            })
        ));
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(clean_consistency_loss(&[0.0f64; 4]), 0.0);
        assert!((clean_consistency_loss(&[0.5f64, -0.5, 0.5, -0.5]) - 0.25).abs() < 1e-12);
        assert!((clean_consistency_loss(&[-3.0f64; 5]) - 9.0).abs() < 1e-12);

        assert_eq!(pure_noise_consistency_loss(&[0.2f64, 0.4], &[0.2, 0.4]).unwrap(), 0.0);
        assert!((pure_noise_consistency_loss(&[2.0f64], &[3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(pure_noise_consistency_loss(&[1.0f64], &[1.0, 2.0]).is_err());

        assert!((reconstruction_consistency_loss(&[1.5f64], &[1.0]).unwrap() - 0.25).abs() < 1e-12);
        assert!(reconstruction_consistency_loss(&[1.5f64, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn total_objective_examples() {
        let b = LossBreakdown {
            l_gan_g: 0.5,
            l_clean: 0.2,
            l_pn: 0.1,
            l_rec: 0.3,
            ..Default::default()
        };
        assert_eq!(total_generator_objective(&b, LossWeights::ZERO).unwrap(), 0.5);
        let all = LossWeights::new(1.0, 1.0, 1.0).unwrap();
        assert!((total_generator_objective(&b, all).unwrap() - 1.1).abs() < 1e-12);
        assert_eq!(total_generator_objective(&LossBreakdown::default(), all).unwrap(), 0.0);
        assert!(LossWeights::new(-0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn gradients_of_squared_means() {
        let x = [1.0f64, -2.0, 0.5];
        let g = mean_sq_to_grad(&x, 1.0, 3.0);
        // d/dx 3 * mean((x-1)^2) = 2 (x - 1)
        assert_eq!(g, vec![0.0, -6.0, -1.0]);
        let g = mean_sq_diff_grad(&x, &[0.0, 0.0, 0.5], 1.5);
        assert_eq!(g, vec![1.0, -2.0, 0.0]);
    }

    proptest! {
        #[test]
        fn components_are_non_negative(
            a in proptest::collection::vec(-10.0f64..10.0, 1..20),
            shift in -5.0f64..5.0,
        ) {
            let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let (ld, lg) = adversarial_losses(&a, &b).unwrap();
            prop_assert!(ld >= 0.0 && lg >= 0.0);
            prop_assert!(clean_consistency_loss(&a) >= 0.0);
            prop_assert!(pure_noise_consistency_loss(&a, &b).unwrap() >= 0.0);
            prop_assert!(reconstruction_consistency_loss(&b, &a).unwrap() >= 0.0);
        }

        #[test]
        fn total_is_monotone_in_each_weight(
            parts in proptest::array::uniform4(0.0f64..5.0),
            w in proptest::array::uniform3(0.0f64..3.0),
            bump in 0.0f64..2.0,
            which in 0usize..3,
        ) {
            let b = LossBreakdown { l_gan_g: parts[0], l_clean: parts[1], l_pn: parts[2], l_rec: parts[3], ..Default::default() };
            let base = LossWeights { w1: w[0], w2: w[1], w3: w[2] };
            let mut more = base;
            match which { 0 => more.w1 += bump, 1 => more.w2 += bump, _ => more.w3 += bump }
            prop_assert!(total_generator_objective(&b, more).unwrap() >= total_generator_objective(&b, base).unwrap());
        }
    }
}
