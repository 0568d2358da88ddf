//! Noise-extraction generator and patch discriminator.
//!
//! The generator is a plain DnCNN stack: conv+ReLU, `depth - 2` units of
//! conv+batch-norm+ReLU, and a final conv. All convolutions are unpadded 3x3;
//! the input is reflection-padded by `depth` pixels so the stack shrinks it
//! back to its original size.
//!
//! The discriminator is four unpadded convolutions with leaky ReLU between
//! them and a raw (activation-free) score map at the end.

use rand::Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    activation_backward, conv_output_len, leaky_relu_inplace, reflection_pad, reflection_pad_backward, relu_inplace,
    BatchNorm2d, BatchNormCache, Conv2d, Mode, Parameters, Real, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Total number of conv layers.
    pub depth: usize,
    pub mid_channels: usize,
    pub kernel: usize,
    /// Image channels in and out.
    pub channels: usize,
    /// Reflection padding; must equal `depth`.
    pub padding: usize,
    /// Std of the normal kernel init; `None` uses `sqrt(2 / fan_in)`.
    pub init_std: Option<f64>,
    /// Multiplier on the final layer's init std (0 gives an all-zero output).
    pub last_layer_gain: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::desk(1)
    }
}

impl GeneratorConfig {
    /// 17 layers, 64 channels.
    pub fn paper(channels: usize) -> Self {
        Self {
            depth: 17,
            mid_channels: 64,
            kernel: 3,
            channels,
            padding: 17,
            init_std: None,
            last_layer_gain: 0.1,
        }
    }

    /// 7 layers, 32 channels.
    pub fn desk(channels: usize) -> Self {
        Self {
            depth: 7,
            mid_channels: 32,
            padding: 7,
            ..Self::paper(channels)
        }
    }

    pub fn with_depth(depth: usize, mid_channels: usize, channels: usize) -> Self {
        Self {
            depth,
            mid_channels,
            padding: depth,
            ..Self::paper(channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.depth < 2 {
            problems.push(format!("depth {} < 2", self.depth));
        }
        if self.kernel != 3 {
            problems.push(format!("kernel {} (only 3x3 is supported)", self.kernel));
        }
        if self.padding != self.depth {
            problems.push(format!(
                "padding {} must equal depth {} so the output keeps the input size",
                self.padding, self.depth
            ));
        }
        if self.channels != 1 && self.channels != 3 {
            problems.push(format!("channels {} (expected 1 or 3)", self.channels));
        }
        if self.mid_channels == 0 {
            problems.push("mid_channels must be positive".into());
        }
        if self.init_std.is_some_and(|s| !(s.is_finite() && s > 0.0))
            || self.last_layer_gain.is_nan()
            || self.last_layer_gain < 0.0
        {
            problems.push("initialization scales must be finite and non-negative".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("generator: {}", problems.join("; "))))
        }
    }

    /// Trainable parameter count implied by the layer dimensions.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let (c, m) = (self.channels, self.mid_channels);
        let first = c * m * k2 + m;
        let middle = (self.depth - 2) * (m * m * k2 + m + 2 * m);
        let last = m * c * k2 + c;
        first + middle + last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub channels: usize,
    pub layer_channels: [usize; 4],
    pub kernels: [usize; 4],
    pub strides: [usize; 4],
    pub leaky_slope: f64,
    pub init_std: Option<f64>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self::paper(1)
    }
}

impl DiscriminatorConfig {
    pub fn paper(channels: usize) -> Self {
        Self {
            channels,
            layer_channels: [64, 128, 64, 1],
            kernels: [5, 5, 3, 3],
            strides: [2, 2, 1, 1],
            leaky_slope: 0.2,
            init_std: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.channels != 1 && self.channels != 3 {
            problems.push(format!("channels {} (expected 1 or 3)", self.channels));
        }
        if self.layer_channels[3] != 1 {
            problems.push("the final layer must emit a single score channel".into());
        }
        if self.layer_channels.contains(&0) || self.kernels.contains(&0) || self.strides.contains(&0) {
            problems.push("layer widths, kernels and strides must be positive".into());
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            problems.push(format!("leaky slope {} outside [0, 1)", self.leaky_slope));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("discriminator: {}", problems.join("; "))))
        }
    }

    /// Spatial size after each layer for an `n`-pixel input side, or an error
    /// naming the first layer that would be empty.
    #[allow(clippy::needless_range_loop)]
    pub fn output_sizes(&self, n: usize) -> Result<[usize; 4]> {
        let mut sizes = [0; 4];
        let mut cur = n;
        for i in 0..4 {
            cur = conv_output_len(cur, self.kernels[i], self.strides[i]).ok_or_else(|| {
                Error::InvalidShape(format!(
                    "discriminator layer {} needs at least {} pixels but gets {cur} (input {n})",
                    i + 1,
                    self.kernels[i]
                ))
            })?;
            sizes[i] = cur;
        }
        Ok(sizes)
    }
}

fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

/// Activations saved by a training-mode generator pass.
#[derive(Debug, Clone)]
pub struct GeneratorTape<T> {
    /// Input of every conv layer; entry 0 is the padded image.
    inputs: Vec<Tensor<T>>,
    norms: Vec<Option<BatchNormCache<T>>>,
}

#[derive(Debug, Clone)]
pub struct Generator<T> {
    config: GeneratorConfig,
    convs: Vec<Conv2d<T>>,
    norms: Vec<Option<BatchNorm2d<T>>>,
}

impl<T: Real> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (c, m, k, d) = (config.channels, config.mid_channels, config.kernel, config.depth);
        let mut convs = Vec::with_capacity(d);
        let mut norms = Vec::with_capacity(d);
        for i in 0..d {
            let cin = if i == 0 { c } else { m };
            let cout = if i == d - 1 { c } else { m };
            let mut std = config.init_std.unwrap_or_else(|| he_std(cin * k * k));
            if i == d - 1 {
                std *= config.last_layer_gain;
            }
            convs.push(Conv2d::new(cin, cout, k, 1, std, rng));
            norms.push((i > 0 && i < d - 1).then(|| BatchNorm2d::new(m)));
        }
        Ok(Self { config, convs, norms })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.c != self.config.channels {
            return Err(Error::ChannelMismatch {
                expected: self.config.channels,
                found: x.c,
            });
        }
        if x.n == 0 {
            return Err(Error::Empty("generator batch"));
        }
        let pad = self.config.padding;
        if x.h <= pad || x.w <= pad {
            return Err(Error::InvalidShape(format!(
                "{}x{} input cannot be reflection-padded by {pad}",
                x.h, x.w
            )));
        }
        Ok(())
    }

    /// Inference with batch-norm running statistics.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let d = self.config.depth;
        let mut a = reflection_pad(x, self.config.padding);
        for i in 0..d {
            let mut z = self.convs[i].forward(&a);
            if let Some(bn) = &self.norms[i] {
                bn.forward_eval(&mut z);
            }
            if i < d - 1 {
                relu_inplace(&mut z.data);
            }
            a = z;
        }
        Ok(a)
    }

    /// Training-mode pass (batch statistics) that records a tape for
    /// [`Self::backward`]. In eval mode this is [`Self::infer`] with an
    /// empty tape.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, GeneratorTape<T>)> {
        let update_running = match mode {
            Mode::Eval => {
                let out = self.infer(x)?;
                return Ok((
                    out,
                    GeneratorTape {
                        inputs: Vec::new(),
                        norms: Vec::new(),
                    },
                ));
            }
            Mode::Train { update_running } => update_running,
        };
        self.check_input(x)?;
        let d = self.config.depth;
        let mut inputs = Vec::with_capacity(d);
        let mut caches = Vec::with_capacity(d);
        let mut a = reflection_pad(x, self.config.padding);
        for i in 0..d {
            let mut z = self.convs[i].forward(&a);
            caches.push(
                self.norms[i]
                    .as_mut()
                    .map(|bn| bn.forward_train(&mut z, update_running)),
            );
            if i < d - 1 {
                relu_inplace(&mut z.data);
            }
            inputs.push(a);
            a = z;
        }
        Ok((a, GeneratorTape { inputs, norms: caches }))
    }

    /// Backpropagates `grad_out` through a recorded pass, accumulating
    /// parameter gradients. Returns the gradient w.r.t. the unpadded input
    /// when `input_grad` is set.
    pub fn backward(&mut self, tape: GeneratorTape<T>, grad_out: Tensor<T>, input_grad: bool) -> Option<Tensor<T>> {
        assert!(!tape.inputs.is_empty(), "backward needs a training-mode tape");
        let d = self.config.depth;
        let mut g = grad_out;
        let GeneratorTape { inputs, norms } = tape;
        for i in (0..d).rev() {
            if i < d - 1 {
                activation_backward(&mut g.data, &inputs[i + 1].data, T::zero());
            }
            if let (Some(bn), Some(cache)) = (self.norms[i].as_mut(), norms[i].as_ref()) {
                bn.backward(cache, &mut g);
            }
            let need = i > 0 || input_grad;
            g = self.convs[i].backward(&inputs[i], &g, true, need)?;
        }
        Some(reflection_pad_backward(&g, self.config.padding))
    }
}

impl<T: Real> Parameters<T> for Generator<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        for (conv, bn) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            conv.visit_params(f);
            if let Some(bn) = bn {
                bn.visit_params(f);
            }
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        for bn in self.norms.iter_mut().flatten() {
            bn.visit_buffers(f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscriminatorTape<T> {
    inputs: Vec<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct Discriminator<T> {
    config: DiscriminatorConfig,
    convs: Vec<Conv2d<T>>,
}

impl<T: Real> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::with_capacity(4);
        let mut cin = config.channels;
        for i in 0..4 {
            let (cout, k) = (config.layer_channels[i], config.kernels[i]);
            let std = config.init_std.unwrap_or_else(|| he_std(cin * k * k));
            convs.push(Conv2d::new(cin, cout, k, config.strides[i], std, rng));
            cin = cout;
        }
        Ok(Self { config, convs })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    /// Score map for a batch; records a tape when `record` is set.
    pub fn forward(&self, x: &Tensor<T>, record: bool) -> Result<(Tensor<T>, DiscriminatorTape<T>)> {
        if x.c != self.config.channels {
            return Err(Error::ChannelMismatch {
                expected: self.config.channels,
                found: x.c,
            });
        }
        self.config.output_sizes(x.h)?;
        self.config.output_sizes(x.w)?;
        let slope = T::from_f64_lossy(self.config.leaky_slope);
        let mut inputs = Vec::new();
        let mut a = x.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            let mut z = conv.forward(&a);
            if i < 3 {
                leaky_relu_inplace(&mut z.data, slope);
            }
            if record {
                inputs.push(a);
            }
            a = z;
        }
        Ok((a, DiscriminatorTape { inputs }))
    }

    /// Backpropagates `grad_out`; parameter gradients accumulate only when
    /// `param_grad` is set. Returns the input gradient when `input_grad` is set.
    pub fn backward(
        &mut self,
        tape: DiscriminatorTape<T>,
        grad_out: Tensor<T>,
        param_grad: bool,
        input_grad: bool,
    ) -> Option<Tensor<T>> {
        assert_eq!(tape.inputs.len(), 4, "backward needs a recorded tape");
        let slope = T::from_f64_lossy(self.config.leaky_slope);
        let mut g = grad_out;
        for i in (0..4).rev() {
            if i < 3 {
                activation_backward(&mut g.data, &tape.inputs[i + 1].data, slope);
            }
            let need = i > 0 || input_grad;
            g = self.convs[i].backward(&tape.inputs[i], &g, param_grad, need)?;
        }
        Some(g)
    }
}

impl<T: Real> Parameters<T> for Discriminator<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        for conv in &mut self.convs {
            conv.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut [T])) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn input(n: usize, c: usize, h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_vec(
            n,
            c,
            h,
            w,
            (0..n * c * h * w).map(|i| ((i % 29) as f32) / 29.0).collect(),
        )
    }

    #[test]
    fn generator_preserves_shape() {
        let mut g = Generator::<f32>::new(GeneratorConfig::with_depth(5, 8, 1), &mut rng()).unwrap();
        let x = input(4, 1, 32, 32);
        let (y, _) = g.forward(&x, Mode::Train { update_running: true }).unwrap();
        assert_eq!(y.shape(), [4, 1, 32, 32]);
        assert_eq!(g.infer(&x).unwrap().shape(), [4, 1, 32, 32]);
    }

    #[test]
    fn padding_must_equal_depth() {
        let cfg = GeneratorConfig {
            padding: 16,
            ..GeneratorConfig::paper(1)
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn paper_generator_parameter_count() {
        // 640 + 15 * (36864 + 64 + 128) + 577
        let cfg = GeneratorConfig::paper(1);
        assert_eq!(cfg.parameter_count(), 557_057);
        let mut g = Generator::<f32>::new(cfg, &mut rng()).unwrap();
        assert_eq!(g.param_count(), 557_057);
    }

    #[test]
    fn zero_last_layer_gives_zero_output() {
        let cfg = GeneratorConfig {
            last_layer_gain: 0.0,
            ..GeneratorConfig::with_depth(4, 8, 1)
        };
        let g = Generator::<f32>::new(cfg, &mut rng()).unwrap();
        let y = g.infer(&input(2, 1, 12, 12)).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let g = Generator::<f32>::new(GeneratorConfig::with_depth(3, 4, 1), &mut rng()).unwrap();
        assert!(matches!(
            g.infer(&input(1, 3, 8, 8)),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn discriminator_output_sizes() {
        let cfg = DiscriminatorConfig::paper(1);
        assert_eq!(cfg.output_sizes(64).unwrap(), [30, 13, 11, 9]);
        assert_eq!(cfg.output_sizes(128).unwrap(), [62, 29, 27, 25]);
        assert!(cfg.output_sizes(8).is_err());
        let d = Discriminator::<f32>::new(cfg, &mut rng()).unwrap();
        let (s, _) = d.forward(&input(2, 1, 64, 64), false).unwrap();
        assert_eq!(s.shape(), [2, 1, 9, 9]);
        assert!(d.forward(&input(1, 1, 8, 8), false).is_err());
    }
}
