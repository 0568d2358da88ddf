//! Noise extraction, paired-corpus construction and the downstream denoiser.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::corpus::{create_dir, read_json, write_json, Pair, PairKind, PairManifest, PairedCorpus};
use crate::error::{Error, Result};
use crate::losses::{mean_sq_diff, mean_sq_diff_grad};
use crate::models::{Generator, GeneratorConfig};
use crate::nn::{Adam, AdamConfig, Mode, Parameters, Real, Tensor};
use crate::patch::{ImagePatch, NoiseMap, PEAK_8BIT};
use crate::synth::{crop_at, rng_for};
use crate::training::{InputScaling, Work};

/// Patches per inference batch.
const INFER_BATCH: usize = 32;

/// Runs `g` in inference mode over `patches` and returns the noise maps in
/// 8-bit units.
pub fn extract_noise_maps(g: &Generator<Work>, scaling: InputScaling, patches: &[ImagePatch]) -> Result<Vec<NoiseMap>> {
    let mut out = Vec::with_capacity(patches.len());
    for chunk in patches.chunks(INFER_BATCH) {
        let shape = chunk[0].shape();
        if let Some(p) = chunk.iter().find(|p| p.shape() != shape) {
            return Err(Error::shape(shape, p.shape()));
        }
        let xs: Vec<Tensor<Work>> = chunk.iter().map(|p| scaling.to_tensor(p)).collect();
        let y = g.infer(&Tensor::stack(&xs))?;
        for i in 0..chunk.len() {
            out.push(NoiseMap::from_tensor_sample(&y, i, PEAK_8BIT)?);
        }
    }
    Ok(out)
}

/// Noise map `G(noisy)` and the unclipped clean estimate `noisy - G(noisy)`.
pub fn extract_noise(g: &Generator<Work>, scaling: InputScaling, noisy: &ImagePatch) -> Result<(NoiseMap, ImagePatch)> {
    let noise = extract_noise_maps(g, scaling, std::slice::from_ref(noisy))?.remove(0);
    let estimate = noisy.sub_noise(&noise)?;
    Ok((noise, estimate))
}

/// `clean` plus `map` on the 8-bit grid. The recorded noise is the rounded,
/// unclipped difference, so `noisy - clean == noise` holds exactly wherever
/// clipping did not bind (in memory and after a PNG round trip).
fn inject(clean: &ImagePatch, map: &NoiseMap) -> Result<(ImagePatch, NoiseMap)> {
    let sum = clean.add_noise(map)?;
    let rounded: Vec<f64> = sum.data().iter().map(|v| v.round()).collect();
    let (h, w, c) = clean.shape();
    let noise = NoiseMap::new(h, w, c, rounded.iter().zip(clean.data()).map(|(s, c)| s - c).collect())?;
    let noisy = ImagePatch::new(h, w, c, rounded)?.clamp_storage();
    Ok((noisy, noise))
}

/// One noisy index per clean patch, drawn uniformly with replacement.
fn draw_sources(clean_count: usize, noisy_count: usize, seed: u64) -> Vec<usize> {
    (0..clean_count)
        .map(|i| rng_for(seed, &[30, i as u64]).random_range(0..noisy_count))
        .collect()
}

fn maps_for(
    g: &Generator<Work>,
    scaling: InputScaling,
    noisy: &[ImagePatch],
    sources: &[usize],
) -> Result<Vec<NoiseMap>> {
    let mut used: Vec<usize> = sources.to_vec();
    used.sort_unstable();
    used.dedup();
    let patches: Vec<ImagePatch> = used.iter().map(|&i| noisy[i].clone()).collect();
    let maps = extract_noise_maps(g, scaling, &patches)?;
    Ok(sources
        .iter()
        .map(|s| maps[used.binary_search(s).expect("drawn from used")].clone())
        .collect())
}

/// `J_n = clip(J_c + G(I_n))` for every clean patch, with `I_n` drawn from
/// `noisy` by seed.
pub fn construct_pairs(
    g: &Generator<Work>,
    scaling: InputScaling,
    noisy: &[ImagePatch],
    clean: &[ImagePatch],
    seed: u64,
) -> Result<PairedCorpus> {
    if noisy.is_empty() || clean.is_empty() {
        return Err(Error::Empty("pair construction needs noisy and clean patches"));
    }
    let sources = draw_sources(clean.len(), noisy.len(), seed);
    let maps = maps_for(g, scaling, noisy, &sources)?;
    let mut pairs = Vec::with_capacity(clean.len());
    for (c, m) in clean.iter().zip(&maps) {
        let c = c.quantize_8bit();
        let (n, noise) = inject(&c, m)?;
        pairs.push(Pair {
            noisy: n,
            clean: c,
            noise,
            hr: None,
        });
    }
    PairedCorpus::new(
        pairs,
        PairManifest {
            seed,
            kind: PairKind::Denoise,
            count: clean.len(),
            noise_sources: sources,
        },
    )
}

/// Cubic convolution kernel with `a = -0.5`.
fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        1.5 * x.powi(3) - 2.5 * x * x + 1.0
    } else if x <= 2.0 {
        -0.5 * x.powi(3) + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// Per-output `(source indices, weights)` for shrinking `n` samples by the
/// integer factor `r` with an antialiased (widened) bicubic kernel and
/// symmetric boundary handling.
fn downsample_taps(n: usize, r: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = 1.0 / r as f64;
    let width = 4.0 / scale;
    let out = n / r;
    (0..out)
        .map(|i| {
            // 1-based output coordinate mapped to 1-based input coordinate
            let u = (i + 1) as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let left = (u - width / 2.0).floor() as i64;
            let taps = width.ceil() as i64 + 2;
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for k in 0..taps {
                let j = left + k;
                let w = scale * cubic(scale * (u - j as f64));
                if w == 0.0 {
                    continue;
                }
                // mirror into 1..=n
                let period = 2 * n as i64;
                let mut m = (j - 1).rem_euclid(period);
                if m >= n as i64 {
                    m = period - 1 - m;
                }
                acc.push((m as usize, w));
            }
            let sum: f64 = acc.iter().map(|t| t.1).sum();
            acc.iter_mut().for_each(|t| t.1 /= sum);
            acc
        })
        .collect()
}

/// Antialiased bicubic downsampling by an integer factor.
pub fn bicubic_downsample(hr: &ImagePatch, r: usize) -> Result<ImagePatch> {
    if !(2..=4).contains(&r) {
        return Err(Error::InvalidConfig(format!("scale factor {r} not in {{2, 3, 4}}")));
    }
    let (h, w, c) = hr.shape();
    if h % r != 0 || w % r != 0 {
        return Err(Error::InvalidShape(format!(
            "{h}x{w} is not divisible by scale factor {r}"
        )));
    }
    let rows = downsample_taps(h, r);
    let cols = downsample_taps(w, r);
    let (oh, ow) = (h / r, w / r);
    let mut tmp = vec![0.0; c * h * ow];
    for ch in 0..c {
        for y in 0..h {
            for (x, taps) in cols.iter().enumerate() {
                tmp[(ch * h + y) * ow + x] = taps.iter().map(|&(j, wt)| wt * hr.get(ch, y, j)).sum();
            }
        }
    }
    ImagePatch::from_fn(oh, ow, c, |ch, y, x| {
        rows[y].iter().map(|&(j, wt)| wt * tmp[(ch * h + j) * ow + x]).sum()
    })
}

/// Super-resolution pairs: `(clip(down(J_HR) + G(I_n)), J_HR)` with `I_n`
/// drawn from the low-resolution noisy set.
pub fn construct_sr_pairs(
    g: &Generator<Work>,
    scaling: InputScaling,
    hr: &[ImagePatch],
    noisy_lr: &[ImagePatch],
    r: usize,
    seed: u64,
) -> Result<PairedCorpus> {
    if hr.is_empty() || noisy_lr.is_empty() {
        return Err(Error::Empty(
            "pair construction needs noisy and high-resolution patches",
        ));
    }
    let lr: Vec<ImagePatch> = hr
        .iter()
        .map(|p| bicubic_downsample(p, r).map(|d| d.quantize_8bit()))
        .collect::<Result<_>>()?;
    let sources = draw_sources(hr.len(), noisy_lr.len(), seed);
    let maps = maps_for(g, scaling, noisy_lr, &sources)?;
    let mut pairs = Vec::with_capacity(hr.len());
    for ((c, m), h) in lr.into_iter().zip(&maps).zip(hr) {
        let (n, noise) = inject(&c, m)?;
        pairs.push(Pair {
            noisy: n,
            clean: c,
            noise,
            hr: Some(h.quantize_8bit()),
        });
    }
    PairedCorpus::new(
        pairs,
        PairManifest {
            seed,
            kind: PairKind::SuperResolution { scale: r },
            count: hr.len(),
            noise_sources: sources,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub depth: usize,
    pub mid_channels: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Training crop size; pairs larger than this are randomly cropped.
    pub patch_size: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            depth: 7,
            mid_channels: 32,
            epochs: 30,
            lr: 1e-3,
            batch_size: 16,
            patch_size: 32,
        }
    }
}

impl DenoiserConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.depth < 3 {
            v.push(format!("denoiser: depth {} < 3", self.depth));
        }
        if self.mid_channels == 0 || self.batch_size == 0 || self.epochs == 0 {
            v.push("denoiser: mid_channels, batch_size and epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            v.push(format!("denoiser: lr = {} must be positive", self.lr));
        }
        if self.patch_size <= self.depth {
            v.push(format!(
                "denoiser: patch_size {} must exceed depth {}",
                self.patch_size, self.depth
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v.join("; ")))
        }
    }

    fn network(&self, channels: usize) -> GeneratorConfig {
        GeneratorConfig::with_depth(self.depth, self.mid_channels, channels)
    }
}

/// Residual denoiser: predicts the noise map, output is `input - prediction`.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub net: Generator<Work>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DenoiserManifest {
    config: DenoiserConfig,
    network: GeneratorConfig,
    dtype: String,
}

impl Denoiser {
    /// Predicted noise in 8-bit units.
    pub fn predict(&self, noisy: &[ImagePatch]) -> Result<Vec<NoiseMap>> {
        extract_noise_maps(&self.net, InputScaling::default(), noisy)
    }

    pub fn save(&mut self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let mut bytes = Vec::new();
        self.net
            .visit_params(&mut |p, _| p.iter().for_each(|v| v.write_le(&mut bytes)));
        self.net
            .visit_buffers(&mut |b| b.iter().for_each(|v| v.write_le(&mut bytes)));
        let p = dir.join("denoiser.bin");
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        write_json(
            dir.join("denoiser.json"),
            &DenoiserManifest {
                config: self.config.clone(),
                network: self.net.config().clone(),
                dtype: Work::DTYPE.into(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mp = dir.join("denoiser.json");
        if !mp.exists() {
            return Err(Error::MissingFile(mp));
        }
        let m: DenoiserManifest = read_json(&mp)?;
        let mut net = Generator::<Work>::new(m.network, &mut rng_for(0, &[]))?;
        let p = dir.join("denoiser.bin");
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let mut expected = 0;
        net.visit_params(&mut |v, _| expected += v.len());
        net.visit_buffers(&mut |b| expected += b.len());
        if m.dtype != Work::DTYPE || bytes.len() != expected * Work::BYTES {
            return Err(Error::Checkpoint {
                path: p,
                reason: "weights do not match the stored architecture".into(),
            });
        }
        let mut it = bytes.chunks_exact(Work::BYTES).map(Work::read_le);
        net.visit_params(&mut |v, _| v.iter_mut().for_each(|x| *x = it.next().expect("length checked")));
        net.visit_buffers(&mut |b| b.iter_mut().for_each(|x| *x = it.next().expect("length checked")));
        Ok(Self { config: m.config, net })
    }
}

/// Per-epoch denoiser training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserEpoch {
    pub epoch: usize,
    pub loss: f64,
}

/// Fits a residual network to the recorded noise maps of `pairs`.
pub fn train_denoiser(
    pairs: &PairedCorpus,
    config: &DenoiserConfig,
    seed: u64,
) -> Result<(Denoiser, Vec<DenoiserEpoch>)> {
    config.validate()?;
    let ps = pairs.pairs();
    if ps.is_empty() {
        return Err(Error::Empty("denoiser training needs pairs"));
    }
    let (h, w, c) = ps[0].noisy.shape();
    let size = config.patch_size;
    if size > h || size > w {
        return Err(Error::InvalidShape(format!("patch_size {size} exceeds {h}x{w} pairs")));
    }
    let mut net = Generator::<Work>::new(config.network(c), &mut rng_for(seed, &[40]))?;
    let mut opt = Adam::new(
        AdamConfig {
            lr: config.lr,
            beta1: 0.9,
            ..AdamConfig::default()
        },
        &mut net,
    );
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..ps.len()).collect();
        let mut rng = rng_for(seed, &[41, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(config.batch_size) {
            let mut xs = Vec::with_capacity(chunk.len());
            let mut ys = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (y0, x0) = (rng.random_range(0..=h - size), rng.random_range(0..=w - size));
                let n = crop_at(&ps[i].noisy, y0, x0, size, size, c)?;
                let m = crop_at(&ps[i].noise.as_patch(), y0, x0, size, size, c)?;
                xs.push(n.to_tensor::<Work>(1.0 / PEAK_8BIT));
                ys.push(m.to_tensor::<Work>(1.0 / PEAK_8BIT));
            }
            let (x, y) = (Tensor::stack(&xs), Tensor::stack(&ys));
            net.zero_grad();
            let (pred, tape) = net.forward(&x, Mode::Train { update_running: true })?;
            let loss = mean_sq_diff(&pred.data, &y.data);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    component: "denoiser_mse",
                    detail: format!("epoch {epoch}"),
                });
            }
            net.backward(tape, pred.with_data(mean_sq_diff_grad(&pred.data, &y.data, 1.0)), false);
            opt.step(&mut net);
            total += loss;
            steps += 1;
        }
        log.push(DenoiserEpoch {
            epoch,
            loss: total / steps as f64,
        });
    }
    Ok((
        Denoiser {
            config: config.clone(),
            net,
        },
        log,
    ))
}

/// Clean estimate before clipping and the predicted noise;
/// `estimate + predicted == noisy`.
pub fn denoise_unclipped(model: &Denoiser, noisy: &ImagePatch) -> Result<(ImagePatch, NoiseMap)> {
    let predicted = model.predict(std::slice::from_ref(noisy))?.remove(0);
    Ok((noisy.sub_noise(&predicted)?, predicted))
}

/// `clip(noisy - predicted noise)` to the 8-bit range.
pub fn denoise(model: &Denoiser, noisy: &ImagePatch) -> Result<ImagePatch> {
    Ok(denoise_unclipped(model, noisy)?.0.clamp_storage())
}

pub fn denoise_all(model: &Denoiser, noisy: &[ImagePatch]) -> Result<Vec<ImagePatch>> {
    let maps = model.predict(noisy)?;
    noisy
        .iter()
        .zip(&maps)
        .map(|(n, m)| Ok(n.sub_noise(m)?.clamp_storage()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{add_gaussian_noise, smooth_scenes, GaussianNoiseSpec};

    fn generator(gain: f64) -> Generator<Work> {
        let cfg = GeneratorConfig {
            last_layer_gain: gain,
            ..GeneratorConfig::with_depth(3, 4, 1)
        };
        Generator::new(cfg, &mut rng_for(3, &[])).unwrap()
    }

    fn noisy_set(n: usize) -> Vec<ImagePatch> {
        smooth_scenes(n, 16, 16, 1, 1.0, 5)
            .iter()
            .enumerate()
            .map(|(i, p)| {
                add_gaussian_noise(p, &GaussianNoiseSpec::new(25.0, i as u64).unwrap())
                    .unwrap()
                    .0
            })
            .collect()
    }

    #[test]
    fn zero_generator_extracts_nothing() {
        let g = generator(0.0);
        let noisy = noisy_set(1).remove(0);
        let (noise, estimate) = extract_noise(&g, InputScaling::default(), &noisy).unwrap();
        assert!(noise.data().iter().all(|&v| v == 0.0));
        assert_eq!(estimate, noisy);
    }

    #[test]
    fn estimate_plus_noise_is_input() {
        let g = generator(1.0);
        for noisy in noisy_set(3) {
            let (noise, estimate) = extract_noise(&g, InputScaling::default(), &noisy).unwrap();
            assert!(noise.data().iter().any(|&v| v != 0.0));
            let back = noisy.residual(&estimate).unwrap();
            for (a, b) in back.data().iter().zip(noise.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pair_cardinality_and_identity() {
        let g = generator(1.0);
        let noisy = noisy_set(10);
        let clean = smooth_scenes(5, 16, 16, 1, 1.0, 8);
        let pc = construct_pairs(&g, InputScaling::default(), &noisy, &clean, 4).unwrap();
        assert_eq!(pc.len(), 5);
        assert!(pc.manifest().noise_sources.iter().all(|&i| i < 10));
        for p in pc.pairs() {
            let (checked, bad) = p.identity_violations(0.0);
            assert!(checked > 0);
            assert_eq!(bad, 0);
        }
        let again = construct_pairs(&g, InputScaling::default(), &noisy, &clean, 4).unwrap();
        assert_eq!(again, pc);
    }

    #[test]
    fn zero_generator_pairs_are_clean() {
        let pc = construct_pairs(
            &generator(0.0),
            InputScaling::default(),
            &noisy_set(2),
            &smooth_scenes(3, 16, 16, 1, 1.0, 1),
            0,
        )
        .unwrap();
        for p in pc.pairs() {
            assert_eq!(p.noisy, p.clean);
        }
        assert!(construct_pairs(&generator(0.0), InputScaling::default(), &[], &noisy_set(1), 0).is_err());
    }

    #[test]
    fn bicubic_matches_reference_weights() {
        // Antialiased cubic weights for a factor-2 reduction.
        let w = [
            -0.01171875,
            -0.03515625,
            0.11328125,
            0.43359375,
            0.43359375,
            0.11328125,
            -0.03515625,
            -0.01171875,
        ];
        let mut hr = ImagePatch::filled(16, 16, 1, 0.0).unwrap();
        hr.set(0, 8, 8, 1.0);
        let lr = bicubic_downsample(&hr, 2).unwrap();
        assert_eq!(lr.shape(), (8, 8, 1));
        // output k covers inputs 2k-3 ..= 2k+4; input 8 is tap 8 - (2k - 3)
        for ky in 0..8usize {
            for kx in 0..8usize {
                let ty = 11 - 2 * ky as i64;
                let tx = 11 - 2 * kx as i64;
                let expect = if (0..8).contains(&ty) && (0..8).contains(&tx) {
                    w[ty as usize] * w[tx as usize]
                } else {
                    0.0
                };
                assert!((lr.get(0, ky, kx) - expect).abs() < 1e-12, "({ky},{kx})");
            }
        }
    }

    #[test]
    fn bicubic_keeps_constants_and_checks_factors() {
        let hr = ImagePatch::filled(12, 12, 3, 77.0).unwrap();
        for r in [2, 3, 4] {
            let lr = bicubic_downsample(&hr, r).unwrap();
            assert_eq!(lr.shape(), (12 / r, 12 / r, 3));
            assert!(lr.data().iter().all(|v| (v - 77.0).abs() < 1e-9));
        }
        assert!(bicubic_downsample(&hr, 5).is_err());
        assert!(bicubic_downsample(&ImagePatch::filled(10, 10, 1, 0.0).unwrap(), 4).is_err());
    }

    #[test]
    fn sr_pairs_shapes() {
        let hr = smooth_scenes(2, 64, 64, 1, 1.0, 2);
        let lr_noisy: Vec<ImagePatch> = noisy_set(3)
            .iter()
            .map(|p| crop_at(p, 0, 0, 16, 16, 1).unwrap())
            .collect();
        let lr_noisy: Vec<ImagePatch> = lr_noisy
            .iter()
            .map(|p| ImagePatch::from_fn(32, 32, 1, |c, y, x| p.get(c, y / 2, x / 2)).unwrap())
            .collect();
        let pc = construct_sr_pairs(&generator(0.0), InputScaling::default(), &hr, &lr_noisy, 2, 1).unwrap();
        for (p, h) in pc.pairs().iter().zip(&hr) {
            assert_eq!(p.noisy.shape(), (32, 32, 1));
            assert_eq!(p.hr.as_ref().unwrap().shape(), (64, 64, 1));
            assert_eq!(p.noisy, bicubic_downsample(h, 2).unwrap().quantize_8bit());
        }
    }

    fn small_denoiser() -> DenoiserConfig {
        DenoiserConfig {
            depth: 3,
            mid_channels: 4,
            epochs: 3,
            lr: 1e-3,
            batch_size: 4,
            patch_size: 12,
        }
    }

    #[test]
    fn denoiser_config_rules() {
        assert!(DenoiserConfig {
            depth: 2,
            ..small_denoiser()
        }
        .validate()
        .is_err());
        assert!(small_denoiser().validate().is_ok());
    }

    #[test]
    fn degenerate_pairs_drive_predictions_to_zero() {
        let clean = smooth_scenes(8, 16, 16, 1, 1.0, 3);
        let pc = construct_pairs(&generator(0.0), InputScaling::default(), &clean, &clean, 0).unwrap();
        let cfg = DenoiserConfig {
            epochs: 40,
            ..small_denoiser()
        };
        let (model, log) = train_denoiser(&pc, &cfg, 1).unwrap();
        assert!(log.last().unwrap().loss < log[0].loss);
        let pred = model.predict(&clean[..2]).unwrap();
        let mean_abs = pred.iter().flat_map(|m| m.data()).map(|v| v.abs()).sum::<f64>() / 512.0;
        assert!(mean_abs < 8.0, "{mean_abs}");
    }

    #[test]
    fn denoiser_is_deterministic_and_round_trips() {
        let g = generator(1.0);
        let pc = construct_pairs(
            &g,
            InputScaling::default(),
            &noisy_set(4),
            &smooth_scenes(6, 16, 16, 1, 1.0, 3),
            2,
        )
        .unwrap();
        let (mut a, la) = train_denoiser(&pc, &small_denoiser(), 9).unwrap();
        let (_, lb) = train_denoiser(&pc, &small_denoiser(), 9).unwrap();
        assert_eq!(la, lb);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let b = Denoiser::load(dir.path()).unwrap();
        let x = noisy_set(2);
        assert_eq!(denoise_all(&a, &x).unwrap(), denoise_all(&b, &x).unwrap());
        assert!(matches!(
            Denoiser::load(&dir.path().join("missing")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn denoise_contracts() {
        let zero = Denoiser {
            config: small_denoiser(),
            net: generator(0.0),
        };
        let x = noisy_set(1).remove(0);
        assert_eq!(denoise(&zero, &x).unwrap(), x);
        let busy = Denoiser {
            config: small_denoiser(),
            net: Generator::new(
                GeneratorConfig {
                    init_std: Some(2.0),
                    last_layer_gain: 10.0,
                    ..GeneratorConfig::with_depth(3, 4, 1)
                },
                &mut rng_for(2, &[]),
            )
            .unwrap(),
        };
        let out = denoise(&busy, &x).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)));
        let (est, pred) = denoise_unclipped(&busy, &x).unwrap();
        assert!(est.data().iter().any(|v| !(0.0..=255.0).contains(v)));
        assert_eq!(
            est.add_noise(&pred)
                .unwrap()
                .data()
                .iter()
                .zip(x.data())
                .filter(|(a, b)| (*a - *b).abs() > 1e-9)
                .count(),
            0
        );
    }
}
