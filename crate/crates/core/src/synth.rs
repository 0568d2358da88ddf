//! Synthetic degradations, patch cropping and unpaired-corpus construction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, UnpairedCorpus};
use crate::error::{Error, Result};
use crate::patch::{ImagePatch, NoiseMap, PEAK_8BIT};

/// Deterministic child seed; splitmix64 over the parent seed and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut z = seed;
    for &p in path {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn rng_for(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Zero-mean i.i.d. Gaussian noise, `sigma` in 8-bit units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GaussianNoiseSpec {
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GaussianNoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let s = Self { sigma, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gaussian sigma {} must be > 0",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Parametric rain: anti-aliased bright line segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct RainStreakSpec {
    pub count: usize,
    /// Segment length range in pixels.
    pub length: (f64, f64),
    /// Orientation range in degrees from the x axis.
    pub angle: (f64, f64),
    /// Additive intensity range (8-bit units, positive).
    pub intensity: (f64, f64),
    pub thickness: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RainStreakSpec {
    fn default() -> Self {
        Self {
            count: 6,
            length: (8.0, 20.0),
            angle: (60.0, 80.0),
            intensity: (30.0, 70.0),
            thickness: 1.0,
            seed: 0,
        }
    }
}

impl RainStreakSpec {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        let mut problems = Vec::new();
        if !range_ok(self.length) || self.length.0 <= 0.0 {
            problems.push("length range must be positive and ordered");
        }
        if !range_ok(self.angle) {
            problems.push("angle range must be ordered");
        }
        if !range_ok(self.intensity) || self.intensity.0 <= 0.0 {
            problems.push("intensity range must be positive and ordered");
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            problems.push("thickness must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("rain: {}", problems.join("; "))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian(GaussianNoiseSpec),
    Rain(RainStreakSpec),
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::Gaussian(g) => g.validate(),
            NoiseSpec::Rain(r) => r.validate(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> NoiseSpec {
        match *self {
            NoiseSpec::Gaussian(g) => NoiseSpec::Gaussian(GaussianNoiseSpec { seed, ..g }),
            NoiseSpec::Rain(r) => NoiseSpec::Rain(RainStreakSpec { seed, ..r }),
        }
    }

    pub fn apply(&self, patch: &ImagePatch) -> Result<(ImagePatch, NoiseMap)> {
        match self {
            NoiseSpec::Gaussian(g) => add_gaussian_noise(patch, g),
            NoiseSpec::Rain(r) => add_rain_streaks(patch, r),
        }
    }
}

/// `clip(patch + n, 0, 255)` with `n ~ N(0, sigma^2)` per pixel. The returned
/// map holds `n` before clipping.
pub fn add_gaussian_noise(patch: &ImagePatch, spec: &GaussianNoiseSpec) -> Result<(ImagePatch, NoiseMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (h, w, c) = patch.shape();
    let truth = NoiseMap::new(h, w, c, (0..h * w * c).map(|_| normal.sample(&mut rng)).collect())?;
    let noisy = patch.add_noise(&truth)?.clamp_storage();
    Ok((noisy, truth))
}

/// Adds `intensity * coverage` of a segment from `p0` to `p1` (pixel-centre
/// coordinates `(x, y)`) to every channel of `map`. Coverage falls off
/// linearly over one pixel beyond half the thickness.
pub fn rasterize_segment(map: &mut NoiseMap, p0: (f64, f64), p1: (f64, f64), thickness: f64, intensity: f64) {
    let (h, w, c) = map.shape();
    let reach = thickness / 2.0 + 0.5;
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let len2 = dx * dx + dy * dy;
    let x_lo = (p0.0.min(p1.0) - reach).floor().max(0.0) as usize;
    let x_hi = ((p0.0.max(p1.0) + reach).ceil().max(0.0) as usize).min(w.saturating_sub(1));
    let y_lo = (p0.1.min(p1.1) - reach).floor().max(0.0) as usize;
    let y_hi = ((p0.1.max(p1.1) + reach).ceil().max(0.0) as usize).min(h.saturating_sub(1));
    if x_lo > x_hi || y_lo > y_hi {
        return;
    }
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let (px, py) = (x as f64, y as f64);
            let t = if len2 > 0.0 {
                (((px - p0.0) * dx + (py - p0.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dist = ((px - p0.0 - t * dx).powi(2) + (py - p0.1 - t * dy).powi(2)).sqrt();
            let coverage = (reach - dist).clamp(0.0, 1.0);
            if coverage > 0.0 {
                for ch in 0..c {
                    let v = map.get(ch, y, x);
                    map.set(ch, y, x, v + intensity * coverage);
                }
            }
        }
    }
}

/// Rain streak map with uniformly drawn centre, length, angle and intensity
/// per streak. `noisy = clip(patch + truth)`.
pub fn add_rain_streaks(patch: &ImagePatch, spec: &RainStreakSpec) -> Result<(ImagePatch, NoiseMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (h, w, _) = patch.shape();
    let mut truth = NoiseMap::zeros_like(patch);
    let uniform = |rng: &mut ChaCha8Rng, (a, b): (f64, f64)| if a == b { a } else { rng.random_range(a..=b) };
    for _ in 0..spec.count {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let len = uniform(&mut rng, spec.length);
        let theta = uniform(&mut rng, spec.angle).to_radians();
        let amp = uniform(&mut rng, spec.intensity);
        let (hx, hy) = (0.5 * len * theta.cos(), 0.5 * len * theta.sin());
        rasterize_segment(&mut truth, (cx - hx, cy - hy), (cx + hx, cy + hy), spec.thickness, amp);
    }
    let noisy = patch.add_noise(&truth)?.clamp_storage();
    Ok((noisy, truth))
}

/// `count` square crops at uniformly random positions.
pub fn crop_patches(image: &ImagePatch, size: usize, count: usize, seed: u64) -> Result<Vec<ImagePatch>> {
    let (h, w, c) = image.shape();
    if size == 0 || size > h || size > w {
        return Err(Error::InvalidShape(format!(
            "crop size {size} does not fit a {h}x{w} image"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let y0 = rng.random_range(0..=h - size);
            let x0 = rng.random_range(0..=w - size);
            crop_at(image, y0, x0, size, size, c)
        })
        .collect()
}

pub fn crop_at(image: &ImagePatch, y0: usize, x0: usize, ch: usize, cw: usize, channels: usize) -> Result<ImagePatch> {
    ImagePatch::from_fn(ch, cw, channels, |c, y, x| image.get(c, y0 + y, x0 + x))
}

/// Smooth synthetic scene: a tilted ramp, two low-frequency waves and a soft
/// edge around a random base level. `contrast` scales every component; 1.0
/// keeps values mostly inside `[20, 235]`.
pub fn smooth_scene<R: Rng + ?Sized>(h: usize, w: usize, channels: usize, contrast: f64, rng: &mut R) -> ImagePatch {
    let size = h.max(w) as f64;
    let base = rng.random_range(90.0..165.0);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let ramp = rng.random_range(-40.0..40.0) * contrast;
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(0.0..20.0) * contrast,
                rng.random_range(0.3..1.5),
                rng.random_range(0.3..1.5),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let edge_amp = rng.random_range(-35.0..35.0) * contrast;
    let edge_theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let edge_off = rng.random_range(-0.25..0.25);
    let edge_width = rng.random_range(0.04..0.15);
    let tint: Vec<f64> = (0..channels)
        .map(|_| rng.random_range(-10.0..10.0) * contrast)
        .collect();
    ImagePatch::from_fn(h, w, channels, |c, y, x| {
        let (u, v) = (x as f64 / size - 0.5, y as f64 / size - 0.5);
        let mut val = base + tint[c] + ramp * (u * theta.cos() + v * theta.sin());
        for &(amp, fx, fy, phase) in &waves {
            val += amp * (std::f64::consts::TAU * (fx * u + fy * v) + phase).sin();
        }
        let d = u * edge_theta.cos() + v * edge_theta.sin() - edge_off;
        val += edge_amp * (d / edge_width).tanh();
        val.clamp(0.0, PEAK_8BIT)
    })
    .expect("channels validated by caller")
}

/// `count` smooth scenes of the given size, deterministic in `seed`.
pub fn smooth_scenes(count: usize, h: usize, w: usize, channels: usize, contrast: f64, seed: u64) -> Vec<ImagePatch> {
    (0..count)
        .map(|i| smooth_scene(h, w, channels, contrast, &mut rng_for(seed, &[i as u64])))
        .collect()
}

/// How source images become patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CropSpec {
    pub size: usize,
    pub per_source: usize,
}

/// Splits `sources` into a noisy half (degraded with `noise`) and a clean
/// half. The split is a seeded shuffle; each source feeds exactly one side.
pub fn build_unpaired_corpus(
    sources: &[ImagePatch],
    noise: &NoiseSpec,
    split_ratio: f64,
    crop: Option<CropSpec>,
    seed: u64,
) -> Result<UnpairedCorpus> {
    noise.validate()?;
    if sources.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 source images, got {}",
            sources.len()
        )));
    }
    let channels = sources[0].channels();
    if let Some(bad) = sources.iter().position(|s| s.channels() != channels) {
        return Err(Error::ChannelMismatch {
            expected: channels,
            found: sources[bad].channels(),
        });
    }
    let n_noisy = (split_ratio * sources.len() as f64).round() as usize;
    if !(split_ratio > 0.0 && split_ratio < 1.0) || n_noisy == 0 || n_noisy == sources.len() {
        return Err(Error::InvalidConfig(format!(
            "split ratio {split_ratio} leaves one side empty for {} sources",
            sources.len()
        )));
    }
    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.shuffle(&mut rng_for(seed, &[0]));
    let (noisy_idx, clean_idx) = order.split_at(n_noisy);
    let mut noisy_idx = noisy_idx.to_vec();
    let mut clean_idx = clean_idx.to_vec();
    noisy_idx.sort_unstable();
    clean_idx.sort_unstable();

    let patches_of = |idx: usize| -> Result<Vec<ImagePatch>> {
        match crop {
            Some(c) => crop_patches(&sources[idx], c.size, c.per_source, derive_seed(seed, &[1, idx as u64])),
            None => Ok(vec![sources[idx].clone()]),
        }
    };

    let mut noisy = Vec::new();
    let mut truth = Vec::new();
    for &i in &noisy_idx {
        for (j, p) in patches_of(i)?.into_iter().enumerate() {
            let spec = noise.with_seed(derive_seed(seed, &[2, i as u64, j as u64]));
            let (n, t) = spec.apply(&p)?;
            noisy.push(n);
            truth.push(t);
        }
    }
    let mut clean = Vec::new();
    for &i in &clean_idx {
        clean.extend(patches_of(i)?);
    }
    let manifest = CorpusManifest {
        seed,
        noise: *noise,
        split_ratio,
        crop,
        channels,
        noisy_sources: noisy_idx,
        clean_sources: clean_idx,
        noisy_count: noisy.len(),
        clean_count: clean.len(),
    };
    UnpairedCorpus::new(noisy, clean, Some(truth), manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn gray(h: usize, w: usize, v: f64) -> ImagePatch {
        ImagePatch::filled(h, w, 1, v).unwrap()
    }

    #[test]
    fn gaussian_statistics_at_sigma_25() {
        let (noisy, truth) =
            add_gaussian_noise(&gray(100, 100, 128.0), &GaussianNoiseSpec::new(25.0, 9).unwrap()).unwrap();
        let mean = truth.mean();
        assert!((-1.0..=1.0).contains(&mean), "mean {mean}");
        let std = truth.std();
        assert!((24.0..=26.0).contains(&std), "std {std}");
        assert!(noisy.data().iter().all(|v| (0.0..=255.0).contains(v)));
    }

    #[test]
    fn gaussian_rejects_non_positive_sigma() {
        assert!(GaussianNoiseSpec::new(0.0, 1).is_err());
        let spec = GaussianNoiseSpec { sigma: -1.0, seed: 0 };
        assert!(add_gaussian_noise(&gray(4, 4, 1.0), &spec).is_err());
    }

    #[test]
    fn gaussian_without_clipping_is_exact() {
        let clean = gray(16, 16, 128.0);
        let (noisy, truth) = add_gaussian_noise(&clean, &GaussianNoiseSpec::new(5.0, 3).unwrap()).unwrap();
        let r = noisy.residual(&clean).unwrap();
        for (a, b) in r.data().iter().zip(truth.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rain_with_no_streaks_is_identity() {
        let spec = RainStreakSpec {
            count: 0,
            ..Default::default()
        };
        let clean = gray(8, 8, 50.0);
        let (noisy, truth) = add_rain_streaks(&clean, &spec).unwrap();
        assert!(truth.data().iter().all(|&v| v == 0.0));
        assert_eq!(noisy, clean);
    }

    #[test]
    fn horizontal_segment_covers_exactly_its_pixels() {
        // Oracle: at pixel centres, distance is 0 on the segment row within
        // its x-extent and at least 1 everywhere else, so coverage is 1 or 0.
        let mut map = NoiseMap::zeros(32, 32, 1).unwrap();
        rasterize_segment(&mut map, (5.0, 12.0), (15.0, 12.0), 1.0, 50.0);
        for y in 0..32 {
            for x in 0..32 {
                let expected = if y == 12 && (5..=15).contains(&x) { 50.0 } else { 0.0 };
                assert_eq!(map.get(0, y, x), expected, "pixel ({x}, {y})");
            }
        }
        assert!(map.mean() > 0.0);
    }

    #[test]
    fn rain_is_positive_and_deterministic() {
        let spec = RainStreakSpec {
            seed: 4,
            ..Default::default()
        };
        let clean = gray(32, 32, 100.0);
        let (_, a) = add_rain_streaks(&clean, &spec).unwrap();
        let (_, b) = add_rain_streaks(&clean, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| v >= 0.0));
        assert!(a.mean() > 0.0);
    }

    #[test]
    fn crop_examples() {
        let img = ImagePatch::from_fn(321, 481, 1, |_, y, x| (y + x) as f64).unwrap();
        let crops = crop_patches(&img, 128, 4, 1).unwrap();
        assert_eq!(crops.len(), 4);
        assert!(crops.iter().all(|c| c.shape() == (128, 128, 1)));

        let small = ImagePatch::from_fn(32, 32, 1, |_, y, x| (y * 32 + x) as f64).unwrap();
        for c in crop_patches(&small, 32, 3, 2).unwrap() {
            assert_eq!(c, small);
        }
        assert!(crop_patches(&small, 64, 1, 0).is_err());
        assert_eq!(
            crop_patches(&img, 16, 5, 7).unwrap(),
            crop_patches(&img, 16, 5, 7).unwrap()
        );
    }

    #[test]
    fn unpaired_split_is_disjoint_and_deterministic() {
        let sources = smooth_scenes(10, 16, 16, 1, 1.0, 3);
        let noise = NoiseSpec::Gaussian(GaussianNoiseSpec::new(25.0, 0).unwrap());
        let a = build_unpaired_corpus(&sources, &noise, 0.5, None, 42).unwrap();
        assert_eq!(a.manifest().noisy_sources.len(), 5);
        assert_eq!(a.manifest().clean_sources.len(), 5);
        let ns: HashSet<_> = a.manifest().noisy_sources.iter().collect();
        assert!(a.manifest().clean_sources.iter().all(|i| !ns.contains(i)));
        let b = build_unpaired_corpus(&sources, &noise, 0.5, None, 42).unwrap();
        assert_eq!(a, b);
        assert!(build_unpaired_corpus(&sources, &noise, 0.0, None, 42).is_err());
        assert!(build_unpaired_corpus(&sources, &noise, 1.0, None, 42).is_err());
        assert!(build_unpaired_corpus(&sources[..1], &noise, 0.5, None, 42).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let s: HashSet<u64> = (0..100).map(|i| derive_seed(1, &[i])).collect();
        assert_eq!(s.len(), 100);
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
    }
}
