//! Browser bindings for three interactive views: synthetic degradation with
//! its PSNR, the loss-weight schedule, and a small SCGAN trained in the page.

use wasm_bindgen::prelude::*;

use scgan_core::corpus::UnpairedCorpus;
use scgan_core::eval::psnr;
use scgan_core::models::{DiscriminatorConfig, GeneratorConfig};
use scgan_core::patch::{to_8bit_interleaved, ImagePatch, NoiseMap, PEAK_8BIT};
use scgan_core::pipeline::extract_noise_maps;
use scgan_core::schedule::{phase_weights, TrainSchedule, WeightRamp};
use scgan_core::synth::{
    build_unpaired_corpus, rng_for, smooth_scene, smooth_scenes, GaussianNoiseSpec, NoiseSpec, RainStreakSpec,
};
use scgan_core::training::{InputScaling, TrainConfig, Trainer};

const PATCH: usize = 32;

fn js(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Gray patch to RGBA bytes.
fn rgba(p: &ImagePatch) -> Vec<u8> {
    to_8bit_interleaved(p)
        .into_iter()
        .flat_map(|v| [v, v, v, 255])
        .collect()
}

/// Noise shown around mid-gray: `128 + 2n`.
fn noise_rgba(n: &NoiseMap) -> Vec<u8> {
    n.data()
        .iter()
        .map(|v| (128.0 + 2.0 * v).round().clamp(0.0, PEAK_8BIT) as u8)
        .flat_map(|v| [v, v, v, 255])
        .collect()
}

fn noise_spec(kind: &str, level: f64, seed: u64) -> Result<NoiseSpec, String> {
    let spec = match kind {
        "gaussian" => NoiseSpec::Gaussian(GaussianNoiseSpec { sigma: level, seed }),
        "rain" => NoiseSpec::Rain(RainStreakSpec {
            count: level.max(0.0) as usize,
            seed,
            ..RainStreakSpec::default()
        }),
        other => return Err(js(format!("unknown noise kind {other:?}"))),
    };
    spec.validate().map_err(js)?;
    Ok(spec)
}

/// A clean scene, its degraded version and the injected noise.
#[wasm_bindgen]
pub struct Degradation {
    size: usize,
    clean: Vec<u8>,
    noisy: Vec<u8>,
    noise: Vec<u8>,
    psnr: f64,
}

#[wasm_bindgen]
impl Degradation {
    pub fn size(&self) -> usize {
        self.size
    }
    pub fn clean_rgba(&self) -> Vec<u8> {
        self.clean.clone()
    }
    pub fn noisy_rgba(&self) -> Vec<u8> {
        self.noisy.clone()
    }
    pub fn noise_rgba(&self) -> Vec<u8> {
        self.noise.clone()
    }
    /// PSNR of the noisy image against the clean one, in dB.
    pub fn psnr(&self) -> f64 {
        self.psnr
    }
}

/// Degrades a seeded smooth scene with Gaussian noise (`level` = sigma in
/// 8-bit units) or rain (`level` = streak count).
#[wasm_bindgen]
pub fn degrade(kind: &str, level: f64, size: usize, seed: u32) -> Result<Degradation, JsError> {
    to_js(degrade_impl(kind, level, size, seed))
}

fn degrade_impl(kind: &str, level: f64, size: usize, seed: u32) -> Result<Degradation, String> {
    if !(8..=256).contains(&size) {
        return Err(js(format!("size {size} outside 8..=256")));
    }
    let clean = smooth_scene(size, size, 1, 1.0, &mut rng_for(seed as u64, &[0])).quantize_8bit();
    let (noisy, noise) = noise_spec(kind, level, seed as u64)?.apply(&clean).map_err(js)?;
    Ok(Degradation {
        size,
        psnr: psnr(&noisy, &clean, PEAK_8BIT).map_err(js)?,
        clean: rgba(&clean),
        noisy: rgba(&noisy),
        noise: noise_rgba(&noise),
    })
}

/// Loss weights `[w1, w2, w3]` per epoch, flattened, for epochs `0..ep3`.
#[wasm_bindgen]
pub fn schedule_weights(
    ep1: usize,
    ep2: usize,
    ep3: usize,
    w1: f64,
    w2: f64,
    w3: f64,
    ramp_epochs: usize,
) -> Result<Vec<f64>, JsError> {
    to_js(schedule_impl(ep1, ep2, ep3, [w1, w2, w3], ramp_epochs))
}

fn schedule_impl(
    ep1: usize,
    ep2: usize,
    ep3: usize,
    [w1, w2, w3]: [f64; 3],
    ramp_epochs: usize,
) -> Result<Vec<f64>, String> {
    let s = TrainSchedule {
        ep1,
        ep2,
        ep3,
        w1_target: w1,
        w2_target: w2,
        w3_target: w3,
        ramp: if ramp_epochs > 1 {
            WeightRamp::Linear
        } else {
            WeightRamp::Step
        },
        ramp_epochs: ramp_epochs.max(1),
        ..TrainSchedule::default()
    };
    s.validate().map_err(js)?;
    let mut out = Vec::with_capacity(3 * ep3);
    for e in 0..ep3 {
        let w = phase_weights(e, &s).map_err(js)?;
        out.extend([w.w1, w.w2, w.w3]);
    }
    Ok(out)
}

/// A small SCGAN on synthetic Gaussian noise, advanced one epoch at a time.
#[wasm_bindgen]
pub struct TinyRun {
    trainer: Trainer,
    corpus: UnpairedCorpus,
    held: Vec<ImagePatch>,
}

#[wasm_bindgen]
impl TinyRun {
    #[wasm_bindgen(constructor)]
    pub fn new(sigma: f64, seed: u32) -> Result<TinyRun, JsError> {
        to_js(Self::create(sigma, seed))
    }

    /// Runs one epoch; returns the epoch-mean `[l_gan_d, l_gan_g, l_clean, l_pn, l_rec]`.
    pub fn epoch(&mut self) -> Result<Vec<f64>, JsError> {
        to_js(self.run_epoch())
    }

    /// `[noisy | extracted noise | estimate]` side by side, RGBA, 96x32.
    pub fn preview_rgba(&self) -> Result<Vec<u8>, JsError> {
        to_js(self.preview())
    }

    /// Standard deviation of the extracted noise, in 8-bit units.
    pub fn extracted_std(&self) -> Result<f64, JsError> {
        to_js(self.extract().map(|m| m.std()))
    }

    pub fn epochs_done(&self) -> usize {
        self.trainer.epoch()
    }

    /// Training phase (1-3) of the next epoch.
    pub fn phase(&self) -> u8 {
        self.trainer.config().schedule.phase(self.trainer.epoch())
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus.noisy().len() + self.corpus.clean().len()
    }
}

impl TinyRun {
    fn create(sigma: f64, seed: u32) -> Result<TinyRun, String> {
        let seed = seed as u64;
        let sources: Vec<ImagePatch> = smooth_scenes(32, PATCH, PATCH, 1, 1.0, seed)
            .iter()
            .map(ImagePatch::quantize_8bit)
            .collect();
        let noise = noise_spec("gaussian", sigma, seed)?;
        let corpus = build_unpaired_corpus(&sources, &noise, 0.5, None, seed).map_err(js)?;
        let held = smooth_scenes(1, PATCH, PATCH, 1, 1.0, seed + 1)
            .iter()
            .map(|p| Ok(noise.with_seed(seed + 2).apply(&p.quantize_8bit()).map_err(js)?.0))
            .collect::<Result<_, String>>()?;
        let config = TrainConfig {
            generator: GeneratorConfig {
                depth: 5,
                padding: 5,
                mid_channels: 8,
                ..GeneratorConfig::desk(1)
            },
            discriminator: DiscriminatorConfig {
                layer_channels: [8, 16, 8, 1],
                init_std: Some(0.02),
                ..DiscriminatorConfig::paper(1)
            },
            schedule: TrainSchedule {
                ep1: 3,
                ep2: 8,
                ep3: 1000,
                batch_size: 4,
                lr_g: 1e-3,
                lr_d: 2e-3,
                ..TrainSchedule::default()
            },
            scaling: InputScaling::default(),
            mask: Default::default(),
            seed,
        };
        let trainer = Trainer::new(&corpus, config).map_err(js)?;
        Ok(TinyRun { trainer, corpus, held })
    }

    fn run_epoch(&mut self) -> Result<Vec<f64>, String> {
        if self.trainer.epoch() >= self.trainer.config().schedule.ep3 {
            return Err(js("schedule finished"));
        }
        let rows = self.trainer.run_epoch().map_err(js)?;
        let n = rows.len().max(1) as f64;
        let mut m = vec![0.0; 5];
        for r in rows {
            let b = r.losses;
            for (acc, v) in m.iter_mut().zip([b.l_gan_d, b.l_gan_g, b.l_clean, b.l_pn, b.l_rec]) {
                *acc += v / n;
            }
        }
        Ok(m)
    }

    fn extract(&self) -> Result<NoiseMap, String> {
        let g = &self.trainer.model().generator;
        let mut maps = extract_noise_maps(g, self.trainer.config().scaling, &self.held).map_err(js)?;
        Ok(maps.remove(0))
    }

    fn preview(&self) -> Result<Vec<u8>, String> {
        let map = self.extract()?;
        let noisy = &self.held[0];
        let estimate = noisy.sub_noise(&map).map_err(js)?.clamp_storage();
        let tiles = [rgba(noisy), noise_rgba(&map), rgba(&estimate)];
        let mut out = Vec::with_capacity(3 * PATCH * PATCH * 4);
        for y in 0..PATCH {
            for t in &tiles {
                out.extend_from_slice(&t[y * PATCH * 4..(y + 1) * PATCH * 4]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degradation_buffers_have_rgba_size() {
        let d = degrade_impl("gaussian", 25.0, 16, 3).unwrap();
        for buf in [d.clean_rgba(), d.noisy_rgba(), d.noise_rgba()] {
            assert_eq!(buf.len(), 16 * 16 * 4);
        }
        assert!(d.psnr() > 15.0 && d.psnr() < 25.0, "{}", d.psnr());
        assert!(degrade_impl("rain", 4.0, 32, 1).unwrap().psnr().is_finite());
        assert!(degrade_impl("snow", 1.0, 16, 1).is_err());
    }

    #[test]
    fn schedule_curve_has_three_phases() {
        let w = schedule_impl(2, 4, 6, [1.0, 0.5, 2.0], 1).unwrap();
        assert_eq!(w.len(), 18);
        assert_eq!(&w[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&w[6..9], &[1.0, 0.5, 0.0]);
        assert_eq!(&w[15..18], &[1.0, 0.5, 2.0]);
        assert!(schedule_impl(4, 2, 6, [1.0; 3], 1).is_err());
    }

    #[test]
    fn tiny_run_trains_and_previews() {
        let mut run = TinyRun::create(25.0, 5).unwrap();
        assert_eq!(run.phase(), 1);
        let losses = run.run_epoch().unwrap();
        assert_eq!(losses.len(), 5);
        assert!(losses.iter().all(|v| v.is_finite()));
        assert_eq!(run.epochs_done(), 1);
        assert_eq!(run.preview().unwrap().len(), 96 * 32 * 4);
        assert!(run.extract().unwrap().std() >= 0.0);
    }
}
