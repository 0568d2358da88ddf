//! Scheduled alternating optimization of the generator and discriminator.
//!
//! One step is one discriminator update followed by one generator update.
//! The generator objective evaluates the network four times per batch:
//!
//! * `G(I_n)` for the adversarial term (`I_n - G(I_n)` is shown to `D`),
//! * `G(J_c)` for the clean term,
//! * `G(G(I_n))` for the pure-noise term,
//! * `G(J_c + G(I_n))` for the reconstruction term.
//!
//! Gradients flow through every application, including through the input of
//! the second and fourth ones back into the first. The reused `G(I_n)` on the
//! target side of the pure-noise and reconstruction terms is a constant.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::corpus::{create_dir, read_json, write_json, UnpairedCorpus};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_losses, mean_sq_diff, mean_sq_diff_grad, mean_sq_to, mean_sq_to_grad, LossBreakdown, LossWeights,
};
use crate::models::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::nn::{Adam, Mode, Parameters, Real, Tensor};
use crate::patch::{ImagePatch, PEAK_8BIT};
use crate::schedule::{LossMask, PhaseState, TrainSchedule};
use crate::synth::rng_for;

/// Element type used for training runs.
pub type Work = f32;

/// How stored 8-bit patches are mapped to network inputs. Values are always
/// divided by 255; per-patch channel means are optionally removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct InputScaling {
    pub mean_subtract: bool,
}

impl InputScaling {
    pub fn to_tensor<T: Real>(&self, patch: &ImagePatch) -> Tensor<T> {
        let mut p = patch.clone();
        if self.mean_subtract {
            let means = p.channel_means();
            let plane = p.height() * p.width();
            for (c, chunk) in p.data_mut().chunks_mut(plane).enumerate() {
                chunk.iter_mut().for_each(|v| *v -= means[c]);
            }
        }
        p.to_tensor(1.0 / PEAK_8BIT)
    }
}

/// Coefficients of the generator terms (the adversarial one included, so
/// each term can be isolated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorObjective {
    pub gan: f64,
    pub clean: f64,
    pub pure_noise: f64,
    pub reconstruction: f64,
}

impl GeneratorObjective {
    pub fn from_weights(w: LossWeights) -> Self {
        Self {
            gan: 1.0,
            clean: w.w1,
            pure_noise: w.w2,
            reconstruction: w.w3,
        }
    }
}

/// Evaluates the generator objective on one batch and accumulates its
/// gradient into `g`'s parameter gradients (`d`'s are left untouched).
///
/// `first` optionally supplies an already computed training-mode `G(noisy)`
/// with its tape. Batch-norm running statistics follow only the `G(noisy)`
/// pass (when computed here and `update_running` is set), since inference
/// always sees noisy inputs.
pub fn generator_objective_backward<T: Real>(
    g: &mut Generator<T>,
    d: &mut Discriminator<T>,
    noisy: &Tensor<T>,
    clean: &Tensor<T>,
    first: Option<(Tensor<T>, crate::models::GeneratorTape<T>)>,
    objective: GeneratorObjective,
    update_running: bool,
) -> Result<LossBreakdown> {
    if !noisy.same_shape(clean) {
        return Err(Error::shape(noisy.shape(), clean.shape()));
    }
    let (g1, tape1) = match first {
        Some(f) => f,
        None => g.forward(noisy, Mode::Train { update_running })?,
    };
    let mut grad_g1 = Tensor::zeros(g1.n, g1.c, g1.h, g1.w);
    let mut any_grad = false;

    let fake = noisy.sub(&g1);
    let (d_fake, tape_f) = d.forward(&fake, objective.gan > 0.0)?;
    let l_gan_g = mean_sq_to(&d_fake.data, 1.0);
    if objective.gan > 0.0 {
        let gd = d_fake.with_data(mean_sq_to_grad(&d_fake.data, 1.0, objective.gan));
        let g_fake = d.backward(tape_f, gd, false, true).expect("input gradient requested");
        // fake = noisy - g1
        for (a, b) in grad_g1.data.iter_mut().zip(&g_fake.data) {
            *a -= *b;
        }
        any_grad = true;
    }

    let (gc, tape_c) = g.forward(clean, Mode::Train { update_running: false })?;
    let l_clean = mean_sq_to(&gc.data, 0.0);
    if objective.clean > 0.0 {
        let grad = gc.with_data(mean_sq_to_grad(&gc.data, 0.0, objective.clean));
        g.backward(tape_c, grad, false);
    }

    let (g2, tape_2) = g.forward(&g1, Mode::Train { update_running: false })?;
    let l_pn = mean_sq_diff(&g2.data, &g1.data);
    if objective.pure_noise > 0.0 {
        let grad = g2.with_data(mean_sq_diff_grad(&g2.data, &g1.data, objective.pure_noise));
        let din = g.backward(tape_2, grad, true).expect("input gradient requested");
        grad_g1.add_assign(&din);
        any_grad = true;
    }

    let reinjected = clean.add(&g1);
    let (g3, tape_3) = g.forward(&reinjected, Mode::Train { update_running: false })?;
    let l_rec = mean_sq_diff(&g3.data, &g1.data);
    if objective.reconstruction > 0.0 {
        let grad = g3.with_data(mean_sq_diff_grad(&g3.data, &g1.data, objective.reconstruction));
        let din = g.backward(tape_3, grad, true).expect("input gradient requested");
        grad_g1.add_assign(&din);
        any_grad = true;
    }

    if any_grad {
        g.backward(tape1, grad_g1, false);
    }

    let total_g = objective.gan * l_gan_g
        + objective.clean * l_clean
        + objective.pure_noise * l_pn
        + objective.reconstruction * l_rec;
    Ok(LossBreakdown {
        l_gan_d: 0.0,
        l_gan_g,
        l_clean,
        l_pn,
        l_rec,
        total_g,
    })
}

/// Least-squares discriminator loss on one batch; accumulates `d`'s gradients.
pub fn discriminator_backward<T: Real>(d: &mut Discriminator<T>, clean: &Tensor<T>, fake: &Tensor<T>) -> Result<f64> {
    let (d_real, tape_r) = d.forward(clean, true)?;
    let (d_fake, tape_f) = d.forward(fake, true)?;
    let (l_d, _) = adversarial_losses(&d_real.data, &d_fake.data)?;
    let gr = d_real.with_data(mean_sq_to_grad(&d_real.data, 1.0, 1.0));
    let gf = d_fake.with_data(mean_sq_to_grad(&d_fake.data, 0.0, 1.0));
    d.backward(tape_r, gr, true, false);
    d.backward(tape_f, gf, true, false);
    Ok(l_d)
}

fn ensure_finite(b: &LossBreakdown) -> Result<()> {
    match b.non_finite() {
        None => Ok(()),
        Some((component, v)) => Err(Error::NonFinite {
            component,
            detail: format!("loss evaluated to {v}"),
        }),
    }
}

/// Generator, discriminator and their optimizers.
#[derive(Debug, Clone)]
pub struct Scgan<T> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
}

impl<T: Real> Scgan<T> {
    pub fn new(gen: GeneratorConfig, disc: DiscriminatorConfig, schedule: &TrainSchedule, seed: u64) -> Result<Self> {
        if gen.channels != disc.channels {
            return Err(Error::ChannelMismatch {
                expected: gen.channels,
                found: disc.channels,
            });
        }
        let mut generator = Generator::new(gen, &mut rng_for(seed, &[20]))?;
        let mut discriminator = Discriminator::new(disc, &mut rng_for(seed, &[21]))?;
        let opt_g = Adam::new(schedule.optimizer(schedule.lr_g), &mut generator);
        let opt_d = Adam::new(schedule.optimizer(schedule.lr_d), &mut discriminator);
        Ok(Self {
            generator,
            discriminator,
            opt_g,
            opt_d,
        })
    }

    /// One discriminator update (generator frozen) then one generator update
    /// (discriminator frozen). Batches are in network units.
    pub fn train_step(&mut self, noisy: &Tensor<T>, clean: &Tensor<T>, weights: LossWeights) -> Result<LossBreakdown> {
        weights.validate()?;
        if noisy.is_empty() || clean.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        if !noisy.same_shape(clean) {
            return Err(Error::shape(noisy.shape(), clean.shape()));
        }
        let (g1, tape1) = self.generator.forward(noisy, Mode::Train { update_running: true })?;
        let fake = noisy.sub(&g1);

        self.discriminator.zero_grad();
        let l_gan_d = discriminator_backward(&mut self.discriminator, clean, &fake)?;
        if !l_gan_d.is_finite() {
            return Err(Error::NonFinite {
                component: "l_gan_d",
                detail: format!("loss evaluated to {l_gan_d}"),
            });
        }
        self.opt_d.step(&mut self.discriminator);

        self.generator.zero_grad();
        let mut b = generator_objective_backward(
            &mut self.generator,
            &mut self.discriminator,
            noisy,
            clean,
            Some((g1, tape1)),
            GeneratorObjective::from_weights(weights),
            true,
        )?;
        b.l_gan_d = l_gan_d;
        ensure_finite(&b)?;
        self.opt_g.step(&mut self.generator);
        Ok(b)
    }
}

/// One metrics-log row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub step: usize,
    pub losses: LossBreakdown,
    pub weights: LossWeights,
}

pub const METRICS_HEADER: &str = "epoch,step,l_gan_d,l_gan_g,l_clean,l_pn,l_rec,total_g,w1,w2,w3";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let l = &r.losses;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.step,
            l.l_gan_d,
            l.l_gan_g,
            l.l_clean,
            l.l_pn,
            l.l_rec,
            l.total_g,
            r.weights.w1,
            r.weights.w2,
            r.weights.w3
        );
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let bad = |line: usize, why: &str| Error::InvalidConfig(format!("metrics log line {line}: {why}"));
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad(i + 1, "expected 11 columns"));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad(i + 1, "non-numeric field"));
        let int = |k: usize| f[k].parse::<usize>().map_err(|_| bad(i + 1, "non-integer field"));
        rows.push(MetricsRow {
            epoch: int(0)?,
            step: int(1)?,
            losses: LossBreakdown {
                l_gan_d: num(2)?,
                l_gan_g: num(3)?,
                l_clean: num(4)?,
                l_pn: num(5)?,
                l_rec: num(6)?,
                total_g: num(7)?,
            },
            weights: LossWeights {
                w1: num(8)?,
                w2: num(9)?,
                w3: num(10)?,
            },
        });
    }
    Ok(rows)
}

/// Everything a training run depends on besides the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub schedule: TrainSchedule,
    pub scaling: InputScaling,
    pub mask: LossMask,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: u32,
    pub dtype: String,
    /// Completed epochs; training resumes at this epoch.
    pub epoch: usize,
    pub phase: PhaseState,
    pub config: TrainConfig,
    pub steps_done: usize,
    pub adam_steps: [u64; 2],
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub file: String,
    pub name: String,
    pub len: usize,
}

fn flatten<T: Real, P: Parameters<T> + ?Sized>(
    model: &mut P,
    prefix: &str,
    file: &str,
    entries: &mut Vec<TensorEntry>,
) -> Vec<u8> {
    let mut bytes = Vec::new();
    let mut idx = 0;
    let mut push = |vals: &[T], kind: &str, bytes: &mut Vec<u8>| {
        entries.push(TensorEntry {
            file: file.into(),
            name: format!("{prefix}.{kind}{idx}"),
            len: vals.len(),
        });
        idx += 1;
        vals.iter().for_each(|v| v.write_le(bytes));
    };
    model.visit_params(&mut |p, _| push(p, "param", &mut bytes));
    model.visit_buffers(&mut |b| push(b, "buffer", &mut bytes));
    bytes
}

fn unflatten<T: Real, P: Parameters<T> + ?Sized>(model: &mut P, bytes: &[u8], path: &Path) -> Result<()> {
    let mut expected = 0;
    model.visit_params(&mut |p, _| expected += p.len());
    model.visit_buffers(&mut |b| expected += b.len());
    if bytes.len() != expected * T::BYTES {
        return Err(Error::Checkpoint {
            path: path.into(),
            reason: format!("expected {} bytes, found {}", expected * T::BYTES, bytes.len()),
        });
    }
    let mut chunks = bytes.chunks_exact(T::BYTES);
    let mut fill = |dst: &mut [T]| {
        for v in dst {
            *v = T::read_le(chunks.next().expect("length checked"));
        }
    };
    model.visit_params(&mut |p, _| fill(p));
    model.visit_buffers(&mut |b| fill(b));
    Ok(())
}

fn adam_bytes<T: Real>(opt: &Adam<T>) -> Vec<u8> {
    let mut out = Vec::new();
    opt.state().into_iter().for_each(|v| v.write_le(&mut out));
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Checkpoint directory name for a number of completed epochs.
pub fn checkpoint_dir_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}")
}

/// The checkpoint with the most completed epochs under `root`, if any.
pub fn latest_checkpoint(root: &Path) -> Option<PathBuf> {
    fs::read_dir(root)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("checkpoint.json").is_file())
        .filter_map(|p| {
            let n = p.file_name()?.to_str()?.strip_prefix("epoch_")?.parse::<usize>().ok()?;
            Some((n, p))
        })
        .max_by_key(|(n, _)| *n)
        .map(|(_, p)| p)
}

impl<T: Real> Scgan<T> {
    pub fn save_checkpoint(&mut self, dir: &Path, mut manifest: CheckpointManifest) -> Result<()> {
        create_dir(dir)?;
        let mut entries = Vec::new();
        let gen = flatten(&mut self.generator, "generator", "generator.bin", &mut entries);
        let disc = flatten(
            &mut self.discriminator,
            "discriminator",
            "discriminator.bin",
            &mut entries,
        );
        for (name, bytes) in [
            ("generator.bin", gen),
            ("discriminator.bin", disc),
            ("optim_g.bin", adam_bytes(&self.opt_g)),
            ("optim_d.bin", adam_bytes(&self.opt_d)),
        ] {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        manifest.dtype = T::DTYPE.into();
        manifest.adam_steps = [self.opt_g.step, self.opt_d.step];
        manifest.tensors = entries;
        write_json(dir.join("checkpoint.json"), &manifest)
    }

    pub fn load_checkpoint(dir: &Path) -> Result<(Self, CheckpointManifest)> {
        let manifest_path = dir.join("checkpoint.json");
        if !manifest_path.exists() {
            return Err(Error::MissingFile(manifest_path));
        }
        let manifest: CheckpointManifest = read_json(&manifest_path)?;
        if manifest.dtype != T::DTYPE {
            return Err(Error::Checkpoint {
                path: manifest_path,
                reason: format!("stored as {}, requested {}", manifest.dtype, T::DTYPE),
            });
        }
        let c = &manifest.config;
        let mut s = Self::new(c.generator.clone(), c.discriminator.clone(), &c.schedule, c.seed)?;
        let gp = dir.join("generator.bin");
        unflatten(&mut s.generator, &read_file(&gp)?, &gp)?;
        let dp = dir.join("discriminator.bin");
        unflatten(&mut s.discriminator, &read_file(&dp)?, &dp)?;
        for (name, opt, steps) in [
            ("optim_g.bin", &mut s.opt_g, manifest.adam_steps[0]),
            ("optim_d.bin", &mut s.opt_d, manifest.adam_steps[1]),
        ] {
            let p = dir.join(name);
            let bytes = read_file(&p)?;
            let flat: Vec<T> = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
            if bytes.len() % T::BYTES != 0 || !opt.load_state(&flat) {
                return Err(Error::Checkpoint {
                    path: p,
                    reason: "optimizer state does not match the model".into(),
                });
            }
            opt.step = steps;
        }
        Ok((s, manifest))
    }
}

/// Loads only the generator of a checkpoint.
pub fn load_generator(dir: &Path) -> Result<(Generator<Work>, CheckpointManifest)> {
    let (s, m) = Scgan::<Work>::load_checkpoint(dir)?;
    Ok((s.generator, m))
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Scgan<Work>,
    pub log: Vec<MetricsRow>,
    pub checkpoints: Vec<PathBuf>,
    pub config: TrainConfig,
}

/// Resumable training driver.
pub struct Trainer {
    model: Scgan<Work>,
    config: TrainConfig,
    noisy: Vec<Tensor<Work>>,
    clean: Vec<Tensor<Work>>,
    epoch: usize,
    steps_done: usize,
    log: Vec<MetricsRow>,
    checkpoints: Vec<PathBuf>,
}

type Batches = (Vec<Tensor<Work>>, Vec<Tensor<Work>>);

fn corpus_tensors(corpus: &UnpairedCorpus, scaling: InputScaling, channels: usize) -> Result<Batches> {
    if corpus.noisy().is_empty() || corpus.clean().is_empty() {
        return Err(Error::Empty("training corpus needs noisy and clean patches"));
    }
    let shape = corpus.noisy()[0].shape();
    for p in corpus.noisy().iter().chain(corpus.clean()) {
        if p.shape() != shape {
            return Err(Error::shape(shape, p.shape()));
        }
    }
    if shape.2 != channels {
        return Err(Error::ChannelMismatch {
            expected: channels,
            found: shape.2,
        });
    }
    let conv = |ps: &[ImagePatch]| ps.iter().map(|p| scaling.to_tensor(p)).collect();
    Ok((conv(corpus.noisy()), conv(corpus.clean())))
}

impl Trainer {
    pub fn new(corpus: &UnpairedCorpus, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let (noisy, clean) = corpus_tensors(corpus, config.scaling, config.generator.channels)?;
        let model = Scgan::new(
            config.generator.clone(),
            config.discriminator.clone(),
            &config.schedule,
            config.seed,
        )?;
        Ok(Self {
            model,
            config,
            noisy,
            clean,
            epoch: 0,
            steps_done: 0,
            log: Vec::new(),
            checkpoints: Vec::new(),
        })
    }

    /// Continues from a checkpoint directory. `log` seeds the metrics history.
    pub fn resume(corpus: &UnpairedCorpus, checkpoint: &Path, mut log: Vec<MetricsRow>) -> Result<Self> {
        let (model, manifest) = Scgan::load_checkpoint(checkpoint)?;
        // rows logged after the checkpoint belong to the interrupted run
        log.truncate(manifest.steps_done);
        let config = manifest.config;
        let (noisy, clean) = corpus_tensors(corpus, config.scaling, config.generator.channels)?;
        Ok(Self {
            model,
            config,
            noisy,
            clean,
            epoch: manifest.epoch,
            steps_done: manifest.steps_done,
            log,
            checkpoints: Vec::new(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &Scgan<Work> {
        &self.model
    }

    pub fn log(&self) -> &[MetricsRow] {
        &self.log
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.noisy.len().div_ceil(self.config.schedule.batch_size)
    }

    pub fn phase_state(&self) -> Result<PhaseState> {
        PhaseState::at(
            self.epoch.min(self.config.schedule.ep3),
            &self.config.schedule,
            self.config.mask,
        )
    }

    /// Runs one epoch and returns its log rows.
    pub fn run_epoch(&mut self) -> Result<&[MetricsRow]> {
        let sched = &self.config.schedule;
        if self.epoch >= sched.ep3 {
            return Err(Error::InvalidConfig(format!(
                "training already finished at epoch {}",
                self.epoch
            )));
        }
        let weights = PhaseState::at(self.epoch, sched, self.config.mask)?.weights;
        let seed = self.config.seed;
        let mut noisy_order: Vec<usize> = (0..self.noisy.len()).collect();
        noisy_order.shuffle(&mut rng_for(seed, &[10, self.epoch as u64, 0]));
        let mut clean_order: Vec<usize> = (0..self.clean.len()).collect();
        clean_order.shuffle(&mut rng_for(seed, &[10, self.epoch as u64, 1]));

        let start = self.log.len();
        let b = sched.batch_size;
        for (step, chunk) in noisy_order.chunks(b).enumerate() {
            let noisy: Vec<Tensor<Work>> = chunk.iter().map(|&i| self.noisy[i].clone()).collect();
            let clean: Vec<Tensor<Work>> = (0..chunk.len())
                .map(|k| self.clean[clean_order[(step * b + k) % clean_order.len()]].clone())
                .collect();
            let losses = self
                .model
                .train_step(&Tensor::stack(&noisy), &Tensor::stack(&clean), weights)
                .map_err(|e| match e {
                    Error::NonFinite { component, detail } => Error::NonFinite {
                        component,
                        detail: format!("{detail} at epoch {} step {step}", self.epoch),
                    },
                    other => other,
                })?;
            self.log.push(MetricsRow {
                epoch: self.epoch,
                step: self.steps_done,
                losses,
                weights,
            });
            self.steps_done += 1;
        }
        self.epoch += 1;
        Ok(&self.log[start..])
    }

    pub fn manifest(&self) -> Result<CheckpointManifest> {
        Ok(CheckpointManifest {
            format: 1,
            dtype: Work::DTYPE.into(),
            epoch: self.epoch,
            phase: self.phase_state()?,
            config: self.config.clone(),
            steps_done: self.steps_done,
            adam_steps: [0, 0],
            tensors: Vec::new(),
        })
    }

    pub fn save_checkpoint(&mut self, root: &Path) -> Result<PathBuf> {
        let dir = root.join(checkpoint_dir_name(self.epoch));
        let manifest = self.manifest()?;
        self.model.save_checkpoint(&dir, manifest)?;
        self.checkpoints.push(dir.clone());
        Ok(dir)
    }

    /// Whether the state after the current epoch count is checkpointed.
    pub fn is_checkpoint_epoch(&self) -> bool {
        let s = &self.config.schedule;
        let e = self.epoch;
        e > 0 && (e.is_multiple_of(s.checkpoint_every) || e == s.ep1 || e == s.ep2 || e == s.ep3)
    }

    /// Trains to `ep3`. With `out`, writes checkpoints under
    /// `out/checkpoints/` and the metrics log to `out/metrics.csv`.
    pub fn run(mut self, out: Option<&Path>) -> Result<TrainOutcome> {
        if let Some(out) = out {
            create_dir(out)?;
        }
        while self.epoch < self.config.schedule.ep3 {
            self.run_epoch()?;
            if let Some(out) = out {
                if self.is_checkpoint_epoch() {
                    self.save_checkpoint(&out.join("checkpoints"))?;
                }
                write_metrics(&out.join("metrics.csv"), &self.log)?;
            }
        }
        Ok(TrainOutcome {
            model: self.model,
            log: self.log,
            checkpoints: self.checkpoints,
            config: self.config,
        })
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics_csv(&text)
}

/// Trains a fresh model on `corpus`.
pub fn train(corpus: &UnpairedCorpus, config: TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    Trainer::new(corpus, config)?.run(out)
}
