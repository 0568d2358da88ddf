//! Three-phase loss-weight schedule and the ablation loss masks.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum WeightRamp {
    /// Weights jump to their targets at the phase boundary.
    #[default]
    Step,
    /// Weights grow linearly over `ramp_epochs` after the boundary.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    /// End of the adversarial-only phase.
    pub ep1: usize,
    /// Start of the reconstruction phase.
    pub ep2: usize,
    /// Total number of epochs.
    pub ep3: usize,
    pub w1_target: f64,
    pub w2_target: f64,
    pub w3_target: f64,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub ramp: WeightRamp,
    pub ramp_epochs: usize,
    /// Checkpoint period in epochs (phase boundaries always checkpoint).
    pub checkpoint_every: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            ep1: 10,
            ep2: 20,
            ep3: 30,
            w1_target: 1.0,
            w2_target: 1.0,
            w3_target: 1.0,
            batch_size: 16,
            lr_g: 1e-4,
            lr_d: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            ramp: WeightRamp::Step,
            ramp_epochs: 1,
            checkpoint_every: 5,
        }
    }
}

impl TrainSchedule {
    /// Desk-scale schedule for ~200-patch corpora of 32x32 patches.
    pub fn desk() -> Self {
        Self {
            ep1: 2,
            ep2: 5,
            ep3: 30,
            // the small critic needs a faster clock to keep the DC term in check
            lr_d: 4e-4,
            ..Self::default()
        }
    }

    /// Every violated invariant, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.ep1 == 0 {
            v.push("schedule: ep1 must be > 0".to_string());
        }
        if self.ep2 < self.ep1 {
            v.push(format!(
                "schedule: ep2 ({}) < ep1 ({}) violates ep1 <= ep2 <= ep3",
                self.ep2, self.ep1
            ));
        }
        if self.ep3 < self.ep2 {
            v.push(format!(
                "schedule: ep3 ({}) < ep2 ({}) violates ep1 <= ep2 <= ep3",
                self.ep3, self.ep2
            ));
        }
        for (name, w) in [
            ("w1_target", self.w1_target),
            ("w2_target", self.w2_target),
            ("w3_target", self.w3_target),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                v.push(format!(
                    "schedule: {name} = {w} violates non-negativity of loss weights"
                ));
            }
        }
        if self.batch_size == 0 {
            v.push("schedule: batch_size must be positive".into());
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr > 0.0 && lr.is_finite()) {
                v.push(format!("schedule: {name} = {lr} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            v.push("schedule: Adam betas must lie in [0, 1)".into());
        }
        if self.ramp == WeightRamp::Linear && self.ramp_epochs == 0 {
            v.push("schedule: linear ramp needs ramp_epochs > 0".into());
        }
        if self.checkpoint_every == 0 {
            v.push("schedule: checkpoint_every must be positive".into());
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

    pub fn targets(&self) -> LossWeights {
        LossWeights {
            w1: self.w1_target,
            w2: self.w2_target,
            w3: self.w3_target,
        }
    }

    /// 1, 2 or 3.
    pub fn phase(&self, epoch: usize) -> u8 {
        if epoch < self.ep1 {
            1
        } else if epoch < self.ep2 {
            2
        } else {
            3
        }
    }

    pub fn optimizer(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// Loss weights in effect during `epoch`.
pub fn phase_weights(epoch: usize, schedule: &TrainSchedule) -> Result<LossWeights> {
    if epoch > schedule.ep3 {
        return Err(Error::InvalidConfig(format!(
            "epoch {epoch} outside the schedule [0, {}]",
            schedule.ep3
        )));
    }
    let ramp = |start: usize| -> f64 {
        match schedule.ramp {
            WeightRamp::Step => 1.0,
            WeightRamp::Linear => (((epoch - start + 1) as f64) / schedule.ramp_epochs as f64).min(1.0),
        }
    };
    let t = schedule.targets();
    Ok(match schedule.phase(epoch) {
        1 => LossWeights::ZERO,
        2 => {
            let r = ramp(schedule.ep1);
            LossWeights {
                w1: t.w1 * r,
                w2: t.w2 * r,
                w3: 0.0,
            }
        }
        _ => {
            let r12 = ramp(schedule.ep1);
            LossWeights {
                w1: t.w1 * r12,
                w2: t.w2 * r12,
                w3: t.w3 * ramp(schedule.ep2),
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub epoch: usize,
    pub phase: u8,
    pub weights: LossWeights,
}

impl PhaseState {
    pub fn at(epoch: usize, schedule: &TrainSchedule, mask: LossMask) -> Result<Self> {
        Ok(Self {
            epoch,
            phase: schedule.phase(epoch),
            weights: mask.apply(phase_weights(epoch, schedule)?),
        })
    }
}

/// Which self-consistency terms may ever be active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossMask {
    pub clean: bool,
    pub pure_noise: bool,
    pub reconstruction: bool,
}

impl Default for LossMask {
    fn default() -> Self {
        Self::ALL
    }
}

impl LossMask {
    pub const ALL: LossMask = LossMask {
        clean: true,
        pure_noise: true,
        reconstruction: true,
    };

    pub fn apply(&self, w: LossWeights) -> LossWeights {
        LossWeights {
            w1: if self.clean { w.w1 } else { 0.0 },
            w2: if self.pure_noise { w.w2 } else { 0.0 },
            w3: if self.reconstruction { w.w3 } else { 0.0 },
        }
    }
}

/// The three ablation networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Adversarial loss only.
    Net1,
    /// Adds the clean and pure-noise terms.
    Net2,
    /// All terms.
    Net3,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Net1, Variant::Net2, Variant::Net3];

    pub fn mask(self) -> LossMask {
        match self {
            Variant::Net1 => LossMask {
                clean: false,
                pure_noise: false,
                reconstruction: false,
            },
            Variant::Net2 => LossMask {
                clean: true,
                pure_noise: true,
                reconstruction: false,
            },
            Variant::Net3 => LossMask::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Net1 => "net1",
            Variant::Net2 => "net2",
            Variant::Net3 => "net3",
        }
    }
}
