use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    EndToEnd,
    BaselineStatic,
    BaselineDuplicated,
    BaselineAugmented,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::EndToEnd => "end_to_end",
            Stage::BaselineStatic => "baseline_static",
            Stage::BaselineDuplicated => "baseline_duplicated",
            Stage::BaselineAugmented => "baseline_augmented",
        }
    }
}

/// Where the person's Gaussians live between renders.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Canonical positions are room coordinates.
    World,
    /// Canonical positions are offsets from the person.
    #[default]
    Human,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub delta: f64,
    pub radiance: f64,
    pub network: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 3.2e-2,
            scale: 2e-2,
            rotation: 5e-3,
            delta: 1e-1,
            radiance: 5e-3,
            network: 1e-3,
        }
    }
}

impl LearningRates {
    /// Rate for slot `k` of a packed Gaussian parameter vector.
    pub fn for_slot(&self, k: usize) -> f64 {
        match k {
            0..=2 => self.position,
            3..=5 => self.scale,
            6..=9 => self.rotation,
            10 => self.delta,
            _ => self.radiance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub iterations: usize,
    pub lr: LearningRates,
    /// Position rate at the last iteration relative to the first; decays geometrically.
    pub position_decay: f64,
    pub lambda_ssim: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub densify_interval: usize,
    pub densify_grad_threshold: f64,
    /// Fraction of the run after which the Gaussian count stays fixed.
    pub densify_until: f64,
    /// Max scale above this fraction of the room diagonal splits instead of cloning.
    pub split_scale_fraction: f64,
    pub prune_delta_eps: f64,
    pub prune_contribution: f64,
    pub max_background: usize,
    pub max_human: usize,
    pub init_points: usize,
    pub source_points: usize,
    pub init_delta: f64,
    pub human_gaussians: usize,
    pub human_delta: f64,
    /// Initial person Gaussian scale as a fraction of the body radius.
    pub human_scale: f64,
    /// Initial person radiance as a fraction of the mean background radiance.
    pub human_radiance: f64,
    /// Angular blur of every rendered footprint, px.
    pub beam_px: f64,
    pub anchor: Anchor,
    pub hidden: usize,
    pub depth: usize,
    pub frequencies: usize,
    /// Copies of the static data used by the duplicated baseline.
    pub duplicate: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage: Stage::Stage1,
            iterations: 3000,
            lr: LearningRates::default(),
            position_decay: 0.3,
            lambda_ssim: 0.2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            densify_interval: 500,
            densify_grad_threshold: 2e-4,
            densify_until: 0.5,
            split_scale_fraction: 0.01,
            prune_delta_eps: 1e-3,
            prune_contribution: 1e-5,
            max_background: 6000,
            max_human: 64,
            init_points: 2000,
            source_points: 16,
            init_delta: 0.9,
            human_gaussians: 64,
            human_delta: 0.95,
            human_scale: 1.0 / 3.0,
            human_radiance: 0.3,
            beam_px: 7.0,
            anchor: Anchor::Human,
            hidden: 64,
            depth: 3,
            frequencies: 4,
            duplicate: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::json("training config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let lr = &self.lr;
        let rates = [lr.position, lr.scale, lr.rotation, lr.delta, lr.radiance, lr.network];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.position_decay > 0.0 && self.position_decay <= 1.0) {
            return Err(Error::Config("position_decay must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(Error::Config("lambda_ssim must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return Err(Error::Config(
                "optimizer moments must lie in [0, 1) with positive epsilon".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.densify_until) {
            return Err(Error::Config("densify_until must lie in [0, 1]".into()));
        }
        if self.densify_interval == 0 {
            return Err(Error::Config("densify_interval must be at least 1".into()));
        }
        if self.init_points == 0 || self.init_points > self.max_background {
            return Err(Error::Config("init_points must be in 1..=max_background".into()));
        }
        if self.human_gaussians == 0 || self.human_gaussians > self.max_human {
            return Err(Error::Config("human_gaussians must be in 1..=max_human".into()));
        }
        for (name, d) in [("init_delta", self.init_delta), ("human_delta", self.human_delta)] {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Config(format!("{name} must lie strictly between 0 and 1")));
            }
        }
        if !(self.human_radiance >= 0.0 && self.human_radiance.is_finite()) {
            return Err(Error::Config("human_radiance must be finite and non-negative".into()));
        }
        if !(self.beam_px >= 0.0 && self.beam_px.is_finite()) {
            return Err(Error::Config("beam_px must be finite and non-negative".into()));
        }
        if self.hidden == 0 || self.duplicate == 0 {
            return Err(Error::Config(
                "hidden width and duplicate factor must be positive".into(),
            ));
        }
        Ok(())
    }
}
