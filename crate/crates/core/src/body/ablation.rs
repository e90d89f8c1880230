//! The modality ladder: head pose only, then video, depth and temporal fusion
//! added one at a time, each arm trained from scratch per seed.

use serde::{Deserialize, Serialize};

use super::sample::MultimodalSample;
use super::{evaluate, BodyModel, BodyModelConfig, Modalities};
use crate::error::Result;
use crate::training::{train, TrainConfig, TrainHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub modalities: Modalities,
    pub seeds: Vec<u64>,
    /// Validation MPJPE (cm) of the best checkpoint, one per seed.
    pub val_mpjpe_cm: Vec<f64>,
    pub mean_val_mpjpe_cm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<ArmResult>,
    /// Mean improvement of each arm over the previous one (positive is
    /// better), one entry per step up the ladder.
    pub mean_improvements_cm: Vec<f64>,
    /// Every seed's MPJPE drops at every step.
    pub strictly_decreasing_per_seed: bool,
}

impl AblationReport {
    pub fn from_arms(arms: Vec<ArmResult>) -> Self {
        let mean_improvements_cm = arms
            .windows(2)
            .map(|w| w[0].mean_val_mpjpe_cm - w[1].mean_val_mpjpe_cm)
            .collect();
        let strictly_decreasing_per_seed = arms
            .windows(2)
            .all(|w| w[0].val_mpjpe_cm.iter().zip(&w[1].val_mpjpe_cm).all(|(a, b)| b < a));
        Self {
            arms,
            mean_improvements_cm,
            strictly_decreasing_per_seed,
        }
    }

    pub fn ordering_holds(&self) -> bool {
        self.strictly_decreasing_per_seed && self.mean_improvements_cm.iter().all(|d| *d > 0.0)
    }
}

/// Trains one model per (arm, seed). `model.modalities` and both seeds are
/// overridden per run; `on_run` sees each finished run's history.
pub fn run_ladder(
    train_set: &[MultimodalSample],
    val_set: &[MultimodalSample],
    seeds: &[u64],
    model: &BodyModelConfig,
    train_cfg: &TrainConfig,
    mut on_run: impl FnMut(&str, u64, &TrainHistory, f64),
) -> Result<AblationReport> {
    let mut arms = Vec::new();
    for (name, modalities) in Modalities::ladder() {
        let mut val_mpjpe_cm = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = BodyModelConfig {
                modalities,
                seed,
                ..model.clone()
            };
            let mut m = BodyModel::new(cfg)?;
            let out = train(&mut m, train_set, val_set, &TrainConfig { seed, ..train_cfg.clone() }, |_| {})?;
            m.params_mut().copy_from(&out.best);
            let v = evaluate(&m, val_set)?;
            on_run(name, seed, &out.history, v);
            val_mpjpe_cm.push(v);
        }
        let mean_val_mpjpe_cm = val_mpjpe_cm.iter().sum::<f64>() / val_mpjpe_cm.len().max(1) as f64;
        arms.push(ArmResult {
            arm: name.to_string(),
            modalities,
            seeds: seeds.to_vec(),
            val_mpjpe_cm,
            mean_val_mpjpe_cm,
        });
    }
    Ok(AblationReport::from_arms(arms))
}
