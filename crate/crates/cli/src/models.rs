//! Checkpointed models of every task behind one type.

use std::collections::BTreeMap;
use std::path::Path;

use egopose::body::BodyModel;
use egopose::dataset::Samples;
use egopose::ensemble::{hflip_tta_batch, KeyedPredictions, ScoredPose};
use egopose::hand::{HandModel, HandPrediction};
use egopose::image::ImageTensor;
use egopose::io::{self, LabelRecord};
use egopose::proficiency::ProficiencyModel;
use egopose::Result;

use crate::config::ModelConfig;
use crate::PathwayArg;

pub enum Model {
    Hand(HandModel),
    Body(BodyModel),
    Prof(ProficiencyModel),
}

/// Predictions of one split: poses for hand and body, labels for
/// proficiency.
pub enum Predictions {
    Poses(KeyedPredictions),
    Labels(BTreeMap<String, LabelRecord>),
}

impl Predictions {
    pub fn write(&self, path: &Path) -> Result<()> {
        match self {
            Predictions::Poses(p) => io::write_predictions(path, p),
            Predictions::Labels(l) => io::write_labels(path, l),
        }
    }
}

impl Model {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        Ok(match config {
            ModelConfig::Hand(c) => Model::Hand(HandModel::new(c.clone())?),
            ModelConfig::Body(c) => Model::Body(BodyModel::new(c.clone())?),
            ModelConfig::Prof(c) => Model::Prof(ProficiencyModel::new(c.clone())?),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Hand(_) => "hand",
            Model::Body(_) => "body",
            Model::Prof(_) => "prof",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Model::Hand(m) => io::save_checkpoint(path, self.kind(), m.config(), m.params()),
            Model::Body(m) => io::save_checkpoint(path, self.kind(), m.config(), m.params()),
            Model::Prof(m) => io::save_checkpoint(path, self.kind(), m.config(), m.params()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = io::load_checkpoint(path)?;
        let config = match ck.model.as_str() {
            "hand" => ModelConfig::Hand(ck.config_as()?),
            "body" => ModelConfig::Body(ck.config_as()?),
            "prof" => ModelConfig::Prof(ck.config_as()?),
            other => return Err(egopose::Error::Checkpoint(format!("unknown model kind \"{other}\""))),
        };
        let mut model = Self::new(&config)?;
        match &mut model {
            Model::Hand(m) => ck.restore(m.params_mut())?,
            Model::Body(m) => ck.restore(m.params_mut())?,
            Model::Prof(m) => ck.restore(m.params_mut())?,
        }
        Ok(model)
    }

    pub fn predict(&self, samples: &Samples, pathway: PathwayArg, tta: bool) -> Result<Predictions> {
        match (self, samples) {
            (Model::Hand(m), Samples::Hand(v)) => {
                let pick = |o: egopose::hand::HandOutput| match pathway {
                    PathwayArg::Fused => o.fused,
                    PathwayArg::Vit => o.vit,
                    PathwayArg::Convnext => o.convnext,
                };
                let forward = |imgs: &[&ImageTensor]| -> Result<Vec<HandPrediction>> {
                    Ok(m.predict_batch(imgs)?.into_iter().map(pick).collect())
                };
                let mut out = KeyedPredictions::new();
                for chunk in v.chunks(64) {
                    let imgs: Vec<&ImageTensor> = chunk.iter().map(|s| &s.image).collect();
                    let preds = if tta { hflip_tta_batch(forward, &imgs)? } else { forward(&imgs)? };
                    for (s, p) in chunk.iter().zip(preds) {
                        out.insert(s.id.clone(), ScoredPose { pose: p.keypoints, score: p.score });
                    }
                }
                Ok(Predictions::Poses(out))
            }
            (Model::Body(m), Samples::Body(v)) => {
                let preds = m.predict_all(v)?;
                Ok(Predictions::Poses(
                    v.iter()
                        .zip(preds)
                        .map(|(s, p)| (s.id.clone(), ScoredPose::unscored(p)))
                        .collect(),
                ))
            }
            (Model::Prof(m), Samples::Prof(v)) => {
                let preds = m.predict_all(v)?;
                Ok(Predictions::Labels(
                    v.iter()
                        .zip(preds)
                        .map(|(s, p)| {
                            (s.id.clone(), LabelRecord { label: p.label, probabilities: Some(p.probabilities) })
                        })
                        .collect(),
                ))
            }
            _ => Err(egopose::Error::InvalidInput(format!(
                "a {} checkpoint cannot predict {} data",
                self.kind(),
                samples.task().as_str()
            ))),
        }
    }
}
