//! Horizontal-flip test-time augmentation and score-weighted ensembling.
//!
//! A member's effective weight on a sample is its static weight times its
//! per-sample score. Fusion normalizes the effective weights before
//! combining, so a member holding all the weight is reproduced bit-exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::HandPrediction;
use crate::image::ImageTensor;
use crate::metrics::mpjpe;
use crate::pose::Pose3D;

pub const DEFAULT_GRID_STEP: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    weights: Vec<f64>,
    normalized: bool,
}

impl EnsembleWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("ensemble weights must be finite and nonnegative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::ZeroWeight);
        }
        Ok(Self {
            weights,
            normalized: false,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n]).map(Self::normalized)
    }

    pub fn normalized(self) -> Self {
        let total: f64 = self.weights.iter().sum();
        Self {
            weights: self.weights.iter().map(|w| w / total).collect(),
            normalized: true,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `Σ wᵢ·sᵢ·Yᵢ / Σ wᵢ·sᵢ` over `(Yᵢ, sᵢ)` members.
pub fn score_weighted_mean(members: &[(&Pose3D, f64)], weights: &[f64]) -> Result<Pose3D> {
    let (first, _) = members.first().ok_or(Error::EmptyEnsemble)?;
    if members.len() != weights.len() {
        return Err(Error::LengthMismatch(members.len(), weights.len()));
    }
    let effective: Vec<f64> = members.iter().zip(weights).map(|((_, s), w)| w * s).collect();
    if effective.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidInput("scores and weights must be finite and nonnegative".into()));
    }
    let total: f64 = effective.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    let mut joints = vec![[0.0; 3]; first.num_joints()];
    for ((pose, _), c) in members.iter().zip(&effective) {
        first.check_compatible(pose)?;
        let a = c / total;
        if a == 0.0 {
            continue;
        }
        for (acc, j) in joints.iter_mut().zip(pose.joints()) {
            for d in 0..3 {
                acc[d] += a * j[d];
            }
        }
    }
    Pose3D::new(joints, first.unit(), first.joint_set())
}

pub fn weighted_fuse(predictions: &[(Pose3D, f64)], weights: &EnsembleWeights) -> Result<Pose3D> {
    let members: Vec<(&Pose3D, f64)> = predictions.iter().map(|(p, s)| (p, *s)).collect();
    score_weighted_mean(&members, weights.weights())
}

/// Predicts on the image and its mirror, un-mirrors the second result
/// (`x → −x`, joint order unchanged) and averages keypoints and scores.
pub fn hflip_tta(
    model_forward: impl Fn(&ImageTensor) -> Result<HandPrediction>,
    image: &ImageTensor,
) -> Result<HandPrediction> {
    let direct = model_forward(image)?;
    let flipped = model_forward(&image.hflip())?;
    Ok(combine_flip(direct, flipped))
}

/// Batched [`hflip_tta`]: `forward` maps a batch of images to one prediction
/// each.
pub fn hflip_tta_batch(
    forward: impl Fn(&[&ImageTensor]) -> Result<Vec<HandPrediction>>,
    images: &[&ImageTensor],
) -> Result<Vec<HandPrediction>> {
    let direct = forward(images)?;
    let mirrored: Vec<ImageTensor> = images.iter().map(|im| im.hflip()).collect();
    let refs: Vec<&ImageTensor> = mirrored.iter().collect();
    let flipped = forward(&refs)?;
    if direct.len() != images.len() || flipped.len() != images.len() {
        return Err(Error::LengthMismatch(images.len(), direct.len().min(flipped.len())));
    }
    Ok(direct.into_iter().zip(flipped).map(|(d, f)| combine_flip(d, f)).collect())
}

fn combine_flip(direct: HandPrediction, flipped: HandPrediction) -> HandPrediction {
    let back = flipped.keypoints.mirror_x();
    let keypoints = Pose3D::new(
        direct
            .keypoints
            .joints()
            .iter()
            .zip(back.joints())
            .map(|(a, b)| [0.5 * a[0] + 0.5 * b[0], 0.5 * a[1] + 0.5 * b[1], 0.5 * a[2] + 0.5 * b[2]])
            .collect(),
        direct.keypoints.unit(),
        direct.keypoints.joint_set(),
    )
    .expect("mean of finite poses is finite");
    HandPrediction {
        keypoints,
        score: 0.5 * (direct.score + flipped.score),
        pathway: direct.pathway,
    }
}

/// A member's prediction for one sample with its confidence score (1.0 for
/// unscored models).
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPose {
    pub pose: Pose3D,
    pub score: f64,
}

impl ScoredPose {
    pub fn unscored(pose: Pose3D) -> Self {
        Self { pose, score: 1.0 }
    }
}

pub type KeyedPredictions = BTreeMap<String, ScoredPose>;

/// Fuses members sample by sample over the ids every member predicts.
pub fn fuse_keyed(members: &[KeyedPredictions], weights: &EnsembleWeights) -> Result<BTreeMap<String, Pose3D>> {
    let first = members.first().ok_or(Error::EmptyEnsemble)?;
    if members.len() != weights.len() {
        return Err(Error::LengthMismatch(members.len(), weights.len()));
    }
    let mut out = BTreeMap::new();
    for id in first.keys() {
        let picked: Option<Vec<(&Pose3D, f64)>> =
            members.iter().map(|m| m.get(id).map(|sp| (&sp.pose, sp.score))).collect();
        if let Some(picked) = picked {
            out.insert(id.clone(), score_weighted_mean(&picked, weights.weights())?);
        }
    }
    Ok(out)
}

/// All ways of splitting `units` among `members` parts, in lexicographic
/// order.
fn compositions(units: usize, members: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(units, members, &mut Vec::with_capacity(members), &mut out);
    out
}

/// Result of [`optimize_weights`].
#[derive(Clone, Debug)]
pub struct WeightSearch {
    pub weights: EnsembleWeights,
    pub mpjpe: f64,
    /// Validation MPJPE of every member alone.
    pub member_mpjpe: Vec<f64>,
    pub grid_points: usize,
}

/// Exhaustive simplex grid search for the static weights minimizing
/// validation MPJPE of the fused prediction.
///
/// Only ids present in every member and in `val_gt` are scored. Points whose
/// objective is within 1e-12 (relative) of the optimum count as tied and the
/// tie goes to the most uniform weights, then the lexicographically smallest.
/// A tied point is only eligible if it is no worse than the best single
/// member, so the result never loses to a simplex corner.
pub fn optimize_weights(
    val_predictions: &[KeyedPredictions],
    val_gt: &BTreeMap<String, Pose3D>,
    grid_step: f64,
) -> Result<WeightSearch> {
    if val_predictions.len() < 2 {
        return Err(Error::InvalidInput("weight search needs at least two members".into()));
    }
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::Range(format!("grid_step {grid_step} outside (0, 0.5]")));
    }
    let m = val_predictions.len();
    let ids: Vec<&String> = val_gt
        .keys()
        .filter(|id| val_predictions.iter().all(|p| p.contains_key(*id)))
        .collect();
    if ids.is_empty() {
        return Err(Error::NoOverlap);
    }
    let samples: Vec<(&Pose3D, Vec<(&Pose3D, f64)>)> = ids
        .iter()
        .map(|id| {
            let members = val_predictions
                .iter()
                .map(|p| {
                    let sp = &p[*id];
                    (&sp.pose, sp.score)
                })
                .collect();
            (&val_gt[*id], members)
        })
        .collect();
    let objective = |w: &[f64]| -> Result<f64> {
        let mut sum = 0.0;
        for (gt, members) in &samples {
            sum += mpjpe(&score_weighted_mean(members, w)?, gt)?;
        }
        Ok(sum / samples.len() as f64)
    };

    let units = (1.0 / grid_step + 1e-9).floor() as usize;
    let grid = compositions(units, m);
    let mut evaluated = Vec::with_capacity(grid.len());
    for counts in &grid {
        let w: Vec<f64> = counts.iter().map(|c| *c as f64 / units as f64).collect();
        // A sample where every nonzero-weight member scored zero has no
        // defined fusion; such grid points are skipped.
        match objective(&w) {
            Ok(v) => evaluated.push((counts, w, v)),
            Err(Error::ZeroWeight) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut member_mpjpe = Vec::with_capacity(m);
    for i in 0..m {
        let mut corner = vec![0.0; m];
        corner[i] = 1.0;
        member_mpjpe.push(objective(&corner)?);
    }
    let best_member = member_mpjpe.iter().cloned().fold(f64::INFINITY, f64::min);
    let best = evaluated.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
    let cutoff = (best + 1e-12 * best.abs().max(1e-300)).min(best_member);
    let spread = |counts: &[usize]| -> usize {
        counts
            .iter()
            .map(|c| {
                let d = (c * m) as i64 - units as i64;
                (d * d) as usize
            })
            .sum()
    };
    let (_, w, v) = evaluated
        .iter()
        .filter(|e| e.2 <= cutoff)
        .min_by(|a, b| spread(a.0).cmp(&spread(b.0)).then_with(|| a.0.cmp(b.0)))
        .ok_or(Error::ZeroWeight)?;
    Ok(WeightSearch {
        weights: EnsembleWeights {
            weights: w.clone(),
            normalized: true,
        },
        mpjpe: *v,
        member_mpjpe,
        grid_points: grid.len(),
    })
}
