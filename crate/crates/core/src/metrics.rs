//! Pose evaluation metrics and the similarity alignment behind PA-MPJPE.
//!
//! All functions are pure. Distances are reported in the unit of the inputs,
//! except [`mpjve`], which always reports meters per second.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Pose3D, PoseSequence, Unit};

/// Centered source norms below this are rejected by [`procrustes_align`].
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

/// Mean per-joint Euclidean distance.
pub fn mpjpe(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    pred.check_compatible(gt)?;
    let k = pred.num_joints();
    let sum: f64 = pred
        .joints()
        .iter()
        .zip(gt.joints())
        .map(|(p, g)| distance(p, g))
        .sum();
    Ok(sum / k as f64)
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Best similarity transform mapping a source pose onto a target.
#[derive(Clone, Debug)]
pub struct AlignmentResult {
    pub scale: f64,
    /// Row-major proper rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub aligned_source: Pose3D,
    /// `mpjpe(aligned_source, target)`.
    pub residual_mpjpe: f64,
}

/// Least-squares similarity alignment (Umeyama).
///
/// Minimizes `Σ‖s·R·x_k + t − y_k‖²` over `R ∈ SO(3)`, `t` and, when
/// `with_scale`, `s ≥ 0` (otherwise `s = 1`). Reflections are excluded by
/// flipping the sign of the smallest singular direction when the
/// cross-covariance has negative determinant.
pub fn procrustes_align(source: &Pose3D, target: &Pose3D, with_scale: bool) -> Result<AlignmentResult> {
    source.check_compatible(target)?;
    let k = source.num_joints();
    if k < 3 {
        return Err(Error::InsufficientJoints(k));
    }
    let xs: Vec<Vector3<f64>> = source.joints().iter().map(|j| Vector3::from(*j)).collect();
    let ys: Vec<Vector3<f64>> = target.joints().iter().map(|j| Vector3::from(*j)).collect();
    let mx = xs.iter().sum::<Vector3<f64>>() / k as f64;
    let my = ys.iter().sum::<Vector3<f64>>() / k as f64;

    let mut cov = Matrix3::zeros();
    let mut src_sq = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let xc = x - mx;
        let yc = y - my;
        cov += yc * xc.transpose();
        src_sq += xc.norm_squared();
    }
    if src_sq.sqrt() < DEGENERATE_TOLERANCE {
        return Err(Error::DegenerateSource(src_sq.sqrt()));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        // nalgebra sorts singular values in descending order
        signs[2] = -1.0;
    }
    let rot = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = if with_scale {
        (svd.singular_values.component_mul(&signs).sum() / src_sq).max(0.0)
    } else {
        1.0
    };
    let trans = my - scale * rot * mx;

    let mut rotation = [[0.0; 3]; 3];
    for (r, row) in rotation.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = rot[(r, c)];
        }
    }
    let translation = [trans.x, trans.y, trans.z];
    let aligned_source = source.similarity(scale, &rotation, translation);
    let residual_mpjpe = mpjpe(&aligned_source, target)?;
    Ok(AlignmentResult {
        scale,
        rotation,
        translation,
        aligned_source,
        residual_mpjpe,
    })
}

/// MPJPE after aligning `pred` onto `gt` with scale, rotation and translation.
pub fn pa_mpjpe(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    pa_mpjpe_with(pred, gt, true)
}

pub fn pa_mpjpe_with(pred: &Pose3D, gt: &Pose3D, with_scale: bool) -> Result<f64> {
    Ok(procrustes_align(pred, gt, with_scale)?.residual_mpjpe)
}

/// Mean per-joint velocity error in m/s.
///
/// Velocities are forward differences of the raw (unaligned) sequences after
/// conversion to meters. A velocity term is skipped when either of its two
/// frames is masked invalid in either sequence.
pub fn mpjve(pred: &PoseSequence, gt: &PoseSequence) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidSequence(format!(
            "lengths differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::InvalidSequence("need at least 2 frames".into()));
    }
    if pred.frame_interval_s() != gt.frame_interval_s() {
        return Err(Error::InvalidSequence("frame intervals differ".into()));
    }
    if pred.joint_set() != gt.joint_set() {
        return Err(Error::InvalidSequence("joint sets differ".into()));
    }
    let dt = pred.frame_interval_s();
    let fp = pred.unit().factor_to(Unit::M);
    let fg = gt.unit().factor_to(Unit::M);
    let mut sum = 0.0;
    let mut count = 0usize;
    for f in 0..pred.len() - 1 {
        let ok = [f, f + 1].iter().all(|&i| pred.is_valid(i) && gt.is_valid(i));
        if !ok {
            continue;
        }
        let (p0, p1) = (&pred.poses()[f], &pred.poses()[f + 1]);
        let (g0, g1) = (&gt.poses()[f], &gt.poses()[f + 1]);
        for j in 0..p0.num_joints() {
            let mut sq = 0.0;
            for a in 0..3 {
                let vp = (p1.joints()[j][a] - p0.joints()[j][a]) * fp / dt;
                let vg = (g1.joints()[j][a] - g0.joints()[j][a]) * fg / dt;
                sq += (vp - vg) * (vp - vg);
            }
            sum += sq.sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidSequence("no valid frame pairs".into()));
    }
    Ok(sum / count as f64)
}

/// Number of proficiency classes.
pub const NUM_CLASSES: usize = 4;

/// Fraction of exact label matches.
pub fn top1_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyInput);
    }
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    if let Some(bad) = pred.iter().chain(gt).find(|l| **l >= NUM_CLASSES) {
        return Err(Error::Label(*bad as i64));
    }
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
}

/// Aggregate metrics over a keyed set of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub unit: Unit,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpjve_m_per_s: Option<f64>,
    pub num_samples: usize,
    /// Ground-truth ids without a prediction.
    pub missing_predictions: usize,
    /// Prediction ids without ground truth.
    pub unmatched_predictions: usize,
    pub per_sample: Vec<SampleMetrics>,
}

/// Per-sample MPJPE and PA-MPJPE over the intersection of ids.
///
/// Aggregates are arithmetic means over `per_sample`, which is sorted by id.
pub fn batch_evaluate(preds: &BTreeMap<String, Pose3D>, gts: &BTreeMap<String, Pose3D>) -> Result<MetricReport> {
    let mut per_sample = Vec::new();
    let mut unit = None;
    for (id, gt) in gts {
        let Some(pred) = preds.get(id) else { continue };
        match unit {
            None => unit = Some(gt.unit()),
            Some(u) if u != gt.unit() => {
                return Err(Error::UnitMismatch(format!("sample {id} is in {} not {u}", gt.unit())))
            }
            _ => {}
        }
        per_sample.push(SampleMetrics {
            id: id.clone(),
            mpjpe: mpjpe(pred, gt)?,
            pa_mpjpe: pa_mpjpe(pred, gt)?,
        });
    }
    let Some(unit) = unit else {
        return Err(Error::NoOverlap);
    };
    let n = per_sample.len();
    let matched = n;
    Ok(MetricReport {
        unit,
        mpjpe: per_sample.iter().map(|s| s.mpjpe).sum::<f64>() / n as f64,
        pa_mpjpe: per_sample.iter().map(|s| s.pa_mpjpe).sum::<f64>() / n as f64,
        mpjve_m_per_s: None,
        num_samples: n,
        missing_predictions: gts.len() - matched,
        unmatched_predictions: preds.len() - matched,
        per_sample,
    })
}

/// Mean MPJPE over the intersection of ids, without alignment.
///
/// Cheaper than [`batch_evaluate`]; used by weight search and validation.
pub fn mean_mpjpe(preds: &BTreeMap<String, Pose3D>, gts: &BTreeMap<String, Pose3D>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (id, gt) in gts {
        if let Some(p) = preds.get(id) {
            sum += mpjpe(p, gt)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::JointSet;

    fn pts(v: &[[f64; 3]]) -> Pose3D {
        Pose3D::custom(v.to_vec(), Unit::Mm).unwrap()
    }

    #[test]
    fn single_joint_displacement() {
        let d = mpjpe(&pts(&[[3.0, 0.0, 0.0]]), &pts(&[[0.0, 0.0, 0.0]])).unwrap();
        assert_eq!(d, 3.0);
    }

    #[test]
    fn mismatched_units_are_rejected() {
        let a = pts(&[[0.0; 3]]);
        let b = a.to_unit(Unit::Cm);
        assert!(matches!(mpjpe(&a, &b), Err(Error::UnitMismatch(_))));
        let h = Pose3D::hand_mm(vec![[0.0; 3]; 21]).unwrap();
        let c = Pose3D::custom(vec![[0.0; 3]; 21], Unit::Mm).unwrap();
        assert!(matches!(mpjpe(&h, &c), Err(Error::UnitMismatch(_))));
    }

    #[test]
    fn alignment_needs_three_joints_and_spread() {
        let two = pts(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(matches!(procrustes_align(&two, &two, true), Err(Error::InsufficientJoints(2))));
        let same = pts(&[[1.0, 2.0, 3.0]; 4]);
        assert!(matches!(
            procrustes_align(&same, &pts(&[[0.0; 3], [1.0; 3], [2.0; 3], [0.0, 1.0, 0.0]]), true),
            Err(Error::DegenerateSource(_))
        ));
    }

    #[test]
    fn identity_alignment() {
        let p = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        let a = procrustes_align(&p, &p, true).unwrap();
        assert!((a.scale - 1.0).abs() < 1e-12);
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((a.rotation[r][c] - expect).abs() < 1e-12);
            }
            assert!(a.translation[r].abs() < 1e-12);
        }
        assert!(a.residual_mpjpe < 1e-12);
    }

    #[test]
    fn mirrored_pose_is_not_aligned_by_a_reflection() {
        let p = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [1.0, 1.0, 1.0]]);
        let a = procrustes_align(&p.mirror_x(), &p, true).unwrap();
        assert!(a.residual_mpjpe > 0.1);
        let rot = Matrix3::from_fn(|r, c| a.rotation[r][c]);
        assert!((rot.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(top1_accuracy(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&[0, 1, 2, 3], &[1, 2, 3, 0]).unwrap(), 0.0);
        assert_eq!(top1_accuracy(&[0, 1, 2, 3], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert!(matches!(top1_accuracy(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(top1_accuracy(&[4], &[0]), Err(Error::Label(4))));
    }

    #[test]
    fn mpjve_constant_offset_velocity() {
        let gt: Vec<Pose3D> = (0..5).map(|_| Pose3D::custom(vec![[0.0; 3]; 2], Unit::M).unwrap()).collect();
        let pred: Vec<Pose3D> = (0..5)
            .map(|f| Pose3D::custom(vec![[f as f64, 0.0, 0.0]; 2], Unit::M).unwrap())
            .collect();
        let v = mpjve(&PoseSequence::new(pred, 1.0).unwrap(), &PoseSequence::new(gt, 1.0).unwrap()).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mpjve_rejects_short_or_mismatched() {
        let p = Pose3D::custom(vec![[0.0; 3]], Unit::M).unwrap();
        let one = PoseSequence::new(vec![p.clone()], 0.1).unwrap();
        assert!(matches!(mpjve(&one, &one), Err(Error::InvalidSequence(_))));
        let two = PoseSequence::new(vec![p.clone(), p.clone()], 0.1).unwrap();
        assert!(matches!(mpjve(&one, &two), Err(Error::InvalidSequence(_))));
    }

    #[test]
    fn batch_mean_of_two() {
        let gt = pts(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let mut gts = BTreeMap::new();
        let mut preds = BTreeMap::new();
        gts.insert("a".to_string(), gt.clone());
        gts.insert("b".to_string(), gt.clone());
        gts.insert("c".to_string(), gt.clone());
        preds.insert("a".to_string(), gt.translated([2.0, 0.0, 0.0]));
        preds.insert("b".to_string(), gt.translated([0.0, 4.0, 0.0]));
        preds.insert("z".to_string(), gt.clone());
        let r = batch_evaluate(&preds, &gts).unwrap();
        assert_eq!(r.num_samples, 2);
        assert!((r.mpjpe - 3.0).abs() < 1e-12);
        assert!(r.pa_mpjpe < 1e-9);
        assert_eq!(r.missing_predictions, 1);
        assert_eq!(r.unmatched_predictions, 1);
        let empty: BTreeMap<String, Pose3D> = BTreeMap::new();
        assert!(matches!(batch_evaluate(&empty, &gts), Err(Error::NoOverlap)));
        assert_eq!(JointSet::Custom(3), gt.joint_set());
    }
}
