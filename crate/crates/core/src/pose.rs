//! Pose containers and the fixed joint orderings used in files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length unit of pose coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Mm,
    Cm,
    M,
}

impl Unit {
    /// Size of one unit in meters.
    pub fn meters(self) -> f64 {
        match self {
            Unit::Mm => 1e-3,
            Unit::Cm => 1e-2,
            Unit::M => 1.0,
        }
    }

    /// Multiplier converting a length in `self` to `target`.
    pub fn factor_to(self, target: Unit) -> f64 {
        match (self, target) {
            (a, b) if a == b => 1.0,
            (Unit::Mm, Unit::Cm) => 0.1,
            (Unit::Cm, Unit::Mm) => 10.0,
            (Unit::Cm, Unit::M) => 0.01,
            (Unit::M, Unit::Cm) => 100.0,
            (Unit::Mm, Unit::M) => 1e-3,
            (Unit::M, Unit::Mm) => 1e3,
            _ => unreachable!(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Mm => "mm",
            Unit::Cm => "cm",
            Unit::M => "m",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mm" => Ok(Unit::Mm),
            "cm" => Ok(Unit::Cm),
            "m" => Ok(Unit::M),
            other => Err(format!("unknown unit `{other}`")),
        }
    }
}

/// Skeleton definition. `Custom` carries an arbitrary joint count and exists
/// for metric computations only; it is never written to files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JointSet {
    Hand21,
    Body17,
    Custom(usize),
}

/// Wrist first, then four joints per finger from base to tip.
pub const HAND21_JOINTS: [&str; 21] = [
    "wrist", "thumb1", "thumb2", "thumb3", "thumb4", "index1", "index2", "index3", "index4",
    "middle1", "middle2", "middle3", "middle4", "ring1", "ring2", "ring3", "ring4", "pinky1",
    "pinky2", "pinky3", "pinky4",
];

/// Human3.6M 17-joint order.
pub const BODY17_JOINTS: [&str; 17] = [
    "pelvis", "right_hip", "right_knee", "right_ankle", "left_hip", "left_knee", "left_ankle",
    "spine", "thorax", "neck", "head", "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
];

/// Index of the head joint in [`BODY17_JOINTS`].
pub const BODY_HEAD: usize = 10;

impl JointSet {
    pub fn num_joints(self) -> usize {
        match self {
            JointSet::Hand21 => 21,
            JointSet::Body17 => 17,
            JointSet::Custom(k) => k,
        }
    }

    /// File-format name, `None` for custom sets.
    pub fn file_name(self) -> Option<&'static str> {
        match self {
            JointSet::Hand21 => Some("HAND21"),
            JointSet::Body17 => Some("BODY17"),
            JointSet::Custom(_) => None,
        }
    }

    pub fn from_file_name(s: &str) -> Option<Self> {
        match s {
            "HAND21" => Some(JointSet::Hand21),
            "BODY17" => Some(JointSet::Body17),
            _ => None,
        }
    }

    pub fn joint_names(self) -> Option<&'static [&'static str]> {
        match self {
            JointSet::Hand21 => Some(&HAND21_JOINTS),
            JointSet::Body17 => Some(&BODY17_JOINTS),
            JointSet::Custom(_) => None,
        }
    }
}

impl fmt::Display for JointSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.file_name() {
            Some(n) => f.write_str(n),
            None => write!(f, "CUSTOM({})", self.num_joints()),
        }
    }
}

/// `K × 3` joint coordinates with a unit and a skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose3D {
    joints: Vec<[f64; 3]>,
    unit: Unit,
    joint_set: JointSet,
}

impl Pose3D {
    /// Validates the joint count against `joint_set` and rejects non-finite
    /// coordinates.
    pub fn new(joints: Vec<[f64; 3]>, unit: Unit, joint_set: JointSet) -> Result<Self> {
        if joints.len() != joint_set.num_joints() {
            return Err(Error::InvalidPose(format!(
                "{joint_set} needs {} joints, got {}",
                joint_set.num_joints(),
                joints.len()
            )));
        }
        if joints.is_empty() {
            return Err(Error::InvalidPose("pose has no joints".into()));
        }
        if let Some(k) = joints.iter().position(|j| j.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidPose(format!("joint {k} is not finite")));
        }
        Ok(Self {
            joints,
            unit,
            joint_set,
        })
    }

    /// Pose with an ad-hoc joint count.
    pub fn custom(joints: Vec<[f64; 3]>, unit: Unit) -> Result<Self> {
        let k = joints.len();
        Self::new(joints, unit, JointSet::Custom(k))
    }

    pub fn hand_mm(joints: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(joints, Unit::Mm, JointSet::Hand21)
    }

    pub fn body_cm(joints: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(joints, Unit::Cm, JointSet::Body17)
    }

    /// Builds a pose from a flat `[x0, y0, z0, x1, ...]` slice.
    pub fn from_flat(flat: &[f64], unit: Unit, joint_set: JointSet) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(Error::InvalidPose(format!("{} values is not a multiple of 3", flat.len())));
        }
        let joints = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(joints, unit, joint_set)
    }

    pub fn joints(&self) -> &[[f64; 3]] {
        &self.joints
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn joint_set(&self) -> JointSet {
        self.joint_set
    }

    pub fn flat(&self) -> Vec<f64> {
        self.joints.iter().flatten().copied().collect()
    }

    pub fn to_unit(&self, unit: Unit) -> Pose3D {
        let f = self.unit.factor_to(unit);
        self.map_joints(|j| [j[0] * f, j[1] * f, j[2] * f]).with_unit(unit)
    }

    fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    /// Applies `f` to every joint. Non-finite results are the caller's bug.
    pub fn map_joints(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Pose3D {
        Pose3D {
            joints: self.joints.iter().map(|j| f(*j)).collect(),
            unit: self.unit,
            joint_set: self.joint_set,
        }
    }

    pub fn translated(&self, t: [f64; 3]) -> Pose3D {
        self.map_joints(|j| [j[0] + t[0], j[1] + t[1], j[2] + t[2]])
    }

    pub fn scaled(&self, s: f64) -> Pose3D {
        self.map_joints(|j| [j[0] * s, j[1] * s, j[2] * s])
    }

    /// `s · R · p + t` for every joint `p`; `rotation` is row-major.
    pub fn similarity(&self, s: f64, rotation: &[[f64; 3]; 3], t: [f64; 3]) -> Pose3D {
        self.map_joints(|p| {
            let mut out = [0.0; 3];
            for (r, o) in out.iter_mut().enumerate() {
                *o = s * (rotation[r][0] * p[0] + rotation[r][1] * p[1] + rotation[r][2] * p[2]) + t[r];
            }
            out
        })
    }

    /// Negates the x coordinate (mirror about the camera's optical axis).
    pub fn mirror_x(&self) -> Pose3D {
        self.map_joints(|j| [-j[0], j[1], j[2]])
    }

    /// Fails unless both poses share skeleton and unit.
    pub fn check_compatible(&self, other: &Pose3D) -> Result<()> {
        if self.joint_set != other.joint_set {
            return Err(Error::UnitMismatch(format!(
                "joint sets {} vs {}",
                self.joint_set, other.joint_set
            )));
        }
        if self.unit != other.unit {
            return Err(Error::UnitMismatch(format!("units {} vs {}", self.unit, other.unit)));
        }
        Ok(())
    }
}

/// Ordered poses sampled at a fixed interval.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    poses: Vec<Pose3D>,
    frame_interval_s: f64,
    valid: Option<Vec<bool>>,
}

impl PoseSequence {
    pub fn new(poses: Vec<Pose3D>, frame_interval_s: f64) -> Result<Self> {
        Self::with_mask(poses, frame_interval_s, None)
    }

    /// `valid[f] == false` excludes frame `f` from velocity terms.
    pub fn with_mask(poses: Vec<Pose3D>, frame_interval_s: f64, valid: Option<Vec<bool>>) -> Result<Self> {
        let Some(first) = poses.first() else {
            return Err(Error::InvalidSequence("sequence has no poses".into()));
        };
        if !(frame_interval_s > 0.0 && frame_interval_s.is_finite()) {
            return Err(Error::InvalidSequence(format!(
                "frame interval must be positive, got {frame_interval_s}"
            )));
        }
        for (i, p) in poses.iter().enumerate() {
            first
                .check_compatible(p)
                .map_err(|e| Error::InvalidSequence(format!("frame {i}: {e}")))?;
        }
        if let Some(mask) = &valid {
            if mask.len() != poses.len() {
                return Err(Error::InvalidSequence(format!(
                    "mask has {} entries for {} frames",
                    mask.len(),
                    poses.len()
                )));
            }
        }
        Ok(Self {
            poses,
            frame_interval_s,
            valid,
        })
    }

    pub fn poses(&self) -> &[Pose3D] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn frame_interval_s(&self) -> f64 {
        self.frame_interval_s
    }

    pub fn is_valid(&self, frame: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[frame])
    }

    pub fn joint_set(&self) -> JointSet {
        self.poses[0].joint_set()
    }

    pub fn unit(&self) -> Unit {
        self.poses[0].unit()
    }
}
