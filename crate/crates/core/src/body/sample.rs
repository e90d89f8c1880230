use crate::clip::{DepthSequence, VideoClip};
use crate::error::{Error, Result};
use crate::pose::{JointSet, Pose3D};

/// Per-frame 6-DoF head pose: unit quaternion `(w, x, y, z)` then
/// translation `(x, y, z)` in cm. Frames are oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadPoseSequence {
    frames: Vec<[f64; 7]>,
}

pub const HEAD_POSE_DIM: usize = 7;

impl HeadPoseSequence {
    pub fn new(frames: Vec<[f64; 7]>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("head pose sequence is empty".into()));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("head pose frame {t} is not finite")));
            }
            let n = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2] + f[3] * f[3]).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!("head pose frame {t} quaternion has norm {n}")));
            }
        }
        Ok(Self { frames })
    }

    /// From `(yaw, pitch, roll, tx, ty, tz)` frames, angles in radians with
    /// `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn from_yaw_pitch_roll(frames: &[[f64; 6]]) -> Result<Self> {
        Self::new(
            frames
                .iter()
                .map(|f| {
                    let q = quat_mul(quat_mul(axis_quat(2, f[0]), axis_quat(1, f[1])), axis_quat(0, f[2]));
                    [q[0], q[1], q[2], q[3], f[3], f[4], f[5]]
                })
                .collect(),
        )
    }

    pub fn frames(&self) -> &[[f64; 7]] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> &[f64; 7] {
        self.frames.last().expect("nonempty")
    }

    pub fn translation(&self, t: usize) -> [f64; 3] {
        let f = &self.frames[t];
        [f[4], f[5], f[6]]
    }

    pub fn tail(&self, n: usize, step: usize) -> Result<HeadPoseSequence> {
        let idx = crate::clip::tail_indices(self.frames.len(), n, step)?;
        Ok(Self {
            frames: idx.iter().map(|&t| self.frames[t]).collect(),
        })
    }
}

/// Quaternion `(w, x, y, z)` of a rotation by `angle` about coordinate axis
/// `axis` (0 = x, 1 = y, 2 = z).
pub fn axis_quat(axis: usize, angle: f64) -> [f64; 4] {
    let (s, c) = (0.5 * angle).sin_cos();
    let mut q = [c, 0.0, 0.0, 0.0];
    q[1 + axis] = s;
    q
}

pub fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Row-major rotation matrix of a unit quaternion.
pub fn quat_to_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// One prediction target with its aligned input windows. All windows end at
/// the target frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalSample {
    pub id: String,
    pub timestamp: usize,
    pub head_pose: HeadPoseSequence,
    pub video: Option<VideoClip>,
    pub depth: Option<DepthSequence>,
    /// BODY17 in cm.
    pub target: Pose3D,
}

impl MultimodalSample {
    pub fn validate(&self) -> Result<()> {
        if self.target.joint_set() != JointSet::Body17 {
            return Err(Error::InvalidInput(format!("target is {}, expected BODY17", self.target.joint_set())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_conversion_matches_matrices() {
        let seq = HeadPoseSequence::from_yaw_pitch_roll(&[[0.3, -0.2, 0.1, 1.0, 2.0, 3.0]]).unwrap();
        let f = seq.last();
        let r = quat_to_matrix([f[0], f[1], f[2], f[3]]);
        let (cy, sy) = (0.3f64.cos(), 0.3f64.sin());
        let (cp, sp) = ((-0.2f64).cos(), (-0.2f64).sin());
        let (cr, sr) = (0.1f64.cos(), 0.1f64.sin());
        // First column of Rz·Ry·Rx.
        let col0 = [cy * cp, sy * cp, -sp];
        for i in 0..3 {
            assert!((r[i][0] - col0[i]).abs() < 1e-12);
        }
        assert!((r[2][1] - cp * sr).abs() < 1e-12);
        assert!((r[2][2] - cp * cr).abs() < 1e-12);
        assert_eq!(seq.translation(0), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        assert!(HeadPoseSequence::new(vec![[1.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]).is_err());
    }
}
