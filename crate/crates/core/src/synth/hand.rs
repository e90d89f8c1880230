//! Synthetic hands: a fixed-bone kinematic skeleton posed with bounded joint
//! angles, placed in a 200 mm cube in front of a pinhole camera and rendered
//! as one Gaussian blob per joint.
//!
//! Blob colour encodes what the pixels alone cannot: red is depth, green is
//! the finger a joint belongs to and blue its position along the finger.
//! Together with the blob centre this makes pose→image injective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImageTensor;
use crate::pose::{JointSet, Pose3D, Unit};

pub const IMAGE_SIZE: usize = 64;
/// Focal length in pixels for a 64 px image; scales with image size.
pub const FOCAL_PX: f64 = 90.0;
pub const CUBE_CENTER_MM: [f64; 3] = [0.0, 0.0, 400.0];
pub const CUBE_HALF_MM: f64 = 100.0;
pub const BLOB_SIGMA_PX: f64 = 1.5;
/// Pixels where every blob weight falls below this stay black.
pub const BACKGROUND_CUTOFF: f64 = 1e-3;

/// Finger bases in the wrist frame (mm). The palm spans the x-y plane with
/// fingers pointing along +y and the palm facing -z.
const FINGER_BASE: [[f64; 3]; 5] = [
    [-22.0, 25.0, -10.0],
    [-12.0, 85.0, 0.0],
    [0.0, 88.0, 0.0],
    [11.0, 83.0, 0.0],
    [21.0, 74.0, 0.0],
];
/// Base pointing direction of each finger in the palm plane (degrees from +y).
const FINGER_HEADING_DEG: [f64; 5] = [-50.0, -6.0, 0.0, 6.0, 12.0];
const BONE_MM: [[f64; 3]; 5] = [
    [38.0, 30.0, 27.0],
    [40.0, 23.0, 20.0],
    [45.0, 27.0, 22.0],
    [42.0, 26.0, 21.0],
    [34.0, 20.0, 18.0],
];
const ABDUCTION_DEG: f64 = 15.0;
const FLEX_MAX_DEG: [f64; 3] = [80.0, 90.0, 70.0];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthHandSample {
    pub id: String,
    pub seed: u64,
    pub image: ImageTensor,
    pub pose: Pose3D,
}

/// Bone lengths of the skeleton as `(parent, child, length_mm)`.
pub fn bones() -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(20);
    for f in 0..5 {
        let base = 1 + 4 * f;
        out.push((0, base, norm(FINGER_BASE[f])));
        for (b, len) in BONE_MM[f].iter().enumerate() {
            out.push((base + b, base + b + 1, *len));
        }
    }
    out
}

/// Samples the articulated hand in its wrist frame.
fn articulate(rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let mut joints = vec![[0.0; 3]; 21];
    for f in 0..5 {
        let base = 1 + 4 * f;
        joints[base] = FINGER_BASE[f];
        let heading = (FINGER_HEADING_DEG[f] + rng.random_range(-ABDUCTION_DEG..=ABDUCTION_DEG)).to_radians();
        let forward = [heading.sin(), heading.cos(), 0.0];
        let mut flex = 0.0;
        let mut p = FINGER_BASE[f];
        for b in 0..3 {
            flex += rng.random_range(0.0..=FLEX_MAX_DEG[b]).to_radians();
            let d = [forward[0] * flex.cos(), forward[1] * flex.cos(), -flex.sin()];
            for a in 0..3 {
                p[a] += BONE_MM[f][b] * d[a];
            }
            joints[base + b + 1] = p;
        }
    }
    joints
}

fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let (w, x, y, z) = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            break (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        }
    };
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Samples a hand pose in camera coordinates (mm). Half of the hands are
/// mirrored, so left and right hands both occur.
pub fn sample_pose(rng: &mut impl Rng) -> Pose3D {
    let local = articulate(rng);
    let r = random_rotation(rng);
    let mirror = rng.random_bool(0.5);
    let mut joints: Vec<[f64; 3]> = local
        .iter()
        .map(|p| {
            let mut q: [f64; 3] = std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]);
            if mirror {
                q[0] = -q[0];
            }
            q
        })
        .collect();
    // Place the bounding box uniformly inside the cube.
    for a in 0..3 {
        let lo = joints.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
        let hi = joints.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
        let min_t = CUBE_CENTER_MM[a] - CUBE_HALF_MM - lo;
        let max_t = CUBE_CENTER_MM[a] + CUBE_HALF_MM - hi;
        let t = if max_t > min_t {
            rng.random_range(min_t..=max_t)
        } else {
            0.5 * (min_t + max_t)
        };
        joints.iter_mut().for_each(|p| p[a] += t);
    }
    Pose3D::new(joints, Unit::Mm, JointSet::Hand21).expect("generated pose is valid")
}

/// Pinhole projection to continuous pixel coordinates `(u, v)`; pixel `(x, y)`
/// covers `[x, x+1) × [y, y+1)` and the principal point is the image centre,
/// so a horizontal image flip corresponds exactly to `x → −x`.
pub fn project(p: [f64; 3], size: usize) -> [f64; 2] {
    let f = FOCAL_PX * size as f64 / IMAGE_SIZE as f64;
    let c = size as f64 / 2.0;
    [c + f * p[0] / p[2], c + f * p[1] / p[2]]
}

fn joint_colour(j: usize, z_mm: f64) -> [f64; 3] {
    let depth = ((CUBE_CENTER_MM[2] + CUBE_HALF_MM - z_mm) / (2.0 * CUBE_HALF_MM)).clamp(0.0, 1.0);
    let (finger, along) = if j == 0 { (0, 0) } else { ((j - 1) / 4 + 1, (j - 1) % 4 + 1) };
    [
        0.25 + 0.75 * depth,
        0.3 + 0.7 * finger as f64 / 5.0,
        0.3 + 0.7 * along as f64 / 4.0,
    ]
}

/// Renders a square image of side `size`. Each pixel shows the joint with the
/// strongest blob there (lowest index on ties). Also returns that joint per
/// pixel, or `None` for background.
pub fn render(pose: &Pose3D, size: usize) -> (ImageTensor, Vec<Option<usize>>) {
    let mm = pose.to_unit(Unit::Mm);
    let centres: Vec<[f64; 2]> = mm.joints().iter().map(|p| project(*p, size)).collect();
    let colours: Vec<[f64; 3]> = mm.joints().iter().enumerate().map(|(j, p)| joint_colour(j, p[2])).collect();
    let sigma = BLOB_SIGMA_PX * size as f64 / IMAGE_SIZE as f64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut data = vec![0.0; size * size * 3];
    let mut labels = vec![None; size * size];
    for y in 0..size {
        let v = y as f64 + 0.5;
        for x in 0..size {
            let u = x as f64 + 0.5;
            let mut best = (BACKGROUND_CUTOFF, None);
            for (j, c) in centres.iter().enumerate() {
                let d2 = (u - c[0]).powi(2) + (v - c[1]).powi(2);
                let w = (-d2 * inv).exp();
                if w > best.0 {
                    best = (w, Some(j));
                }
            }
            if let (w, Some(j)) = best {
                let o = (y * size + x) * 3;
                for ch in 0..3 {
                    data[o + ch] = w * colours[j][ch];
                }
                labels[y * size + x] = Some(j);
            }
        }
    }
    let image = ImageTensor::new(size, size, data).expect("rendered image is valid");
    (image, labels)
}

pub fn gen_hand_sample(seed: u64) -> SynthHandSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pose = sample_pose(&mut rng);
    let (image, _) = render(&pose, IMAGE_SIZE);
    SynthHandSample {
        id: format!("hand-{seed:016x}"),
        seed,
        image,
        pose,
    }
}

/// `n` samples of a split; sample `i` uses `sample_seed(base_seed, offset + i)`.
pub fn gen_hand_dataset(base_seed: u64, split: super::Split, n: usize) -> Vec<SynthHandSample> {
    (0..n as u64)
        .map(|i| gen_hand_sample(super::sample_seed(base_seed, split.index_offset() + i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(gen_hand_sample(11), gen_hand_sample(11));
        assert_ne!(gen_hand_sample(11).pose, gen_hand_sample(12).pose);
    }

    #[test]
    fn bone_lengths_fixed_and_inside_cube() {
        let reference: Vec<f64> = bones().iter().map(|b| b.2).collect();
        for seed in 0..200 {
            let s = gen_hand_sample(seed);
            let j = s.pose.joints();
            for ((a, b, _), want) in bones().iter().zip(&reference) {
                let d = norm([j[*a][0] - j[*b][0], j[*a][1] - j[*b][1], j[*a][2] - j[*b][2]]);
                assert!((d - want).abs() < 1e-9);
            }
            for p in j {
                for a in 0..3 {
                    assert!((p[a] - CUBE_CENTER_MM[a]).abs() <= CUBE_HALF_MM + 1e-9);
                }
            }
        }
    }

    #[test]
    fn blob_peaks_at_projection() {
        let mut checked = 0;
        for seed in 0..50 {
            let s = gen_hand_sample(seed);
            let (_, labels) = render(&s.pose, IMAGE_SIZE);
            for (j, p) in s.pose.joints().iter().enumerate() {
                let [u, v] = project(*p, IMAGE_SIZE);
                let inside = (0.0..IMAGE_SIZE as f64).contains(&u) && (0.0..IMAGE_SIZE as f64).contains(&v);
                if !inside || labels[v as usize * IMAGE_SIZE + u as usize] != Some(j) {
                    continue;
                }
                // Recover blob weights from the blue channel and locate the peak.
                let blue = joint_colour(j, p[2])[2];
                let mut peak = (0.0, 0, 0);
                for y in 0..IMAGE_SIZE {
                    for x in 0..IMAGE_SIZE {
                        if labels[y * IMAGE_SIZE + x] == Some(j) {
                            let w = s.image.pixel(y, x)[2] / blue;
                            if w > peak.0 {
                                peak = (w, x, y);
                            }
                        }
                    }
                }
                assert!((peak.1 as f64 + 0.5 - u).abs() <= 0.5 + 1e-12);
                assert!((peak.2 as f64 + 0.5 - v).abs() <= 0.5 + 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 500, "only {checked} visible joints");
    }

    #[test]
    fn splits_disjoint() {
        let train = gen_hand_dataset(3, super::super::Split::Train, 50);
        let val = gen_hand_dataset(3, super::super::Split::Val, 50);
        for a in &train {
            assert!(val.iter().all(|b| b.id != a.id));
        }
    }
}
