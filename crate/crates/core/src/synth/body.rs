//! Synthetic egocentric walking sequences.
//!
//! A latent walker (scale, speed, gait frequency and phase, arm and leg
//! swing amplitudes, heading, gaze pitch) drives a 17-joint skeleton in
//! world coordinates (cm, z up). Three observation streams are derived:
//!
//! | stream | reveals | hides |
//! |---|---|---|
//! | head pose (6-DoF of the head joint) | head position, heading, gaze; body scale confounded with lean and bob | limb swing, gait phase sign |
//! | video (32×32 ego camera) | shoulders, elbows, wrists as coloured blobs | legs (out of frame) |
//! | depth (16×16 ego camera) | distance to every joint below the head | joint identity |
//! | temporal windows | walking speed (which sets trunk lean), phase from head bob, noise averaging | |
//!
//! Video and depth markers jitter independently per frame, so longer
//! windows carry strictly more information.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::body::sample::{axis_quat, quat_mul, quat_to_matrix, HeadPoseSequence, MultimodalSample};
use crate::clip::{DepthSequence, VideoClip};
use crate::error::{Error, Result};
use crate::pose::{Pose3D, BODY_HEAD};

pub const FPS: f64 = 30.0;
pub const FRAME_STRIDE: usize = 3;
pub const HEAD_FRAMES: usize = 16;
pub const VIDEO_FRAMES: usize = 4;
pub const DEPTH_FRAMES: usize = 4;
/// Frames of history a full sample needs before its anchor.
pub const WINDOW_SPAN: usize = (HEAD_FRAMES - 1) * FRAME_STRIDE;
pub const VIDEO_SIZE: usize = 32;
pub const DEPTH_SIZE: usize = 16;
/// Frames per generated dataset sequence and spacing between its anchors.
pub const DATASET_SEQUENCE_LEN: usize = 64;
pub const DATASET_ANCHOR_STEP: usize = 6;

const VIDEO_FOCAL: f64 = 14.0;
const DEPTH_FOCAL: f64 = 7.0;
const VIDEO_SIGMA: f64 = 1.2;
const DEPTH_SIGMA: f64 = 1.0;
const MARKER_NOISE_CM: f64 = 2.0;
/// Depth values are camera-frame z in metres.
const DEPTH_UNIT_CM: f64 = 100.0;

const ARM_JOINTS: [usize; 6] = [11, 12, 13, 14, 15, 16];

#[derive(Clone, Debug)]
struct Walker {
    scale: f64,
    speed: f64,
    freq: f64,
    phase0: f64,
    arm_swing: f64,
    leg_swing: f64,
    heading0: f64,
    turn_rate: f64,
    pitch: f64,
    start: [f64; 2],
}

impl Walker {
    fn sample(rng: &mut impl Rng) -> Self {
        Self {
            scale: rng.random_range(0.9..1.1),
            speed: rng.random_range(50.0..150.0),
            freq: rng.random_range(0.8..1.2),
            phase0: rng.random_range(0.0..std::f64::consts::TAU),
            arm_swing: rng.random_range(0.15..0.6),
            leg_swing: rng.random_range(0.15..0.5),
            heading0: rng.random_range(-std::f64::consts::FRAC_PI_4..std::f64::consts::FRAC_PI_4),
            turn_rate: rng.random_range(-0.1..0.1),
            pitch: rng.random_range(0.6..1.0),
            start: [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)],
        }
    }

    fn lean(&self) -> f64 {
        0.12 + 0.18 * (self.speed - 100.0) / 50.0
    }

    /// Skeleton in the body frame (x forward, y left, z up, origin on the
    /// ground below the pelvis).
    fn body_frame(&self, phase: f64) -> Vec<[f64; 3]> {
        let h = self.scale;
        let bob = 2.5 * (2.0 * phase).cos();
        let pelvis = [0.0, 0.0, 92.0 * h + bob];
        let lean = self.lean();
        let (sl, cl) = lean.sin_cos();
        let upper = |o: [f64; 3]| {
            [
                pelvis[0] + o[0] * cl + o[2] * sl,
                pelvis[1] + o[1],
                pelvis[2] - o[0] * sl + o[2] * cl,
            ]
        };
        let leg = |side: f64, swing: f64, knee_phase: f64| {
            let hip = [pelvis[0], pelvis[1] + side * 10.0 * h, pelvis[2]];
            let flex = 0.2 + 0.4 * (0.5 + 0.5 * knee_phase.sin());
            let knee = [hip[0] + 44.0 * h * swing.sin(), hip[1], hip[2] - 44.0 * h * swing.cos()];
            let a = swing - flex;
            let ankle = [knee[0] + 43.0 * h * a.sin(), knee[1], knee[2] - 43.0 * h * a.cos()];
            [hip, knee, ankle]
        };
        let s = phase.sin();
        let right_leg = leg(-1.0, -self.leg_swing * s, phase + std::f64::consts::PI + 1.0);
        let left_leg = leg(1.0, self.leg_swing * s, phase + 1.0);
        let arm = |side: f64, swing: f64| {
            let shoulder = upper([0.0, side * 17.0 * h, 52.0 * h]);
            let elbow = [shoulder[0] + 28.0 * h * swing.sin(), shoulder[1] + side * 2.0, shoulder[2] - 28.0 * h * swing.cos()];
            let bend = swing + 0.25 + 0.6 * swing.max(0.0);
            let wrist = [elbow[0] + 25.0 * h * bend.sin(), elbow[1], elbow[2] - 25.0 * h * bend.cos()];
            [shoulder, elbow, wrist]
        };
        let left_arm = arm(1.0, -self.arm_swing * s);
        let right_arm = arm(-1.0, self.arm_swing * s);
        vec![
            pelvis,
            right_leg[0],
            right_leg[1],
            right_leg[2],
            left_leg[0],
            left_leg[1],
            left_leg[2],
            upper([0.0, 0.0, 22.0 * h]),
            upper([0.0, 0.0, 48.0 * h]),
            upper([3.0 * h, 0.0, 60.0 * h]),
            upper([4.0 * h, 0.0, 72.0 * h]),
            left_arm[0],
            left_arm[1],
            left_arm[2],
            right_arm[0],
            right_arm[1],
            right_arm[2],
        ]
    }
}

/// Pinhole camera at the head, looking along the head's forward axis.
struct Camera {
    centre: [f64; 3],
    /// Rows: image right, image down, forward (world → camera).
    axes: [[f64; 3]; 3],
}

impl Camera {
    fn new(centre: [f64; 3], rotation: [[f64; 3]; 3]) -> Self {
        // Head frame: x forward, y left, z up; columns of `rotation`.
        let col = |j: usize| [rotation[0][j], rotation[1][j], rotation[2][j]];
        let (fwd, left, up) = (col(0), col(1), col(2));
        Self {
            centre,
            axes: [left.map(|v| -v), up.map(|v| -v), fwd],
        }
    }

    fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.centre[0], p[1] - self.centre[1], p[2] - self.centre[2]];
        self.axes.map(|a| a[0] * d[0] + a[1] * d[1] + a[2] * d[2])
    }
}

fn blob(u: f64, v: f64, x: usize, y: usize, sigma: f64) -> f64 {
    let d2 = (x as f64 + 0.5 - u).powi(2) + (y as f64 + 0.5 - v).powi(2);
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn arm_colour(j: usize) -> [f64; 3] {
    let side = if j <= 13 { 1.0 } else { 0.5 };
    let kind = [0.35, 0.7, 1.0][(j - 11) % 3];
    [side, kind, 0.6]
}

fn render_video(cam: &Camera, joints: &[[f64; 3]], out: &mut Vec<f64>) {
    let c = VIDEO_SIZE as f64 / 2.0;
    let marks: Vec<([f64; 2], [f64; 3])> = ARM_JOINTS
        .iter()
        .filter_map(|&j| {
            let p = cam.to_camera(joints[j]);
            (p[2] > 5.0).then(|| ([c + VIDEO_FOCAL * p[0] / p[2], c + VIDEO_FOCAL * p[1] / p[2]], arm_colour(j)))
        })
        .collect();
    for y in 0..VIDEO_SIZE {
        for x in 0..VIDEO_SIZE {
            let mut best = (1e-3, [0.0; 3]);
            for (uv, col) in &marks {
                let w = blob(uv[0], uv[1], x, y, VIDEO_SIGMA);
                if w > best.0 {
                    best = (w, *col);
                }
            }
            if best.0 > 1e-3 {
                out.extend(best.1.map(|v| v * best.0));
            } else {
                out.extend([0.0; 3]);
            }
        }
    }
}

fn render_depth(cam: &Camera, joints: &[[f64; 3]], out: &mut Vec<f64>) {
    let c = DEPTH_SIZE as f64 / 2.0;
    let marks: Vec<([f64; 2], f64)> = (0..joints.len())
        .filter(|&j| j != BODY_HEAD)
        .filter_map(|j| {
            let p = cam.to_camera(joints[j]);
            (p[2] > 5.0).then(|| ([c + DEPTH_FOCAL * p[0] / p[2], c + DEPTH_FOCAL * p[1] / p[2]], p[2] / DEPTH_UNIT_CM))
        })
        .collect();
    for y in 0..DEPTH_SIZE {
        for x in 0..DEPTH_SIZE {
            out.push(marks.iter().map(|(uv, d)| blob(uv[0], uv[1], x, y, DEPTH_SIGMA) * d).sum());
        }
    }
}

struct Frame {
    joints: Vec<[f64; 3]>,
    head: [f64; 7],
    video: Vec<f64>,
    depth: Vec<f64>,
}

fn simulate(seed: u64, length: usize) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let walker = Walker::sample(&mut rng);
    let noise = Normal::new(0.0, MARKER_NOISE_CM).expect("valid sigma");
    let dt = 1.0 / FPS;
    let mut ground = walker.start;
    let mut frames = Vec::with_capacity(length);
    for t in 0..length {
        let time = t as f64 * dt;
        let phase = walker.phase0 + std::f64::consts::TAU * walker.freq * time;
        let heading = walker.heading0 + walker.turn_rate * time;
        let (sh, ch) = heading.sin_cos();
        let joints: Vec<[f64; 3]> = walker
            .body_frame(phase)
            .iter()
            .map(|p| [ground[0] + ch * p[0] - sh * p[1], ground[1] + sh * p[0] + ch * p[1], p[2]])
            .collect();
        let pitch = walker.pitch + 0.03 * (2.0 * phase).sin();
        let q = quat_mul(axis_quat(2, heading), axis_quat(1, pitch));
        let head = joints[BODY_HEAD];
        let cam = Camera::new(head, quat_to_matrix(q));
        let mut jitter = |p: &[f64; 3]| p.map(|v| v + noise.sample(&mut rng));
        let video_joints: Vec<[f64; 3]> = joints.iter().map(&mut jitter).collect();
        let depth_joints: Vec<[f64; 3]> = joints.iter().map(&mut jitter).collect();
        let mut video = Vec::with_capacity(VIDEO_SIZE * VIDEO_SIZE * 3);
        render_video(&cam, &video_joints, &mut video);
        let mut depth = Vec::with_capacity(DEPTH_SIZE * DEPTH_SIZE);
        render_depth(&cam, &depth_joints, &mut depth);
        frames.push(Frame {
            joints,
            head: [q[0], q[1], q[2], q[3], head[0], head[1], head[2]],
            video,
            depth,
        });
        ground[0] += walker.speed * dt * ch;
        ground[1] += walker.speed * dt * sh;
    }
    frames
}

fn window(anchor: usize, n: usize) -> impl Iterator<Item = usize> {
    (0..n).map(move |i| anchor - (n - 1 - i) * FRAME_STRIDE)
}

fn make_sample(frames: &[Frame], seed: u64, anchor: usize) -> MultimodalSample {
    let head = HeadPoseSequence::new(window(anchor, HEAD_FRAMES).map(|t| frames[t].head).collect())
        .expect("generated head poses are valid");
    let video_data = window(anchor, VIDEO_FRAMES).flat_map(|t| frames[t].video.iter().copied()).collect();
    let depth_data = window(anchor, DEPTH_FRAMES).flat_map(|t| frames[t].depth.iter().copied()).collect();
    MultimodalSample {
        id: format!("body-{seed:016x}-{anchor:04}"),
        timestamp: anchor,
        head_pose: head,
        video: Some(VideoClip::new(VIDEO_FRAMES, VIDEO_SIZE, VIDEO_SIZE, video_data).expect("valid clip")),
        depth: Some(DepthSequence::new(DEPTH_FRAMES, DEPTH_SIZE, DEPTH_SIZE, depth_data).expect("valid depth")),
        target: Pose3D::body_cm(frames[anchor].joints.clone()).expect("valid body pose"),
    }
}

/// One sample per frame that has a full history window, i.e. anchors
/// `WINDOW_SPAN..length`.
pub fn gen_body_sequence(seed: u64, length: usize) -> Result<Vec<MultimodalSample>> {
    if length < HEAD_FRAMES * FRAME_STRIDE {
        return Err(Error::Range(format!(
            "sequence length {length} is below the minimum {}",
            HEAD_FRAMES * FRAME_STRIDE
        )));
    }
    let frames = simulate(seed, length);
    Ok((WINDOW_SPAN..length).map(|a| make_sample(&frames, seed, a)).collect())
}

/// `n` samples of a split, four per walking sequence (anchors six frames
/// apart).
pub fn gen_body_dataset(base_seed: u64, split: super::Split, n: usize) -> Vec<MultimodalSample> {
    let per_seq = (DATASET_SEQUENCE_LEN - 1 - WINDOW_SPAN) / DATASET_ANCHOR_STEP + 1;
    let mut out = Vec::with_capacity(n);
    let mut seq = 0u64;
    while out.len() < n {
        let seed = super::sample_seed(base_seed, split.index_offset() + seq);
        let frames = simulate(seed, DATASET_SEQUENCE_LEN);
        for k in 0..per_seq {
            if out.len() == n {
                break;
            }
            out.push(make_sample(&frames, seed, WINDOW_SPAN + k * DATASET_ANCHOR_STEP));
        }
        seq += 1;
    }
    out
}

/// Sequence key of a body sample id (`body-<seed>-<frame>` → `body-<seed>`).
pub fn sequence_key(id: &str) -> &str {
    id.rsplit_once('-').map_or(id, |(k, _)| k)
}

/// Frame interval between consecutive dataset anchors of one sequence.
pub fn dataset_anchor_interval_s() -> f64 {
    DATASET_ANCHOR_STEP as f64 / FPS
}
