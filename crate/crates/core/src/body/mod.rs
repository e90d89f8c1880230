//! Multimodal spatio-temporal body pose network.
//!
//! Three encoders (head-pose temporal transformer, 3-D convolutional video
//! encoder, depth temporal transformer) produce one vector each. Their
//! concatenation goes through a fusion MLP and a fully connected regression
//! head that outputs 17 joints in cm. Disabled or missing modalities are
//! replaced by learned null embeddings.

pub mod ablation;
pub mod sample;

use egopose_nn::index::{im2col, repeat_rows, select_rows, Window3};
use egopose_nn::layers::{EncoderBlock, LayerNorm, Linear, Mlp};
use egopose_nn::{init, ParamId, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clip::{DepthSequence, VideoClip};
use crate::ensemble::{score_weighted_mean, EnsembleWeights};
use crate::error::{Error, Result};
use crate::pose::{JointSet, Pose3D, Unit};
use crate::training::{mpjpe_loss, Trainable};
pub use sample::{HeadPoseSequence, MultimodalSample, HEAD_POSE_DIM};

pub const NUM_BODY_JOINTS: usize = 17;

/// Which inputs a model reads. Head pose is always on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Modalities {
    pub video: bool,
    pub depth: bool,
    /// Multi-frame windows with temporal transformers; otherwise only the
    /// last frame of each stream is used.
    pub temporal: bool,
}

impl Default for Modalities {
    fn default() -> Self {
        Self::FULL
    }
}

impl Modalities {
    pub const HEAD_ONLY: Self = Self {
        video: false,
        depth: false,
        temporal: false,
    };
    pub const FULL: Self = Self {
        video: true,
        depth: true,
        temporal: true,
    };

    /// The four ablation arms: head pose, + video, + depth, + temporal fusion.
    pub fn ladder() -> [(&'static str, Self); 4] {
        [
            ("head_pose", Self::HEAD_ONLY),
            ("video", Self { video: true, ..Self::HEAD_ONLY }),
            (
                "depth",
                Self {
                    video: true,
                    depth: true,
                    temporal: false,
                },
            ),
            ("temporal", Self::FULL),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyModelConfig {
    /// C_t, C_v, C_d.
    pub head_dim: usize,
    pub video_dim: usize,
    pub depth_dim: usize,
    pub fusion_hidden: usize,
    pub fusion_dim: usize,
    pub regressor_hidden: usize,
    pub encoder_depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Window lengths used when temporal fusion is on.
    pub head_frames: usize,
    pub video_frames: usize,
    pub depth_frames: usize,
    /// Channels of the two residual video stages.
    pub video_channels: [usize; 2],
    /// Depth maps are average-pooled to `depth_pool × depth_pool`.
    pub depth_pool: usize,
    /// Add the last head translation to every output joint.
    pub anchor_to_head: bool,
    pub output_scale_cm: f64,
    pub modalities: Modalities,
    pub seed: u64,
}

impl Default for BodyModelConfig {
    fn default() -> Self {
        Self {
            head_dim: 64,
            video_dim: 64,
            depth_dim: 64,
            fusion_hidden: 128,
            fusion_dim: 128,
            regressor_hidden: 128,
            encoder_depth: 1,
            heads: 4,
            mlp_ratio: 2,
            head_frames: 16,
            video_frames: 4,
            depth_frames: 4,
            video_channels: [16, 32],
            depth_pool: 8,
            anchor_to_head: true,
            output_scale_cm: 50.0,
            modalities: Modalities::FULL,
            seed: 0,
        }
    }
}

impl BodyModelConfig {
    pub fn tiny() -> Self {
        Self {
            head_dim: 8,
            video_dim: 8,
            depth_dim: 8,
            fusion_hidden: 12,
            fusion_dim: 8,
            regressor_hidden: 8,
            heads: 2,
            head_frames: 3,
            video_frames: 2,
            depth_frames: 2,
            video_channels: [4, 4],
            depth_pool: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.head_dim,
            self.video_dim,
            self.depth_dim,
            self.fusion_hidden,
            self.fusion_dim,
            self.regressor_hidden,
            self.heads,
            self.mlp_ratio,
            self.head_frames,
            self.video_frames,
            self.depth_frames,
            self.video_channels[0],
            self.video_channels[1],
            self.depth_pool,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidInput("body model dimensions must be positive".into()));
        }
        if self.head_dim % self.heads != 0 || self.depth_dim % self.heads != 0 {
            return Err(Error::InvalidInput("encoder widths must be divisible by heads".into()));
        }
        if !(self.output_scale_cm > 0.0) {
            return Err(Error::InvalidInput("output_scale_cm must be positive".into()));
        }
        Ok(())
    }

    pub fn fused_dim(&self) -> usize {
        self.head_dim + self.video_dim + self.depth_dim
    }

    /// Frames each stream contributes under the configured modalities.
    pub fn frames_used(&self) -> (usize, usize, usize) {
        if self.modalities.temporal {
            (self.head_frames, self.video_frames, self.depth_frames)
        } else {
            (1, 1, 1)
        }
    }
}

#[derive(Clone, Debug)]
struct Conv3d {
    linear: Linear,
    window: Window3,
}

impl Conv3d {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize, window: Window3) -> Self {
        Self {
            linear: Linear::new(store, rng, name, window.patch_len(cin), cout),
            window,
        }
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Var, batch: usize, dims: [usize; 3]) -> (Var, [usize; 3]) {
        let cin = self.linear.in_dim / self.window.kernel.iter().product::<usize>();
        let (idx, out) = im2col(batch, dims, cin, self.window);
        let rows = batch * out.iter().product::<usize>();
        let cols = tape.gather(x, idx, rows, self.linear.in_dim);
        (self.linear.forward(tape, cols), out)
    }
}

#[derive(Clone, Debug)]
struct ResBlock3d {
    norm1: LayerNorm,
    conv1: Conv3d,
    norm2: LayerNorm,
    conv2: Conv3d,
}

impl ResBlock3d {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, c: usize) -> Self {
        let w = Window3::new([3, 3, 3], [1, 1, 1], [1, 1, 1]);
        Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), c),
            conv1: Conv3d::new(store, rng, &format!("{name}.conv1"), c, c, w),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), c),
            conv2: Conv3d::new(store, rng, &format!("{name}.conv2"), c, c, w),
        }
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Var, batch: usize, dims: [usize; 3]) -> Var {
        let h = self.norm1.forward(tape, x);
        let h = tape.gelu(h);
        let (h, _) = self.conv1.forward(tape, h, batch, dims);
        let h = self.norm2.forward(tape, h);
        let h = tape.gelu(h);
        let (h, _) = self.conv2.forward(tape, h, batch, dims);
        tape.add(x, h)
    }
}

#[derive(Clone, Debug)]
struct TemporalEncoder {
    pos: ParamId,
    blocks: Vec<EncoderBlock>,
}

impl TemporalEncoder {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dim: usize, frames: usize, cfg: &BodyModelConfig) -> Self {
        Self {
            pos: store.add(format!("{name}.pos_embed"), init::normal(frames, dim, 0.02, rng)),
            blocks: (0..cfg.encoder_depth)
                .map(|i| EncoderBlock::new(store, rng, &format!("{name}.block{i}"), dim, cfg.heads, cfg.mlp_ratio))
                .collect(),
        }
    }

    /// `tokens` is `(batch·frames)×dim`; returns the `batch×dim` time mean.
    fn forward(&self, tape: &mut Tape<'_>, tokens: Var, batch: usize, frames: usize) -> Var {
        let dim = tape.shape(tokens).1;
        let table = tape.param(self.pos);
        let rows: Vec<usize> = (0..batch).flat_map(|_| 0..frames).collect();
        let pos = tape.gather(table, select_rows(dim, &rows), batch * frames, dim);
        let mut x = tape.add(tokens, pos);
        for b in &self.blocks {
            x = b.forward(tape, x, batch);
        }
        tape.segment_mean(x, batch)
    }
}

#[derive(Clone, Debug)]
struct VideoEncoder {
    stem: Conv3d,
    stem_norm: LayerNorm,
    block1: ResBlock3d,
    down: Conv3d,
    block2: ResBlock3d,
    norm: LayerNorm,
    proj: Linear,
}

/// Pixel channels plus normalized `(x, y)` coordinates.
pub const VIDEO_INPUT_CHANNELS: usize = 5;

#[derive(Clone, Debug)]
pub struct BodyModel {
    config: BodyModelConfig,
    params: ParamStore,
    head_proj: Mlp,
    head_temporal: TemporalEncoder,
    video: VideoEncoder,
    depth_embed: Linear,
    depth_temporal: TemporalEncoder,
    null_video: ParamId,
    null_depth: ParamId,
    fusion: Mlp,
    regressor: Mlp,
}

/// Encoded batch features on the tape, each `batch×dim`.
#[derive(Clone, Copy, Debug)]
pub struct EncodedFeatures {
    pub head: Var,
    pub video: Var,
    pub depth: Var,
}

/// Per-frame head features: quaternion, horizontal offset from the last
/// frame (m/2) and height about 1.6 m (dm).
fn head_features(seq: &HeadPoseSequence) -> Vec<f64> {
    let last = seq.translation(seq.len() - 1);
    seq.frames()
        .iter()
        .flat_map(|f| {
            [
                f[0],
                f[1],
                f[2],
                f[3],
                (f[4] - last[0]) / 50.0,
                (f[5] - last[1]) / 50.0,
                (f[6] - 160.0) / 10.0,
            ]
        })
        .collect()
}

fn pool_depth(seq: &DepthSequence, pool: usize) -> Result<Vec<f64>> {
    let (h, w) = (seq.height(), seq.width());
    if h % pool != 0 || w % pool != 0 {
        return Err(Error::Shape(format!("depth {h}x{w} does not pool to {pool}x{pool}")));
    }
    let (sh, sw) = (h / pool, w / pool);
    let mut out = Vec::with_capacity(seq.frames() * pool * pool);
    for t in 0..seq.frames() {
        let f = seq.frame(t);
        for py in 0..pool {
            for px in 0..pool {
                let mut s = 0.0;
                for y in py * sh..(py + 1) * sh {
                    for x in px * sw..(px + 1) * sw {
                        s += f[y * w + x];
                    }
                }
                out.push(s / (sh * sw) as f64);
            }
        }
    }
    Ok(out)
}

fn video_with_coords(clip: &VideoClip) -> Vec<f64> {
    let (h, w) = (clip.height(), clip.width());
    let mut out = Vec::with_capacity(clip.frames() * h * w * VIDEO_INPUT_CHANNELS);
    for t in 0..clip.frames() {
        let f = clip.frame(t);
        for y in 0..h {
            for x in 0..w {
                let o = (y * w + x) * 3;
                out.extend_from_slice(&f[o..o + 3]);
                out.push((x as f64 + 0.5) / w as f64 - 0.5);
                out.push((y as f64 + 0.5) / h as f64 - 0.5);
            }
        }
    }
    out
}

impl BodyModel {
    pub fn new(config: BodyModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = ParamStore::new();
        let r = &mut rng;
        let cfg = &config;
        let head_proj = Mlp::new(&mut s, r, "head_pose.proj", [HEAD_POSE_DIM, cfg.head_dim, cfg.head_dim]);
        let head_temporal = TemporalEncoder::new(&mut s, r, "head_pose.temporal", cfg.head_dim, cfg.head_frames, cfg);
        let [c1, c2] = cfg.video_channels;
        let video = VideoEncoder {
            stem: Conv3d::new(&mut s, r, "video.stem", VIDEO_INPUT_CHANNELS, c1, Window3::new([3, 4, 4], [1, 4, 4], [1, 0, 0])),
            stem_norm: LayerNorm::new(&mut s, "video.stem.norm", c1),
            block1: ResBlock3d::new(&mut s, r, "video.stage1", c1),
            down: Conv3d::new(&mut s, r, "video.down", c1, c2, Window3::new([1, 2, 2], [1, 2, 2], [0, 0, 0])),
            block2: ResBlock3d::new(&mut s, r, "video.stage2", c2),
            norm: LayerNorm::new(&mut s, "video.norm", c2),
            proj: Linear::new(&mut s, r, "video.proj", c2, cfg.video_dim),
        };
        let depth_embed = Linear::new(&mut s, r, "depth.embed", cfg.depth_pool * cfg.depth_pool, cfg.depth_dim);
        let depth_temporal = TemporalEncoder::new(&mut s, r, "depth.temporal", cfg.depth_dim, cfg.depth_frames, cfg);
        let null_video = s.add("null.video", init::normal(1, cfg.video_dim, 0.02, r));
        let null_depth = s.add("null.depth", init::normal(1, cfg.depth_dim, 0.02, r));
        let fusion = Mlp::new(&mut s, r, "fusion", [cfg.fused_dim(), cfg.fusion_hidden, cfg.fusion_dim]);
        let regressor = Mlp::new(&mut s, r, "regressor", [cfg.fusion_dim, cfg.regressor_hidden, NUM_BODY_JOINTS * 3]);
        Ok(Self {
            config,
            params: s,
            head_proj,
            head_temporal,
            video,
            depth_embed,
            depth_temporal,
            null_video,
            null_depth,
            fusion,
            regressor,
        })
    }

    pub fn config(&self) -> &BodyModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encode_head_pose(&self, tape: &mut Tape<'_>, seqs: &[&HeadPoseSequence]) -> Result<Var> {
        let batch = seqs.len();
        if batch == 0 {
            return Err(Error::EmptyInput);
        }
        let (frames, _, _) = self.config.frames_used();
        let mut data = Vec::with_capacity(batch * frames * HEAD_POSE_DIM);
        for s in seqs {
            data.extend(head_features(&s.tail(frames, 1)?));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("head pose features are not finite".into()));
        }
        let x = tape.constant(Tensor::from_vec(batch * frames, HEAD_POSE_DIM, data));
        let tokens = self.head_proj.forward(tape, x);
        if !self.config.modalities.temporal {
            return Ok(tokens);
        }
        Ok(self.head_temporal.forward(tape, tokens, batch, frames))
    }

    pub fn encode_video(&self, tape: &mut Tape<'_>, clips: &[&VideoClip]) -> Result<Var> {
        let batch = clips.len();
        let first = clips.first().ok_or(Error::EmptyInput)?;
        let (_, frames, _) = self.config.frames_used();
        let (h, w) = (first.height(), first.width());
        if h % 8 != 0 || w % 8 != 0 {
            return Err(Error::Shape(format!("video frames {h}x{w} are not a multiple of 8")));
        }
        let mut data = Vec::with_capacity(batch * frames * h * w * VIDEO_INPUT_CHANNELS);
        for c in clips {
            if (c.height(), c.width()) != (h, w) {
                return Err(Error::Shape("video batch mixes frame sizes".into()));
            }
            let t = if c.frames() == frames { (*c).clone() } else { c.tail(frames, 1)? };
            data.extend(video_with_coords(&t));
        }
        let v = &self.video;
        let x = tape.constant(Tensor::from_vec(batch * frames * h * w, VIDEO_INPUT_CHANNELS, data));
        let (x, dims) = v.stem.forward(tape, x, batch, [frames, h, w]);
        let x = v.stem_norm.forward(tape, x);
        let x = v.block1.forward(tape, x, batch, dims);
        let (x, dims) = v.down.forward(tape, x, batch, dims);
        let x = v.block2.forward(tape, x, batch, dims);
        let x = tape.segment_mean(x, batch);
        let x = v.norm.forward(tape, x);
        Ok(v.proj.forward(tape, x))
    }

    pub fn encode_depth(&self, tape: &mut Tape<'_>, seqs: &[&DepthSequence]) -> Result<Var> {
        let batch = seqs.len();
        if batch == 0 {
            return Err(Error::EmptyInput);
        }
        let (_, _, frames) = self.config.frames_used();
        let p = self.config.depth_pool;
        let mut data = Vec::with_capacity(batch * frames * p * p);
        for s in seqs {
            data.extend(pool_depth(&s.tail(frames, 1)?, p)?);
        }
        let x = tape.constant(Tensor::from_vec(batch * frames, p * p, data));
        let tokens = self.depth_embed.forward(tape, x);
        Ok(self.depth_temporal.forward(tape, tokens, batch, frames))
    }

    /// Encoded rows for present samples, null rows elsewhere.
    fn with_nulls(&self, tape: &mut Tape<'_>, encoded: Option<Var>, present: &[bool], null: ParamId) -> Var {
        let nv = tape.param(null);
        let dim = tape.shape(nv).1;
        let batch = present.len();
        let Some(enc) = encoded else {
            return tape.gather(nv, repeat_rows(1, dim, batch), batch, dim);
        };
        if present.iter().all(|p| *p) {
            return enc;
        }
        let n_present = tape.shape(enc).0;
        let both = tape.concat_rows(&[enc, nv]);
        let mut next = 0;
        let rows: Vec<usize> = present
            .iter()
            .map(|&p| {
                if p {
                    next += 1;
                    next - 1
                } else {
                    n_present
                }
            })
            .collect();
        tape.gather(both, select_rows(dim, &rows), batch, dim)
    }

    /// Encodes a batch; disabled or absent modalities become null rows.
    pub fn encode(&self, tape: &mut Tape<'_>, samples: &[&MultimodalSample]) -> Result<EncodedFeatures> {
        let heads: Vec<&HeadPoseSequence> = samples.iter().map(|s| &s.head_pose).collect();
        let head = self.encode_head_pose(tape, &heads)?;
        let m = self.config.modalities;
        let has_video: Vec<bool> = samples.iter().map(|s| m.video && s.video.is_some()).collect();
        let clips: Vec<&VideoClip> = samples.iter().filter_map(|s| s.video.as_ref().filter(|_| m.video)).collect();
        let venc = if clips.is_empty() { None } else { Some(self.encode_video(tape, &clips)?) };
        let video = self.with_nulls(tape, venc, &has_video, self.null_video);
        let has_depth: Vec<bool> = samples.iter().map(|s| m.depth && s.depth.is_some()).collect();
        let maps: Vec<&DepthSequence> = samples.iter().filter_map(|s| s.depth.as_ref().filter(|_| m.depth)).collect();
        let denc = if maps.is_empty() { None } else { Some(self.encode_depth(tape, &maps)?) };
        let depth = self.with_nulls(tape, denc, &has_depth, self.null_depth);
        Ok(EncodedFeatures { head, video, depth })
    }

    /// Concatenation, fusion MLP and regression head; `anchors` are added to
    /// every joint of the matching sample when given. Returns `(batch·17)×3`.
    pub fn fuse_and_regress(&self, tape: &mut Tape<'_>, f: EncodedFeatures, anchors: Option<&[[f64; 3]]>) -> Result<Var> {
        let c = &self.config;
        let b = tape.shape(f.head).0;
        let expect = [(f.head, c.head_dim), (f.video, c.video_dim), (f.depth, c.depth_dim)];
        for (v, d) in expect {
            if tape.shape(v) != (b, d) {
                return Err(Error::Shape(format!("feature {:?} does not match {b}x{d}", tape.shape(v))));
            }
        }
        let x = tape.concat_cols(&[f.head, f.video, f.depth]);
        let x = self.fusion.forward(tape, x);
        let x = tape.gelu(x);
        let raw = self.regressor.forward(tape, x);
        let raw = tape.reshape(raw, b * NUM_BODY_JOINTS, 3);
        let scaled = tape.scale(raw, c.output_scale_cm);
        match anchors {
            Some(a) => {
                if a.len() != b {
                    return Err(Error::LengthMismatch(b, a.len()));
                }
                let rows: Vec<f64> = a.iter().flat_map(|t| (0..NUM_BODY_JOINTS).flat_map(move |_| t.iter().copied())).collect();
                let anchor = tape.constant(Tensor::from_vec(b * NUM_BODY_JOINTS, 3, rows));
                Ok(tape.add(scaled, anchor))
            }
            None => Ok(scaled),
        }
    }

    pub fn forward_tape(&self, tape: &mut Tape<'_>, samples: &[&MultimodalSample]) -> Result<Var> {
        let f = self.encode(tape, samples)?;
        let anchors: Vec<[f64; 3]> = samples.iter().map(|s| s.head_pose.translation(s.head_pose.len() - 1)).collect();
        self.fuse_and_regress(tape, f, self.config.anchor_to_head.then_some(&anchors[..]))
    }

    pub fn predict_batch(&self, samples: &[&MultimodalSample]) -> Result<Vec<Pose3D>> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward_tape(&mut tape, samples)?;
        let v = tape.value(out);
        (0..samples.len())
            .map(|b| {
                let flat = &v.data()[b * NUM_BODY_JOINTS * 3..(b + 1) * NUM_BODY_JOINTS * 3];
                Pose3D::from_flat(flat, Unit::Cm, JointSet::Body17)
            })
            .collect()
    }

    pub fn body_forward(&self, sample: &MultimodalSample) -> Result<Pose3D> {
        Ok(self.predict_batch(&[sample])?.remove(0))
    }

    pub fn predict_all(&self, samples: &[MultimodalSample]) -> Result<Vec<Pose3D>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(64) {
            let refs: Vec<&MultimodalSample> = chunk.iter().collect();
            out.extend(self.predict_batch(&refs)?);
        }
        Ok(out)
    }
}

fn target_batch(samples: &[&MultimodalSample]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(samples.len() * NUM_BODY_JOINTS * 3);
    for s in samples {
        s.validate()?;
        data.extend(s.target.to_unit(Unit::Cm).flat());
    }
    Ok(Tensor::from_vec(samples.len() * NUM_BODY_JOINTS, 3, data))
}

/// Mean MPJPE (cm) over `samples`.
pub fn evaluate(model: &BodyModel, samples: &[MultimodalSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let preds = model.predict_all(samples)?;
    let mut sum = 0.0;
    for (p, s) in preds.iter().zip(samples) {
        sum += crate::metrics::mpjpe(p, &s.target.to_unit(Unit::Cm))?;
    }
    Ok(sum / samples.len() as f64)
}

impl Trainable for BodyModel {
    type Sample = MultimodalSample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn batch_loss(&self, tape: &mut Tape<'_>, batch: &[&MultimodalSample]) -> Result<Var> {
        let pred = self.forward_tape(tape, batch)?;
        let gt = target_batch(batch)?;
        let gt = tape.constant(gt);
        mpjpe_loss(tape, pred, gt)
    }

    fn validation_metric(&self, samples: &[MultimodalSample]) -> Result<f64> {
        evaluate(self, samples)
    }

    fn metric_name(&self) -> &'static str {
        "mpjpe_cm"
    }
}

/// Uniform average of member predictions.
pub fn ensemble_body(predictions: &[Pose3D]) -> Result<Pose3D> {
    if predictions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let members: Vec<(&Pose3D, f64)> = predictions.iter().map(|p| (p, 1.0)).collect();
    let w = EnsembleWeights::uniform(predictions.len())?;
    score_weighted_mean(&members, w.weights())
}
