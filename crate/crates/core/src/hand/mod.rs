//! Dual-pathway hand pose network.
//!
//! A ViT-style pathway and a ConvNeXt-style pathway each map an image to a
//! 1/16-resolution feature map. Each map is decoded by its own transformer
//! decoder (21 learned joint queries cross-attending to the features) into
//! joint coordinates in millimetres and a sigmoid confidence score. The two
//! results are fused with score weights.

use egopose_nn::index::{im2col, repeat_rows, select_rows, Window3};
use egopose_nn::layers::{DecoderBlock, EncoderBlock, LayerNorm, Linear, Mlp};
use egopose_nn::{init, ParamId, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::pose::{JointSet, Pose3D, Unit};
use crate::synth::hand::SynthHandSample;
use crate::training::Trainable;

pub const PATCH_SIZE: usize = 16;
pub const NUM_JOINTS: usize = 21;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandModelConfig {
    pub embed_dim: usize,
    pub vit_depth: usize,
    pub vit_heads: usize,
    pub mlp_ratio: usize,
    pub conv_stage_widths: [usize; 4],
    pub conv_stage_depths: [usize; 4],
    pub conv_kernel: usize,
    pub decoder_depth: usize,
    pub decoder_heads: usize,
    pub num_joints: usize,
    pub patch_size: usize,
    /// Largest feature grid side the positional tables cover.
    pub max_grid: usize,
    /// Keypoints are `coord_offset_mm + coord_scale_mm · raw`.
    pub coord_offset_mm: [f64; 3],
    pub coord_scale_mm: f64,
    /// Hidden width of the per-joint coordinate head.
    pub head_hidden: usize,
    /// Multiplier on the initial coordinate-head output weights.
    pub head_init_gain: f64,
    /// Score targets are `exp(−mpjpe / score_tau_mm)`.
    pub score_tau_mm: f64,
    pub score_loss_weight: f64,
    pub seed: u64,
}

impl Default for HandModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            vit_depth: 4,
            vit_heads: 4,
            mlp_ratio: 4,
            conv_stage_widths: [32, 64, 96, 128],
            conv_stage_depths: [1, 1, 1, 1],
            conv_kernel: 7,
            decoder_depth: 2,
            decoder_heads: 4,
            num_joints: NUM_JOINTS,
            patch_size: PATCH_SIZE,
            max_grid: 8,
            coord_offset_mm: [0.0, 0.0, 400.0],
            coord_scale_mm: 100.0,
            head_hidden: 64,
            head_init_gain: 1.0,
            score_tau_mm: 20.0,
            score_loss_weight: 1.0,
            seed: 0,
        }
    }
}

impl HandModelConfig {
    /// Smallest configuration that still exercises every mechanism.
    pub fn tiny() -> Self {
        Self {
            embed_dim: 16,
            vit_depth: 1,
            vit_heads: 2,
            mlp_ratio: 2,
            conv_stage_widths: [4, 8, 8, 12],
            conv_stage_depths: [1, 1, 1, 1],
            conv_kernel: 3,
            decoder_depth: 1,
            decoder_heads: 2,
            max_grid: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.num_joints != NUM_JOINTS {
            return bad(format!("num_joints must be {NUM_JOINTS}, got {}", self.num_joints));
        }
        if self.patch_size != PATCH_SIZE {
            return bad(format!("patch_size must be {PATCH_SIZE}, got {}", self.patch_size));
        }
        let positive = [
            self.embed_dim,
            self.vit_heads,
            self.mlp_ratio,
            self.decoder_heads,
            self.max_grid,
            self.head_hidden,
        ];
        if positive.contains(&0) || self.conv_stage_widths.contains(&0) {
            return bad("dimensions must be positive".into());
        }
        if self.embed_dim % self.vit_heads != 0 || self.embed_dim % self.decoder_heads != 0 {
            return bad(format!("embed_dim {} not divisible by the head counts", self.embed_dim));
        }
        if self.conv_kernel % 2 == 0 {
            return bad("conv_kernel must be odd".into());
        }
        if !(self.coord_scale_mm > 0.0 && self.score_tau_mm > 0.0 && self.score_loss_weight >= 0.0) {
            return bad("coord_scale_mm and score_tau_mm must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pathway {
    Vit,
    Convnext,
    Fused,
}

impl Pathway {
    pub fn as_str(self) -> &'static str {
        match self {
            Pathway::Vit => "vit",
            Pathway::Convnext => "convnext",
            Pathway::Fused => "fused",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HandPrediction {
    pub keypoints: Pose3D,
    pub score: f64,
    pub pathway: Pathway,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HandOutput {
    pub vit: HandPrediction,
    pub convnext: HandPrediction,
    pub fused: HandPrediction,
}

/// A batch of spatial features stored as `(batch·height·width) × channels`.
#[derive(Clone, Copy, Debug)]
pub struct FeatureMap {
    pub var: Var,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FeatureMap {
    pub fn tokens_per_sample(&self) -> usize {
        self.height * self.width
    }
}

/// Per-pathway decoder outputs on the tape: `(batch·21)×3` keypoints in mm
/// and `batch×1` scores.
#[derive(Clone, Copy, Debug)]
pub struct DecodedVars {
    pub keypoints: Var,
    pub scores: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub vit: DecodedVars,
    pub convnext: DecodedVars,
}

#[derive(Clone, Debug)]
struct ConvBlock {
    dw_weight: ParamId,
    dw_bias: ParamId,
    norm: LayerNorm,
    mlp: Mlp,
}

#[derive(Clone, Debug)]
struct ConvStage {
    /// Downsampling (or, in the last stage, channel-only) transition.
    norm: Option<LayerNorm>,
    proj: Linear,
    stride: usize,
    blocks: Vec<ConvBlock>,
}

#[derive(Clone, Debug)]
struct KeypointDecoder {
    queries: ParamId,
    memory_pos: ParamId,
    blocks: Vec<DecoderBlock>,
    norm: LayerNorm,
    joint_head: Mlp,
    score_head: Mlp,
}

#[derive(Clone, Debug)]
pub struct HandModel {
    config: HandModelConfig,
    params: ParamStore,
    patch_proj: Linear,
    vit_pos: ParamId,
    vit_blocks: Vec<EncoderBlock>,
    stem_norm: LayerNorm,
    stages: Vec<ConvStage>,
    conv_norm: LayerNorm,
    conv_proj: Linear,
    decoders: [KeypointDecoder; 2],
}

fn image_batch(images: &[&ImageTensor]) -> Result<(Tensor, usize, usize)> {
    let first = images.first().ok_or(Error::EmptyInput)?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * h * w * 3);
    for im in images {
        if (im.height(), im.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "batch mixes {h}x{w} and {}x{} images",
                im.height(),
                im.width()
            )));
        }
        data.extend_from_slice(im.data());
    }
    Ok((Tensor::from_vec(images.len() * h * w, 3, data), h, w))
}

/// Row indices of a `height × width` grid inside a `max_grid²` table, once per
/// sample.
fn grid_rows(batch: usize, height: usize, width: usize, max_grid: usize) -> Vec<usize> {
    let per: Vec<usize> = (0..height)
        .flat_map(|r| (0..width).map(move |c| r * max_grid + c))
        .collect();
    (0..batch).flat_map(|_| per.iter().copied()).collect()
}

impl HandModel {
    pub fn new(config: HandModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let c = config.embed_dim;
        let patch_len = PATCH_SIZE * PATCH_SIZE * 3;
        let grid_cells = config.max_grid * config.max_grid;

        let patch_proj = Linear::new(&mut store, &mut rng, "vit.patch_embed", patch_len, c);
        let vit_pos = store.add("vit.pos_embed", init::normal(grid_cells, c, 0.02, &mut rng));
        let vit_blocks = (0..config.vit_depth)
            .map(|i| EncoderBlock::new(&mut store, &mut rng, &format!("vit.block{i}"), c, config.vit_heads, config.mlp_ratio))
            .collect();

        let widths = config.conv_stage_widths;
        let mut stages = Vec::with_capacity(4);
        let stem_norm = LayerNorm::new(&mut store, "convnext.stem.norm", widths[0]);
        for s in 0..4 {
            let name = format!("convnext.stage{s}");
            let (norm, proj, stride) = match s {
                0 => (None, Linear::new(&mut store, &mut rng, "convnext.stem.proj", 4 * 4 * 3, widths[0]), 4),
                3 => (
                    Some(LayerNorm::new(&mut store, &format!("{name}.down.norm"), widths[2])),
                    Linear::new(&mut store, &mut rng, &format!("{name}.down.proj"), widths[2], widths[3]),
                    1,
                ),
                _ => (
                    Some(LayerNorm::new(&mut store, &format!("{name}.down.norm"), widths[s - 1])),
                    Linear::new(&mut store, &mut rng, &format!("{name}.down.proj"), 4 * widths[s - 1], widths[s]),
                    2,
                ),
            };
            let k2 = config.conv_kernel * config.conv_kernel;
            let blocks = (0..config.conv_stage_depths[s])
                .map(|b| {
                    let bn = format!("{name}.block{b}");
                    let w = widths[s];
                    ConvBlock {
                        dw_weight: store.add(format!("{bn}.dwconv.weight"), init::normal(k2, w, (1.0 / k2 as f64).sqrt(), &mut rng)),
                        dw_bias: store.add(format!("{bn}.dwconv.bias"), Tensor::zeros(1, w)),
                        norm: LayerNorm::new(&mut store, &format!("{bn}.norm"), w),
                        mlp: Mlp::new(&mut store, &mut rng, &format!("{bn}.mlp"), [w, config.mlp_ratio * w, w]),
                    }
                })
                .collect();
            stages.push(ConvStage { norm, proj, stride, blocks });
        }
        let conv_norm = LayerNorm::new(&mut store, "convnext.head.norm", widths[3]);
        let conv_proj = Linear::new(&mut store, &mut rng, "convnext.head.proj", widths[3], c);

        let decoders = [Pathway::Vit, Pathway::Convnext].map(|p| {
            let name = format!("{}.decoder", p.as_str());
            let joint_head = Mlp::new(&mut store, &mut rng, &format!("{name}.joint_head"), [c, config.head_hidden, 3]);
            let w = store.get_mut(joint_head.fc2.weight);
            w.data_mut().iter_mut().for_each(|v| *v *= config.head_init_gain);
            KeypointDecoder {
                queries: store.add(format!("{name}.queries"), init::normal(NUM_JOINTS, c, 1.0, &mut rng)),
                memory_pos: store.add(format!("{name}.memory_pos"), init::normal(grid_cells, c, 0.02, &mut rng)),
                blocks: (0..config.decoder_depth)
                    .map(|i| DecoderBlock::new(&mut store, &mut rng, &format!("{name}.block{i}"), c, config.decoder_heads, config.mlp_ratio))
                    .collect(),
                norm: LayerNorm::new(&mut store, &format!("{name}.norm"), c),
                joint_head,
                score_head: Mlp::new(&mut store, &mut rng, &format!("{name}.score_head"), [c, c.div_ceil(2), 1]),
            }
        });

        Ok(Self {
            config,
            params: store,
            patch_proj,
            vit_pos,
            vit_blocks,
            stem_norm,
            stages,
            conv_norm,
            conv_proj,
            decoders,
        })
    }

    pub fn config(&self) -> &HandModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_grid(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h % PATCH_SIZE != 0 || w % PATCH_SIZE != 0 {
            return Err(Error::Shape(format!("image {h}x{w} is not a multiple of {PATCH_SIZE}")));
        }
        let (gh, gw) = (h / PATCH_SIZE, w / PATCH_SIZE);
        if gh > self.config.max_grid || gw > self.config.max_grid {
            return Err(Error::Shape(format!(
                "feature grid {gh}x{gw} exceeds max_grid {}",
                self.config.max_grid
            )));
        }
        Ok((gh, gw))
    }

    fn pos_rows(&self, tape: &mut Tape<'_>, table: ParamId, batch: usize, h: usize, w: usize) -> Var {
        let c = self.config.embed_dim;
        let rows = grid_rows(batch, h, w, self.config.max_grid);
        let t = tape.param(table);
        tape.gather(t, select_rows(c, &rows), rows.len(), c)
    }

    /// Row-major 16×16 patch tokens plus positional embeddings.
    pub fn patch_embed(&self, tape: &mut Tape<'_>, images: &[&ImageTensor]) -> Result<FeatureMap> {
        let (pixels, h, w) = image_batch(images)?;
        let (gh, gw) = self.check_grid(h, w)?;
        let batch = images.len();
        let x = tape.constant(pixels);
        let win = Window3::patches2d(PATCH_SIZE);
        let (idx, _) = im2col(batch, [1, h, w], 3, win);
        let patches = tape.gather(x, idx, batch * gh * gw, win.patch_len(3));
        let tokens = self.patch_proj.forward(tape, patches);
        let pos = self.pos_rows(tape, self.vit_pos, batch, gh, gw);
        Ok(FeatureMap {
            var: tape.add(tokens, pos),
            batch,
            height: gh,
            width: gw,
            channels: self.config.embed_dim,
        })
    }

    pub fn vit_forward(&self, tape: &mut Tape<'_>, images: &[&ImageTensor]) -> Result<FeatureMap> {
        let mut fm = self.patch_embed(tape, images)?;
        for block in &self.vit_blocks {
            fm.var = block.forward(tape, fm.var, fm.batch);
        }
        Ok(fm)
    }

    /// Outputs of the four ConvNeXt stages, at 1/4, 1/8, 1/16 and 1/16.
    pub fn convnext_stages(&self, tape: &mut Tape<'_>, images: &[&ImageTensor]) -> Result<Vec<FeatureMap>> {
        let (pixels, h, w) = image_batch(images)?;
        self.check_grid(h, w)?;
        let batch = images.len();
        let mut x = tape.constant(pixels);
        let (mut hh, mut ww, mut ch) = (h, w, 3);
        let mut out = Vec::with_capacity(4);
        for stage in &self.stages {
            if let Some(norm) = &stage.norm {
                x = norm.forward(tape, x);
            }
            if stage.stride > 1 {
                let win = Window3::patches2d(stage.stride);
                let (idx, dims) = im2col(batch, [1, hh, ww], ch, win);
                (hh, ww) = (dims[1], dims[2]);
                x = tape.gather(x, idx, batch * hh * ww, win.patch_len(ch));
            }
            x = stage.proj.forward(tape, x);
            ch = stage.proj.out_dim;
            if stage.norm.is_none() {
                x = self.stem_norm.forward(tape, x);
            }
            for block in &stage.blocks {
                let wv = tape.param(block.dw_weight);
                let bv = tape.param(block.dw_bias);
                let y = tape.depthwise_conv2d(x, wv, bv, batch, hh, ww, self.config.conv_kernel);
                let y = block.norm.forward(tape, y);
                let y = block.mlp.forward(tape, y);
                x = tape.add(x, y);
            }
            out.push(FeatureMap {
                var: x,
                batch,
                height: hh,
                width: ww,
                channels: ch,
            });
        }
        Ok(out)
    }

    /// Final-stage features normalized and projected to `embed_dim`.
    pub fn convnext_forward(&self, tape: &mut Tape<'_>, images: &[&ImageTensor]) -> Result<FeatureMap> {
        let last = *self.convnext_stages(tape, images)?.last().expect("four stages");
        let x = self.conv_norm.forward(tape, last.var);
        Ok(FeatureMap {
            var: self.conv_proj.forward(tape, x),
            channels: self.config.embed_dim,
            ..last
        })
    }

    pub fn decode_keypoints(&self, tape: &mut Tape<'_>, pathway: Pathway, features: FeatureMap) -> Result<DecodedVars> {
        let dec = match pathway {
            Pathway::Vit => &self.decoders[0],
            Pathway::Convnext => &self.decoders[1],
            Pathway::Fused => return Err(Error::InvalidInput("the fused pathway has no decoder".into())),
        };
        if !tape.value(features.var).is_finite() {
            return Err(Error::InvalidFeatures("feature map contains non-finite values".into()));
        }
        let c = self.config.embed_dim;
        if features.channels != c || tape.shape(features.var) != (features.batch * features.tokens_per_sample(), c) {
            return Err(Error::Shape(format!("decoder expects {c}-channel features")));
        }
        if features.height > self.config.max_grid || features.width > self.config.max_grid {
            return Err(Error::Shape("feature grid exceeds max_grid".into()));
        }
        let batch = features.batch;
        let pos = self.pos_rows(tape, dec.memory_pos, batch, features.height, features.width);
        let memory = tape.add(features.var, pos);
        let q = tape.param(dec.queries);
        let mut x = tape.gather(q, repeat_rows(NUM_JOINTS, c, batch), batch * NUM_JOINTS, c);
        for block in &dec.blocks {
            x = block.forward(tape, x, memory, batch);
        }
        let x = dec.norm.forward(tape, x);
        let raw = dec.joint_head.forward(tape, x);
        let scaled = tape.scale(raw, self.config.coord_scale_mm);
        let offset = tape.constant(Tensor::row_vector(self.config.coord_offset_mm.to_vec()));
        let keypoints = tape.add_row(scaled, offset);
        let pooled = tape.segment_mean(x, batch);
        let logit = dec.score_head.forward(tape, pooled);
        Ok(DecodedVars {
            keypoints,
            scores: tape.sigmoid(logit),
        })
    }

    pub fn forward_tape(&self, tape: &mut Tape<'_>, images: &[&ImageTensor]) -> Result<ForwardVars> {
        let vf = self.vit_forward(tape, images)?;
        let vit = self.decode_keypoints(tape, Pathway::Vit, vf)?;
        let cf = self.convnext_forward(tape, images)?;
        let convnext = self.decode_keypoints(tape, Pathway::Convnext, cf)?;
        Ok(ForwardVars { vit, convnext })
    }

    /// Training loss: MPJPE of both pathways plus the weighted squared error
    /// of each score against `exp(−mpjpe / τ)` of its own (detached)
    /// prediction.
    pub fn loss(&self, tape: &mut Tape<'_>, images: &[&ImageTensor], targets: &[&Pose3D]) -> Result<Var> {
        self.loss_with_score_targets(tape, images, targets, None)
    }

    /// [`HandModel::loss`] with the score targets of the ViT and ConvNeXt
    /// pathways supplied instead of derived from the current predictions.
    pub fn loss_with_score_targets(
        &self,
        tape: &mut Tape<'_>,
        images: &[&ImageTensor],
        targets: &[&Pose3D],
        score_targets: Option<&[Vec<f64>; 2]>,
    ) -> Result<Var> {
        if images.len() != targets.len() {
            return Err(Error::LengthMismatch(images.len(), targets.len()));
        }
        if let Some(st) = score_targets {
            if let Some(v) = st.iter().find(|v| v.len() != targets.len()) {
                return Err(Error::LengthMismatch(v.len(), targets.len()));
            }
        }
        let out = self.forward_tape(tape, images)?;
        let gt = pose_batch(targets)?;
        let gt = tape.constant(gt);
        let mut total: Option<Var> = None;
        for (k, d) in [out.vit, out.convnext].into_iter().enumerate() {
            let diff = tape.sub(d.keypoints, gt);
            let target = match score_targets {
                Some(st) => st[k].clone(),
                None => per_sample_mpjpe(tape.value(diff), targets.len())
                    .iter()
                    .map(|e| (-e / self.config.score_tau_mm).exp())
                    .collect(),
            };
            let mpjpe = tape.row_norm_mean(diff);
            let target = tape.constant(Tensor::from_vec(targets.len(), 1, target));
            let e = tape.sub(d.scores, target);
            let sq = tape.mul(e, e);
            let score_loss = tape.mean(sq);
            let score_loss = tape.scale(score_loss, self.config.score_loss_weight);
            let term = tape.add(mpjpe, score_loss);
            total = Some(match total {
                Some(t) => tape.add(t, term),
                None => term,
            });
        }
        Ok(total.expect("two pathways"))
    }

    /// Score targets `exp(−mpjpe / τ)` of the current ViT and ConvNeXt
    /// predictions.
    pub fn score_targets(&self, images: &[&ImageTensor], targets: &[&Pose3D]) -> Result<[Vec<f64>; 2]> {
        let out = self.predict_batch(images)?;
        let tau = self.config.score_tau_mm;
        let mut st = [Vec::new(), Vec::new()];
        for (o, t) in out.iter().zip(targets) {
            st[0].push((-crate::metrics::mpjpe(&o.vit.keypoints, t)? / tau).exp());
            st[1].push((-crate::metrics::mpjpe(&o.convnext.keypoints, t)? / tau).exp());
        }
        Ok(st)
    }

    pub fn predict_batch(&self, images: &[&ImageTensor]) -> Result<Vec<HandOutput>> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward_tape(&mut tape, images)?;
        let vit = read_predictions(&tape, out.vit, Pathway::Vit, images.len())?;
        let conv = read_predictions(&tape, out.convnext, Pathway::Convnext, images.len())?;
        vit.into_iter()
            .zip(conv)
            .map(|(v, c)| {
                let fused = fuse_pathways(&v, &c)?;
                Ok(HandOutput { vit: v, convnext: c, fused })
            })
            .collect()
    }

    pub fn predict(&self, image: &ImageTensor) -> Result<HandOutput> {
        Ok(self.predict_batch(&[image])?.remove(0))
    }
}

/// Stacks poses (converted to mm) as `(batch·21)×3`.
pub fn pose_batch(poses: &[&Pose3D]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(poses.len() * NUM_JOINTS * 3);
    for p in poses {
        if p.joint_set() != JointSet::Hand21 {
            return Err(Error::UnitMismatch(format!("expected HAND21 targets, got {}", p.joint_set())));
        }
        data.extend(p.to_unit(Unit::Mm).flat());
    }
    Ok(Tensor::from_vec(poses.len() * NUM_JOINTS, 3, data))
}

fn per_sample_mpjpe(diff: &Tensor, batch: usize) -> Vec<f64> {
    let k = diff.rows() / batch;
    (0..batch)
        .map(|b| {
            (b * k..(b + 1) * k)
                .map(|r| diff.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum::<f64>()
                / k as f64
        })
        .collect()
}

fn read_predictions(tape: &Tape<'_>, d: DecodedVars, pathway: Pathway, batch: usize) -> Result<Vec<HandPrediction>> {
    let kp = tape.value(d.keypoints);
    let sc = tape.value(d.scores);
    (0..batch)
        .map(|b| {
            let flat = kp.data()[b * NUM_JOINTS * 3..(b + 1) * NUM_JOINTS * 3].to_vec();
            Ok(HandPrediction {
                keypoints: Pose3D::from_flat(&flat, Unit::Mm, JointSet::Hand21)?,
                score: sc.data()[b],
                pathway,
            })
        })
        .collect()
}

/// `(s_v·Y_v + s_c·Y_c) / (s_v + s_c)` with score `max(s_v, s_c)`.
pub fn fuse_pathways(vit: &HandPrediction, convnext: &HandPrediction) -> Result<HandPrediction> {
    let members = [
        (&vit.keypoints, vit.score),
        (&convnext.keypoints, convnext.score),
    ];
    let keypoints = crate::ensemble::score_weighted_mean(&members, &[1.0, 1.0])?;
    Ok(HandPrediction {
        keypoints,
        score: vit.score.max(convnext.score),
        pathway: Pathway::Fused,
    })
}

/// Mean fused MPJPE (mm) of `model` over `samples`, in batches of 32.
pub fn evaluate_fused(model: &HandModel, samples: &[SynthHandSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for chunk in samples.chunks(32) {
        let images: Vec<&ImageTensor> = chunk.iter().map(|s| &s.image).collect();
        for (out, s) in model.predict_batch(&images)?.iter().zip(chunk) {
            sum += crate::metrics::mpjpe(&out.fused.keypoints, &s.pose)?;
        }
    }
    Ok(sum / samples.len() as f64)
}

impl Trainable for HandModel {
    type Sample = SynthHandSample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn batch_loss(&self, tape: &mut Tape<'_>, batch: &[&SynthHandSample]) -> Result<Var> {
        let images: Vec<&ImageTensor> = batch.iter().map(|s| &s.image).collect();
        let poses: Vec<&Pose3D> = batch.iter().map(|s| &s.pose).collect();
        self.loss(tape, &images, &poses)
    }

    fn validation_metric(&self, samples: &[SynthHandSample]) -> Result<f64> {
        evaluate_fused(self, samples)
    }

    fn metric_name(&self) -> &'static str {
        "fused_mpjpe_mm"
    }

}
