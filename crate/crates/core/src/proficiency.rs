//! Video proficiency classifier: per-frame patch tokens with spatial and
//! temporal positional embeddings, joint space-time self-attention, mean
//! pooling and an MLP head over the four skill classes.

use egopose_nn::index::{im2col, select_rows, Window3};
use egopose_nn::layers::{EncoderBlock, LayerNorm, Linear, Mlp};
use egopose_nn::{init, ParamId, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clip::VideoClip;
use crate::error::{Error, Result};
use crate::metrics::NUM_CLASSES;
use crate::synth::proficiency::ProficiencySample;
use crate::training::{cross_entropy_loss, Trainable};

pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["Novice", "Early Expert", "Intermediate Expert", "Late Expert"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProficiencyConfig {
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub patch_size: usize,
    /// Frames the model reads; clips with more frames are subsampled evenly
    /// from the end.
    pub frames: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for ProficiencyConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            patch_size: 8,
            frames: 8,
            image_size: 32,
            seed: 0,
        }
    }
}

impl ProficiencyConfig {
    pub fn tiny() -> Self {
        Self {
            embed_dim: 8,
            depth: 1,
            heads: 2,
            frames: 2,
            image_size: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.embed_dim, self.depth, self.heads, self.mlp_ratio, self.patch_size, self.frames, self.image_size];
        if dims.contains(&0) {
            return Err(Error::InvalidInput("proficiency dimensions must be positive".into()));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::InvalidInput("embed_dim must be divisible by heads".into()));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(Error::InvalidInput("image_size must be a multiple of patch_size".into()));
        }
        Ok(())
    }

    fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProficiencyPrediction {
    pub logits: [f64; NUM_CLASSES],
    pub probabilities: [f64; NUM_CLASSES],
    pub label: usize,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

impl ProficiencyPrediction {
    pub fn from_logits(logits: [f64; NUM_CLASSES]) -> Self {
        Self {
            logits,
            probabilities: softmax(&logits),
            label: argmax(&logits),
        }
    }

    /// A prediction carrying only probabilities; logits are their logs.
    pub fn from_probabilities(p: [f64; NUM_CLASSES]) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("probabilities must be finite and nonnegative".into()));
        }
        let s: f64 = p.iter().sum();
        if s <= 0.0 {
            return Err(Error::InvalidInput("probabilities sum to zero".into()));
        }
        let probabilities = p.map(|v| v / s);
        Ok(Self {
            logits: probabilities.map(f64::ln),
            probabilities,
            label: argmax(&probabilities),
        })
    }
}

/// Mean of member probability vectors, renormalized.
pub fn ensemble_logits(members: &[ProficiencyPrediction]) -> Result<ProficiencyPrediction> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut mean = [0.0; NUM_CLASSES];
    for m in members {
        for (a, p) in mean.iter_mut().zip(&m.probabilities) {
            *a += p / members.len() as f64;
        }
    }
    ProficiencyPrediction::from_probabilities(mean)
}

#[derive(Clone, Debug)]
pub struct ProficiencyModel {
    config: ProficiencyConfig,
    params: ParamStore,
    patch_embed: Linear,
    spatial_pos: ParamId,
    temporal_pos: ParamId,
    blocks: Vec<EncoderBlock>,
    norm: LayerNorm,
    head: Mlp,
}

impl ProficiencyModel {
    pub fn new(config: ProficiencyConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = ParamStore::new();
        let c = config.embed_dim;
        let g = config.grid();
        let patch_embed = Linear::new(&mut s, &mut rng, "backbone.patch_embed", config.patch_size * config.patch_size * 3, c);
        let spatial_pos = s.add("backbone.spatial_pos", init::normal(g * g, c, 0.02, &mut rng));
        let temporal_pos = s.add("backbone.temporal_pos", init::normal(config.frames, c, 0.02, &mut rng));
        let blocks = (0..config.depth)
            .map(|i| EncoderBlock::new(&mut s, &mut rng, &format!("backbone.block{i}"), c, config.heads, config.mlp_ratio))
            .collect();
        let norm = LayerNorm::new(&mut s, "backbone.norm", c);
        let head = Mlp::new(&mut s, &mut rng, "head", [c, c, NUM_CLASSES]);
        Ok(Self {
            config,
            params: s,
            patch_embed,
            spatial_pos,
            temporal_pos,
            blocks,
            norm,
            head,
        })
    }

    pub fn config(&self) -> &ProficiencyConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn select_frames(&self, clip: &VideoClip) -> Result<VideoClip> {
        let want = self.config.frames;
        if clip.frames() == want {
            return Ok(clip.clone());
        }
        if clip.frames() < want || clip.frames() % want != 0 {
            return Err(Error::InvalidInput(format!(
                "clip has {} frames, model reads {want}",
                clip.frames()
            )));
        }
        clip.tail(want, clip.frames() / want)
    }

    /// `batch×4` logits.
    pub fn forward_tape(&self, tape: &mut Tape<'_>, clips: &[&VideoClip]) -> Result<Var> {
        let batch = clips.len();
        if batch == 0 {
            return Err(Error::EmptyInput);
        }
        let cfg = &self.config;
        let (t, size, c, g) = (cfg.frames, cfg.image_size, cfg.embed_dim, cfg.grid());
        let mut data = Vec::with_capacity(batch * t * size * size * 3);
        for clip in clips {
            if clip.height() != size || clip.width() != size {
                return Err(Error::InvalidInput(format!(
                    "clip is {}x{}, model reads {size}x{size}",
                    clip.height(),
                    clip.width()
                )));
            }
            data.extend_from_slice(self.select_frames(clip)?.data());
        }
        let x = tape.constant(Tensor::from_vec(batch * t * size * size, 3, data));
        let win = Window3::patches2d(cfg.patch_size);
        let (idx, _) = im2col(batch, [t, size, size], 3, win);
        let tokens_per = t * g * g;
        let patches = tape.gather(x, idx, batch * tokens_per, win.patch_len(3));
        let tokens = self.patch_embed.forward(tape, patches);
        let sp = tape.param(self.spatial_pos);
        let srows: Vec<usize> = (0..batch * t).flat_map(|_| 0..g * g).collect();
        let sp = tape.gather(sp, select_rows(c, &srows), batch * tokens_per, c);
        let tp = tape.param(self.temporal_pos);
        let trows: Vec<usize> = (0..batch).flat_map(|_| (0..t).flat_map(|f| std::iter::repeat_n(f, g * g))).collect();
        let tp = tape.gather(tp, select_rows(c, &trows), batch * tokens_per, c);
        let mut h = tape.add(tokens, sp);
        h = tape.add(h, tp);
        for b in &self.blocks {
            h = b.forward(tape, h, batch);
        }
        let pooled = tape.segment_mean(h, batch);
        let pooled = self.norm.forward(tape, pooled);
        Ok(self.head.forward(tape, pooled))
    }

    pub fn predict_batch(&self, clips: &[&VideoClip]) -> Result<Vec<ProficiencyPrediction>> {
        let mut tape = Tape::new(&self.params);
        let l = self.forward_tape(&mut tape, clips)?;
        let v = tape.value(l);
        Ok((0..clips.len())
            .map(|b| {
                let r = v.row(b);
                ProficiencyPrediction::from_logits([r[0], r[1], r[2], r[3]])
            })
            .collect())
    }

    pub fn proficiency_forward(&self, clip: &VideoClip) -> Result<ProficiencyPrediction> {
        Ok(self.predict_batch(&[clip])?.remove(0))
    }

    pub fn predict_all(&self, samples: &[ProficiencySample]) -> Result<Vec<ProficiencyPrediction>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(64) {
            let clips: Vec<&VideoClip> = chunk.iter().map(|s| &s.clip).collect();
            out.extend(self.predict_batch(&clips)?);
        }
        Ok(out)
    }
}

/// Top-1 accuracy of `model` on `samples`.
pub fn evaluate(model: &ProficiencyModel, samples: &[ProficiencySample]) -> Result<f64> {
    let preds = model.predict_all(samples)?;
    let p: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let g: Vec<usize> = samples.iter().map(|s| s.label).collect();
    crate::metrics::top1_accuracy(&p, &g)
}

impl Trainable for ProficiencyModel {
    type Sample = ProficiencySample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn batch_loss(&self, tape: &mut Tape<'_>, batch: &[&ProficiencySample]) -> Result<Var> {
        let clips: Vec<&VideoClip> = batch.iter().map(|s| &s.clip).collect();
        let logits = self.forward_tape(tape, &clips)?;
        let labels: Vec<i64> = batch.iter().map(|s| s.label as i64).collect();
        cross_entropy_loss(tape, logits, &labels)
    }

    /// Error rate, so that lower is better like the pose metrics.
    fn validation_metric(&self, samples: &[ProficiencySample]) -> Result<f64> {
        Ok(1.0 - evaluate(self, samples)?)
    }

    fn metric_name(&self) -> &'static str {
        "top1_error"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 0.2, 0.2, 0.1]), 1);
    }

    #[test]
    fn opposite_members_split_evenly() {
        let a = ProficiencyPrediction::from_logits([5.0, 0.0, 0.0, 0.0]);
        let b = ProficiencyPrediction::from_logits([0.0, 5.0, 0.0, 0.0]);
        let e = ensemble_logits(&[a, b]).unwrap();
        assert!((e.probabilities[0] - e.probabilities[1]).abs() < 1e-15);
        assert_eq!(e.label, 0);
        assert!((e.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
