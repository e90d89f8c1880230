//! Tiny-model gradient checks shared by the unit-level suite and the
//! acceptance run.

#![allow(dead_code)]

use egopose::body::{BodyModel, BodyModelConfig, Modalities};
use egopose::clip::VideoClip;
use egopose::hand::{HandModel, HandModelConfig};
use egopose::image::ImageTensor;
use egopose::proficiency::{ProficiencyConfig, ProficiencyModel};
use egopose::synth::body::gen_body_dataset;
use egopose::synth::hand::{gen_hand_dataset, SynthHandSample};
use egopose::synth::proficiency::{gen_proficiency_dataset, ProficiencySample};
use egopose::synth::Split;
use egopose::training::{grad_check, Trainable};
use egopose_nn::gradcheck::{GradCheckReport, Selection};
use egopose_nn::{ParamStore, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

fn halve(h: usize, w: usize, c: usize, src: &[f64]) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow * c];
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut s = 0.0;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    s += src[((2 * y + dy) * w + 2 * x + dx) * c + ch];
                }
                out[(y * ow + x) * c + ch] = s / 4.0;
            }
        }
    }
    out
}

/// Hand images are mostly blank, which puts every LayerNorm over the
/// background at zero variance where finite differences are meaningless, so
/// the check runs on textured images with the real poses.
fn small_hand(s: SynthHandSample) -> SynthHandSample {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let data = (0..32 * 32 * 3).map(|_| rng.random::<f64>()).collect();
    SynthHandSample {
        image: ImageTensor::new(32, 32, data).unwrap(),
        ..s
    }
}

fn small_clip(s: ProficiencySample) -> ProficiencySample {
    let c = &s.clip;
    let mut data = Vec::new();
    for t in 0..c.frames() {
        data.extend(halve(c.height(), c.width(), 3, c.frame(t)));
    }
    let clip = VideoClip::new(c.frames(), c.height() / 2, c.width() / 2, data).unwrap();
    ProficiencySample { clip, ..s }
}

/// The training loss detaches its score targets, which a finite difference
/// cannot do, so the check pins them at their unperturbed values.
struct PinnedScores {
    model: HandModel,
    targets: [Vec<f64>; 2],
}

impl Trainable for PinnedScores {
    type Sample = SynthHandSample;

    fn params(&self) -> &ParamStore {
        self.model.params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.model.params_mut()
    }

    fn batch_loss(&self, tape: &mut Tape<'_>, batch: &[&SynthHandSample]) -> egopose::Result<Var> {
        let images: Vec<_> = batch.iter().map(|s| &s.image).collect();
        let poses: Vec<_> = batch.iter().map(|s| &s.pose).collect();
        self.model.loss_with_score_targets(tape, &images, &poses, Some(&self.targets))
    }

    fn validation_metric(&self, _: &[SynthHandSample]) -> egopose::Result<f64> {
        unreachable!()
    }

    fn metric_name(&self) -> &'static str {
        "loss"
    }
}

pub fn tiny_hand() -> GradCheckReport {
    let model = HandModel::new(HandModelConfig::tiny()).unwrap();
    let data: Vec<_> = gen_hand_dataset(3, Split::Train, 2).into_iter().map(small_hand).collect();
    let images: Vec<_> = data.iter().map(|s| &s.image).collect();
    let poses: Vec<_> = data.iter().map(|s| &s.pose).collect();
    let targets = model.score_targets(&images, &poses).unwrap();
    let pinned = PinnedScores { model, targets };
    let batch: Vec<_> = data.iter().collect();
    grad_check(&pinned, &batch, EPS, Selection::PerTensor { count: 4, seed: 1 }).unwrap()
}

pub fn tiny_body() -> GradCheckReport {
    let cfg = BodyModelConfig {
        modalities: Modalities::FULL,
        ..BodyModelConfig::tiny()
    };
    let model = BodyModel::new(cfg).unwrap();
    let data = gen_body_dataset(5, Split::Train, 2);
    let batch: Vec<_> = data.iter().collect();
    grad_check(&model, &batch, EPS, Selection::PerTensor { count: 4, seed: 2 }).unwrap()
}

pub fn tiny_proficiency() -> GradCheckReport {
    let model = ProficiencyModel::new(ProficiencyConfig::tiny()).unwrap();
    let data: Vec<_> = gen_proficiency_dataset(7, Split::Train, 4).into_iter().map(small_clip).collect();
    let batch: Vec<_> = data.iter().collect();
    grad_check(&model, &batch, EPS, Selection::All).unwrap()
}
