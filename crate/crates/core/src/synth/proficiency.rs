//! Synthetic skill clips: a single bright blob moving in a straight line,
//! bouncing off the frame edges. The class sets the speed distribution.
//! Each frame shows the light trail the blob leaves over its exposure (one
//! stride of source frames), so tempo is visible in a single frame as trail
//! length as well as in the frame-to-frame displacement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::clip::VideoClip;
use crate::error::{Error, Result};
use crate::metrics::NUM_CLASSES;

pub const CLIP_FRAMES: usize = 8;
pub const CLIP_STRIDE: usize = 3;
pub const CLIP_SIZE: usize = 32;
/// Mean blob speed per class in px per source frame.
pub const CLASS_SPEED_MEAN: [f64; NUM_CLASSES] = [0.6, 1.1, 1.6, 2.1];
pub const CLASS_SPEED_STD: f64 = 0.08;
const BLOB_SIGMA: f64 = 1.5;
/// Centres stay this far from the border so trails are never clipped.
const MARGIN: f64 = 4.0;
const TRAIL_SAMPLES: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct ProficiencySample {
    pub id: String,
    pub clip: VideoClip,
    pub label: usize,
    /// The generating statistic (speed, px per source frame).
    pub speed: f64,
}

/// Folds `p` into `[0, size]` as if bouncing off both ends.
fn reflect(p: f64, size: f64) -> f64 {
    let period = 2.0 * size;
    let m = p.rem_euclid(period);
    if m <= size {
        m
    } else {
        period - m
    }
}

pub fn gen_proficiency_sample(seed: u64, class_id: i64) -> Result<ProficiencySample> {
    if !(0..NUM_CLASSES as i64).contains(&class_id) {
        return Err(Error::Label(class_id));
    }
    let class = class_id as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speed = Normal::new(CLASS_SPEED_MEAN[class], CLASS_SPEED_STD)
        .expect("valid sigma")
        .sample(&mut rng)
        .max(0.05);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let span = CLIP_SIZE as f64 - 2.0 * MARGIN;
    let start = [rng.random_range(0.0..span), rng.random_range(0.0..span)];
    let centre = |t: f64| {
        [
            MARGIN + reflect(start[0] + speed * t * angle.cos(), span),
            MARGIN + reflect(start[1] + speed * t * angle.sin(), span),
        ]
    };
    let exposure = CLIP_STRIDE as f64;
    let mut data = Vec::with_capacity(CLIP_FRAMES * CLIP_SIZE * CLIP_SIZE * 3);
    for f in 0..CLIP_FRAMES {
        let t = (f * CLIP_STRIDE) as f64;
        let trail: Vec<[f64; 2]> = (0..TRAIL_SAMPLES)
            .map(|k| centre(t - exposure * (1.0 - k as f64 / (TRAIL_SAMPLES - 1) as f64)))
            .collect();
        for y in 0..CLIP_SIZE {
            for x in 0..CLIP_SIZE {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let d2 = trail
                    .iter()
                    .map(|c| (px - c[0]).powi(2) + (py - c[1]).powi(2))
                    .fold(f64::INFINITY, f64::min);
                let w = (-d2 / (2.0 * BLOB_SIGMA * BLOB_SIGMA)).exp();
                data.extend([w; 3]);
            }
        }
    }
    Ok(ProficiencySample {
        id: format!("take-{seed:016x}"),
        clip: VideoClip::new(CLIP_FRAMES, CLIP_SIZE, CLIP_SIZE, data)?,
        label: class,
        speed,
    })
}

/// Balanced split: sample `i` has class `i mod 4`.
pub fn gen_proficiency_dataset(base_seed: u64, split: super::Split, n: usize) -> Vec<ProficiencySample> {
    (0..n as u64)
        .map(|i| {
            let seed = super::sample_seed(base_seed, split.index_offset() + i);
            gen_proficiency_sample(seed, (i % NUM_CLASSES as u64) as i64).expect("class in range")
        })
        .collect()
}

/// Thresholds halfway between consecutive class means.
pub fn bayes_classify(speed: f64) -> usize {
    CLASS_SPEED_MEAN
        .windows(2)
        .filter(|w| speed > 0.5 * (w[0] + w[1]))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_checked() {
        assert_eq!(gen_proficiency_sample(4, 2).unwrap(), gen_proficiency_sample(4, 2).unwrap());
        assert!(matches!(gen_proficiency_sample(4, 4), Err(Error::Label(4))));
        assert!(matches!(gen_proficiency_sample(4, -1), Err(Error::Label(-1))));
    }

    #[test]
    fn class_means_separated() {
        for w in CLASS_SPEED_MEAN.windows(2) {
            assert!(w[1] - w[0] >= 4.0 * CLASS_SPEED_STD);
        }
    }

    #[test]
    fn threshold_on_speed_is_near_perfect() {
        let data = gen_proficiency_dataset(8, crate::synth::Split::Test, 10_000);
        let hits = data.iter().filter(|s| bayes_classify(s.speed) == s.label).count();
        assert!(hits as f64 / data.len() as f64 >= 0.99, "{hits}");
    }

    #[test]
    fn trail_grows_with_class() {
        let mass = |class| -> f64 {
            (0..20).map(|seed| gen_proficiency_sample(seed, class).unwrap().clip.frame(3).iter().sum::<f64>()).sum()
        };
        let m: Vec<f64> = (0..4).map(mass).collect();
        assert!(m.windows(2).all(|w| w[0] < w[1]), "{m:?}");
    }

    #[test]
    fn reflect_stays_inside() {
        for p in [-70.0, -1.0, 0.0, 5.0, 33.0, 64.0, 100.5] {
            let r = reflect(p, 32.0);
            assert!((0.0..=32.0).contains(&r));
        }
    }
}
