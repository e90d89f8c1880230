//! Deterministic synthetic datasets.
//!
//! Every generator is a pure function of its seed. Per-sample seeds are
//! derived as `base_seed ^ index` mixed through SplitMix64, so samples can be
//! produced in any order or in parallel.

pub mod body;
pub mod hand;
pub mod proficiency;

/// SplitMix64 finalizer; decorrelates nearby seeds.
pub fn mix_seed(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sample `index` in a dataset with `base_seed`.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    mix_seed(base_seed ^ index)
}

/// Seed ranges of the train / validation / test splits.
///
/// Splits draw sample indices from disjoint ranges of width `2^40`, so ids
/// never collide for any dataset size that fits in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn index_offset(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1 << 40,
            Split::Test => 2 << 40,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}
