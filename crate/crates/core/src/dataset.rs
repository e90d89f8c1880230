//! Synthetic dataset directories: `manifest.json` plus one annotation JSONL
//! per split. Inputs are regenerated from the recorded seeds on load, and
//! the regenerated targets must match the annotation file exactly.

use std::collections::BTreeMap;
use std::path::Path;

use crate::body::sample::MultimodalSample;
use crate::error::{Error, Result};
use crate::io::{self, DatasetManifest, LabelRecord, SplitEntry, Task};
use crate::pose::Pose3D;
use crate::synth::body::{gen_body_dataset, DATASET_ANCHOR_STEP, DATASET_SEQUENCE_LEN, WINDOW_SPAN};
use crate::synth::hand::{gen_hand_dataset, SynthHandSample};
use crate::synth::proficiency::{gen_proficiency_dataset, ProficiencySample};
use crate::synth::Split;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub enum Samples {
    Hand(Vec<SynthHandSample>),
    Body(Vec<MultimodalSample>),
    Prof(Vec<ProficiencySample>),
}

impl Samples {
    pub fn generate(task: Task, base_seed: u64, split: Split, n: usize) -> Self {
        match task {
            Task::Hand => Samples::Hand(gen_hand_dataset(base_seed, split, n)),
            Task::Body => Samples::Body(gen_body_dataset(base_seed, split, n)),
            Task::Prof => Samples::Prof(gen_proficiency_dataset(base_seed, split, n)),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Samples::Hand(_) => Task::Hand,
            Samples::Body(_) => Task::Body,
            Samples::Prof(_) => Task::Prof,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::Hand(v) => v.len(),
            Samples::Body(v) => v.len(),
            Samples::Prof(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pose targets keyed by id; `None` for proficiency data.
    pub fn poses(&self) -> Option<BTreeMap<String, Pose3D>> {
        match self {
            Samples::Hand(v) => Some(v.iter().map(|s| (s.id.clone(), s.pose.clone())).collect()),
            Samples::Body(v) => Some(v.iter().map(|s| (s.id.clone(), s.target.clone())).collect()),
            Samples::Prof(_) => None,
        }
    }

    pub fn labels(&self) -> Option<BTreeMap<String, LabelRecord>> {
        match self {
            Samples::Prof(v) => Some(
                v.iter()
                    .map(|s| (s.id.clone(), LabelRecord { label: s.label, probabilities: None }))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// The annotation file contents for these samples.
    pub fn annotation_text(&self) -> Result<String> {
        match (self.poses(), self.labels()) {
            (Some(p), _) => io::format_annotations(&p),
            (None, Some(l)) => Ok(io::format_labels(&l)),
            (None, None) => unreachable!("every task has poses or labels"),
        }
    }
}

fn index_range(task: Task, split: Split, n: usize) -> (u64, u64) {
    let units = match task {
        Task::Body => {
            let per_seq = (DATASET_SEQUENCE_LEN - 1 - WINDOW_SPAN) / DATASET_ANCHOR_STEP + 1;
            n.div_ceil(per_seq)
        }
        Task::Hand | Task::Prof => n,
    };
    let start = split.index_offset();
    (start, start + units as u64)
}

/// Generates the splits with nonzero counts and writes them under `dir`.
pub fn write_dataset(dir: &Path, task: Task, base_seed: u64, counts: &[(Split, usize)]) -> Result<DatasetManifest> {
    let mut splits = Vec::new();
    for &(split, n) in counts.iter().filter(|(_, n)| *n > 0) {
        let samples = Samples::generate(task, base_seed, split, n);
        let file = format!("{}.jsonl", split.as_str());
        io::write_text(&dir.join(&file), &samples.annotation_text()?)?;
        let (index_start, index_end) = index_range(task, split, n);
        splits.push(SplitEntry {
            split,
            count: n,
            index_start,
            index_end,
            annotations: file,
        });
    }
    if splits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let manifest = DatasetManifest {
        task,
        base_seed,
        splits,
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    io::load_json(&dir.join(MANIFEST_FILE))
}

/// Regenerates one split and checks it against its annotation file.
pub fn load_split(dir: &Path, split: Split) -> Result<Samples> {
    let manifest = read_manifest(dir)?;
    let entry = manifest
        .split(split)
        .ok_or_else(|| Error::InvalidInput(format!("{} has no {} split", dir.display(), split.as_str())))?;
    let samples = Samples::generate(manifest.task, manifest.base_seed, split, entry.count);
    let path = dir.join(&entry.annotations);
    let matches = match (samples.poses(), samples.labels()) {
        (Some(p), _) => io::load_annotations(&path)? == p,
        (None, Some(l)) => io::load_labels(&path)? == l,
        (None, None) => unreachable!("every task has poses or labels"),
    };
    if !matches {
        return Err(Error::InvalidInput(format!(
            "{} does not match the samples regenerated from the manifest",
            path.display()
        )));
    }
    Ok(samples)
}
