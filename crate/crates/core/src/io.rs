//! File formats: pose and label JSONL, dataset manifests, ensemble weights
//! and safetensors checkpoints.
//!
//! Pose records are one JSON object per line,
//! `{"id": str, "joints": [[x, y, z], ...], "joint_set": "HAND21"|"BODY17", "unit": "mm"|"cm"|"m"}`,
//! with an optional `"score"`. Floats are written with 17 significant digits
//! so a write/read cycle reproduces every value bit for bit.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use egopose_nn::{ParamStore, Tensor};
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ensemble::{KeyedPredictions, ScoredPose};
use crate::error::{Error, Result};
use crate::metrics::NUM_CLASSES;
use crate::pose::{JointSet, Pose3D, Unit};
use crate::synth::Split;

/// Appends `x` with 17 significant digits.
pub fn write_float(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("writing to a String");
}

fn write_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings serialize"));
}

/// One pose record as a single JSON line, without the newline.
pub fn pose_record_line(id: &str, pose: &Pose3D, score: Option<f64>) -> Result<String> {
    let set = pose
        .joint_set()
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("joint set {} cannot be written", pose.joint_set())))?;
    let mut out = String::from("{\"id\":");
    write_str(&mut out, id);
    out.push_str(",\"joints\":[");
    for (k, j) in pose.joints().iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push('[');
        for (a, v) in j.iter().enumerate() {
            if a > 0 {
                out.push(',');
            }
            write_float(&mut out, *v);
        }
        out.push(']');
    }
    out.push_str("],\"joint_set\":");
    write_str(&mut out, set);
    out.push_str(",\"unit\":");
    write_str(&mut out, pose.unit().as_str());
    if let Some(s) = score {
        out.push_str(",\"score\":");
        write_float(&mut out, s);
    }
    out.push('}');
    Ok(out)
}

/// Serializes keyed predictions in id order. Scores of exactly 1.0 are
/// omitted, matching what [`parse_poses`] assumes for records without one.
pub fn format_predictions(preds: &KeyedPredictions) -> Result<String> {
    let mut out = String::new();
    for (id, p) in preds {
        let score = (p.score != 1.0).then_some(p.score);
        out.push_str(&pose_record_line(id, &p.pose, score)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn format_annotations(poses: &BTreeMap<String, Pose3D>) -> Result<String> {
    let mut out = String::new();
    for (id, p) in poses {
        out.push_str(&pose_record_line(id, p, None)?);
        out.push('\n');
    }
    Ok(out)
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        message: message.into(),
    }
}

/// Splits `text` into numbered non-blank lines parsed as JSON objects.
fn json_lines(text: &str) -> impl Iterator<Item = Result<(usize, Map<String, Value>)>> + '_ {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            match serde_json::from_str::<Value>(l) {
                Ok(Value::Object(m)) => Ok((line, m)),
                Ok(_) => Err(schema(line, "record is not a JSON object")),
                Err(e) => Err(Error::Parse {
                    line,
                    message: e.to_string(),
                }),
            }
        })
}

fn take_id(line: usize, m: &mut Map<String, Value>) -> Result<String> {
    match m.remove("id") {
        Some(Value::String(s)) if !s.is_empty() => Ok(s),
        Some(_) => Err(schema(line, "\"id\" must be a nonempty string")),
        None => Err(schema(line, "missing \"id\"")),
    }
}

fn take_str(line: usize, m: &mut Map<String, Value>, key: &str) -> Result<String> {
    match m.remove(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(schema(line, format!("\"{key}\" must be a string"))),
        None => Err(schema(line, format!("missing \"{key}\""))),
    }
}

fn as_f64(line: usize, v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| schema(line, format!("{what} must be a number")))
}

fn reject_extra(line: usize, m: &Map<String, Value>) -> Result<()> {
    match m.keys().next() {
        Some(k) => Err(schema(line, format!("unknown field \"{k}\""))),
        None => Ok(()),
    }
}

fn parse_pose_record(line: usize, mut m: Map<String, Value>) -> Result<(String, ScoredPose)> {
    let id = take_id(line, &mut m)?;
    let set_name = take_str(line, &mut m, "joint_set")?;
    let joint_set =
        JointSet::from_file_name(&set_name).ok_or_else(|| schema(line, format!("unknown joint_set \"{set_name}\"")))?;
    let unit_name = take_str(line, &mut m, "unit")?;
    let unit: Unit = unit_name
        .parse()
        .map_err(|_| schema(line, format!("unknown unit \"{unit_name}\"")))?;
    let joints = match m.remove("joints") {
        Some(Value::Array(rows)) => rows,
        Some(_) => return Err(schema(line, "\"joints\" must be an array")),
        None => return Err(schema(line, "missing \"joints\"")),
    };
    if joints.len() != joint_set.num_joints() {
        return Err(schema(
            line,
            format!("{set_name} needs {} joints, got {}", joint_set.num_joints(), joints.len()),
        ));
    }
    let mut coords = Vec::with_capacity(joints.len());
    for row in &joints {
        match row.as_array() {
            Some(xyz) if xyz.len() == 3 => coords.push([
                as_f64(line, &xyz[0], "joint coordinate")?,
                as_f64(line, &xyz[1], "joint coordinate")?,
                as_f64(line, &xyz[2], "joint coordinate")?,
            ]),
            _ => return Err(schema(line, "each joint must be a 3-element array")),
        }
    }
    let score = match m.remove("score") {
        Some(v) => {
            let s = as_f64(line, &v, "\"score\"")?;
            if s < 0.0 {
                return Err(schema(line, "\"score\" must be nonnegative"));
            }
            s
        }
        None => 1.0,
    };
    reject_extra(line, &m)?;
    let pose = Pose3D::new(coords, unit, joint_set).map_err(|e| schema(line, e.to_string()))?;
    Ok((id, ScoredPose { pose, score }))
}

/// Parses pose JSONL. Blank lines are skipped; line numbers are 1-based.
pub fn parse_poses(text: &str) -> Result<KeyedPredictions> {
    let mut out = KeyedPredictions::new();
    for rec in json_lines(text) {
        let (line, m) = rec?;
        let (id, p) = parse_pose_record(line, m)?;
        if out.insert(id.clone(), p).is_some() {
            return Err(schema(line, format!("duplicate id \"{id}\"")));
        }
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: &Path) -> Result<KeyedPredictions> {
    parse_poses(&read_text(path)?)
}

/// Ground-truth poses; any scores in the file are ignored.
pub fn load_annotations(path: &Path) -> Result<BTreeMap<String, Pose3D>> {
    Ok(load_predictions(path)?
        .into_iter()
        .map(|(k, v)| (k, v.pose))
        .collect())
}

pub fn write_predictions(path: &Path, preds: &KeyedPredictions) -> Result<()> {
    write_text(path, &format_predictions(preds)?)
}

pub fn write_annotations(path: &Path, poses: &BTreeMap<String, Pose3D>) -> Result<()> {
    write_text(path, &format_annotations(poses)?)
}

/// A proficiency label, or a prediction when `probabilities` is present.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelRecord {
    pub label: usize,
    pub probabilities: Option<[f64; NUM_CLASSES]>,
}

pub fn label_record_line(id: &str, rec: &LabelRecord) -> String {
    let mut out = String::from("{\"id\":");
    write_str(&mut out, id);
    write!(out, ",\"label\":{}", rec.label).expect("writing to a String");
    if let Some(p) = &rec.probabilities {
        out.push_str(",\"probabilities\":[");
        for (i, v) in p.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_float(&mut out, *v);
        }
        out.push(']');
    }
    out.push('}');
    out
}

pub fn format_labels(labels: &BTreeMap<String, LabelRecord>) -> String {
    labels
        .iter()
        .map(|(id, r)| label_record_line(id, r) + "\n")
        .collect()
}

pub fn parse_labels(text: &str) -> Result<BTreeMap<String, LabelRecord>> {
    let mut out = BTreeMap::new();
    for rec in json_lines(text) {
        let (line, mut m) = rec?;
        let id = take_id(line, &mut m)?;
        let label = match m.remove("label").as_ref().and_then(Value::as_u64) {
            Some(l) if (l as usize) < NUM_CLASSES => l as usize,
            Some(l) => return Err(schema(line, format!("label {l} out of range"))),
            None => return Err(schema(line, "\"label\" must be an integer class index")),
        };
        let probabilities = match m.remove("probabilities") {
            None => None,
            Some(Value::Array(v)) if v.len() == NUM_CLASSES => {
                let mut p = [0.0; NUM_CLASSES];
                for (dst, src) in p.iter_mut().zip(&v) {
                    *dst = as_f64(line, src, "probability")?;
                    if *dst < 0.0 {
                        return Err(schema(line, "probabilities must be nonnegative"));
                    }
                }
                Some(p)
            }
            Some(_) => return Err(schema(line, format!("\"probabilities\" must have {NUM_CLASSES} entries"))),
        };
        reject_extra(line, &m)?;
        if out.insert(id.clone(), LabelRecord { label, probabilities }).is_some() {
            return Err(schema(line, format!("duplicate id \"{id}\"")));
        }
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<String, LabelRecord>> {
    parse_labels(&read_text(path)?)
}

pub fn write_labels(path: &Path, labels: &BTreeMap<String, LabelRecord>) -> Result<()> {
    write_text(path, &format_labels(labels))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Hand,
    Body,
    Prof,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Hand => "hand",
            Task::Body => "body",
            Task::Prof => "prof",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hand" => Ok(Task::Hand),
            "body" => Ok(Task::Body),
            "prof" => Ok(Task::Prof),
            _ => Err(Error::InvalidInput(format!("unknown task \"{s}\" (expected hand, body or prof)"))),
        }
    }
}

/// One generated split. Sample `i` of the split is drawn from seed
/// `sample_seed(base_seed, index_start + i)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: Split,
    pub count: usize,
    pub index_start: u64,
    pub index_end: u64,
    /// Annotation file, relative to the manifest.
    pub annotations: String,
}

/// `manifest.json` of a synthetic dataset directory. Inputs are not stored;
/// they are regenerated from the seeds and checked against the annotations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub task: Task,
    pub base_seed: u64,
    pub splits: Vec<SplitEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> Option<&SplitEntry> {
        self.splits.iter().find(|s| s.split == split)
    }
}

fn json_error(e: serde_json::Error) -> Error {
    if e.is_data() {
        schema(e.line(), e.to_string())
    } else {
        Error::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(json_error)
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    from_json(&read_text(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

/// Ensemble weights as saved by a weight search: one member label and one
/// weight per prediction file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub members: Vec<String>,
    pub weights: Vec<f64>,
}

impl WeightsFile {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() != self.weights.len() {
            return Err(Error::LengthMismatch(self.members.len(), self.weights.len()));
        }
        crate::ensemble::EnsembleWeights::new(self.weights.clone()).map(|_| ())
    }
}

/// Metadata key holding the model kind and configuration of a checkpoint.
pub const CHECKPOINT_CONFIG_KEY: &str = "config";

/// Parsed checkpoint: `model` names the architecture, `config` is its JSON
/// configuration, and tensors are keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: String,
    pub config: Value,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    model: String,
    config: Value,
}

/// Serializes every parameter as an `F64` tensor of shape `[rows, cols]`
/// named after its parameter.
pub fn checkpoint_bytes<C: Serialize>(model: &str, config: &C, params: &ParamStore) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        model: model.to_string(),
        config: serde_json::to_value(config).map_err(|e| Error::Checkpoint(e.to_string()))?,
    };
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = params
        .iter()
        .map(|(_, name, t)| {
            let raw = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            (name.to_string(), vec![t.rows(), t.cols()], raw)
        })
        .collect();
    let views = bytes
        .iter()
        .map(|(name, shape, raw)| {
            TensorView::new(Dtype::F64, shape.clone(), raw)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = HashMap::from([(
        CHECKPOINT_CONFIG_KEY.to_string(),
        serde_json::to_string(&header).expect("header serializes"),
    )]);
    safetensors::serialize(views, &Some(meta)).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: String| Error::Checkpoint(m);
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| bad(e.to_string()))?;
    let header = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(CHECKPOINT_CONFIG_KEY))
        .ok_or_else(|| bad(format!("missing \"{CHECKPOINT_CONFIG_KEY}\" metadata")))?;
    let header: CheckpointHeader = serde_json::from_str(header).map_err(|e| bad(e.to_string()))?;
    let st = SafeTensors::deserialize(bytes).map_err(|e| bad(e.to_string()))?;
    let mut tensors = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F64 {
            return Err(bad(format!("{name}: expected F64, got {:?}", view.dtype())));
        }
        let (rows, cols) = match *view.shape() {
            [r, c] => (r, c),
            _ => return Err(bad(format!("{name}: expected a 2-D shape, got {:?}", view.shape()))),
        };
        let data: Vec<f64> = view
            .data()
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        if data.len() != rows * cols {
            return Err(bad(format!("{name}: data length does not match shape")));
        }
        tensors.insert(name, Tensor::from_vec(rows, cols, data));
    }
    Ok(Checkpoint {
        model: header.model,
        config: header.config,
        tensors,
    })
}

impl Checkpoint {
    pub fn config_as<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// Copies every tensor into `params`, which must hold exactly the same
    /// names and shapes.
    pub fn restore(&self, params: &mut ParamStore) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let name = params.name(id).to_string();
            let src = self
                .tensors
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            let dst = params.get_mut(id);
            if (src.rows(), src.cols()) != (dst.rows(), dst.cols()) {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {}x{} does not match {}x{}",
                    src.rows(),
                    src.cols(),
                    dst.rows(),
                    dst.cols()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

pub fn save_checkpoint<C: Serialize>(path: &Path, model: &str, config: &C, params: &ParamStore) -> Result<()> {
    let bytes = checkpoint_bytes(model, config, params)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
