//! Run configuration: built-in defaults, overridden by an optional TOML
//! file, overridden by command-line flags.
//!
//! The file may hold the tables `[train]`, `[hand]`, `[body]`, `[prof]` and
//! `[ablation]`, each with the field names of the matching configuration.

use std::path::{Path, PathBuf};

use egopose::body::BodyModelConfig;
use egopose::hand::HandModelConfig;
use egopose::io::Task;
use egopose::proficiency::ProficiencyConfig;
use egopose::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

const SECTIONS: [&str; 5] = ["train", "hand", "body", "prof", "ablation"];

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses config text; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::usage(format!("{origin}: {e}")))?;
        if let Some(k) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(CliError::usage(format!(
                "{origin}: unknown section [{k}] (expected one of {})",
                SECTIONS.join(", ")
            )));
        }
        Ok(Self { table })
    }

    /// The section deserialized over its defaults.
    pub fn section<T: DeserializeOwned + Default>(&self, name: &str) -> Result<T, CliError> {
        match self.table.get(name) {
            None => Ok(T::default()),
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| CliError::usage(format!("config [{name}]: {e}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub seeds: Vec<u64>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self { seeds: vec![0, 1, 2] }
    }
}

/// Model configuration for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelConfig {
    Hand(HandModelConfig),
    Body(BodyModelConfig),
    Prof(ProficiencyConfig),
}

impl ModelConfig {
    pub fn from_file(file: &ConfigFile, task: Task) -> Result<Self, CliError> {
        Ok(match task {
            Task::Hand => ModelConfig::Hand(file.section("hand")?),
            Task::Body => ModelConfig::Body(file.section("body")?),
            Task::Prof => ModelConfig::Prof(file.section("prof")?),
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ModelConfig::Hand(c) => c.seed = seed,
            ModelConfig::Body(c) => c.seed = seed,
            ModelConfig::Prof(c) => c.seed = seed,
        }
    }
}

/// Everything a command ran with, written to the output directory before
/// any work starts.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<toml::Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationSection>,
}

impl ResolvedConfig {
    pub fn new(command: &str, out: &Path) -> Self {
        Self {
            command: command.to_string(),
            task: None,
            data: None,
            out: out.to_path_buf(),
            params: None,
            train: None,
            model: None,
            ablation: None,
        }
    }

    pub fn write(&self) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::usage(format!("serializing config: {e}")))?;
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::usage(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults_field_by_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[train]\nepochs = 3\n[hand]\nembed_dim = 32\n").unwrap();
        let f = ConfigFile::load(Some(&path)).unwrap();
        let t: TrainConfig = f.section("train").unwrap();
        assert_eq!((t.epochs, t.batch_size), (3, TrainConfig::default().batch_size));
        let ModelConfig::Hand(h) = ModelConfig::from_file(&f, Task::Hand).unwrap() else { panic!() };
        assert_eq!((h.embed_dim, h.vit_depth), (32, HandModelConfig::default().vit_depth));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[train]\nepoch = 3\n").unwrap();
        let f = ConfigFile::load(Some(&path)).unwrap();
        assert_eq!(f.section::<TrainConfig>("train").unwrap_err().code, 2);
        std::fs::write(&path, "[trian]\n").unwrap();
        assert_eq!(ConfigFile::load(Some(&path)).unwrap_err().code, 2);
    }

    #[test]
    fn resolved_config_serializes_every_model() {
        for m in [
            ModelConfig::Hand(HandModelConfig::default()),
            ModelConfig::Body(BodyModelConfig::default()),
            ModelConfig::Prof(ProficiencyConfig::default()),
        ] {
            let r = ResolvedConfig {
                train: Some(TrainConfig::default()),
                model: Some(m),
                ..ResolvedConfig::new("train", Path::new("out"))
            };
            toml::to_string(&r).unwrap();
        }
    }
}
