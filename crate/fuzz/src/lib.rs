//! Checks shared by the fuzz targets and the corpus replay test. Each one
//! must return normally for every input; errors are fine, panics are not.

use egopose::io;

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

/// Anything that parses must survive a format/parse round trip unchanged.
pub fn poses(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(p) = io::parse_poses(t) {
        let again = io::parse_poses(&io::format_predictions(&p).expect("parsed poses format")).expect("formatted poses parse");
        assert_eq!(p, again);
    }
}

pub fn labels(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(l) = io::parse_labels(t) {
        assert_eq!(io::parse_labels(&io::format_labels(&l)).expect("formatted labels parse"), l);
    }
}

pub fn checkpoint(data: &[u8]) {
    let _ = io::parse_checkpoint(data);
}

pub fn manifest(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(m) = io::from_json::<io::DatasetManifest>(t) {
        assert_eq!(io::from_json::<io::DatasetManifest>(&io::to_json(&m)).expect("manifest reparses"), m);
    }
}

pub fn weights(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(w) = io::from_json::<io::WeightsFile>(t) {
        let _ = w.validate();
    }
}

/// Every section of a run config, decoded over defaults and validated.
pub fn config(data: &[u8]) {
    use egopose::{body::BodyModelConfig, hand::HandModelConfig, proficiency::ProficiencyConfig, training::TrainConfig};
    use egopose_cli::config::{AblationSection, ConfigFile};
    let Some(t) = text(data) else { return };
    let Ok(c) = ConfigFile::parse(t, "fuzz") else { return };
    if let Ok(s) = c.section::<TrainConfig>("train") {
        let _ = s.validate();
    }
    if let Ok(s) = c.section::<HandModelConfig>("hand") {
        let _ = s.validate();
    }
    if let Ok(s) = c.section::<BodyModelConfig>("body") {
        let _ = s.validate();
    }
    if let Ok(s) = c.section::<ProficiencyConfig>("prof") {
        let _ = s.validate();
    }
    let _ = c.section::<AblationSection>("ablation");
}

/// Training history in either of its on-disk forms.
pub fn history(data: &[u8]) {
    let Some(t) = text(data) else { return };
    let _ = egopose_cli::report::parse_history_csv(t, "fuzz");
    let _ = io::from_json::<egopose::training::TrainHistory>(t);
}
