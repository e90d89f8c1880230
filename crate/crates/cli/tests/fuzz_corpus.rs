//! Replays the checked-in fuzz corpus, plus every truncation and a sweep of
//! byte flips of each seed, through the fuzz checks.

use std::path::PathBuf;

#[path = "../../../fuzz/src/lib.rs"]
mod checks;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|p| (p.clone(), std::fs::read(&p).unwrap())).collect()
}

fn replay(target: &str, check: fn(&[u8])) {
    for (path, bytes) in corpus(target) {
        check(&bytes);
        let step = (bytes.len() / 200).max(1);
        for cut in (0..bytes.len()).step_by(step) {
            check(&bytes[..cut]);
        }
        for (i, flip) in (0..bytes.len()).step_by(step).zip([0x01u8, 0x20, 0x80, 0xff].iter().cycle()) {
            let mut m = bytes.clone();
            m[i] ^= flip;
            check(&m);
        }
        eprintln!("replayed {}", path.display());
    }
}

#[test]
fn poses() {
    replay("poses", checks::poses);
}

#[test]
fn labels() {
    replay("labels", checks::labels);
}

#[test]
fn checkpoint() {
    replay("checkpoint", checks::checkpoint);
}

#[test]
fn manifest() {
    replay("manifest", checks::manifest);
}

#[test]
fn weights() {
    replay("weights", checks::weights);
}

#[test]
fn config() {
    replay("config", checks::config);
}

#[test]
fn history() {
    replay("history", checks::history);
}
