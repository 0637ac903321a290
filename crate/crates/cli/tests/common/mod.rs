//! Shared fixtures for the binary tests: a deterministic utterance pool,
//! process helpers, directory snapshots, and a small network configuration.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use tce_core::audio::{write_wav, Waveform, PIPELINE_SAMPLE_RATE};
use tce_core::net::{GlobalVariant, ModelConfig};
use tce_core::seeding::derive_rng_keyed;

pub fn tce() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tce"))
}

/// Run the binary, assert success, return stdout.
pub fn run_ok(args: &[&str]) -> String {
    let out = tce().args(args).output().expect("spawn tce");
    assert!(
        out.status.success(),
        "tce {args:?} failed (status {:?})\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Run the binary and return the raw output (for exit-code checks).
pub fn run_raw(args: &[&str]) -> Output {
    tce().args(args).output().expect("spawn tce")
}

/// Deterministic utterance pool: `speakers` voices x `clips` clips of
/// `clip_s` seconds of bounded noise, plus a manifest JSON. Returns the
/// manifest path.
pub fn make_pool(dir: &Path, speakers: usize, clips: usize, clip_s: f64) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let n = (clip_s * PIPELINE_SAMPLE_RATE as f64).round() as usize;
    let mut speaker_map = serde_json::Map::new();
    for s in 0..speakers {
        let id = format!("pool{s:02}");
        let mut list = Vec::new();
        for c in 0..clips {
            let name = format!("{id}_{c}.wav");
            let mut rng = derive_rng_keyed(7, "test.pool.audio", &format!("{id}/{c}"));
            let samples: Vec<f32> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
            let w = Waveform::new(samples, PIPELINE_SAMPLE_RATE).unwrap();
            write_wav(&w, &dir.join(&name)).unwrap();
            list.push(serde_json::json!({ "path": name, "duration_s": clip_s }));
        }
        speaker_map.insert(id, list.into());
    }
    let manifest = serde_json::json!({ "language": "zz", "speakers": speaker_map });
    let path = dir.join("pool.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

/// Every file under `root`: relative path -> bytes.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, files: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, files);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut files = BTreeMap::new();
    walk(root, root, &mut files);
    files
}

/// Assert two snapshots hold the same files with the same bytes.
pub fn assert_snapshots_equal(label: &str, a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) {
    let ka: Vec<&String> = a.keys().collect();
    let kb: Vec<&String> = b.keys().collect();
    assert_eq!(ka, kb, "{label}: file sets differ between runs");
    for (k, va) in a {
        assert_eq!(va, &b[k], "{label}: file {k} differs between runs");
    }
}

/// A small configuration that keeps forward passes fast in tests. The
/// embedding dimension stays at the pipeline's 256 so embedding files from
/// dataset builds remain loadable.
pub fn tiny_model_config(variant: GlobalVariant) -> ModelConfig {
    ModelConfig {
        d: 4,
        b: 2,
        w: 16,
        s: 16,
        h: 3,
        l: 1,
        e: 5,
        global_variant: variant,
        ..ModelConfig::default()
    }
}
