//! Pools of clean per-speaker utterances and the speaker-embedding store.
//!
//! An [`UtterancePool`] is the source of replacement and synthetic speech:
//! clean, non-conversational recordings of many speakers. Draws are exact in
//! sample count — longer utterances are cropped at a random offset, shorter
//! ones looped with a 10 ms linear crossfade — so replacement audio always
//! matches the timing slot it fills.
//!
//! Speaker embeddings are 256-dimensional unit vectors, either ingested from
//! raw float32 files (the product of an external speaker-verification
//! network) or generated pseudo-randomly from a speaker id so the whole
//! pipeline runs without any pretrained model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{read_wav, AudioError, Waveform, PIPELINE_SAMPLE_RATE};
use crate::seeding::{derive_rng, derive_rng_keyed};

/// Speaker-embedding dimensionality (d-vector size).
pub const EMBEDDING_DIM: usize = 256;

/// Crossfade length used when looping a too-short utterance: 10 ms.
const CROSSFADE_SAMPLES: usize = 160;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no speakers available outside the excluded set")]
    PoolExhausted,
    #[error("requested length {0} s is below one sample")]
    BadLength(f64),
    #[error("embedding has {found} values, expected {expected}")]
    WrongDimension { found: usize, expected: usize },
    #[error("embedding vector has zero norm")]
    ZeroVector,
    #[error("pool manifest error: {0}")]
    ParseError(String),
    #[error("audio reference not resolvable: {0}")]
    UnresolvableAudio(PathBuf),
    #[error("speaker {0} not in pool")]
    UnknownSpeaker(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unit-norm speaker embedding ε₀ ∈ ℝ²⁵⁶.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    speaker_id: String,
    vector: Vec<f32>,
}

impl SpeakerEmbedding {
    /// Validate dimensionality and renormalize to unit Euclidean norm.
    pub fn new(speaker_id: impl Into<String>, vector: Vec<f32>) -> Result<Self, CorpusError> {
        if vector.len() != EMBEDDING_DIM {
            return Err(CorpusError::WrongDimension {
                found: vector.len(),
                expected: EMBEDDING_DIM,
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::ParseError("non-finite embedding value".into()));
        }
        let norm = vector.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(CorpusError::ZeroVector);
        }
        let vector = vector.iter().map(|&v| (v as f64 / norm) as f32).collect();
        Ok(Self { speaker_id: speaker_id.into(), vector })
    }

    pub fn speaker_id(&self) -> &str {
        &self.speaker_id
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }
}

/// Where one pool utterance's audio lives.
#[derive(Debug, Clone)]
pub enum UtteranceAudio {
    File(PathBuf),
    Memory(Arc<Vec<f32>>),
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub audio: UtteranceAudio,
    pub duration_s: f64,
}

impl PoolEntry {
    fn load(&self) -> Result<Vec<f32>, CorpusError> {
        match &self.audio {
            UtteranceAudio::File(path) => Ok(read_wav(path)?.into_samples()),
            UtteranceAudio::Memory(samples) => Ok(samples.as_ref().clone()),
        }
    }
}

/// Immutable collection of clean utterances grouped by speaker.
#[derive(Debug, Clone)]
pub struct UtterancePool {
    language_tag: String,
    entries: BTreeMap<String, Vec<PoolEntry>>,
}

#[derive(Serialize, Deserialize)]
struct PoolManifest {
    language: String,
    speakers: BTreeMap<String, Vec<PoolManifestEntry>>,
}

#[derive(Serialize, Deserialize)]
struct PoolManifestEntry {
    path: String,
    duration_s: f64,
}

impl UtterancePool {
    /// Load a pool manifest
    /// (`{"language", "speakers": {id: [{"path", "duration_s"}]}}`).
    /// Relative audio paths resolve against the manifest's directory; every
    /// referenced file must exist.
    pub fn load_manifest(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        let manifest: PoolManifest =
            serde_json::from_str(&text).map_err(|e| CorpusError::ParseError(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = BTreeMap::new();
        for (speaker, files) in manifest.speakers {
            let mut list = Vec::with_capacity(files.len());
            for f in files {
                let p = base.join(&f.path);
                if !p.is_file() {
                    return Err(CorpusError::UnresolvableAudio(p));
                }
                if !(f.duration_s > 0.0) {
                    return Err(CorpusError::ParseError(format!(
                        "{speaker}: non-positive duration {}",
                        f.duration_s
                    )));
                }
                list.push(PoolEntry { audio: UtteranceAudio::File(p), duration_s: f.duration_s });
            }
            if !list.is_empty() {
                entries.insert(speaker, list);
            }
        }
        Ok(Self { language_tag: manifest.language, entries })
    }

    /// Build a pool from in-memory audio (one or more clips per speaker).
    pub fn from_memory(
        language_tag: impl Into<String>,
        speakers: BTreeMap<String, Vec<Vec<f32>>>,
    ) -> Self {
        let entries = speakers
            .into_iter()
            .filter(|(_, clips)| !clips.is_empty())
            .map(|(id, clips)| {
                let list = clips
                    .into_iter()
                    .map(|c| PoolEntry {
                        duration_s: c.len() as f64 / PIPELINE_SAMPLE_RATE as f64,
                        audio: UtteranceAudio::Memory(Arc::new(c)),
                    })
                    .collect();
                (id, list)
            })
            .collect();
        Self { language_tag: language_tag.into(), entries }
    }

    pub fn language_tag(&self) -> &str {
        &self.language_tag
    }

    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn num_speakers(&self) -> usize {
        self.entries.len()
    }

    pub fn entries_of(&self, speaker: &str) -> Option<&[PoolEntry]> {
        self.entries.get(speaker).map(|v| v.as_slice())
    }
}

fn target_samples(target_len_s: f64) -> Result<usize, CorpusError> {
    if !(target_len_s.is_finite() && target_len_s > 0.0) {
        return Err(CorpusError::BadLength(target_len_s));
    }
    let n = (target_len_s * PIPELINE_SAMPLE_RATE as f64).round() as usize;
    if n == 0 {
        return Err(CorpusError::BadLength(target_len_s));
    }
    Ok(n)
}

/// Crop `source` to exactly `n` samples (random offset), or loop it with a
/// linear crossfade until long enough.
fn fit_length(source: Vec<f32>, n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    if source.len() >= n {
        let offset = rng.random_range(0..=source.len() - n);
        return source[offset..offset + n].to_vec();
    }
    let mut out = source.clone();
    while out.len() < n {
        let xf = CROSSFADE_SAMPLES.min(source.len().saturating_sub(1)).min(out.len());
        let tail = out.len() - xf;
        for i in 0..xf {
            let a = (i + 1) as f32 / (xf + 1) as f32;
            out[tail + i] = out[tail + i] * (1.0 - a) + source[i] * a;
        }
        out.extend_from_slice(&source[xf..]);
    }
    out.truncate(n);
    out
}

/// Draw an utterance of exactly `round(target_len_s · 16000)` samples from a
/// uniformly chosen speaker outside `exclude_speakers`.
pub fn draw_utterance(
    pool: &UtterancePool,
    target_len_s: f64,
    exclude_speakers: &BTreeSet<String>,
    seed: u64,
) -> Result<(String, Waveform), CorpusError> {
    let mut rng = derive_rng(seed, "draw_utterance", 0);
    draw_utterance_rng(pool, target_len_s, exclude_speakers, &mut rng)
}

/// As [`draw_utterance`], drawing randomness from a caller-owned stream.
pub fn draw_utterance_rng(
    pool: &UtterancePool,
    target_len_s: f64,
    exclude_speakers: &BTreeSet<String>,
    rng: &mut ChaCha8Rng,
) -> Result<(String, Waveform), CorpusError> {
    let n = target_samples(target_len_s)?;
    let eligible: Vec<&str> = pool
        .speakers()
        .filter(|s| !exclude_speakers.contains(*s))
        .collect();
    if eligible.is_empty() {
        return Err(CorpusError::PoolExhausted);
    }
    let speaker = eligible[rng.random_range(0..eligible.len())].to_string();
    let w = draw_samples_from_speaker(pool, &speaker, n, rng)?;
    Ok((speaker, w))
}

/// Draw exactly `round(target_len_s · 16000)` samples of one speaker.
pub fn draw_from_speaker(
    pool: &UtterancePool,
    speaker: &str,
    target_len_s: f64,
    seed: u64,
) -> Result<Waveform, CorpusError> {
    let mut rng = derive_rng_keyed(seed, "draw_from_speaker", speaker);
    draw_from_speaker_rng(pool, speaker, target_len_s, &mut rng)
}

/// As [`draw_from_speaker`], drawing randomness from a caller-owned stream.
pub fn draw_from_speaker_rng(
    pool: &UtterancePool,
    speaker: &str,
    target_len_s: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Waveform, CorpusError> {
    let n = target_samples(target_len_s)?;
    draw_samples_from_speaker(pool, speaker, n, rng)
}

/// Sample-exact draw used by the timing-preserving augmenter.
pub(crate) fn draw_samples_from_speaker(
    pool: &UtterancePool,
    speaker: &str,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Waveform, CorpusError> {
    let entries = pool
        .entries_of(speaker)
        .ok_or_else(|| CorpusError::UnknownSpeaker(speaker.to_string()))?;
    let entry = &entries[rng.random_range(0..entries.len())];
    let source = entry.load()?;
    if source.is_empty() {
        return Err(CorpusError::ParseError(format!("{speaker}: empty utterance audio")));
    }
    let fitted = fit_length(source, n, rng);
    Ok(Waveform::new(fitted, PIPELINE_SAMPLE_RATE)?)
}

/// Read a raw 1024-byte float32 little-endian embedding file; the speaker id
/// is the file stem. The vector is renormalized to unit norm.
pub fn load_embedding(path: &Path) -> Result<SpeakerEmbedding, CorpusError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != EMBEDDING_DIM * 4 {
        return Err(CorpusError::WrongDimension {
            found: bytes.len() / 4,
            expected: EMBEDDING_DIM,
        });
    }
    let vector: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let speaker_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unknown")
        .to_string();
    SpeakerEmbedding::new(speaker_id, vector)
}

/// Write an embedding as raw float32 little-endian bytes.
pub fn write_embedding(emb: &SpeakerEmbedding, path: &Path) -> Result<(), CorpusError> {
    let mut bytes = Vec::with_capacity(EMBEDDING_DIM * 4);
    for &v in emb.vector() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Deterministic unit vector keyed by (speaker id, seed): a stand-in for the
/// external d-vector network, stable per speaker across runs.
pub fn pseudo_embedding(speaker_id: &str, seed: u64) -> SpeakerEmbedding {
    let mut rng = derive_rng_keyed(seed, "pseudo_embedding", speaker_id);
    loop {
        let raw: Vec<f64> = (0..EMBEDDING_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            let vector = raw.iter().map(|&v| (v / norm) as f32).collect();
            return SpeakerEmbedding { speaker_id: speaker_id.to_string(), vector };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(len: usize, freq: f64) -> Vec<f32> {
        (0..len)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin() as f32)
            .collect()
    }

    fn small_pool() -> UtterancePool {
        let mut speakers = BTreeMap::new();
        speakers.insert("p1".to_string(), vec![tone(80_000, 200.0)]); // 5 s
        speakers.insert("p2".to_string(), vec![tone(8_000, 300.0)]); // 0.5 s
        speakers.insert("p3".to_string(), vec![tone(16_000, 400.0), tone(24_000, 500.0)]);
        UtterancePool::from_memory("test", speakers)
    }

    #[test]
    fn crop_is_exact_and_contiguous() {
        let pool = small_pool();
        let w = draw_from_speaker(&pool, "p1", 2.0, 7).unwrap();
        assert_eq!(w.len(), 32_000);
        // the crop must be a contiguous slice of the 5 s source tone
        let source = tone(80_000, 200.0);
        let found = source
            .windows(32_000)
            .step_by(8_000)
            .any(|win| win == w.samples())
            || (0..source.len() - 32_000)
                .any(|o| source[o..o + 32_000] == *w.samples());
        assert!(found);
    }

    #[test]
    fn loop_crossfade_reaches_exact_length() {
        let pool = small_pool();
        // 0.5 s source looped to 2 s
        let w = draw_from_speaker(&pool, "p2", 2.0, 7).unwrap();
        assert_eq!(w.len(), 32_000);
        // before the first crossfade the output is the source verbatim
        let source = tone(8_000, 300.0);
        assert_eq!(&w.samples()[..8_000 - CROSSFADE_SAMPLES], &source[..8_000 - CROSSFADE_SAMPLES]);
        assert!(w.samples().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn draw_respects_exclusions() {
        let pool = small_pool();
        let exclude: BTreeSet<String> = ["p1", "p3"].iter().map(|s| s.to_string()).collect();
        for seed in 0..50 {
            let (id, _) = draw_utterance(&pool, 0.5, &exclude, seed).unwrap();
            assert_eq!(id, "p2");
        }
        let all: BTreeSet<String> = pool.speakers().map(|s| s.to_string()).collect();
        assert!(matches!(
            draw_utterance(&pool, 0.5, &all, 1),
            Err(CorpusError::PoolExhausted)
        ));
    }

    #[test]
    fn zero_length_rejected() {
        let pool = small_pool();
        assert!(matches!(
            draw_utterance(&pool, 0.0, &BTreeSet::new(), 1),
            Err(CorpusError::BadLength(_))
        ));
    }

    #[test]
    fn draws_are_deterministic() {
        let pool = small_pool();
        let (a_id, a) = draw_utterance(&pool, 1.0, &BTreeSet::new(), 42).unwrap();
        let (b_id, b) = draw_utterance(&pool, 1.0, &BTreeSet::new(), 42).unwrap();
        assert_eq!(a_id, b_id);
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spk9.emb");
        let ones = SpeakerEmbedding::new("spk9", vec![1.0; EMBEDDING_DIM]).unwrap();
        // all-ones normalizes to 1/16 per component
        assert!(ones.vector().iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-7));
        write_embedding(&ones, &path).unwrap();
        let back = load_embedding(&path).unwrap();
        assert_eq!(back.speaker_id(), "spk9");
        assert_eq!(back.vector(), ones.vector());
    }

    #[test]
    fn embedding_error_cases() {
        let dir = tempfile::tempdir().unwrap();
        let short = dir.path().join("short.emb");
        std::fs::write(&short, vec![0u8; 255 * 4]).unwrap();
        assert!(matches!(
            load_embedding(&short),
            Err(CorpusError::WrongDimension { found: 255, expected: 256 })
        ));
        let zeros = dir.path().join("zeros.emb");
        std::fs::write(&zeros, vec![0u8; 256 * 4]).unwrap();
        assert!(matches!(load_embedding(&zeros), Err(CorpusError::ZeroVector)));
    }

    #[test]
    fn pseudo_embedding_properties() {
        let a = pseudo_embedding("alice", 3);
        let b = pseudo_embedding("alice", 3);
        assert_eq!(a.vector(), b.vector());
        let norm: f64 = a.vector().iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);

        // distinct ids decorrelate: cosine < 0.5 for ≥ 99% of pairs
        let mut below = 0usize;
        let pairs = 10_000;
        for i in 0..pairs {
            let x = pseudo_embedding(&format!("spk{i}"), 5);
            let y = pseudo_embedding(&format!("spk{i}-b"), 5);
            let cos: f64 = x
                .vector()
                .iter()
                .zip(y.vector())
                .map(|(&p, &q)| p as f64 * q as f64)
                .sum();
            if cos.abs() < 0.5 {
                below += 1;
            }
        }
        assert!(below as f64 / pairs as f64 >= 0.99, "{below}/{pairs}");
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let wav_path = dir.path().join("u1.wav");
        let w = Waveform::new(tone(16_000, 250.0), PIPELINE_SAMPLE_RATE).unwrap();
        crate::audio::write_wav(&w, &wav_path).unwrap();
        let manifest = serde_json::json!({
            "language": "en",
            "speakers": {"s1": [{"path": "u1.wav", "duration_s": 1.0}]}
        });
        let mpath = dir.path().join("pool.json");
        std::fs::write(&mpath, manifest.to_string()).unwrap();
        let pool = UtterancePool::load_manifest(&mpath).unwrap();
        assert_eq!(pool.num_speakers(), 1);
        assert_eq!(pool.language_tag(), "en");
        let got = draw_from_speaker(&pool, "s1", 1.0, 1).unwrap();
        assert_eq!(got.samples(), w.samples());

        let missing = serde_json::json!({
            "language": "en",
            "speakers": {"s1": [{"path": "nope.wav", "duration_s": 1.0}]}
        });
        std::fs::write(&mpath, missing.to_string()).unwrap();
        assert!(matches!(
            UtterancePool::load_manifest(&mpath),
            Err(CorpusError::UnresolvableAudio(_))
        ));
    }
}
