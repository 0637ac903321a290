//! Timing-preserving augmentation and synthetic conversation generation.
//!
//! The augmentation principle: conversations carry two separable kinds of
//! structure — *who sounds like what* (speaker identity) and *who speaks
//! when* (turn-taking). [`augment_conversation`] swaps speaker identities by
//! replacing each speaker's audio, with probability `p`, by a speaker drawn
//! from a clean utterance pool, while keeping every utterance's start/end
//! times bit-identical. `p = 0` returns real conversations unchanged,
//! `p = 1` produces fully synthetic speaker casts on real timing, and
//! intermediate `p` mixes both.
//!
//! [`synth_conversation`] generates timelines from scratch by sampling gap
//! and turn-length distributions ([`TurnTakingStats`]), so conversational
//! timing itself can be simulated when no real transcripts exist.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{sample_index, Waveform, PIPELINE_SAMPLE_RATE};
use crate::corpus::{draw_samples_from_speaker, CorpusError, UtterancePool};
use crate::seeding::{derive_rng, derive_rng_keyed};
use crate::transcript::{ConversationTranscript, TranscriptError, UtteranceSegment};

/// Shortest utterance worth placing, in seconds; timeline slivers produced
/// by clamping at the conversation end are dropped.
const MIN_PLACED_S: f64 = 0.05;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("transcript speaker {0} has no audio track")]
    MissingTrack(String),
    #[error("track for {speaker} has {found} samples, transcript implies {expected}")]
    TrackLengthMismatch { speaker: String, found: usize, expected: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid turn-taking stats: {0}")]
    InvalidStats(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

/// Normalized histogram over a uniform grid of bins.
///
/// Sampling picks a bin by its mass and returns the **bin center**, so a
/// single-bin histogram is a deterministic (zero-variance) distribution and
/// all sampled values are quantized to the bin grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    start_s: f64,
    bin_width_s: f64,
    masses: Vec<f64>,
}

impl Histogram {
    pub fn new(start_s: f64, bin_width_s: f64, masses: Vec<f64>) -> Result<Self, AugmentError> {
        if !(bin_width_s.is_finite() && bin_width_s > 0.0) || !start_s.is_finite() {
            return Err(AugmentError::InvalidStats(format!(
                "bad histogram grid: start {start_s}, width {bin_width_s}"
            )));
        }
        if masses.is_empty() || masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(AugmentError::InvalidStats("histogram masses must be non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(AugmentError::InvalidStats("histogram has zero total mass".into()));
        }
        let masses = masses.iter().map(|m| m / total).collect();
        Ok(Self { start_s, bin_width_s, masses })
    }

    /// Single-bin histogram: always samples exactly `value_s`.
    pub fn delta(value_s: f64, bin_width_s: f64) -> Self {
        Self { start_s: value_s - bin_width_s / 2.0, bin_width_s, masses: vec![1.0] }
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.bin_width_s * self.masses.len() as f64
    }

    pub fn bin_width_s(&self) -> f64 {
        self.bin_width_s
    }

    fn is_normalized(&self) -> bool {
        (self.masses.iter().sum::<f64>() - 1.0).abs() < 1e-6
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut idx = self.masses.len() - 1;
        for (i, &m) in self.masses.iter().enumerate() {
            cum += m;
            if u < cum {
                idx = i;
                break;
            }
        }
        self.start_s + (idx as f64 + 0.5) * self.bin_width_s
    }
}

/// Distributional description of conversational timing: inter-turn offsets
/// (negative = overlap), turn lengths, and backchannel behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTakingStats {
    /// Signed offset from one turn's end to the next turn's start, seconds.
    pub gap_distribution: Histogram,
    pub turn_len_distribution: Histogram,
    /// Backchannel events per minute (Poisson rate).
    pub backchannel_rate_per_min: f64,
    pub backchannel_len_distribution: Histogram,
}

impl TurnTakingStats {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, h) in [
            ("gap", &self.gap_distribution),
            ("turn length", &self.turn_len_distribution),
            ("backchannel length", &self.backchannel_len_distribution),
        ] {
            if !h.is_normalized() {
                return Err(AugmentError::InvalidStats(format!(
                    "{name} histogram mass must be 1"
                )));
            }
        }
        let g = &self.gap_distribution;
        if g.start_s() < -3.0 - 1e-9 || g.end_s() > 3.0 + 1e-9 {
            return Err(AugmentError::InvalidStats(format!(
                "gap support [{}, {}] outside [-3, 3] s",
                g.start_s(),
                g.end_s()
            )));
        }
        if (g.bin_width_s() - 0.05).abs() > 1e-9 {
            return Err(AugmentError::InvalidStats(format!(
                "gap bin width {} must be 0.05 s",
                g.bin_width_s()
            )));
        }
        let t = &self.turn_len_distribution;
        if t.start_s() < 0.2 - 1e-9 || t.end_s() > 20.0 + 1e-9 {
            return Err(AugmentError::InvalidStats(format!(
                "turn-length support [{}, {}] outside [0.2, 20] s",
                t.start_s(),
                t.end_s()
            )));
        }
        let b = &self.backchannel_len_distribution;
        if b.start_s() <= 0.0 {
            return Err(AugmentError::InvalidStats(
                "backchannel lengths must be positive".into(),
            ));
        }
        if !(self.backchannel_rate_per_min.is_finite() && self.backchannel_rate_per_min >= 0.0) {
            return Err(AugmentError::InvalidStats(format!(
                "bad backchannel rate {}",
                self.backchannel_rate_per_min
            )));
        }
        Ok(())
    }

    /// Documented stand-in defaults, **not** measured ground truth: gaps
    /// normal-shaped with mode +0.2 s and ~20% of transition mass below zero
    /// (overlaps); turn lengths log-normal-shaped with median 2 s;
    /// backchannels 2/min with log-normal-shaped lengths around 0.4 s.
    pub fn default_standin() -> Self {
        let gap = {
            let bins = 120; // [-3, 3) at 0.05
            let masses = (0..bins)
                .map(|i| {
                    let c = -3.0 + (i as f64 + 0.5) * 0.05;
                    let z = (c - 0.2) / 0.24;
                    (-0.5 * z * z).exp()
                })
                .collect();
            Histogram::new(-3.0, 0.05, masses).expect("static histogram")
        };
        let turn = {
            let bins = 396; // [0.2, 20) at 0.05
            let masses = (0..bins)
                .map(|i| {
                    let c = 0.2 + (i as f64 + 0.5) * 0.05;
                    let z = (c.ln() - 2.0f64.ln()) / 0.6;
                    (-0.5 * z * z).exp() / c
                })
                .collect();
            Histogram::new(0.2, 0.05, masses).expect("static histogram")
        };
        let backchannel = {
            let bins = 26; // [0.2, 1.5) at 0.05
            let masses = (0..bins)
                .map(|i| {
                    let c = 0.2 + (i as f64 + 0.5) * 0.05;
                    let z = (c.ln() - 0.4f64.ln()) / 0.4;
                    (-0.5 * z * z).exp() / c
                })
                .collect();
            Histogram::new(0.2, 0.05, masses).expect("static histogram")
        };
        Self {
            gap_distribution: gap,
            turn_len_distribution: turn,
            backchannel_rate_per_min: 2.0,
            backchannel_len_distribution: backchannel,
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, AugmentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AugmentError::InvalidStats(format!("{}: {e}", path.display())))?;
        let stats: Self = serde_json::from_str(&text)
            .map_err(|e| AugmentError::InvalidStats(e.to_string()))?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), AugmentError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| AugmentError::InvalidStats(e.to_string()))?;
        std::fs::write(path, json)
            .map_err(|e| AugmentError::InvalidStats(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

/// How to augment: replacement probability and the pool to draw from.
#[derive(Debug, Clone)]
pub struct AugmentPlan<'a> {
    /// Per-speaker replacement probability in `[0, 1]`.
    pub p: f64,
    pub replacement_pool: &'a UtterancePool,
    pub seed: u64,
}

/// Result of augmentation: the (timing-identical) transcript, per-speaker
/// tracks, and which speakers were replaced by whom.
#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub transcript: ConversationTranscript,
    pub tracks: BTreeMap<String, Waveform>,
    pub replaced: BTreeSet<String>,
    /// original speaker id → pool speaker id, for replaced speakers.
    pub replacement_ids: BTreeMap<String, String>,
}

fn expected_track_samples(t: &ConversationTranscript) -> usize {
    sample_index(t.duration_s(), PIPELINE_SAMPLE_RATE)
}

fn check_tracks(
    t: &ConversationTranscript,
    tracks: &BTreeMap<String, Waveform>,
) -> Result<usize, AugmentError> {
    let expected = expected_track_samples(t);
    for speaker in t.speakers() {
        let track = tracks
            .get(speaker)
            .ok_or_else(|| AugmentError::MissingTrack(speaker.clone()))?;
        if track.len() != expected {
            return Err(AugmentError::TrackLengthMismatch {
                speaker: speaker.clone(),
                found: track.len(),
                expected,
            });
        }
    }
    Ok(expected)
}

/// Replace each speaker's audio with probability `p`, preserving every
/// utterance's timing bit-exactly.
///
/// Replacement speakers are drawn from the pool, distinct from each other
/// and from all original speakers. A replaced speaker's track is rebuilt
/// from pool audio placed at the original utterance spans (silence
/// elsewhere); unreplaced tracks pass through untouched.
pub fn augment_conversation(
    t: &ConversationTranscript,
    tracks: &BTreeMap<String, Waveform>,
    plan: &AugmentPlan<'_>,
) -> Result<AugmentOutcome, AugmentError> {
    if !(0.0..=1.0).contains(&plan.p) {
        return Err(AugmentError::InvalidPlan(format!(
            "replacement probability {} outside [0, 1]",
            plan.p
        )));
    }
    let track_len = check_tracks(t, tracks)?;

    let originals: BTreeSet<String> = t.speakers().clone();
    let mut replaced = BTreeSet::new();
    let mut replacement_ids = BTreeMap::new();
    let mut out_tracks = BTreeMap::new();
    let mut taken: BTreeSet<String> = originals.clone();

    for speaker in t.speakers() {
        let mut decide = derive_rng_keyed(plan.seed, "augment.decide", speaker);
        let replace = decide.random::<f64>() < plan.p;
        if !replace {
            out_tracks.insert(speaker.clone(), tracks[speaker].clone());
            continue;
        }
        let eligible: Vec<&str> = plan
            .replacement_pool
            .speakers()
            .filter(|s| !taken.contains(*s))
            .collect();
        if eligible.is_empty() {
            return Err(CorpusError::PoolExhausted.into());
        }
        let mut pick = derive_rng_keyed(plan.seed, "augment.pick", speaker);
        let new_id = eligible[pick.random_range(0..eligible.len())].to_string();
        taken.insert(new_id.clone());

        let mut samples = vec![0.0f32; track_len];
        for (i, u) in t.utterances_of(speaker).enumerate() {
            let a = sample_index(u.start_s, PIPELINE_SAMPLE_RATE);
            let b = sample_index(u.end_s, PIPELINE_SAMPLE_RATE).min(track_len);
            if b <= a {
                continue;
            }
            let mut rng_u =
                derive_rng_keyed(plan.seed, "augment.audio", &format!("{speaker}/{i}"));
            let audio =
                draw_samples_from_speaker(plan.replacement_pool, &new_id, b - a, &mut rng_u)?;
            samples[a..b].copy_from_slice(audio.samples());
        }
        out_tracks.insert(
            speaker.clone(),
            Waveform::new(samples, PIPELINE_SAMPLE_RATE).expect("replacement track is nonempty"),
        );
        replaced.insert(speaker.clone());
        replacement_ids.insert(speaker.clone(), new_id);
    }

    Ok(AugmentOutcome {
        transcript: t.clone(),
        tracks: out_tracks,
        replaced,
        replacement_ids,
    })
}

/// Replace *all* speakers from a (typically foreign-language) pool:
/// [`augment_conversation`] with `p = 1`.
pub fn cross_lingual_replace(
    t: &ConversationTranscript,
    tracks: &BTreeMap<String, Waveform>,
    pool: &UtterancePool,
    seed: u64,
) -> Result<AugmentOutcome, AugmentError> {
    augment_conversation(t, tracks, &AugmentPlan { p: 1.0, replacement_pool: pool, seed })
}

/// Generate a conversation timeline and audio from turn-taking statistics.
///
/// Speakers take alternating turns; each turn's length comes from
/// `turn_len_distribution` and its offset from the previous turn's end comes
/// from `gap_distribution` (negative offsets create overlap). Backchannels —
/// short interjections by a non-holding speaker — are injected at
/// Poisson-distributed times. Audio is filled per utterance from the pool.
pub fn synth_conversation(
    stats: &TurnTakingStats,
    n_speakers: usize,
    duration_s: f64,
    pool: &UtterancePool,
    seed: u64,
) -> Result<(ConversationTranscript, BTreeMap<String, Waveform>), AugmentError> {
    stats.validate()?;
    if n_speakers == 0 {
        return Err(AugmentError::InvalidPlan("need at least one speaker".into()));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(AugmentError::InvalidPlan(format!("bad duration {duration_s}")));
    }
    if pool.num_speakers() < n_speakers {
        return Err(CorpusError::PoolExhausted.into());
    }
    let mut rng = derive_rng(seed, "synth.timeline", 0);

    // Cast: n distinct pool speakers, seeded choice.
    let mut ids: Vec<&str> = pool.speakers().collect();
    use rand::seq::SliceRandom;
    ids.shuffle(&mut rng);
    let cast: Vec<String> = ids[..n_speakers].iter().map(|s| s.to_string()).collect();

    // Alternating turns.
    let mut utterances: Vec<UtteranceSegment> = Vec::new();
    let mut last_end: BTreeMap<&str, f64> = BTreeMap::new();
    let mut cursor_end = 0.0f64; // end of the previous turn (unclamped start + len)
    let mut turn = 0usize;
    loop {
        let speaker = cast[turn % n_speakers].as_str();
        let len = stats.turn_len_distribution.sample(&mut rng);
        let mut start = if turn == 0 {
            0.0
        } else {
            cursor_end + stats.gap_distribution.sample(&mut rng)
        };
        start = start.max(0.0);
        if let Some(&prev) = last_end.get(speaker) {
            start = start.max(prev); // a speaker cannot overlap themselves
        }
        if start >= duration_s {
            break;
        }
        let end = (start + len).min(duration_s);
        if end - start >= MIN_PLACED_S {
            utterances.push(UtteranceSegment::new(speaker, start, end));
            last_end.insert(speaker, end);
        }
        cursor_end = end;
        if start + len >= duration_s {
            break;
        }
        turn += 1;
    }

    // Backchannels: short overlapping utterances by a non-holding speaker.
    if stats.backchannel_rate_per_min > 0.0 && n_speakers >= 2 {
        let lambda = stats.backchannel_rate_per_min * duration_s / 60.0;
        let count = Poisson::new(lambda)
            .map(|d| d.sample(&mut rng) as usize)
            .unwrap_or(0);
        let mut times: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..duration_s)).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for tau in times {
            let holder = utterances
                .iter()
                .find(|u| u.start_s <= tau && tau < u.end_s)
                .map(|u| u.speaker_id.clone());
            let Some(holder) = holder else { continue }; // nobody to respond to
            let others: Vec<&String> = cast.iter().filter(|s| **s != holder).collect();
            let who = others[rng.random_range(0..others.len())].clone();
            let len = stats.backchannel_len_distribution.sample(&mut rng);
            let end = (tau + len).min(duration_s);
            if end - tau < MIN_PLACED_S {
                continue;
            }
            let collides = utterances
                .iter()
                .any(|u| u.speaker_id == who && u.start_s < end && tau < u.end_s);
            if collides {
                continue;
            }
            utterances.push(UtteranceSegment::new(who, tau, end));
        }
    }

    let transcript =
        ConversationTranscript::new(format!("synth-{seed}"), duration_s, utterances)?;

    // Audio: each utterance filled from its speaker's pool entries.
    let track_len = expected_track_samples(&transcript);
    let mut tracks = BTreeMap::new();
    for speaker in &cast {
        let mut samples = vec![0.0f32; track_len];
        for (i, u) in transcript.utterances_of(speaker).enumerate() {
            let a = sample_index(u.start_s, PIPELINE_SAMPLE_RATE);
            let b = sample_index(u.end_s, PIPELINE_SAMPLE_RATE).min(track_len);
            if b <= a {
                continue;
            }
            let mut rng_u = derive_rng_keyed(seed, "synth.audio", &format!("{speaker}/{i}"));
            let audio = draw_samples_from_speaker(pool, speaker, b - a, &mut rng_u)?;
            samples[a..b].copy_from_slice(audio.samples());
        }
        tracks.insert(
            speaker.clone(),
            Waveform::new(samples, PIPELINE_SAMPLE_RATE).expect("track is nonempty"),
        );
    }
    Ok((transcript, tracks))
}
