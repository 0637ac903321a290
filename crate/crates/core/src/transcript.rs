//! Speaker-labeled utterance timelines and their timing statistics.
//!
//! A [`ConversationTranscript`] records who spoke when. Utterances of a
//! single speaker never overlap each other; cross-speaker overlap is the
//! phenomenon of interest (turn-taking gaps go positive, overlaps negative)
//! and is preserved exactly. "Total speech" always means the *union* of
//! speech intervals, never the sum, so fractions stay in `[0, 1]`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::derive_rng;

/// Timing slop for invariant checks; generated timelines are exact, loaded
/// ones may carry last-digit rounding from text formats.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where the clean audio for an utterance lives: a per-speaker track file
/// plus the offset of this utterance within it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSource {
    pub path: PathBuf,
    pub offset_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceSegment {
    pub speaker_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub audio_source: Option<AudioSource>,
}

impl UtteranceSegment {
    pub fn new(speaker_id: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self { speaker_id: speaker_id.into(), start_s, end_s, audio_source: None }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Validated utterance timeline of one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationTranscript {
    conversation_id: String,
    duration_s: f64,
    utterances: Vec<UtteranceSegment>,
    speakers: BTreeSet<String>,
}

impl ConversationTranscript {
    /// Build a transcript, sorting utterances by start time and enforcing
    /// the structural invariants (bounds, positive durations, no
    /// same-speaker self-overlap).
    pub fn new(
        conversation_id: impl Into<String>,
        duration_s: f64,
        mut utterances: Vec<UtteranceSegment>,
    ) -> Result<Self, TranscriptError> {
        let conversation_id = conversation_id.into();
        if !duration_s.is_finite() || duration_s <= 0.0 {
            return Err(TranscriptError::InvariantViolation(format!(
                "conversation duration {duration_s} must be positive and finite"
            )));
        }
        for u in &utterances {
            if !u.start_s.is_finite() || !u.end_s.is_finite() {
                return Err(TranscriptError::InvariantViolation(format!(
                    "non-finite utterance bounds for speaker {}",
                    u.speaker_id
                )));
            }
            if u.end_s <= u.start_s {
                return Err(TranscriptError::InvariantViolation(format!(
                    "utterance of {} has end {} ≤ start {}",
                    u.speaker_id, u.end_s, u.start_s
                )));
            }
            if u.start_s < -TIME_EPS || u.end_s > duration_s + TIME_EPS {
                return Err(TranscriptError::InvariantViolation(format!(
                    "utterance of {} at [{}, {}] outside [0, {duration_s}]",
                    u.speaker_id, u.start_s, u.end_s
                )));
            }
        }
        utterances.sort_by(|a, b| {
            (a.start_s, a.end_s, &a.speaker_id)
                .partial_cmp(&(b.start_s, b.end_s, &b.speaker_id))
                .expect("finite utterance times")
        });
        let mut last_end: BTreeMap<&str, f64> = BTreeMap::new();
        for u in &utterances {
            if let Some(&prev) = last_end.get(u.speaker_id.as_str()) {
                if u.start_s < prev - TIME_EPS {
                    return Err(TranscriptError::InvariantViolation(format!(
                        "speaker {} overlaps their own speech at {}",
                        u.speaker_id, u.start_s
                    )));
                }
            }
            let e = last_end.entry(u.speaker_id.as_str()).or_insert(f64::NEG_INFINITY);
            *e = e.max(u.end_s);
        }
        let speakers = utterances.iter().map(|u| u.speaker_id.clone()).collect();
        Ok(Self { conversation_id, duration_s, utterances, speakers })
    }

    pub fn conversation_id(&self) -> &str {
        &self.conversation_id
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    /// Utterances sorted by start time.
    pub fn utterances(&self) -> &[UtteranceSegment] {
        &self.utterances
    }

    pub fn speakers(&self) -> &BTreeSet<String> {
        &self.speakers
    }

    pub fn utterances_of<'a>(
        &'a self,
        speaker: &'a str,
    ) -> impl Iterator<Item = &'a UtteranceSegment> {
        self.utterances.iter().filter(move |u| u.speaker_id == speaker)
    }

    /// Restrict to a window `[a, b]`, shifting times so the window starts at
    /// zero. Utterances are clipped at the window edges; ones that do not
    /// intersect the window are dropped.
    pub fn clip_window(
        &self,
        a_s: f64,
        b_s: f64,
        new_id: impl Into<String>,
    ) -> Result<ConversationTranscript, TranscriptError> {
        check_window(self, a_s, b_s).map_err(|_| {
            TranscriptError::InvariantViolation(format!(
                "window [{a_s}, {b_s}] outside conversation of {} s",
                self.duration_s
            ))
        })?;
        let clipped = self
            .utterances
            .iter()
            .filter_map(|u| {
                let s = u.start_s.max(a_s);
                let e = u.end_s.min(b_s);
                (e - s > TIME_EPS).then(|| UtteranceSegment {
                    speaker_id: u.speaker_id.clone(),
                    start_s: s - a_s,
                    end_s: e - a_s,
                    audio_source: u.audio_source.clone(),
                })
            })
            .collect();
        ConversationTranscript::new(new_id, b_s - a_s, clipped)
    }
}

/// Measure of `{t : at least min_count speakers active}` over a set of
/// (start, end, speaker-slot) intervals, by event sweep.
pub(crate) fn coverage_duration(intervals: &[(f64, f64)], min_count: usize) -> f64 {
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(intervals.len() * 2);
    for &(s, e) in intervals {
        if e > s {
            events.push((s, 1));
            events.push((e, -1));
        }
    }
    events.sort_by(|a, b| a.partial_cmp(b).expect("finite event times"));
    let mut covered = 0.0;
    let mut count = 0i32;
    let mut prev = f64::NAN;
    for (t, d) in events {
        if count >= min_count as i32 && prev.is_finite() {
            covered += t - prev;
        }
        count += d;
        prev = t;
    }
    covered
}

/// Overlapped-speech duration divided by total (union) speech duration;
/// zero for a silent or single-speaker conversation.
pub fn overlap_ratio(t: &ConversationTranscript) -> f64 {
    let intervals: Vec<(f64, f64)> =
        t.utterances.iter().map(|u| (u.start_s, u.end_s)).collect();
    let union = coverage_duration(&intervals, 1);
    if union <= 0.0 {
        return 0.0;
    }
    coverage_duration(&intervals, 2) / union
}

#[derive(Debug, Error)]
#[error("window [{a_s}, {b_s}] invalid for conversation of {duration_s} s")]
pub struct BadWindow {
    pub a_s: f64,
    pub b_s: f64,
    pub duration_s: f64,
}

fn check_window(t: &ConversationTranscript, a_s: f64, b_s: f64) -> Result<(), BadWindow> {
    let bad = BadWindow { a_s, b_s, duration_s: t.duration_s };
    if !(a_s.is_finite() && b_s.is_finite()) || a_s < -TIME_EPS || a_s >= b_s
        || b_s > t.duration_s + TIME_EPS
    {
        return Err(bad);
    }
    Ok(())
}

/// Speech statistics of one window of a conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechActivity {
    /// Union-of-speech duration divided by window length.
    pub total_speech_fraction: f64,
    pub active_speakers: BTreeSet<String>,
    pub per_speaker_duration: BTreeMap<String, f64>,
}

/// Who speaks, and how much, inside `[a_s, b_s]`.
pub fn speech_activity(
    t: &ConversationTranscript,
    a_s: f64,
    b_s: f64,
) -> Result<SpeechActivity, BadWindow> {
    check_window(t, a_s, b_s)?;
    let mut clipped: Vec<(f64, f64)> = Vec::new();
    let mut per_speaker: BTreeMap<String, f64> = BTreeMap::new();
    for u in &t.utterances {
        let s = u.start_s.max(a_s);
        let e = u.end_s.min(b_s);
        if e > s {
            clipped.push((s, e));
            *per_speaker.entry(u.speaker_id.clone()).or_insert(0.0) += e - s;
        }
    }
    let union = coverage_duration(&clipped, 1);
    Ok(SpeechActivity {
        total_speech_fraction: union / (b_s - a_s),
        active_speakers: per_speaker.keys().cloned().collect(),
        per_speaker_duration: per_speaker,
    })
}

/// Qualification rules for evaluation windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRules {
    pub seg_len_s: f64,
    /// Minimum union-of-speech fraction of the window.
    pub min_speech_frac: f64,
    /// Minimum number of speakers with any speech in the window.
    pub min_active: usize,
}

impl Default for SegmentRules {
    fn default() -> Self {
        Self { seg_len_s: 60.0, min_speech_frac: 0.6, min_active: 2 }
    }
}

/// All qualifying window starts on a 1 s grid, in seeded random order
/// (sampling without replacement). Empty when nothing qualifies.
pub fn select_segments(
    t: &ConversationTranscript,
    rules: &SegmentRules,
    seed: u64,
) -> Vec<f64> {
    let mut qualifying: Vec<f64> = Vec::new();
    let last_start = t.duration_s - rules.seg_len_s;
    let mut start = 0.0f64;
    while start <= last_start + TIME_EPS {
        let end = (start + rules.seg_len_s).min(t.duration_s);
        if let Ok(act) = speech_activity(t, start, end) {
            if act.total_speech_fraction >= rules.min_speech_frac
                && act.active_speakers.len() >= rules.min_active
            {
                qualifying.push(start);
            }
        }
        start += 1.0;
    }
    use rand::seq::SliceRandom;
    qualifying.shuffle(&mut derive_rng(seed, "select_segments", 0));
    qualifying
}

// ---------------------------------------------------------------------------
// Serialization

#[derive(Serialize, Deserialize)]
struct TranscriptFile {
    conversation_id: String,
    duration_s: f64,
    utterances: Vec<UtteranceFile>,
}

#[derive(Serialize, Deserialize)]
struct UtteranceFile {
    speaker: String,
    start_s: f64,
    end_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    audio: Option<AudioSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptFormat {
    Json,
    Rttm,
}

impl TranscriptFormat {
    /// Infer from file extension; `.rttm` is RTTM, everything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("rttm") => Self::Rttm,
            _ => Self::Json,
        }
    }
}

pub fn load_transcript(
    path: &Path,
    format: TranscriptFormat,
) -> Result<ConversationTranscript, TranscriptError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        TranscriptFormat::Json => parse_json(&text),
        TranscriptFormat::Rttm => parse_rttm(&text),
    }
}

pub fn save_transcript(
    t: &ConversationTranscript,
    path: &Path,
) -> Result<(), TranscriptError> {
    let file = TranscriptFile {
        conversation_id: t.conversation_id.clone(),
        duration_s: t.duration_s,
        utterances: t
            .utterances
            .iter()
            .map(|u| UtteranceFile {
                speaker: u.speaker_id.clone(),
                start_s: u.start_s,
                end_s: u.end_s,
                audio: u.audio_source.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| TranscriptError::ParseError(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

fn parse_json(text: &str) -> Result<ConversationTranscript, TranscriptError> {
    let file: TranscriptFile =
        serde_json::from_str(text).map_err(|e| TranscriptError::ParseError(e.to_string()))?;
    let utterances = file
        .utterances
        .into_iter()
        .map(|u| UtteranceSegment {
            speaker_id: u.speaker,
            start_s: u.start_s,
            end_s: u.end_s,
            audio_source: u.audio,
        })
        .collect();
    ConversationTranscript::new(file.conversation_id, file.duration_s, utterances)
}

/// Parse RTTM `SPEAKER` lines: fields are
/// `type file channel onset duration ortho stype name confidence [slat]`.
/// Non-SPEAKER lines and `;;` comments are ignored. All lines must refer to
/// the same file id; the conversation duration is the latest utterance end.
fn parse_rttm(text: &str) -> Result<ConversationTranscript, TranscriptError> {
    let mut conversation_id: Option<String> = None;
    let mut utterances = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(";;") {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] != "SPEAKER" {
            continue;
        }
        if fields.len() < 8 {
            return Err(TranscriptError::ParseError(format!(
                "line {}: SPEAKER line has {} fields, expected ≥ 8",
                lineno + 1,
                fields.len()
            )));
        }
        let file_id = fields[1];
        match &conversation_id {
            None => conversation_id = Some(file_id.to_string()),
            Some(id) if id != file_id => {
                return Err(TranscriptError::ParseError(format!(
                    "line {}: multiple file ids ({id} and {file_id}); one conversation per file",
                    lineno + 1
                )))
            }
            _ => {}
        }
        let onset: f64 = fields[3].parse().map_err(|_| {
            TranscriptError::ParseError(format!("line {}: bad onset {:?}", lineno + 1, fields[3]))
        })?;
        let dur: f64 = fields[4].parse().map_err(|_| {
            TranscriptError::ParseError(format!(
                "line {}: bad duration {:?}",
                lineno + 1,
                fields[4]
            ))
        })?;
        utterances.push(UtteranceSegment::new(fields[7], onset, onset + dur));
    }
    let conversation_id = conversation_id
        .ok_or_else(|| TranscriptError::ParseError("no SPEAKER lines".into()))?;
    let duration_s = utterances.iter().map(|u| u.end_s).fold(0.0f64, f64::max);
    ConversationTranscript::new(conversation_id, duration_s, utterances)
}
