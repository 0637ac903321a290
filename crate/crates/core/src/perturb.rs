//! Timing perturbations that probe turn-taking sensitivity.
//!
//! Two transforms move utterances in time while preserving every utterance's
//! duration and audio content: [`random_shift`] jitters each utterance
//! independently by δ ~ U[−τ, τ], and [`shift_all_left`] compacts each
//! speaker's utterances leftward, removing all within-speaker gaps — the
//! maximal left shift that preserves within-speaker order, which artificially
//! increases overlap and breaks natural turn-taking structure.
//!
//! [`perturb_mixture`] applies the same transform to a mixture's
//! target-conversation components and reassembles the mixture and target, so
//! perturbed inputs and perturbed ground truth stay consistent.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::audio::{sample_index, AudioError, Waveform};
use crate::mixer::{MixerError, MixtureSample};
use crate::seeding::derive_rng_keyed;
use crate::transcript::{ConversationTranscript, TranscriptError, UtteranceSegment};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("speaker {0} has no audio track")]
    MissingTrack(String),
    #[error("track for {speaker} has {found} samples, transcript implies {expected}")]
    TrackLengthMismatch { speaker: String, found: usize, expected: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Mixer(#[from] MixerError),
}

/// A perturbed conversation: new timeline plus relocated per-speaker audio.
#[derive(Debug, Clone)]
pub struct PerturbedConversation {
    pub transcript: ConversationTranscript,
    pub tracks: BTreeMap<String, Waveform>,
}

/// Which transform to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbMode {
    RandomShift { tau_s: f64 },
    ShiftAllLeft,
}

fn check_tracks(
    t: &ConversationTranscript,
    tracks: &BTreeMap<String, Waveform>,
) -> Result<(), PerturbError> {
    for speaker in t.speakers() {
        let track = tracks
            .get(speaker)
            .ok_or_else(|| PerturbError::MissingTrack(speaker.clone()))?;
        let expected = sample_index(t.duration_s(), track.sample_rate());
        if track.len() != expected {
            return Err(PerturbError::TrackLengthMismatch {
                speaker: speaker.clone(),
                found: track.len(),
                expected,
            });
        }
    }
    Ok(())
}

/// Move one speaker's audio to its new utterance positions: zero the old
/// spans, then write the saved audio at the new spans.
fn relocate_audio(
    track: &Waveform,
    moves: &[(f64, f64, f64)], // (old_start_s, old_end_s, new_start_s)
) -> Waveform {
    let rate = track.sample_rate();
    let len = track.len();
    let mut out = track.samples().to_vec();
    let mut saved: Vec<(Vec<f32>, usize)> = Vec::new();
    for &(old_s, old_e, new_s) in moves {
        let a = sample_index(old_s, rate).min(len);
        let b = sample_index(old_e, rate).min(len);
        let new_a = sample_index(new_s, rate).min(len);
        saved.push((track.samples()[a..b].to_vec(), new_a));
        out[a..b].iter_mut().for_each(|v| *v = 0.0);
    }
    for (audio, new_a) in saved {
        let end = (new_a + audio.len()).min(len);
        out[new_a..end].copy_from_slice(&audio[..end - new_a]);
    }
    Waveform::new(out, rate).expect("relocated track is nonempty")
}

fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Shift each utterance of each listed speaker independently by
/// δ ~ U[−τ, τ] (seeded per utterance), clamped to keep the utterance inside
/// `[0, duration]`. Same-speaker collisions are resolved by re-drawing δ up
/// to 20 times, then by moving to the nearest collision-free position.
pub fn random_shift(
    t: &ConversationTranscript,
    tracks: &BTreeMap<String, Waveform>,
    tau_s: f64,
    speakers: &BTreeSet<String>,
    seed: u64,
) -> Result<PerturbedConversation, PerturbError> {
    if !(tau_s.is_finite() && tau_s >= 0.0) {
        return Err(PerturbError::InvalidInput(format!("bad tau {tau_s}")));
    }
    check_tracks(t, tracks)?;
    let duration = t.duration_s();

    let mut new_utts: Vec<UtteranceSegment> = Vec::new();
    let mut moves_by_speaker: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();

    for speaker in t.speakers() {
        if !speakers.contains(speaker) {
            for u in t.utterances_of(speaker) {
                new_utts.push(u.clone());
            }
            continue;
        }
        let originals: Vec<&UtteranceSegment> = t.utterances_of(speaker).collect();
        let mut placed: Vec<(f64, f64)> = Vec::new();
        let mut moves = Vec::new();
        let mut reverted = false;
        for (i, u) in originals.iter().enumerate() {
            let dur = u.duration_s();
            let max_start = (duration - dur).max(0.0);
            let mut rng = derive_rng_keyed(seed, "perturb.shift", &format!("{speaker}/{i}"));
            let mut accepted: Option<f64> = None;
            let mut last_candidate = u.start_s;
            for _attempt in 0..20 {
                let delta = if tau_s == 0.0 { 0.0 } else { rng.random_range(-tau_s..=tau_s) };
                let cand = (u.start_s + delta).clamp(0.0, max_start);
                last_candidate = cand;
                if placed.iter().all(|&p| !overlaps((cand, cand + dur), p)) {
                    accepted = Some(cand);
                    break;
                }
            }
            let start = match accepted {
                Some(s) => s,
                None => {
                    // nearest collision-free start to the last candidate:
                    // scan the free gaps between already-placed utterances
                    let mut intervals = placed.clone();
                    intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let mut best: Option<f64> = None;
                    let mut gap_start = 0.0f64;
                    let consider = |lo: f64, hi: f64, best: &mut Option<f64>| {
                        if hi - lo >= dur {
                            let pos = last_candidate.clamp(lo, hi - dur);
                            if best.is_none()
                                || (pos - last_candidate).abs()
                                    < (best.unwrap() - last_candidate).abs()
                            {
                                *best = Some(pos);
                            }
                        }
                    };
                    for &(s, e) in &intervals {
                        consider(gap_start, s, &mut best);
                        gap_start = gap_start.max(e);
                    }
                    consider(gap_start, duration, &mut best);
                    match best {
                        Some(s) => s,
                        None => {
                            // no gap fits (pathological fragmentation):
                            // leave this speaker entirely unshifted
                            reverted = true;
                            break;
                        }
                    }
                }
            };
            placed.push((start, start + dur));
            moves.push((u.start_s, u.end_s, start));
        }
        if reverted {
            for u in originals {
                new_utts.push(u.clone());
            }
            continue;
        }
        for (u, &(_, _, start)) in originals.iter().zip(&moves) {
            let mut nu = (*u).clone();
            nu.start_s = start;
            nu.end_s = start + u.duration_s();
            new_utts.push(nu);
        }
        moves_by_speaker.insert(speaker.clone(), moves);
    }

    let transcript =
        ConversationTranscript::new(t.conversation_id().to_string(), duration, new_utts)?;
    let mut out_tracks = BTreeMap::new();
    for (speaker, track) in tracks {
        match moves_by_speaker.get(speaker) {
            Some(moves) => out_tracks.insert(speaker.clone(), relocate_audio(track, moves)),
            None => out_tracks.insert(speaker.clone(), track.clone()),
        };
    }
    Ok(PerturbedConversation { transcript, tracks: out_tracks })
}

/// Compact each listed speaker's utterances leftward: utterance k starts at
/// the cumulative duration of that speaker's utterances before it, removing
/// every within-speaker gap while preserving order and durations.
pub fn shift_all_left(
    t: &ConversationTranscript,
    tracks: &BTreeMap<String, Waveform>,
    speakers: &BTreeSet<String>,
) -> Result<PerturbedConversation, PerturbError> {
    check_tracks(t, tracks)?;
    let mut new_utts: Vec<UtteranceSegment> = Vec::new();
    let mut moves_by_speaker: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();

    for speaker in t.speakers() {
        if !speakers.contains(speaker) {
            for u in t.utterances_of(speaker) {
                new_utts.push(u.clone());
            }
            continue;
        }
        let mut cum = 0.0f64;
        let mut moves = Vec::new();
        for u in t.utterances_of(speaker) {
            let mut nu = u.clone();
            nu.start_s = cum;
            nu.end_s = cum + u.duration_s();
            moves.push((u.start_s, u.end_s, cum));
            cum += u.duration_s();
            new_utts.push(nu);
        }
        moves_by_speaker.insert(speaker.clone(), moves);
    }

    let transcript = ConversationTranscript::new(
        t.conversation_id().to_string(),
        t.duration_s(),
        new_utts,
    )?;
    let mut out_tracks = BTreeMap::new();
    for (speaker, track) in tracks {
        match moves_by_speaker.get(speaker) {
            Some(moves) => out_tracks.insert(speaker.clone(), relocate_audio(track, moves)),
            None => out_tracks.insert(speaker.clone(), track.clone()),
        };
    }
    Ok(PerturbedConversation { transcript, tracks: out_tracks })
}

/// Apply a timing perturbation to a mixture's target conversation and
/// reassemble: components, target, and mixture are rebuilt so the stored
/// decomposition identity holds for the perturbed sample too.
pub fn perturb_mixture(
    sample: &MixtureSample,
    target_transcript: &ConversationTranscript,
    mode: PerturbMode,
    seed: u64,
) -> Result<(MixtureSample, ConversationTranscript), PerturbError> {
    let mut tracks = BTreeMap::new();
    tracks.insert(sample.metadata.reference_speaker_id.clone(), sample.reference.clone());
    for (id, w) in sample.metadata.other_speaker_ids.iter().zip(&sample.others) {
        tracks.insert(id.clone(), w.clone());
    }
    let speakers: BTreeSet<String> = tracks.keys().cloned().collect();

    let perturbed = match mode {
        PerturbMode::RandomShift { tau_s } => {
            random_shift(target_transcript, &tracks, tau_s, &speakers, seed)?
        }
        PerturbMode::ShiftAllLeft => shift_all_left(target_transcript, &tracks, &speakers)?,
    };

    let n = sample.mixture.len();
    let rate = sample.mixture.sample_rate();
    let reference = perturbed.tracks[&sample.metadata.reference_speaker_id].clone();
    let others: Vec<Waveform> = sample
        .metadata
        .other_speaker_ids
        .iter()
        .map(|id| perturbed.tracks[id].clone())
        .collect();

    let mut y = vec![0.0f64; n];
    for (acc, &v) in y.iter_mut().zip(reference.samples()) {
        *acc += v as f64;
    }
    for w in &others {
        for (acc, &v) in y.iter_mut().zip(w.samples()) {
            *acc += v as f64;
        }
    }
    let mut x = y.clone();
    for w in &sample.interference {
        for (acc, &v) in x.iter_mut().zip(w.samples()) {
            *acc += v as f64;
        }
    }
    for (acc, &v) in x.iter_mut().zip(sample.noise.samples()) {
        *acc += v as f64;
    }

    let out = MixtureSample {
        mixture: Waveform::new(x.iter().map(|&v| v as f32).collect(), rate)?,
        reference,
        others,
        interference: sample.interference.clone(),
        noise: sample.noise.clone(),
        target: Waveform::new(y.iter().map(|&v| v as f32).collect(), rate)?,
        embedding: sample.embedding.clone(),
        metadata: sample.metadata.clone(),
    };
    Ok((out, perturbed.transcript))
}
