//! Mixture assembly: target conversation + interfering conversation + noise.
//!
//! A mixture sample decomposes as `x = s0 + Σ s_conv + Σ s_inter + n`,
//! where `s0` is the reference speaker's clean track, `s_conv` are the other
//! speakers of the *target* conversation, `s_inter` the speakers of a
//! speaker-disjoint *interfering* conversation, and `n` optional background
//! noise. The extraction target is `y = s0 + Σ s_conv` — everyone in the
//! reference speaker's conversation.
//!
//! Group powers are measured over each group's nonzero-sample support (not
//! the full window) so silence padding does not bias the realized SNR; the
//! interference and noise groups are rescaled to hit the requested SNRs, and
//! when the assembled mixture would clip, one global gain (recorded in the
//! metadata) renormalizes every component so the decomposition stays exact.

mod dataset;

pub use dataset::{
    build_dataset, load_sample, load_sample_transcripts, save_sample, ComponentEntry,
    ComponentGroup, ConversationSource, DatasetInputs, DatasetManifest, DatasetSpec, SampleEntry,
    SplitSpec,
};

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::audio::{sample_index, AudioError, Waveform};
use crate::augment::AugmentError;
use crate::corpus::{CorpusError, SpeakerEmbedding};
use crate::seeding::derive_rng;
use crate::transcript::{
    speech_activity, select_segments, ConversationTranscript, SegmentRules, TranscriptError,
};

/// Absolute tolerance for the stored f32 sum identities.
pub const SUM_IDENTITY_TOL: f32 = 1e-6;

#[derive(Debug, Error)]
pub enum MixerError {
    #[error("no speaker is active in the window")]
    NoActiveSpeaker,
    #[error("only {available_s:.2} s of enrollment speech available, need {needed_s:.2} s")]
    InsufficientEnrollment { available_s: f64, needed_s: f64 },
    #[error("no conversation in the catalog has disjoint speakers and a qualifying window")]
    NoDisjointConversation,
    #[error("the {0} group is silent and cannot be rescaled to an SNR")]
    SilentGroup(String),
    #[error("speaker sets must be disjoint: {0}")]
    SpeakerLeak(String),
    #[error("unknown speaker {0}")]
    UnknownSpeaker(String),
    #[error("track for {name} has {found} samples, expected {expected}")]
    TrackLengthMismatch { name: String, found: usize, expected: usize },
    #[error("invalid mixture sample: {0}")]
    InvalidSample(String),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Manifest(String),
}

/// Bookkeeping carried with every mixture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureMetadata {
    pub sample_id: String,
    pub reference_speaker_id: String,
    pub conversation_id: String,
    pub interference_id: String,
    /// Other target-conversation speakers, ordered as the component list.
    pub other_speaker_ids: Vec<String>,
    /// Interference speakers, ordered as the component list.
    pub interference_speaker_ids: Vec<String>,
    pub target_interference_snr_db: f64,
    pub target_noise_snr_db: Option<f64>,
    /// Amplitude gain applied to each interference track (before renorm).
    pub interference_gain: f64,
    /// Amplitude gain applied to the noise track (before renorm).
    pub noise_gain: f64,
    /// Global anti-clipping gain applied to every component (1.0 = none).
    pub renorm_gain: f64,
    pub seed: u64,
}

/// One assembled mixture with its exact decomposition.
#[derive(Debug, Clone)]
pub struct MixtureSample {
    /// x: what the extractor hears.
    pub mixture: Waveform,
    /// s0: the reference speaker's clean (scaled) track.
    pub reference: Waveform,
    /// s_conv: remaining target-conversation speaker tracks.
    pub others: Vec<Waveform>,
    /// s_inter: interfering-conversation speaker tracks (post gain).
    pub interference: Vec<Waveform>,
    /// n: background noise (all-zero when absent).
    pub noise: Waveform,
    /// y = s0 + Σ s_conv: the extraction target.
    pub target: Waveform,
    pub embedding: SpeakerEmbedding,
    pub metadata: MixtureMetadata,
}

impl MixtureSample {
    /// Check the decomposition invariants of the stored (f32) sample.
    pub fn validate(&self) -> Result<(), MixerError> {
        let n = self.mixture.len();
        let rate = self.mixture.sample_rate();
        let mut components: Vec<(&str, &Waveform)> =
            vec![("reference", &self.reference), ("noise", &self.noise), ("target", &self.target)];
        for (i, w) in self.others.iter().enumerate() {
            components.push(("conversation", w));
            if w.len() != n {
                return Err(MixerError::InvalidSample(format!("conv track {i} length")));
            }
        }
        for w in &self.interference {
            components.push(("interference", w));
        }
        for (name, w) in &components {
            if w.len() != n || w.sample_rate() != rate {
                return Err(MixerError::InvalidSample(format!(
                    "{name} track has {} samples at {} Hz, mixture has {n} at {rate} Hz",
                    w.len(),
                    w.sample_rate()
                )));
            }
        }
        if !self.reference.samples().iter().any(|&v| v != 0.0) {
            return Err(MixerError::InvalidSample("reference speaker is silent".into()));
        }
        for i in 0..n {
            let mut sum = self.reference.samples()[i] as f64 + self.noise.samples()[i] as f64;
            let mut y = self.reference.samples()[i] as f64;
            for w in &self.others {
                sum += w.samples()[i] as f64;
                y += w.samples()[i] as f64;
            }
            for w in &self.interference {
                sum += w.samples()[i] as f64;
            }
            let x = self.mixture.samples()[i] as f64;
            if (x - sum).abs() > SUM_IDENTITY_TOL as f64 {
                return Err(MixerError::InvalidSample(format!(
                    "mixture differs from component sum by {} at sample {i}",
                    (x - sum).abs()
                )));
            }
            let yt = self.target.samples()[i] as f64;
            if (yt - y).abs() > SUM_IDENTITY_TOL as f64 {
                return Err(MixerError::InvalidSample(format!(
                    "target differs from conversation sum by {} at sample {i}",
                    (yt - y).abs()
                )));
            }
        }
        Ok(())
    }
}

/// Pick the reference speaker uniformly among speakers active in the window.
pub fn choose_reference(
    t: &ConversationTranscript,
    window: (f64, f64),
    seed: u64,
) -> Result<String, MixerError> {
    let act = speech_activity(t, window.0, window.1)
        .map_err(|e| MixerError::InvalidSpec(e.to_string()))?;
    let active: Vec<&String> = act.active_speakers.iter().collect();
    if active.is_empty() {
        return Err(MixerError::NoActiveSpeaker);
    }
    let mut rng = derive_rng(seed, "choose_reference", 0);
    Ok(active[rng.random_range(0..active.len())].clone())
}

/// Concatenate the reference speaker's clean speech from outside
/// `exclude_window` and crop it to `min_len_s` at a seeded offset.
///
/// Utterances straddling the window boundary contribute only their outside
/// portion, so no enrollment sample ever comes from inside the window.
pub fn select_enrollment(
    t: &ConversationTranscript,
    tracks: &BTreeMap<String, Waveform>,
    reference: &str,
    exclude_window: (f64, f64),
    min_len_s: f64,
    seed: u64,
) -> Result<Waveform, MixerError> {
    if !(min_len_s.is_finite() && min_len_s > 0.0) {
        return Err(MixerError::InvalidSpec(format!("bad enrollment length {min_len_s}")));
    }
    let track = tracks
        .get(reference)
        .ok_or_else(|| MixerError::UnknownSpeaker(reference.to_string()))?;
    let (a, b) = exclude_window;
    let rate = track.sample_rate();
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    for u in t.utterances_of(reference) {
        for (s, e) in [(u.start_s, u.end_s.min(a)), (u.start_s.max(b), u.end_s)] {
            if e > s {
                let i = sample_index(s, rate);
                let j = sample_index(e, rate).min(track.len());
                if j > i {
                    pieces.push((i, j));
                }
            }
        }
    }
    let available: usize = pieces.iter().map(|(i, j)| j - i).sum();
    let needed = sample_index(min_len_s, rate);
    if available < needed {
        return Err(MixerError::InsufficientEnrollment {
            available_s: available as f64 / rate as f64,
            needed_s: min_len_s,
        });
    }
    let mut concat = Vec::with_capacity(available);
    for (i, j) in pieces {
        concat.extend_from_slice(&track.samples()[i..j]);
    }
    let mut rng = derive_rng(seed, "select_enrollment", 0);
    let offset = rng.random_range(0..=available - needed);
    Ok(Waveform::new(concat[offset..offset + needed].to_vec(), rate)?)
}

/// Pick an interfering conversation (catalog index) and a qualifying window,
/// requiring its speaker set to be disjoint from the target's.
pub fn sample_interference(
    catalog: &[ConversationTranscript],
    target: &ConversationTranscript,
    rules: &SegmentRules,
    seed: u64,
) -> Result<(usize, (f64, f64)), MixerError> {
    let mut candidates: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, t) in catalog.iter().enumerate() {
        if t.speakers().intersection(target.speakers()).next().is_some() {
            continue;
        }
        let starts = select_segments(t, rules, seed);
        if !starts.is_empty() {
            candidates.push((i, starts));
        }
    }
    if candidates.is_empty() {
        return Err(MixerError::NoDisjointConversation);
    }
    let mut rng = derive_rng(seed, "sample_interference", 0);
    let (idx, starts) = &candidates[rng.random_range(0..candidates.len())];
    let start = starts[rng.random_range(0..starts.len())];
    Ok((*idx, (start, start + rules.seg_len_s)))
}

/// Inputs to [`mix`]: window-clipped per-speaker tracks plus identity info.
#[derive(Debug)]
pub struct MixInputs<'a> {
    pub target_tracks: &'a BTreeMap<String, Waveform>,
    pub reference_speaker: &'a str,
    pub interference_tracks: &'a BTreeMap<String, Waveform>,
    pub noise: Option<&'a Waveform>,
    pub embedding: &'a SpeakerEmbedding,
}

/// Requested SNRs and bookkeeping recorded into the sample metadata.
#[derive(Debug, Clone)]
pub struct MixParams {
    pub target_interference_snr_db: f64,
    pub target_noise_snr_db: Option<f64>,
    pub sample_id: String,
    pub conversation_id: String,
    pub interference_id: String,
    /// Recorded for provenance; mixing itself is deterministic given inputs.
    pub seed: u64,
}

/// Mean power over the nonzero-sample support; `None` when silent.
fn support_power(x: &[f64]) -> Option<f64> {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for &v in x {
        if v != 0.0 {
            sum += v * v;
            n += 1;
        }
    }
    if n == 0 || sum <= 0.0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

fn to_f32(v: &[f64], rate: u32) -> Waveform {
    Waveform::new(v.iter().map(|&x| x as f32).collect(), rate).expect("nonempty scaled track")
}

/// Assemble a mixture: rescale the interference group to the requested
/// target/interference SNR, the noise against the combined speech, and
/// renormalize everything by one gain if the mixture would clip.
pub fn mix(inputs: &MixInputs<'_>, params: &MixParams) -> Result<MixtureSample, MixerError> {
    let reference = inputs.reference_speaker;
    let ref_track = inputs
        .target_tracks
        .get(reference)
        .ok_or_else(|| MixerError::UnknownSpeaker(reference.to_string()))?;
    let n = ref_track.len();
    let rate = ref_track.sample_rate();

    if let Some(shared) = inputs
        .target_tracks
        .keys()
        .find(|k| inputs.interference_tracks.contains_key(*k))
    {
        return Err(MixerError::SpeakerLeak(format!(
            "{shared} appears in both the target and interference conversations"
        )));
    }
    for (name, w) in inputs
        .target_tracks
        .iter()
        .chain(inputs.interference_tracks.iter())
    {
        if w.len() != n {
            return Err(MixerError::TrackLengthMismatch {
                name: name.clone(),
                found: w.len(),
                expected: n,
            });
        }
    }
    if let Some(nw) = inputs.noise {
        if nw.len() != n {
            return Err(MixerError::TrackLengthMismatch {
                name: "noise".into(),
                found: nw.len(),
                expected: n,
            });
        }
    }

    // Group sums in f64.
    let mut y_raw = vec![0.0f64; n];
    for w in inputs.target_tracks.values() {
        for (acc, &v) in y_raw.iter_mut().zip(w.samples()) {
            *acc += v as f64;
        }
    }
    let mut i_raw = vec![0.0f64; n];
    for w in inputs.interference_tracks.values() {
        for (acc, &v) in i_raw.iter_mut().zip(w.samples()) {
            *acc += v as f64;
        }
    }

    let p_target =
        support_power(&y_raw).ok_or_else(|| MixerError::SilentGroup("target".into()))?;
    let p_inter =
        support_power(&i_raw).ok_or_else(|| MixerError::SilentGroup("interference".into()))?;
    let g_i = 10f64.powf(-params.target_interference_snr_db / 20.0) * (p_target / p_inter).sqrt();

    let noise_gain = match (inputs.noise, params.target_noise_snr_db) {
        (Some(nw), Some(snr_n)) => {
            let speech: Vec<f64> = y_raw
                .iter()
                .zip(&i_raw)
                .map(|(&y, &i)| y + g_i * i)
                .collect();
            let p_speech =
                support_power(&speech).ok_or_else(|| MixerError::SilentGroup("speech".into()))?;
            let noise_f64: Vec<f64> = nw.samples().iter().map(|&v| v as f64).collect();
            let p_noise =
                support_power(&noise_f64).ok_or_else(|| MixerError::SilentGroup("noise".into()))?;
            10f64.powf(-snr_n / 20.0) * (p_speech / p_noise).sqrt()
        }
        (None, Some(_)) => return Err(MixerError::SilentGroup("noise".into())),
        (Some(_), None) => 1.0,
        (None, None) => 1.0,
    };

    // Assemble and renormalize against clipping.
    let mut x_raw = vec![0.0f64; n];
    for i in 0..n {
        let noise_v = inputs.noise.map_or(0.0, |nw| nw.samples()[i] as f64);
        x_raw[i] = y_raw[i] + g_i * i_raw[i] + noise_gain * noise_v;
    }
    let peak = x_raw.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let renorm = if peak > 1.0 { 1.0 / peak } else { 1.0 };

    let scale_track = |w: &Waveform, g: f64| -> Waveform {
        to_f32(&w.samples().iter().map(|&v| v as f64 * g).collect::<Vec<_>>(), rate)
    };

    let reference_out = scale_track(ref_track, renorm);
    let mut other_ids = Vec::new();
    let mut others = Vec::new();
    for (id, w) in inputs.target_tracks {
        if id != reference {
            other_ids.push(id.clone());
            others.push(scale_track(w, renorm));
        }
    }
    let mut inter_ids = Vec::new();
    let mut interference = Vec::new();
    for (id, w) in inputs.interference_tracks {
        inter_ids.push(id.clone());
        interference.push(scale_track(w, g_i * renorm));
    }
    let noise_out = match inputs.noise {
        Some(nw) => scale_track(nw, noise_gain * renorm),
        None => Waveform::zeros(n, rate),
    };
    let target_out = to_f32(&y_raw.iter().map(|&v| v * renorm).collect::<Vec<_>>(), rate);
    let mixture = to_f32(&x_raw.iter().map(|&v| v * renorm).collect::<Vec<_>>(), rate);

    let sample = MixtureSample {
        mixture,
        reference: reference_out,
        others,
        interference,
        noise: noise_out,
        target: target_out,
        embedding: inputs.embedding.clone(),
        metadata: MixtureMetadata {
            sample_id: params.sample_id.clone(),
            reference_speaker_id: reference.to_string(),
            conversation_id: params.conversation_id.clone(),
            interference_id: params.interference_id.clone(),
            other_speaker_ids: other_ids,
            interference_speaker_ids: inter_ids,
            target_interference_snr_db: params.target_interference_snr_db,
            target_noise_snr_db: params.target_noise_snr_db,
            interference_gain: g_i,
            noise_gain,
            renorm_gain: renorm,
            seed: params.seed,
        },
    };
    Ok(sample)
}

/// Measured target/interference SNR of a stored sample, over each group's
/// nonzero support, in dB.
pub fn measured_interference_snr_db(sample: &MixtureSample) -> Option<f64> {
    let n = sample.mixture.len();
    let mut y = vec![0.0f64; n];
    for (acc, &v) in y.iter_mut().zip(sample.reference.samples()) {
        *acc += v as f64;
    }
    for w in &sample.others {
        for (acc, &v) in y.iter_mut().zip(w.samples()) {
            *acc += v as f64;
        }
    }
    let mut i_sum = vec![0.0f64; n];
    for w in &sample.interference {
        for (acc, &v) in i_sum.iter_mut().zip(w.samples()) {
            *acc += v as f64;
        }
    }
    let p_t = support_power(&y)?;
    let p_i = support_power(&i_sum)?;
    Some(10.0 * (p_t / p_i).log10())
}
