//! Dataset construction: many mixture samples written to disk with one
//! manifest, split into train/val/test with speaker-disjointness checks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, sample_index, write_wav, Waveform};
use crate::augment::{augment_conversation, AugmentPlan};
use crate::corpus::{
    draw_from_speaker_rng, load_embedding, pseudo_embedding, write_embedding, UtterancePool,
};
use crate::seeding::{derive_rng, derive_rng_keyed};
use crate::transcript::{
    load_transcript, save_transcript, select_segments, ConversationTranscript, SegmentRules,
    TranscriptFormat,
};

use super::{
    choose_reference, mix, sample_interference, select_enrollment, MixInputs, MixParams,
    MixerError, MixtureMetadata, MixtureSample,
};

/// One conversation of the catalog: its timeline plus full-length
/// per-speaker clean tracks.
#[derive(Debug, Clone)]
pub struct ConversationSource {
    pub transcript: ConversationTranscript,
    pub tracks: BTreeMap<String, Waveform>,
}

/// Material the builder draws from.
#[derive(Debug)]
pub struct DatasetInputs<'a> {
    pub catalog: &'a [ConversationSource],
    /// Required when `augment_p > 0`.
    pub replacement_pool: Option<&'a UtterancePool>,
    /// Background noise recordings; empty disables the noise term.
    pub noise: &'a [Waveform],
}

/// One named split drawing from a subset of the catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub count: usize,
    pub catalog_indices: Vec<usize>,
}

/// Everything that determines a dataset build (given the inputs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub splits: Vec<SplitSpec>,
    pub segment_rules: SegmentRules,
    /// Uniform target/interference SNR range in dB.
    pub snr_range_db: (f64, f64),
    /// Uniform speech/noise SNR range in dB; `None` disables noise.
    pub noise_snr_range_db: Option<(f64, f64)>,
    /// Per-speaker replacement probability for augmentation of the target
    /// conversation (0 disables).
    pub augment_p: f64,
    pub min_enrollment_s: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            splits: Vec::new(),
            segment_rules: SegmentRules::default(),
            snr_range_db: (-3.0, 3.0),
            noise_snr_range_db: None,
            augment_p: 0.0,
            min_enrollment_s: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentGroup {
    Reference,
    TargetOther,
    Interference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub speaker_id: String,
    pub path: String,
    pub group: ComponentGroup,
}

/// Manifest record of one stored sample; all paths relative to the
/// manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub split: String,
    pub mixture: String,
    pub target: String,
    pub noise: Option<String>,
    pub enrollment: String,
    pub embedding: String,
    pub components: Vec<ComponentEntry>,
    pub target_transcript: String,
    pub interference_transcript: String,
    pub reference_speaker_id: String,
    pub conversation_id: String,
    pub interference_id: String,
    pub target_interference_snr_db: f64,
    pub target_noise_snr_db: Option<f64>,
    pub interference_gain: f64,
    pub noise_gain: f64,
    pub renorm_gain: f64,
    pub seed: u64,
    /// Augmentation record: original speaker → pool speaker.
    pub replaced_speakers: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, MixerError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| MixerError::Manifest(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), MixerError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| MixerError::Manifest(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

fn speakers_of_split(catalog: &[ConversationSource], split: &SplitSpec) -> BTreeSet<String> {
    let mut all = BTreeSet::new();
    for &i in &split.catalog_indices {
        all.extend(catalog[i].transcript.speakers().iter().cloned());
    }
    all
}

fn validate_spec(inputs: &DatasetInputs<'_>, spec: &DatasetSpec) -> Result<(), MixerError> {
    if spec.splits.is_empty() {
        return Err(MixerError::InvalidSpec("no splits".into()));
    }
    let mut names = BTreeSet::new();
    for s in &spec.splits {
        if !names.insert(s.name.as_str()) {
            return Err(MixerError::InvalidSpec(format!("duplicate split name {}", s.name)));
        }
        for &i in &s.catalog_indices {
            if i >= inputs.catalog.len() {
                return Err(MixerError::InvalidSpec(format!(
                    "split {} references conversation {i}, catalog has {}",
                    s.name,
                    inputs.catalog.len()
                )));
            }
        }
        if s.count > 0 && s.catalog_indices.len() < 2 {
            return Err(MixerError::InvalidSpec(format!(
                "split {} needs at least two conversations to pair target and interference",
                s.name
            )));
        }
    }
    if !(0.0..=1.0).contains(&spec.augment_p) {
        return Err(MixerError::InvalidSpec(format!("augment_p {} outside [0, 1]", spec.augment_p)));
    }
    if spec.augment_p > 0.0 && inputs.replacement_pool.is_none() {
        return Err(MixerError::InvalidSpec(
            "augment_p > 0 requires a replacement pool".into(),
        ));
    }
    if spec.snr_range_db.0 > spec.snr_range_db.1 {
        return Err(MixerError::InvalidSpec("empty SNR range".into()));
    }
    if let Some((lo, hi)) = spec.noise_snr_range_db {
        if lo > hi {
            return Err(MixerError::InvalidSpec("empty noise SNR range".into()));
        }
        if inputs.noise.is_empty() {
            return Err(MixerError::InvalidSpec(
                "noise SNR range given but no noise recordings provided".into(),
            ));
        }
    }
    // Held-out speakers: any split named "test" must share no speaker with
    // the other splits.
    if let Some(test) = spec.splits.iter().find(|s| s.name == "test") {
        let test_speakers = speakers_of_split(inputs.catalog, test);
        for s in spec.splits.iter().filter(|s| s.name != "test") {
            let overlap: Vec<String> = speakers_of_split(inputs.catalog, s)
                .intersection(&test_speakers)
                .cloned()
                .collect();
            if !overlap.is_empty() {
                return Err(MixerError::SpeakerLeak(format!(
                    "speakers {:?} appear in both split {} and split test",
                    overlap, s.name
                )));
            }
        }
    }
    Ok(())
}

fn clip_track(w: &Waveform, start_s: f64, n_win: usize, name: &str) -> Result<Waveform, MixerError> {
    let rate = w.sample_rate();
    let a = sample_index(start_s, rate);
    let b = a + n_win;
    if b > w.len() {
        return Err(MixerError::TrackLengthMismatch {
            name: name.to_string(),
            found: w.len(),
            expected: b,
        });
    }
    Ok(Waveform::new(w.samples()[a..b].to_vec(), rate)?)
}

fn fit_noise(noise: &Waveform, n_win: usize, rng: &mut ChaCha8Rng) -> Waveform {
    let src = noise.samples();
    if src.len() >= n_win {
        let offset = rng.random_range(0..=src.len() - n_win);
        Waveform::new(src[offset..offset + n_win].to_vec(), noise.sample_rate())
            .expect("noise window is nonempty")
    } else {
        let mut out = Vec::with_capacity(n_win);
        while out.len() < n_win {
            let take = (n_win - out.len()).min(src.len());
            out.extend_from_slice(&src[..take]);
        }
        Waveform::new(out, noise.sample_rate()).expect("tiled noise is nonempty")
    }
}

struct SplitPlan<'a> {
    spec: &'a SplitSpec,
    /// Catalog indices with at least one qualifying window.
    windows: BTreeMap<usize, Vec<f64>>,
    /// Indices eligible as the target conversation (some speaker-disjoint
    /// partner with windows exists).
    valid_targets: Vec<usize>,
}

fn plan_split<'a>(
    inputs: &DatasetInputs<'_>,
    spec: &DatasetSpec,
    split: &'a SplitSpec,
) -> Result<SplitPlan<'a>, MixerError> {
    let mut windows = BTreeMap::new();
    for &i in &split.catalog_indices {
        let starts = select_segments(&inputs.catalog[i].transcript, &spec.segment_rules, spec.seed);
        if !starts.is_empty() {
            windows.insert(i, starts);
        }
    }
    let mut valid_targets = Vec::new();
    for (&i, _) in &windows {
        let t = &inputs.catalog[i].transcript;
        let has_partner = windows.keys().any(|&j| {
            j != i
                && inputs.catalog[j]
                    .transcript
                    .speakers()
                    .intersection(t.speakers())
                    .next()
                    .is_none()
        });
        if has_partner {
            valid_targets.push(i);
        }
    }
    if split.spec_needs_samples() && valid_targets.is_empty() {
        return Err(MixerError::NoDisjointConversation);
    }
    Ok(SplitPlan { spec: split, windows, valid_targets })
}

impl SplitSpec {
    fn spec_needs_samples(&self) -> bool {
        self.count > 0
    }
}

fn build_one(
    inputs: &DatasetInputs<'_>,
    spec: &DatasetSpec,
    plan: &SplitPlan<'_>,
    k: usize,
    out_dir: &Path,
) -> Result<SampleEntry, MixerError> {
    let id = format!("{}_{k:05}", plan.spec.name);
    let sample_seed = derive_rng_keyed(spec.seed, "dataset.sample", &id).random::<u64>();
    let mut rng = derive_rng(sample_seed, "sample.assemble", 0);

    // Target conversation and window.
    let tidx = plan.valid_targets[rng.random_range(0..plan.valid_targets.len())];
    let source = &inputs.catalog[tidx];
    let starts = &plan.windows[&tidx];
    let a = starts[rng.random_range(0..starts.len())];
    let b = a + spec.segment_rules.seg_len_s;
    let n_win = sample_index(spec.segment_rules.seg_len_s, crate::audio::PIPELINE_SAMPLE_RATE);

    let t_win = source.transcript.clip_window(a, b, format!("{id}.target"))?;
    let mut target_tracks = BTreeMap::new();
    for speaker in t_win.speakers() {
        let full = source
            .tracks
            .get(speaker)
            .ok_or_else(|| MixerError::UnknownSpeaker(speaker.clone()))?;
        target_tracks.insert(speaker.clone(), clip_track(full, a, n_win, speaker)?);
    }

    // Timing-preserving augmentation of the target conversation.
    let mut replaced_speakers = BTreeMap::new();
    if spec.augment_p > 0.0 {
        let pool = inputs.replacement_pool.expect("validated: pool present");
        let outcome = augment_conversation(
            &t_win,
            &target_tracks,
            &AugmentPlan { p: spec.augment_p, replacement_pool: pool, seed: sample_seed },
        )?;
        target_tracks = outcome.tracks;
        replaced_speakers = outcome.replacement_ids;
    }

    // Interference conversation and window (speaker-disjoint).
    let split_transcripts: Vec<ConversationTranscript> = plan
        .windows
        .keys()
        .map(|&i| inputs.catalog[i].transcript.clone())
        .collect();
    let split_indices: Vec<usize> = plan.windows.keys().copied().collect();
    let (local_idx, (ia, ib)) = sample_interference(
        &split_transcripts,
        &source.transcript,
        &spec.segment_rules,
        sample_seed,
    )?;
    let iidx = split_indices[local_idx];
    let isource = &inputs.catalog[iidx];
    let i_win = isource.transcript.clip_window(ia, ib, format!("{id}.inter"))?;
    let mut inter_tracks = BTreeMap::new();
    for speaker in i_win.speakers() {
        let full = isource
            .tracks
            .get(speaker)
            .ok_or_else(|| MixerError::UnknownSpeaker(speaker.clone()))?;
        inter_tracks.insert(speaker.clone(), clip_track(full, ia, n_win, speaker)?);
    }

    // Reference, enrollment, embedding. If augmentation replaced the
    // reference speaker, identity material comes from the pool voice.
    let reference = choose_reference(&t_win, (0.0, t_win.duration_s()), sample_seed)?;
    let (enrollment, embedding) = match replaced_speakers.get(&reference) {
        Some(pool_id) => {
            let pool = inputs.replacement_pool.expect("validated: pool present");
            let mut erng = derive_rng(sample_seed, "sample.enrollment", 0);
            let audio = draw_from_speaker_rng(pool, pool_id, spec.min_enrollment_s, &mut erng)?;
            (audio, pseudo_embedding(pool_id, spec.seed))
        }
        None => {
            let audio = select_enrollment(
                &source.transcript,
                &source.tracks,
                &reference,
                (a, b),
                spec.min_enrollment_s,
                sample_seed,
            )?;
            (audio, pseudo_embedding(&reference, spec.seed))
        }
    };

    // SNRs and noise.
    let snr = rng.random_range(spec.snr_range_db.0..=spec.snr_range_db.1);
    let (noise, noise_snr) = match spec.noise_snr_range_db {
        Some((lo, hi)) if !inputs.noise.is_empty() => {
            let pick = &inputs.noise[rng.random_range(0..inputs.noise.len())];
            (Some(fit_noise(pick, n_win, &mut rng)), Some(rng.random_range(lo..=hi)))
        }
        _ => (None, None),
    };

    let sample = mix(
        &MixInputs {
            target_tracks: &target_tracks,
            reference_speaker: &reference,
            interference_tracks: &inter_tracks,
            noise: noise.as_ref(),
            embedding: &embedding,
        },
        &MixParams {
            target_interference_snr_db: snr,
            target_noise_snr_db: noise_snr,
            sample_id: id.clone(),
            conversation_id: source.transcript.conversation_id().to_string(),
            interference_id: isource.transcript.conversation_id().to_string(),
            seed: sample_seed,
        },
    )?;
    sample.validate()?;

    save_sample(
        out_dir,
        &plan.spec.name,
        &sample,
        &enrollment,
        &t_win,
        &i_win,
        noise.is_some(),
        replaced_speakers,
    )
}

/// Write one assembled sample to `out_dir/{id}/` (WAV components, embedding,
/// transcripts) and return its manifest entry. Usable both when building a
/// dataset and when re-exporting a transformed sample (e.g. after timing
/// perturbation).
#[allow(clippy::too_many_arguments)]
pub fn save_sample(
    out_dir: &Path,
    split: &str,
    sample: &MixtureSample,
    enrollment: &Waveform,
    target_transcript: &ConversationTranscript,
    interference_transcript: &ConversationTranscript,
    has_noise: bool,
    replaced_speakers: BTreeMap<String, String>,
) -> Result<SampleEntry, MixerError> {
    let id = sample.metadata.sample_id.clone();
    let dir = out_dir.join(&id);
    std::fs::create_dir_all(&dir)?;
    let rel = |name: &str| format!("{id}/{name}");
    write_wav(&sample.mixture, &dir.join("mixture.wav"))?;
    write_wav(&sample.target, &dir.join("target.wav"))?;
    write_wav(&sample.reference, &dir.join("reference.wav"))?;
    let mut components = vec![ComponentEntry {
        speaker_id: sample.metadata.reference_speaker_id.clone(),
        path: rel("reference.wav"),
        group: ComponentGroup::Reference,
    }];
    for (i, w) in sample.others.iter().enumerate() {
        let name = format!("conv_{i:02}.wav");
        write_wav(w, &dir.join(&name))?;
        components.push(ComponentEntry {
            speaker_id: sample.metadata.other_speaker_ids[i].clone(),
            path: rel(&name),
            group: ComponentGroup::TargetOther,
        });
    }
    for (i, w) in sample.interference.iter().enumerate() {
        let name = format!("inter_{i:02}.wav");
        write_wav(w, &dir.join(&name))?;
        components.push(ComponentEntry {
            speaker_id: sample.metadata.interference_speaker_ids[i].clone(),
            path: rel(&name),
            group: ComponentGroup::Interference,
        });
    }
    let noise_rel = if has_noise {
        write_wav(&sample.noise, &dir.join("noise.wav"))?;
        Some(rel("noise.wav"))
    } else {
        None
    };
    write_wav(enrollment, &dir.join("enrollment.wav"))?;
    write_embedding(&sample.embedding, &dir.join("embedding.f32"))?;
    save_transcript(target_transcript, &dir.join("target_transcript.json"))?;
    save_transcript(interference_transcript, &dir.join("interference_transcript.json"))?;

    Ok(SampleEntry {
        id: id.clone(),
        split: split.to_string(),
        mixture: rel("mixture.wav"),
        target: rel("target.wav"),
        noise: noise_rel,
        enrollment: rel("enrollment.wav"),
        embedding: rel("embedding.f32"),
        components,
        target_transcript: rel("target_transcript.json"),
        interference_transcript: rel("interference_transcript.json"),
        reference_speaker_id: sample.metadata.reference_speaker_id.clone(),
        conversation_id: sample.metadata.conversation_id.clone(),
        interference_id: sample.metadata.interference_id.clone(),
        target_interference_snr_db: sample.metadata.target_interference_snr_db,
        target_noise_snr_db: sample.metadata.target_noise_snr_db,
        interference_gain: sample.metadata.interference_gain,
        noise_gain: sample.metadata.noise_gain,
        renorm_gain: sample.metadata.renorm_gain,
        seed: sample.metadata.seed,
        replaced_speakers,
    })
}

/// Build every split of a dataset under `out_dir` and write
/// `out_dir/manifest.json`. Samples are constructed in parallel (each from
/// its own derived seed); the manifest lists them sorted by id.
pub fn build_dataset(
    inputs: &DatasetInputs<'_>,
    spec: &DatasetSpec,
    out_dir: &Path,
) -> Result<DatasetManifest, MixerError> {
    validate_spec(inputs, spec)?;
    std::fs::create_dir_all(out_dir)?;

    let mut jobs: Vec<(SplitPlan<'_>, usize)> = Vec::new();
    for split in &spec.splits {
        let plan = plan_split(inputs, spec, split)?;
        for k in 0..split.count {
            // SplitPlan borrows only split; rebuild cheaply per job instead
            // of sharing, so jobs stay independent for rayon.
            let plan_k = SplitPlan {
                spec: plan.spec,
                windows: plan.windows.clone(),
                valid_targets: plan.valid_targets.clone(),
            };
            jobs.push((plan_k, k));
        }
    }

    let entries: Result<Vec<SampleEntry>, MixerError> = jobs
        .par_iter()
        .map(|(plan, k)| build_one(inputs, spec, plan, *k, out_dir))
        .collect();
    let mut samples = entries?;
    samples.sort_by(|x, y| x.id.cmp(&y.id));

    let manifest = DatasetManifest { samples };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Reload a stored sample and reassemble its in-memory form.
pub fn load_sample(root: &Path, entry: &SampleEntry) -> Result<MixtureSample, MixerError> {
    let mixture = read_wav(&root.join(&entry.mixture))?;
    let target = read_wav(&root.join(&entry.target))?;
    let n = mixture.len();
    let noise = match &entry.noise {
        Some(p) => read_wav(&root.join(p))?,
        None => Waveform::zeros(n, mixture.sample_rate()),
    };
    let embedding = load_embedding(&root.join(&entry.embedding))?;

    let mut reference = None;
    let mut others = Vec::new();
    let mut other_ids = Vec::new();
    let mut interference = Vec::new();
    let mut inter_ids = Vec::new();
    for c in &entry.components {
        let w = read_wav(&root.join(&c.path))?;
        match c.group {
            ComponentGroup::Reference => reference = Some(w),
            ComponentGroup::TargetOther => {
                others.push(w);
                other_ids.push(c.speaker_id.clone());
            }
            ComponentGroup::Interference => {
                interference.push(w);
                inter_ids.push(c.speaker_id.clone());
            }
        }
    }
    let reference = reference
        .ok_or_else(|| MixerError::Manifest(format!("{}: no reference component", entry.id)))?;

    Ok(MixtureSample {
        mixture,
        reference,
        others,
        interference,
        noise,
        target,
        embedding,
        metadata: MixtureMetadata {
            sample_id: entry.id.clone(),
            reference_speaker_id: entry.reference_speaker_id.clone(),
            conversation_id: entry.conversation_id.clone(),
            interference_id: entry.interference_id.clone(),
            other_speaker_ids: other_ids,
            interference_speaker_ids: inter_ids,
            target_interference_snr_db: entry.target_interference_snr_db,
            target_noise_snr_db: entry.target_noise_snr_db,
            interference_gain: entry.interference_gain,
            noise_gain: entry.noise_gain,
            renorm_gain: entry.renorm_gain,
            seed: entry.seed,
        },
    })
}

/// Load the transcripts stored with a sample (target, interference).
pub fn load_sample_transcripts(
    root: &Path,
    entry: &SampleEntry,
) -> Result<(ConversationTranscript, ConversationTranscript), MixerError> {
    let t = load_transcript(&root.join(&entry.target_transcript), TranscriptFormat::Json)?;
    let i = load_transcript(&root.join(&entry.interference_transcript), TranscriptFormat::Json)?;
    Ok((t, i))
}
