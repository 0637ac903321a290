//! Acceptance gate: one sequential test that exercises every guaranteed
//! behavior of the pipeline at its stated tolerance and prints one
//! PASS/FAIL line per criterion. Run with `--nocapture` to watch progress:
//!
//! ```text
//! cargo test -p tce-cli --test acceptance -- --nocapture
//! ```
//!
//! While debugging, `TCE_ACCEPTANCE_ONLY=4,10` (comma-separated criterion
//! numbers) runs a subset; the unset default always runs everything.

mod common;

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tce_core::audio::{istft, sample_index, stft, StftConfig, Waveform, PIPELINE_SAMPLE_RATE};
use tce_core::augment::{augment_conversation, synth_conversation, AugmentPlan, TurnTakingStats};
use tce_core::corpus::{pseudo_embedding, UtterancePool};
use tce_core::metrics::{incorrect_target_ratio, si_sdr, snr, TargetComparison};
use tce_core::mixer::{measured_interference_snr_db, mix, MixInputs, MixParams, MixtureSample};
use tce_core::net::modules::{
    film, global_module, local_module, multi_head_attention, FilmParams, GlobalParams, LocalParams,
};
use tce_core::net::weights::{Tensor, WeightReader, WeightStore};
use tce_core::net::{forward, rtf_bench, GlobalVariant, ModelConfig};
use tce_core::perturb::{perturb_mixture, shift_all_left, PerturbMode};
use tce_core::seeding::derive_rng_keyed;
use tce_core::transcript::{overlap_ratio, ConversationTranscript, UtteranceSegment};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

const RATE: u32 = PIPELINE_SAMPLE_RATE;

fn inf_norm_diff(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch: {} vs {}", a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .fold(0.0, f64::max)
}

fn random_samples(rng: &mut impl Rng, n: usize, amp: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

fn random_waveform(rng: &mut impl Rng, n: usize, amp: f32) -> Waveform {
    Waveform::new(random_samples(rng, n, amp), RATE).expect("random waveform")
}

/// In-memory utterance pool: speakers `p{lo:02}..p{hi:02}`, two 1-second
/// clips each.
fn memory_pool(seed: u64, lo: usize, hi: usize) -> UtterancePool {
    let mut speakers = BTreeMap::new();
    for s in lo..hi {
        let id = format!("p{s:02}");
        let clips: Vec<Vec<f32>> = (0..2)
            .map(|c| {
                let mut rng = derive_rng_keyed(seed, "acceptance.pool", &format!("{id}/{c}"));
                random_samples(&mut rng, RATE as usize, 0.3)
            })
            .collect();
        speakers.insert(id, clips);
    }
    UtterancePool::from_memory("zz", speakers)
}

/// Sorted multiset of utterance timing bits, ignoring speaker identity.
fn timing_key(t: &ConversationTranscript) -> Vec<(u64, u64)> {
    let mut v: Vec<(u64, u64)> =
        t.utterances().iter().map(|u| (u.start_s.to_bits(), u.end_s.to_bits())).collect();
    v.sort_unstable();
    v
}

/// Sorted multiset of (speaker, start bits, end bits).
fn speaker_timing_key(t: &ConversationTranscript) -> Vec<(String, u64, u64)> {
    let mut v: Vec<(String, u64, u64)> = t
        .utterances()
        .iter()
        .map(|u| (u.speaker_id.clone(), u.start_s.to_bits(), u.end_s.to_bits()))
        .collect();
    v.sort_unstable();
    v
}

/// ∞-norm of `mixture − (reference + Σ others + Σ interference + noise)`,
/// summed in f64 over the stored f32 component tracks.
fn decomposition_residual(s: &MixtureSample) -> f64 {
    let n = s.mixture.len();
    let mut acc = vec![0.0f64; n];
    let mut add = |w: &Waveform| {
        for (a, &v) in acc.iter_mut().zip(w.samples()) {
            *a += v as f64;
        }
    };
    add(&s.reference);
    for w in &s.others {
        add(w);
    }
    for w in &s.interference {
        add(w);
    }
    add(&s.noise);
    s.mixture
        .samples()
        .iter()
        .zip(&acc)
        .map(|(&x, &c)| (x as f64 - c).abs())
        .fold(0.0, f64::max)
}

/// Build one deterministic mixture sample with noise from two synthesized
/// two-speaker conversations with disjoint casts.
fn build_probe_sample() -> (MixtureSample, ConversationTranscript) {
    let stats = TurnTakingStats::default_standin();
    let pool_a = memory_pool(65, 0, 5);
    let pool_b = memory_pool(66, 5, 10);
    let (ta, tracks_a) = synth_conversation(&stats, 2, 8.0, &pool_a, 61).expect("synth target");
    let (tb, tracks_b) =
        synth_conversation(&stats, 2, 8.0, &pool_b, 62).expect("synth interference");
    let reference = ta.speakers().iter().next().expect("cast").clone();
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let noise = random_waveform(&mut rng, sample_index(8.0, RATE), 0.1);
    let emb = pseudo_embedding(&reference, 9);
    let sample = mix(
        &MixInputs {
            target_tracks: &tracks_a,
            reference_speaker: &reference,
            interference_tracks: &tracks_b,
            noise: Some(&noise),
            embedding: &emb,
        },
        &MixParams {
            target_interference_snr_db: 0.0,
            target_noise_snr_db: Some(10.0),
            sample_id: "probe".into(),
            conversation_id: "conv_a".into(),
            interference_id: tb.conversation_id().to_string(),
            seed: 0,
        },
    )
    .expect("mix probe sample");
    (sample, ta)
}

// ---------------------------------------------------------------------------
// Criterion 1 — corpus-scale evaluation is out of scope
// ---------------------------------------------------------------------------

fn c01_corpus_scope() -> String {
    "corpus-scale score reproduction is out of scope; criteria 2-10 are the property-based \
     substitute"
        .into()
}

// ---------------------------------------------------------------------------
// Criterion 2 — SNR / SI-SDR against independent oracles
// ---------------------------------------------------------------------------

fn c02_metric_oracles() -> String {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut max_snr = 0.0f64;
    let mut max_si = 0.0f64;
    let mut max_scale = 0.0f64;

    for _ in 0..1000 {
        let n = rng.random_range(16..512);
        let reference: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gain: f64 = rng.random_range(0.5..1.5);
        let est: Vec<f64> = reference
            .iter()
            .map(|&r| r * gain + rng.random_range(-0.1..0.1))
            .collect();

        let ref_energy: f64 = reference.iter().map(|&v| v * v).sum();
        let residual: f64 = est.iter().zip(&reference).map(|(&e, &r)| (e - r) * (e - r)).sum();
        let snr_oracle = 10.0 * (ref_energy / residual).log10();
        let snr_impl = snr(&est, &reference).expect("snr");
        max_snr = max_snr.max((snr_impl - snr_oracle).abs());

        let dot: f64 = est.iter().zip(&reference).map(|(&e, &r)| e * r).sum();
        let alpha = dot / ref_energy;
        let target_energy = alpha * alpha * ref_energy;
        let noise_energy: f64 = est
            .iter()
            .zip(&reference)
            .map(|(&e, &r)| (e - alpha * r) * (e - alpha * r))
            .sum();
        let si_oracle = 10.0 * (target_energy / noise_energy).log10();
        let si_impl = si_sdr(&est, &reference).expect("si_sdr");
        max_si = max_si.max((si_impl - si_oracle).abs());

        let scale: f64 = rng.random_range(1e-3..10.0);
        let scaled: Vec<f64> = est.iter().map(|&e| e * scale).collect();
        let si_scaled = si_sdr(&scaled, &reference).expect("si_sdr scaled");
        max_scale = max_scale.max((si_scaled - si_impl).abs());
    }

    assert!(max_snr <= 1e-9, "SNR deviates from oracle by {max_snr:.3e} dB (cap 1e-9)");
    assert!(max_si <= 1e-9, "SI-SDR deviates from oracle by {max_si:.3e} dB (cap 1e-9)");
    assert!(
        max_scale <= 1e-9,
        "SI-SDR drifts {max_scale:.3e} dB under scaling (cap 1e-9)"
    );
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 5.0, "metric oracle sweep took {secs:.2} s (budget 5 s)");
    format!(
        "1000 pairs: |SNR-oracle| ≤ {max_snr:.1e} dB, |SI-SDR-oracle| ≤ {max_si:.1e} dB, \
         scale drift ≤ {max_scale:.1e} dB in {secs:.2} s"
    )
}

// ---------------------------------------------------------------------------
// Criterion 3 — STFT round trip on 60 s of noise
// ---------------------------------------------------------------------------

fn c03_stft_round_trip() -> String {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = sample_index(60.0, RATE);
    let x = random_waveform(&mut rng, n, 0.5);
    let spec = stft(&x, &StftConfig::default()).expect("stft");
    let y = istft(&spec, n).expect("istft");
    let err = inf_norm_diff(y.samples(), x.samples());
    assert!(err < 1e-4, "round-trip error {err:.3e} (cap 1e-4)");
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 1.0, "round trip took {secs:.2} s (budget 1 s)");
    format!("60 s noise: {} frames, max |err| {err:.2e} in {secs:.2} s", spec.frames())
}

// ---------------------------------------------------------------------------
// Criterion 4 — mixture decomposition identity and realized SNR
// ---------------------------------------------------------------------------

fn c04_mixture_identity() -> String {
    let n = 64_000;
    let mut worst_residual = 0.0f64;
    let mut worst_snr_err = 0.0f64;
    for k in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + k);
        let mut group = |ids: &[&str]| -> BTreeMap<String, Waveform> {
            ids.iter()
                .map(|id| (id.to_string(), random_waveform(&mut rng, n, 0.3)))
                .collect()
        };
        let target = group(&["a0", "a1"]);
        let inter = group(&["b0", "b1"]);
        let noise = if k % 2 == 0 { Some(random_waveform(&mut rng, n, 0.1)) } else { None };
        let noise_snr = noise.as_ref().map(|_| rng.random_range(5.0..15.0));
        let snr_req: f64 = rng.random_range(-3.0..3.0);
        let emb = pseudo_embedding("a0", 14);
        let sample = mix(
            &MixInputs {
                target_tracks: &target,
                reference_speaker: "a0",
                interference_tracks: &inter,
                noise: noise.as_ref(),
                embedding: &emb,
            },
            &MixParams {
                target_interference_snr_db: snr_req,
                target_noise_snr_db: noise_snr,
                sample_id: format!("s{k:03}"),
                conversation_id: "ca".into(),
                interference_id: "cb".into(),
                seed: k,
            },
        )
        .expect("mix");

        worst_residual = worst_residual.max(decomposition_residual(&sample));
        let measured = measured_interference_snr_db(&sample).expect("interference present");
        worst_snr_err = worst_snr_err.max((measured - snr_req).abs());
    }
    assert!(
        worst_residual < 1e-6,
        "decomposition residual {worst_residual:.3e} (cap 1e-6)"
    );
    assert!(
        worst_snr_err <= 0.01,
        "realized interference SNR off by {worst_snr_err:.4} dB (cap 0.01)"
    );
    format!(
        "100 mixtures (half with noise): max ‖x − Σ components‖∞ {worst_residual:.2e}, \
         max SNR error {worst_snr_err:.2e} dB"
    )
}

// ---------------------------------------------------------------------------
// Criterion 5 — augmentation preserves timing; replacement probability works
// ---------------------------------------------------------------------------

fn c05_augmentation() -> String {
    let stats = TurnTakingStats::default_standin();
    let pool = memory_pool(5, 0, 10);

    for k in 0..100u64 {
        let n_speakers = 2 + (k as usize % 2);
        let (t, tracks) =
            synth_conversation(&stats, n_speakers, 8.0, &pool, 1000 + k).expect("synth");
        let timing_before = timing_key(&t);
        let overlap_before = overlap_ratio(&t).to_bits();

        for &p in &[0.0, 0.5, 1.0] {
            let out = augment_conversation(
                &t,
                &tracks,
                &AugmentPlan { p, replacement_pool: &pool, seed: 2000 + k },
            )
            .expect("augment");
            assert_eq!(
                timing_key(&out.transcript),
                timing_before,
                "timing multiset changed at p={p} (conversation {k})"
            );
            assert_eq!(
                overlap_ratio(&out.transcript).to_bits(),
                overlap_before,
                "overlap ratio changed at p={p} (conversation {k})"
            );
            if p == 0.0 {
                assert!(
                    out.replacement_ids.is_empty(),
                    "p=0 replaced {:?}",
                    out.replacement_ids
                );
                for id in t.speakers() {
                    assert_eq!(
                        out.tracks[id].samples(),
                        tracks[id].samples(),
                        "p=0 altered track of {id} (conversation {k})"
                    );
                }
            }
            if p == 1.0 {
                assert_eq!(
                    out.replacement_ids.len(),
                    t.speakers().len(),
                    "p=1 left speakers unreplaced (conversation {k})"
                );
            }
        }
    }

    // Replacement frequency at p = 0.5 over 10⁴ independent draws on a
    // single-speaker conversation.
    let t = ConversationTranscript::new(
        "solo",
        0.5,
        vec![UtteranceSegment::new("solo_spk", 0.1, 0.4)],
    )
    .expect("solo transcript");
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut tracks = BTreeMap::new();
    tracks.insert("solo_spk".to_string(), random_waveform(&mut rng, RATE as usize / 2, 0.3));
    let mut replaced = 0usize;
    let trials = 10_000u64;
    for k in 0..trials {
        let out = augment_conversation(
            &t,
            &tracks,
            &AugmentPlan { p: 0.5, replacement_pool: &pool, seed: 50_000 + k },
        )
        .expect("augment solo");
        replaced += out.replaced.len();
    }
    let frac = replaced as f64 / trials as f64;
    assert!(
        (frac - 0.5).abs() <= 0.02,
        "replacement frequency {frac:.4} at p=0.5 (cap 0.5 ± 0.02)"
    );

    format!(
        "100 conversations × p ∈ {{0, 0.5, 1}}: timing multisets and overlap ratios \
         bit-identical; p=0 is the identity; p=1 replaces all; empirical p(0.5) = {frac:.4}"
    )
}

// ---------------------------------------------------------------------------
// Criterion 6 — timing perturbations: τ=0 identity, shift-left monotonicity,
// post-perturbation decomposition identity
// ---------------------------------------------------------------------------

fn c06_perturbation() -> String {
    let (sample, ta) = build_probe_sample();

    // τ = 0 random shift is the identity on timing and component tracks.
    let (p0, t0) =
        perturb_mixture(&sample, &ta, PerturbMode::RandomShift { tau_s: 0.0 }, 123).expect("τ=0");
    assert_eq!(speaker_timing_key(&t0), speaker_timing_key(&ta), "τ=0 moved utterances");
    assert_eq!(p0.reference.samples(), sample.reference.samples(), "τ=0 altered reference");
    assert_eq!(p0.others, sample.others, "τ=0 altered partner tracks");
    assert_eq!(p0.interference, sample.interference, "τ=0 altered interference");
    assert_eq!(p0.noise.samples(), sample.noise.samples(), "τ=0 altered noise");
    let mix_err = inf_norm_diff(p0.mixture.samples(), sample.mixture.samples());
    let tgt_err = inf_norm_diff(p0.target.samples(), sample.target.samples());
    assert!(mix_err < 1e-6, "τ=0 mixture drifted {mix_err:.3e} (cap 1e-6)");
    assert!(tgt_err < 1e-6, "τ=0 target drifted {tgt_err:.3e} (cap 1e-6)");

    // shift_all_left never decreases the overlap ratio (two-speaker case).
    let mut min_margin = f64::INFINITY;
    for i in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + i);
        let mut utts = Vec::new();
        let mut max_end = 0.0f64;
        for spk in ["a", "b"] {
            let mut cursor: f64 = rng.random_range(0.0..0.5);
            for _ in 0..rng.random_range(1..=4) {
                let len: f64 = rng.random_range(0.3..2.0);
                utts.push(UtteranceSegment::new(spk, cursor, cursor + len));
                max_end = max_end.max(cursor + len);
                cursor += len + rng.random_range(0.0..1.5);
            }
        }
        let duration = max_end + 0.1;
        let t = ConversationTranscript::new(format!("t{i}"), duration, utts).expect("transcript");
        let tracks: BTreeMap<String, Waveform> = ["a", "b"]
            .iter()
            .map(|s| (s.to_string(), Waveform::zeros(sample_index(duration, RATE), RATE)))
            .collect();
        let speakers: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let out = shift_all_left(&t, &tracks, &speakers).expect("shift_all_left");
        let margin = overlap_ratio(&out.transcript) - overlap_ratio(&t);
        min_margin = min_margin.min(margin);
        assert!(
            margin >= -1e-12,
            "shift_all_left decreased overlap by {:.3e} on transcript {i}",
            -margin
        );
    }

    // Any perturbation keeps the decomposition identity of the new sample.
    for (label, mode) in [
        ("random τ=1", PerturbMode::RandomShift { tau_s: 1.0 }),
        ("shift-all-left", PerturbMode::ShiftAllLeft),
    ] {
        let (ps, _) = perturb_mixture(&sample, &ta, mode, 5).expect(label);
        ps.validate().unwrap_or_else(|e| panic!("{label}: invalid sample: {e}"));
        let residual = decomposition_residual(&ps);
        assert!(residual < 1e-6, "{label}: residual {residual:.3e} (cap 1e-6)");
    }

    format!(
        "τ=0 is the identity (mixture drift {mix_err:.1e}); overlap never decreased over 1000 \
         shift-left transcripts (min margin {min_margin:.1e}); perturbed samples keep the \
         decomposition identity"
    )
}

// ---------------------------------------------------------------------------
// Criterion 7 — incorrect-target ratio matches a brute-force recount
// ---------------------------------------------------------------------------

fn c07_incorrect_target_ratio() -> String {
    struct Owned {
        output: Vec<f32>,
        target: Vec<f32>,
        wrong: Vec<f32>,
        mixture: Vec<f32>,
    }

    let n = 8000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut own = Vec::with_capacity(200);
    let mut constructed_wrong = 0usize;
    for _ in 0..200 {
        let s0 = random_samples(&mut rng, n, 0.5);
        let partner = random_samples(&mut rng, n, 0.5);
        let inter = random_samples(&mut rng, n, 0.5);
        let target: Vec<f32> = s0.iter().zip(&partner).map(|(&a, &b)| a + b).collect();
        let wrong: Vec<f32> = s0.iter().zip(&inter).map(|(&a, &b)| a + b).collect();
        let mixture: Vec<f32> =
            target.iter().zip(&inter).map(|(&t, &i)| t + i).collect();
        let pick_wrong = rng.random_bool(0.35);
        if pick_wrong {
            constructed_wrong += 1;
        }
        let base = if pick_wrong { &wrong } else { &target };
        let output: Vec<f32> =
            base.iter().map(|&v| v + rng.random_range(-0.01..0.01)).collect();
        own.push(Owned { output, target, wrong, mixture });
    }

    let comparisons: Vec<TargetComparison<'_>> = own
        .iter()
        .map(|o| TargetComparison {
            output: &o.output,
            target_conv: &o.target,
            wrong_conv: &o.wrong,
            mixture: &o.mixture,
        })
        .collect();
    let ratio = incorrect_target_ratio(&comparisons).expect("ratio");

    // Brute-force recount with directly-coded f64 SNR improvements.
    let snr_db = |est: &[f32], reference: &[f32]| -> f64 {
        let re: f64 = reference.iter().map(|&v| (v as f64) * (v as f64)).sum();
        let res: f64 = est
            .iter()
            .zip(reference)
            .map(|(&e, &r)| {
                let d = e as f64 - r as f64;
                d * d
            })
            .sum();
        10.0 * (re / res).log10()
    };
    let brute = own
        .iter()
        .filter(|o| {
            let snri_wrong = snr_db(&o.output, &o.wrong) - snr_db(&o.mixture, &o.wrong);
            let snri_target = snr_db(&o.output, &o.target) - snr_db(&o.mixture, &o.target);
            snri_wrong > snri_target
        })
        .count();

    assert_eq!(ratio, brute as f64 / 200.0, "ratio disagrees with brute-force recount");
    assert_eq!(
        brute, constructed_wrong,
        "brute-force count disagrees with construction"
    );
    format!(
        "200 constructed outputs: ratio {ratio:.3} == brute-force {} / 200 == {} planted \
         wrong-target picks (exact)",
        brute, constructed_wrong
    )
}

// ---------------------------------------------------------------------------
// Criterion 8 — network behaviors: length, locality, globality, attention
// oracle, conditioning identity
// ---------------------------------------------------------------------------

fn c08_network_suite() -> String {
    let started = Instant::now();
    let cfg = common::tiny_model_config(GlobalVariant::PoolingAttention);

    // Output length equals input length at several durations.
    let weights = WeightStore::random_init(&cfg, 8);
    let emb = pseudo_embedding("probe", 1);
    for &len_s in &[1.0, 7.3, 60.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + len_s as u64);
        let x = random_waveform(&mut rng, sample_index(len_s, RATE), 0.5);
        let y = forward(&x, emb.vector(), &weights, &cfg).expect("forward");
        assert_eq!(y.len(), x.len(), "output length mismatch at {len_s} s");
    }

    // Locality: perturbing one frame inside a window changes only that
    // window's frames.
    let mut local_pass = 0usize;
    for draw in 0..40u64 {
        let store = WeightStore::random_init(&cfg, 100 + draw);
        let reader = WeightReader::new(&store);
        let p = LocalParams::read(&reader, "block0.local", cfg.d, cfg.h).expect("local params");
        let mut rng = ChaCha8Rng::seed_from_u64(900 + draw);
        let (t_len, f_len, d) = (24usize, 16usize, cfg.d);
        let base =
            Array3::from_shape_fn((t_len, f_len, d), |_| rng.random_range(-1.0f32..1.0));
        let (ti, fi, ci) = (
            rng.random_range(8..16usize),
            rng.random_range(0..f_len),
            rng.random_range(0..d),
        );
        let mut a = base.clone();
        let mut b = base;
        b[[ti, fi, ci]] += 1.0;
        local_module(&mut a, &p, 8, 8);
        local_module(&mut b, &p, 8, 8);
        let same = |t: usize| {
            (0..f_len).all(|f| {
                (0..d).all(|c| a[[t, f, c]].to_bits() == b[[t, f, c]].to_bits())
            })
        };
        let outside_untouched = (0..8).all(&same) && (16..24).all(&same);
        let inside_changed = (8..16).any(|t| !same(t));
        if outside_untouched && inside_changed {
            local_pass += 1;
        }
    }
    assert!(local_pass >= 38, "locality probe passed only {local_pass}/40 (need ≥ 38)");

    // Globality: perturbing a late frame changes early frames through the
    // long-range module.
    let f_bins = cfg.stft.freq_bins();
    let mut global_pass = 0usize;
    for draw in 0..40u64 {
        let store = WeightStore::random_init(&cfg, 300 + draw);
        let reader = WeightReader::new(&store);
        let p = GlobalParams::read(&reader, "block0.global", &cfg).expect("global params");
        let mut rng = ChaCha8Rng::seed_from_u64(1300 + draw);
        let (t_len, d) = (48usize, cfg.d);
        let base =
            Array3::from_shape_fn((t_len, f_bins, d), |_| rng.random_range(-1.0f32..1.0));
        let (ti, fi, ci) = (
            rng.random_range(32..48usize),
            rng.random_range(0..f_bins),
            rng.random_range(0..d),
        );
        let mut a = base.clone();
        let mut b = base;
        b[[ti, fi, ci]] += 1.0;
        global_module(&mut a, &p, cfg.global_variant, 16, 16, cfg.e).expect("global a");
        global_module(&mut b, &p, cfg.global_variant, 16, 16, cfg.e).expect("global b");
        let early_changed = (0..16).any(|t| {
            (0..f_bins)
                .any(|f| (0..d).any(|c| a[[t, f, c]].to_bits() != b[[t, f, c]].to_bits()))
        });
        if early_changed {
            global_pass += 1;
        }
    }
    assert!(global_pass >= 38, "globality probe passed only {global_pass}/40 (need ≥ 38)");

    // Attention against an exhaustive f64 re-computation.
    let store = WeightStore::random_init(&cfg, 4242);
    let reader = WeightReader::new(&store);
    let gp = GlobalParams::read(&reader, "block0.global", &cfg).expect("attention params");
    let heads = match &gp {
        GlobalParams::Attention { heads, .. } => heads,
        _ => panic!("pooling-attention config must yield attention params"),
    };
    let m = heads[0].key_w.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(1717);
    let x = Array2::from_shape_fn((3, m), |_| rng.random_range(-1.0f32..1.0));
    let got = multi_head_attention(&x, heads, cfg.e);
    let mut max_attn_err = 0.0f64;
    let nrows = x.nrows();
    for (hi, head) in heads.iter().enumerate() {
        let e_dim = head.key_w.nrows();
        let dv = head.value_w.nrows();
        let lin = |w: &ndarray::ArrayView2<f32>, bias: &[f32], row: usize, o: usize| -> f64 {
            let mut acc = bias[o] as f64;
            for m_i in 0..m {
                acc += w[[o, m_i]] as f64 * x[[row, m_i]] as f64;
            }
            acc
        };
        let k: Vec<Vec<f64>> = (0..nrows)
            .map(|i| (0..e_dim).map(|o| lin(&head.key_w, head.key_b, i, o)).collect())
            .collect();
        let q: Vec<Vec<f64>> = (0..nrows)
            .map(|i| (0..e_dim).map(|o| lin(&head.query_w, head.query_b, i, o)).collect())
            .collect();
        let v: Vec<Vec<f64>> = (0..nrows)
            .map(|i| (0..dv).map(|o| lin(&head.value_w, head.value_b, i, o)).collect())
            .collect();
        let scale = 1.0 / (cfg.e as f64).sqrt();
        for i in 0..nrows {
            let mut scores: Vec<f64> = (0..nrows)
                .map(|j| scale * q[i].iter().zip(&k[j]).map(|(&a, &b)| a * b).sum::<f64>())
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for s in &mut scores {
                *s = (*s - mx).exp();
            }
            let z: f64 = scores.iter().sum();
            for o in 0..dv {
                let want: f64 =
                    (0..nrows).map(|j| scores[j] / z * v[j][o]).sum();
                let diff = (got[[i, hi * dv + o]] as f64 - want).abs();
                max_attn_err = max_attn_err.max(diff);
            }
        }
    }
    assert!(
        max_attn_err <= 1e-5,
        "attention deviates from exhaustive recomputation by {max_attn_err:.3e} (cap 1e-5)"
    );

    // Conditioning with γ ≡ 1, β ≡ 0 is exactly the identity.
    let (d, k_dim) = (cfg.d, 7usize);
    let mut store = WeightStore::default();
    store.insert("f.gamma.weight", Tensor::zeros(&[d, k_dim]));
    store.insert("f.gamma.bias", Tensor { shape: vec![d], data: vec![1.0; d] });
    store.insert("f.beta.weight", Tensor::zeros(&[d, k_dim]));
    store.insert("f.beta.bias", Tensor::zeros(&[d]));
    let reader = WeightReader::new(&store);
    let fp = FilmParams::read(&reader, "f", d, k_dim).expect("film params");
    let mut rng = ChaCha8Rng::seed_from_u64(2121);
    let y0 = Array3::from_shape_fn((5, 9, d), |_| rng.random_range(-1.0f32..1.0));
    let emb_vec: Vec<f32> = (0..k_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut y = y0.clone();
    film(&mut y, &fp, &emb_vec).expect("film");
    assert!(
        y.iter().zip(y0.iter()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "identity conditioning altered activations"
    );

    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 120.0, "network suite took {secs:.1} s (budget 120 s)");
    format!(
        "lengths preserved at 1/7.3/60 s; locality {local_pass}/40; globality {global_pass}/40; \
         attention vs f64 recomputation ≤ {max_attn_err:.1e}; identity conditioning exact; \
         {secs:.1} s"
    )
}

// ---------------------------------------------------------------------------
// Criterion 9 — pooled attention is cheaper than full attention and scales
// more gently with input length
// ---------------------------------------------------------------------------

fn c09_rtf_ordering() -> String {
    let started = Instant::now();
    let cfg = ModelConfig::default();
    let variants = [GlobalVariant::PoolingAttention, GlobalVariant::FullAttention];
    let r60 = rtf_bench(&cfg, &variants, 60.0, 3, 17).expect("bench 60 s");
    let r30 = rtf_bench(&cfg, &variants, 30.0, 3, 17).expect("bench 30 s");
    assert_eq!(r60.threads, 1, "inference must be single-threaded for stable timing");

    let row = |report: &tce_core::net::BenchReport, v: GlobalVariant| {
        report
            .rows
            .iter()
            .find(|r| r.variant == v)
            .unwrap_or_else(|| panic!("missing bench row for {}", v.name()))
            .clone()
    };
    let pool60 = row(&r60, GlobalVariant::PoolingAttention);
    let full60 = row(&r60, GlobalVariant::FullAttention);
    let pool30 = row(&r30, GlobalVariant::PoolingAttention);
    let full30 = row(&r30, GlobalVariant::FullAttention);

    assert!(
        pool60.rtf < full60.rtf,
        "pooled attention RTF {:.4} not below full attention RTF {:.4}",
        pool60.rtf,
        full60.rtf
    );
    let pool_factor = pool60.median_runtime_s / pool30.median_runtime_s;
    let full_factor = full60.median_runtime_s / full30.median_runtime_s;
    assert!(
        full_factor > pool_factor,
        "full attention 30→60 s factor {full_factor:.3} not above pooled factor {pool_factor:.3}"
    );
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 600.0, "benchmark suite took {secs:.1} s (budget 600 s)");
    format!(
        "60 s RTF: pooled {:.3} < full {:.3}; 30→60 s runtime factor: full {:.2}× > pooled \
         {:.2}×; {:.0} s total",
        pool60.rtf, full60.rtf, full_factor, pool_factor, secs
    )
}

// ---------------------------------------------------------------------------
// Criterion 10 — every artifact-producing CLI subcommand is byte-identical
// on rerun with the same seed
// ---------------------------------------------------------------------------

fn c10_cli_determinism() -> String {
    fn s(p: &Path) -> &str {
        p.to_str().expect("utf-8 path")
    }
    /// Run the same invocation twice into the same output root and require
    /// byte-identical trees.
    fn rerun_identical(label: &str, args: &[&str], out_root: &Path) {
        common::run_ok(args);
        let first = common::snapshot(out_root);
        common::run_ok(args);
        let second = common::snapshot(out_root);
        common::assert_snapshots_equal(label, &first, &second);
    }

    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();
    let pool = common::make_pool(&root.join("pool"), 10, 2, 8.0);

    let convs = root.join("convs");
    rerun_identical(
        "synth",
        &[
            "synth", "--pool", s(&pool), "--speakers", "2", "--duration", "16", "--count", "3",
            "--seed", "11", "--out", s(&convs),
        ],
        &convs,
    );

    let aug = root.join("aug");
    let conv0 = convs.join("conv_000");
    rerun_identical(
        "augment",
        &[
            "augment", "--conversation", s(&conv0), "--pool", s(&pool), "--p", "0.5", "--seed",
            "22", "--out", s(&aug),
        ],
        &aug,
    );

    let spec_path = root.join("build.json");
    std::fs::write(
        &spec_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "conversations": ["convs/conv_000", "convs/conv_001", "convs/conv_002"],
            "replacement_pool": "pool/pool.json",
            "noise": [],
            "dataset": {
                "splits": [{"name": "train", "count": 2, "catalog_indices": [0, 1, 2]}],
                "segment_rules": {"seg_len_s": 6.0, "min_speech_frac": 0.5, "min_active": 2},
                "snr_range_db": [-3.0, 3.0],
                "noise_snr_range_db": null,
                "augment_p": 0.25,
                "min_enrollment_s": 2.0,
                "seed": 5
            }
        }))
        .expect("spec json"),
    )
    .expect("write spec");
    let data = root.join("data");
    rerun_identical("mix", &["mix", "--spec", s(&spec_path), "--out", s(&data)], &data);

    let manifest_path = data.join("manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path).expect("read manifest"),
    )
    .expect("parse manifest");
    let samples: Vec<(String, String, String)> = manifest["samples"]
        .as_array()
        .expect("samples array")
        .iter()
        .map(|e| {
            (
                e["id"].as_str().expect("id").to_string(),
                e["mixture"].as_str().expect("mixture path").to_string(),
                e["embedding"].as_str().expect("embedding path").to_string(),
            )
        })
        .collect();
    assert_eq!(samples.len(), 2, "expected 2 dataset samples");

    let cfg = common::tiny_model_config(GlobalVariant::MeanPool);
    let cfg_path = root.join("net.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).expect("cfg json"))
        .expect("write cfg");
    let weights_path = root.join("w.tcew");
    WeightStore::random_init(&cfg, 5).save(&weights_path).expect("save weights");

    let est = root.join("est");
    std::fs::create_dir_all(&est).expect("est dir");
    for (id, mixture_rel, embedding_rel) in &samples {
        let mixture = data.join(mixture_rel);
        let embedding = data.join(embedding_rel);
        let out_wav = est.join(format!("{id}.wav"));
        rerun_identical(
            &format!("separate {id}"),
            &[
                "separate", "--in", s(&mixture), "--emb", s(&embedding), "--weights",
                s(&weights_path), "--config", s(&cfg_path), "--out", s(&out_wav),
            ],
            &est,
        );
    }

    let evaldir = root.join("evaldir");
    std::fs::create_dir_all(&evaldir).expect("eval dir");
    let results = evaldir.join("results.csv");
    rerun_identical(
        "eval",
        &[
            "eval", "--manifest", s(&manifest_path), "--estimates", s(&est), "--out", s(&results),
        ],
        &evaldir,
    );

    let pert = root.join("pert");
    rerun_identical(
        "perturb",
        &[
            "perturb", "--mode", "random", "--tau", "1.0", "--manifest", s(&manifest_path),
            "--seed", "4", "--out", s(&pert),
        ],
        &pert,
    );

    "synth, augment, mix, separate, eval, and perturb each byte-identical across reruns \
     (bench excluded: its report is timing measurements, not manifests or WAV payloads)"
        .into()
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

fn panic_text(p: &(dyn Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

fn run_criterion(number: u32, f: fn() -> String, failures: &mut Vec<u32>) {
    let started = Instant::now();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(detail) => {
            println!(
                "ACCEPTANCE {number}: PASS ({:.1} s) - {detail}",
                started.elapsed().as_secs_f64()
            );
        }
        Err(p) => {
            println!(
                "ACCEPTANCE {number}: FAIL ({:.1} s) - {}",
                started.elapsed().as_secs_f64(),
                panic_text(p.as_ref())
            );
            failures.push(number);
        }
    }
}

#[test]
fn acceptance() {
    let criteria: [(u32, fn() -> String); 10] = [
        (1, c01_corpus_scope),
        (2, c02_metric_oracles),
        (3, c03_stft_round_trip),
        (4, c04_mixture_identity),
        (5, c05_augmentation),
        (6, c06_perturbation),
        (7, c07_incorrect_target_ratio),
        (8, c08_network_suite),
        (9, c09_rtf_ordering),
        (10, c10_cli_determinism),
    ];
    let only: Option<BTreeSet<u32>> = std::env::var("TCE_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failures = Vec::new();
    for (number, f) in criteria {
        if only.as_ref().is_some_and(|set| !set.contains(&number)) {
            continue;
        }
        run_criterion(number, f, &mut failures);
    }
    assert!(failures.is_empty(), "acceptance criteria failed: {failures:?}");
}
