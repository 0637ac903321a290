//! `tce` — command-line front end for the target conversation extraction
//! pipeline.
//!
//! Subcommands cover the whole workflow: `synth` (statistics-driven
//! conversations), `augment` (timing-preserving speaker replacement), `mix`
//! (mixture dataset builds), `separate` (network forward pass), `eval`
//! (metric tables), `perturb` (timing perturbations of built datasets), and
//! `bench` (real-time-factor measurement).
//!
//! Every run is deterministic given `--seed`: rerunning a subcommand with the
//! same arguments reproduces its manifests and WAV payloads byte for byte.
//! Each run that writes files also writes a JSON run record (arguments, seed,
//! versions) beside its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rayon::prelude::*;

use tce_core::audio::{read_wav, write_wav, Waveform};
use tce_core::augment::{augment_conversation, synth_conversation, AugmentPlan, TurnTakingStats};
use tce_core::corpus::{load_embedding, UtterancePool};
use tce_core::metrics::{paired_t_test, si_sdr, snr, summarize, EvalResult};
use tce_core::mixer::{
    build_dataset, load_sample, load_sample_transcripts, save_sample, ConversationSource,
    DatasetInputs, DatasetManifest, DatasetSpec,
};
use tce_core::net::{forward, rtf_bench, GlobalVariant, ModelConfig, WeightStore};
use tce_core::perturb::{perturb_mixture, PerturbMode};
use tce_core::seeding::derive_rng_keyed;
use tce_core::transcript::{load_transcript, save_transcript, ConversationTranscript, TranscriptFormat};

type CliError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(
    name = "tce",
    version,
    about = "Target conversation extraction: data synthesis, mixing, separation, evaluation",
    propagate_version = true
)]
struct Cli {
    /// Master seed for every randomized choice (also recorded in run records).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for per-sample parallel work (0 = library default).
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    jobs: usize,

    /// Log filter (error|warn|info|debug|trace); overrides the TCE_LOG env var.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic conversations from turn-taking statistics.
    Synth {
        /// Utterance pool manifest JSON supplying the voices.
        #[arg(long, value_name = "JSON")]
        pool: PathBuf,
        /// Turn-taking statistics JSON (omit for built-in stand-in values).
        #[arg(long, value_name = "JSON")]
        stats: Option<PathBuf>,
        /// Speakers per conversation.
        #[arg(long, default_value_t = 2, value_name = "N")]
        speakers: usize,
        /// Conversation duration in seconds.
        #[arg(long, default_value_t = 60.0, value_name = "S")]
        duration: f64,
        /// Number of conversations to generate.
        #[arg(long, default_value_t = 1, value_name = "N")]
        count: usize,
        /// Output directory (one conv_NNN/ subdirectory per conversation).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Replace conversation speakers with pool voices, preserving all timing.
    Augment {
        /// Conversation directory (transcript.json + one WAV per speaker).
        #[arg(long, value_name = "DIR")]
        conversation: PathBuf,
        /// Utterance pool manifest JSON supplying replacement voices.
        #[arg(long, value_name = "JSON")]
        pool: PathBuf,
        /// Per-speaker replacement probability in [0, 1].
        #[arg(long, default_value_t = 1.0, value_name = "P")]
        p: f64,
        /// Output conversation directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Build a mixture dataset from a build-spec JSON.
    Mix {
        /// Build spec: conversation dirs, optional pool/noise, dataset plan.
        #[arg(long, value_name = "JSON")]
        spec: PathBuf,
        /// Output dataset directory (manifest.json + one dir per sample).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Extract the target conversation from one mixture WAV.
    Separate {
        /// Input mixture WAV (16 kHz mono).
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
        /// Reference-speaker embedding (256 little-endian float32 values).
        #[arg(long, value_name = "BIN")]
        emb: PathBuf,
        /// Weight container file.
        #[arg(long, value_name = "TCEW")]
        weights: PathBuf,
        /// Output estimate WAV.
        #[arg(long, value_name = "WAV")]
        out: PathBuf,
        /// Model configuration JSON (omit for the default configuration).
        #[arg(long, value_name = "JSON")]
        config: Option<PathBuf>,
    },

    /// Score estimates against a dataset manifest and write a CSV table.
    Eval {
        /// Dataset manifest JSON (paths resolve against its directory).
        #[arg(long, value_name = "JSON")]
        manifest: PathBuf,
        /// Directory of estimate WAVs named <sample-id>.wav
        /// (omit to score the unprocessed mixtures themselves).
        #[arg(long, value_name = "DIR")]
        estimates: Option<PathBuf>,
        /// Output CSV; a summary JSON is written beside it.
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },

    /// Apply a timing perturbation to every sample of a built dataset.
    Perturb {
        /// Perturbation mode.
        #[arg(long, value_enum, value_name = "MODE")]
        mode: PerturbKind,
        /// Shift bound in seconds for `random` mode (ignored by `left`).
        #[arg(long, default_value_t = 0.0, value_name = "S")]
        tau: f64,
        /// Input dataset manifest JSON.
        #[arg(long, value_name = "JSON")]
        manifest: PathBuf,
        /// Output dataset directory (new manifest.json + per-sample dirs).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Measure forward-pass runtime and real-time factor per variant.
    Bench {
        /// Comma-separated global-module variants to measure.
        #[arg(
            long,
            value_delimiter = ',',
            value_parser = parse_variant,
            default_value = "pooling_attention,full_attention",
            value_name = "LIST"
        )]
        variants: Vec<GlobalVariant>,
        /// Input length in seconds.
        #[arg(long, default_value_t = 60.0, value_name = "S")]
        len: f64,
        /// Repetitions per variant (median is reported; minimum 3).
        #[arg(long, default_value_t = 3, value_name = "N")]
        reps: usize,
        /// Model configuration JSON (omit for the default configuration).
        #[arg(long, value_name = "JSON")]
        config: Option<PathBuf>,
        /// Also write the report as JSON to this path.
        #[arg(long, value_name = "JSON")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PerturbKind {
    /// Shift each utterance independently by a uniform offset in [-tau, tau].
    Random,
    /// Pack each speaker's utterances leftward (gaps collapse, overlap grows).
    Left,
}

fn parse_variant(s: &str) -> Result<GlobalVariant, String> {
    GlobalVariant::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let level = cli
        .log_level
        .clone()
        .or_else(|| std::env::var("TCE_LOG").ok())
        .unwrap_or_else(|| "warn".to_string());
    env_logger::Builder::new().parse_filters(&level).init();

    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    let jobs = cli.jobs;
    match cli.command {
        Command::Synth { pool, stats, speakers, duration, count, out } => {
            cmd_synth(seed, jobs, &pool, stats.as_deref(), speakers, duration, count, &out)
        }
        Command::Augment { conversation, pool, p, out } => {
            cmd_augment(seed, jobs, &conversation, &pool, p, &out)
        }
        Command::Mix { spec, out } => cmd_mix(cli.seed, jobs, &spec, &out),
        Command::Separate { input, emb, weights, out, config } => {
            cmd_separate(seed, jobs, &input, &emb, &weights, &out, config.as_deref())
        }
        Command::Eval { manifest, estimates, out } => {
            cmd_eval(seed, jobs, &manifest, estimates.as_deref(), &out)
        }
        Command::Perturb { mode, tau, manifest, out } => {
            cmd_perturb(seed, jobs, mode, tau, &manifest, &out)
        }
        Command::Bench { variants, len, reps, config, out } => {
            cmd_bench(seed, jobs, &variants, len, reps, config.as_deref(), out.as_deref())
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Attach the offending path to an error message.
fn ctx(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

/// Run record written beside every file-producing run: enough to reproduce
/// the invocation. Deliberately timestamp-free so reruns are byte-identical.
fn run_record(command: &str, seed: u64, jobs: usize) -> serde_json::Value {
    let args: Vec<String> = std::env::args().skip(1).collect();
    serde_json::json!({
        "command": command,
        "args": args,
        "seed": seed,
        "jobs": jobs,
        "versions": { "tce": env!("CARGO_PKG_VERSION") },
    })
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| ctx(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ctx(path, e))
}

/// `<dir>/run_record.json` for directory outputs.
fn write_record_in_dir(dir: &Path, rec: &serde_json::Value) -> Result<(), String> {
    write_json(&dir.join("run_record.json"), rec)
}

/// `<name>.run.json` next to a single-file output.
fn write_record_beside(file: &Path, rec: &serde_json::Value) -> Result<(), String> {
    let name = file
        .file_name()
        .ok_or_else(|| ctx(file, "output path has no file name"))?
        .to_string_lossy();
    write_json(&file.with_file_name(format!("{name}.run.json")), rec)
}

fn ensure_parent_dir(file: &Path) -> Result<(), String> {
    if let Some(parent) = file.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| ctx(parent, e))?;
        }
    }
    Ok(())
}

/// Speaker ids become track file names; refuse ids that would escape the
/// conversation directory.
fn track_file_name(speaker: &str) -> Result<String, String> {
    if speaker.is_empty()
        || speaker == "."
        || speaker == ".."
        || speaker.contains(['/', '\\', '\0'])
    {
        return Err(format!("speaker id {speaker:?} is not usable as a file name"));
    }
    Ok(format!("{speaker}.wav"))
}

/// Write `transcript.json` plus one `<speaker>.wav` per track.
fn write_conversation_dir(
    dir: &Path,
    t: &ConversationTranscript,
    tracks: &BTreeMap<String, Waveform>,
) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| ctx(dir, e))?;
    save_transcript(t, &dir.join("transcript.json")).map_err(|e| ctx(dir, e))?;
    for (speaker, wav) in tracks {
        let path = dir.join(track_file_name(speaker)?);
        write_wav(wav, &path).map_err(|e| ctx(&path, e))?;
    }
    Ok(())
}

/// Read a conversation directory written by `synth`/`augment`: the transcript
/// plus one full-length WAV per transcript speaker.
fn load_conversation_dir(dir: &Path) -> Result<ConversationSource, String> {
    let tpath = dir.join("transcript.json");
    let transcript = load_transcript(&tpath, TranscriptFormat::Json).map_err(|e| ctx(&tpath, e))?;
    let mut tracks = BTreeMap::new();
    for speaker in transcript.speakers() {
        let path = dir.join(track_file_name(speaker)?);
        tracks.insert(speaker.clone(), read_wav(&path).map_err(|e| ctx(&path, e))?);
    }
    Ok(ConversationSource { transcript, tracks })
}

/// Parent directory a manifest's relative paths resolve against.
fn manifest_root(manifest_path: &Path) -> &Path {
    match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    seed: u64,
    jobs: usize,
    pool_path: &Path,
    stats_path: Option<&Path>,
    speakers: usize,
    duration_s: f64,
    count: usize,
    out: &Path,
) -> Result<(), CliError> {
    let pool = UtterancePool::load_manifest(pool_path).map_err(|e| ctx(pool_path, e))?;
    let stats: TurnTakingStats = match stats_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ctx(p, e))?;
            serde_json::from_str(&text).map_err(|e| ctx(p, e))?
        }
        None => TurnTakingStats::default_standin(),
    };
    std::fs::create_dir_all(out).map_err(|e| ctx(out, e))?;

    for i in 0..count {
        let conv_seed =
            derive_rng_keyed(seed, "cli.synth.conversation", &i.to_string()).random::<u64>();
        let (transcript, tracks) = synth_conversation(&stats, speakers, duration_s, &pool, conv_seed)?;
        let dir = out.join(format!("conv_{i:03}"));
        write_conversation_dir(&dir, &transcript, &tracks)?;
        log::info!("wrote {} ({} speakers)", dir.display(), tracks.len());
    }

    write_record_in_dir(out, &run_record("synth", seed, jobs))?;
    println!("synth: {count} conversation(s) in {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// augment
// ---------------------------------------------------------------------------

fn cmd_augment(
    seed: u64,
    jobs: usize,
    conversation: &Path,
    pool_path: &Path,
    p: f64,
    out: &Path,
) -> Result<(), CliError> {
    let source = load_conversation_dir(conversation)?;
    let pool = UtterancePool::load_manifest(pool_path).map_err(|e| ctx(pool_path, e))?;
    let outcome = augment_conversation(
        &source.transcript,
        &source.tracks,
        &AugmentPlan { p, replacement_pool: &pool, seed },
    )?;
    write_conversation_dir(out, &outcome.transcript, &outcome.tracks)?;

    // Replacement provenance: original speaker id -> pool voice id.
    write_json(
        &out.join("augment_manifest.json"),
        &serde_json::json!({
            "source": conversation.display().to_string(),
            "p": p,
            "replacements": outcome.replacement_ids,
        }),
    )?;
    write_record_in_dir(out, &run_record("augment", seed, jobs))?;
    println!(
        "augment: replaced {} of {} speaker(s) in {}",
        outcome.replaced.len(),
        source.transcript.speakers().len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// mix
// ---------------------------------------------------------------------------

/// On-disk build spec for `mix`. Relative paths resolve against the spec
/// file's directory, so a spec can ship with its inputs.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct MixSpecFile {
    /// Conversation directories (as written by `synth`/`augment`).
    conversations: Vec<PathBuf>,
    /// Utterance pool manifest; required when `dataset.augment_p > 0`.
    #[serde(default)]
    replacement_pool: Option<PathBuf>,
    /// Background noise WAVs; empty disables the noise term.
    #[serde(default)]
    noise: Vec<PathBuf>,
    /// The dataset plan: splits, segment rules, SNR ranges, seed.
    dataset: DatasetSpec,
}

fn cmd_mix(seed_flag: Option<u64>, jobs: usize, spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| ctx(spec_path, e))?;
    let file: MixSpecFile = serde_json::from_str(&text).map_err(|e| ctx(spec_path, e))?;
    let base = manifest_root(spec_path);
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };

    let catalog: Vec<ConversationSource> = file
        .conversations
        .iter()
        .map(|d| load_conversation_dir(&resolve(d)))
        .collect::<Result<_, _>>()?;
    let pool = match &file.replacement_pool {
        Some(p) => {
            let p = resolve(p);
            Some(UtterancePool::load_manifest(&p).map_err(|e| ctx(&p, e))?)
        }
        None => None,
    };
    let noise: Vec<Waveform> = file
        .noise
        .iter()
        .map(|p| {
            let p = resolve(p);
            read_wav(&p).map_err(|e| ctx(&p, e))
        })
        .collect::<Result<_, _>>()?;

    // The dataset plan carries its own seed; an explicit --seed overrides it.
    let mut dataset_spec = file.dataset;
    if let Some(s) = seed_flag {
        dataset_spec.seed = s;
    }

    let inputs = DatasetInputs {
        catalog: &catalog,
        replacement_pool: pool.as_ref(),
        noise: &noise,
    };
    let manifest = build_dataset(&inputs, &dataset_spec, out)?;
    write_record_in_dir(out, &run_record("mix", dataset_spec.seed, jobs))?;
    println!(
        "mix: {} sample(s) in {} (manifest.json)",
        manifest.samples.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// separate
// ---------------------------------------------------------------------------

fn cmd_separate(
    seed: u64,
    jobs: usize,
    input: &Path,
    emb_path: &Path,
    weights_path: &Path,
    out: &Path,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let x = read_wav(input).map_err(|e| ctx(input, e))?;
    let emb = load_embedding(emb_path).map_err(|e| ctx(emb_path, e))?;
    let weights = WeightStore::load(weights_path).map_err(|e| ctx(weights_path, e))?;
    let cfg: ModelConfig = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ctx(p, e))?;
            serde_json::from_str(&text).map_err(|e| ctx(p, e))?
        }
        None => ModelConfig::default(),
    };

    let y = forward(&x, emb.vector(), &weights, &cfg)?;
    ensure_parent_dir(out)?;
    write_wav(&y, out).map_err(|e| ctx(out, e))?;
    write_record_beside(out, &run_record("separate", seed, jobs))?;
    println!("separate: {} ({:.3} s) -> {}", input.display(), x.duration_s(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// One scored sample: the CSV row plus the mixture-baseline metrics the
/// summary's paired t-test compares against.
struct Scored {
    row: EvalResult,
    mixture_snr_db: f64,
    mixture_si_sdr_db: f64,
}

fn score_sample(
    root: &Path,
    entry: &tce_core::mixer::SampleEntry,
    estimates: Option<&Path>,
) -> Result<Scored, String> {
    let mixture_path = root.join(&entry.mixture);
    let mixture = read_wav(&mixture_path).map_err(|e| ctx(&mixture_path, e))?;
    let target_path = root.join(&entry.target);
    let target = read_wav(&target_path).map_err(|e| ctx(&target_path, e))?;
    let est = match estimates {
        Some(dir) => {
            let p = dir.join(format!("{}.wav", entry.id));
            read_wav(&p).map_err(|e| ctx(&p, e))?
        }
        None => mixture.clone(),
    };

    let err = |e: tce_core::metrics::MetricsError| format!("sample {}: {e}", entry.id);
    let snr_db = snr(est.samples(), target.samples()).map_err(err)?;
    let si_sdr_db = si_sdr(est.samples(), target.samples()).map_err(err)?;
    let mixture_snr_db = snr(mixture.samples(), target.samples()).map_err(err)?;
    let mixture_si_sdr_db = si_sdr(mixture.samples(), target.samples()).map_err(err)?;
    Ok(Scored {
        row: EvalResult {
            id: entry.id.clone(),
            snr_db,
            si_sdr_db,
            snri_db: snr_db - mixture_snr_db,
            si_sdri_db: si_sdr_db - mixture_si_sdr_db,
        },
        mixture_snr_db,
        mixture_si_sdr_db,
    })
}

fn summary_json(values: &[f64]) -> serde_json::Value {
    match summarize(values) {
        Ok(s) => serde_json::json!({
            "mean": s.mean,
            "std": s.std,
            "finite_count": s.finite_count,
            "excluded_non_finite": s.non_finite_count,
        }),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    }
}

/// Paired t-test over samples where both columns are finite; degenerate or
/// too-small samples are reported as an error value, not a failure.
fn t_test_json(est: &[f64], baseline: &[f64]) -> serde_json::Value {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (&x, &y) in est.iter().zip(baseline) {
        if x.is_finite() && y.is_finite() {
            a.push(x);
            b.push(y);
        }
    }
    let excluded = est.len() - a.len();
    match paired_t_test(&a, &b) {
        Ok(r) => serde_json::json!({
            "t_stat": r.t_stat,
            "p_value": r.p_value,
            "dof": r.dof,
            "pairs": a.len(),
            "excluded_non_finite": excluded,
        }),
        Err(e) => serde_json::json!({
            "error": e.to_string(),
            "pairs": a.len(),
            "excluded_non_finite": excluded,
        }),
    }
}

fn cmd_eval(
    seed: u64,
    jobs: usize,
    manifest_path: &Path,
    estimates: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(manifest_path).map_err(|e| ctx(manifest_path, e))?;
    let root = manifest_root(manifest_path);

    let mut scored: Vec<Scored> = manifest
        .samples
        .par_iter()
        .map(|entry| score_sample(root, entry, estimates))
        .collect::<Result<_, _>>()?;
    scored.sort_by(|a, b| a.row.id.cmp(&b.row.id));

    ensure_parent_dir(out)?;
    let mut wtr = csv::Writer::from_path(out).map_err(|e| ctx(out, e))?;
    for s in &scored {
        wtr.serialize(&s.row).map_err(|e| ctx(out, e))?;
    }
    wtr.flush().map_err(|e| ctx(out, e))?;

    let col = |f: fn(&Scored) -> f64| -> Vec<f64> { scored.iter().map(f).collect() };
    let snr_col = col(|s| s.row.snr_db);
    let si_col = col(|s| s.row.si_sdr_db);
    let snri_col = col(|s| s.row.snri_db);
    let si_i_col = col(|s| s.row.si_sdri_db);
    let base_snr = col(|s| s.mixture_snr_db);
    let base_si = col(|s| s.mixture_si_sdr_db);

    let summary = serde_json::json!({
        "samples": scored.len(),
        "metrics": {
            "snr_db": summary_json(&snr_col),
            "si_sdr_db": summary_json(&si_col),
            "snri_db": summary_json(&snri_col),
            "si_sdri_db": summary_json(&si_i_col),
        },
        "t_test_vs_mixture": {
            "snr_db": t_test_json(&snr_col, &base_snr),
            "si_sdr_db": t_test_json(&si_col, &base_si),
        },
    });
    let name = out
        .file_name()
        .ok_or_else(|| ctx(out, "output path has no file name"))?
        .to_string_lossy();
    let summary_path = out.with_file_name(format!("{name}.summary.json"));
    write_json(&summary_path, &summary)?;
    write_record_beside(out, &run_record("eval", seed, jobs))?;

    println!("eval: {} sample(s) -> {}", scored.len(), out.display());
    for (label, col) in [
        ("snr_db", &snr_col),
        ("si_sdr_db", &si_col),
        ("snri_db", &snri_col),
        ("si_sdri_db", &si_i_col),
    ] {
        match summarize(col) {
            Ok(s) => println!(
                "  {label:<11} mean {:>9.3}  std {:>8.3}  finite {}  excluded non-finite {}",
                s.mean, s.std, s.finite_count, s.non_finite_count
            ),
            Err(e) => println!("  {label:<11} {e}"),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// perturb
// ---------------------------------------------------------------------------

fn cmd_perturb(
    seed: u64,
    jobs: usize,
    kind: PerturbKind,
    tau_s: f64,
    manifest_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(manifest_path).map_err(|e| ctx(manifest_path, e))?;
    let root = manifest_root(manifest_path);
    let mode = match kind {
        PerturbKind::Random => PerturbMode::RandomShift { tau_s },
        PerturbKind::Left => PerturbMode::ShiftAllLeft,
    };
    std::fs::create_dir_all(out).map_err(|e| ctx(out, e))?;

    let mut samples: Vec<_> = manifest
        .samples
        .par_iter()
        .map(|entry| -> Result<_, String> {
            let sample = load_sample(root, entry).map_err(|e| format!("{}: {e}", entry.id))?;
            let (t_tr, i_tr) =
                load_sample_transcripts(root, entry).map_err(|e| format!("{}: {e}", entry.id))?;
            let sample_seed =
                derive_rng_keyed(seed, "cli.perturb", &entry.id).random::<u64>();
            let (new_sample, new_t) = perturb_mixture(&sample, &t_tr, mode, sample_seed)
                .map_err(|e| format!("{}: {e}", entry.id))?;
            let enr_path = root.join(&entry.enrollment);
            let enrollment = read_wav(&enr_path).map_err(|e| ctx(&enr_path, e))?;
            save_sample(
                out,
                &entry.split,
                &new_sample,
                &enrollment,
                &new_t,
                &i_tr,
                entry.noise.is_some(),
                entry.replaced_speakers.clone(),
            )
            .map_err(|e| format!("{}: {e}", entry.id))
        })
        .collect::<Result<_, _>>()?;
    samples.sort_by(|a, b| a.id.cmp(&b.id));

    let n = samples.len();
    DatasetManifest { samples }.save(&out.join("manifest.json"))?;
    write_record_in_dir(out, &run_record("perturb", seed, jobs))?;
    println!("perturb: {n} sample(s) -> {} (manifest.json)", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn cmd_bench(
    seed: u64,
    jobs: usize,
    variants: &[GlobalVariant],
    len_s: f64,
    reps: usize,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg: ModelConfig = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ctx(p, e))?;
            serde_json::from_str(&text).map_err(|e| ctx(p, e))?
        }
        None => ModelConfig::default(),
    };

    let report = rtf_bench(&cfg, variants, len_s, reps, seed)?;

    println!(
        "bench: input {:.1} s, {} rep(s), {} thread(s)",
        report.input_len_s, report.reps, report.threads
    );
    println!("{:<20} {:>12} {:>12} {:>10}", "variant", "params", "median_s", "rtf");
    for row in &report.rows {
        println!(
            "{:<20} {:>12} {:>12.3} {:>10.4}",
            row.variant.name(),
            row.param_count,
            row.median_runtime_s,
            row.rtf
        );
    }

    if let Some(path) = out {
        ensure_parent_dir(path)?;
        let rows: Vec<serde_json::Value> = report
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "variant": r.variant.name(),
                    "median_runtime_s": r.median_runtime_s,
                    "rtf": r.rtf,
                    "param_count": r.param_count,
                })
            })
            .collect();
        write_json(
            path,
            &serde_json::json!({
                "input_len_s": report.input_len_s,
                "reps": report.reps,
                "threads": report.threads,
                "rows": rows,
            }),
        )?;
        write_record_beside(path, &run_record("bench", seed, jobs))?;
    }
    Ok(())
}
