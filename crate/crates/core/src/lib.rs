//! Target conversation extraction (TCE) pipeline.
//!
//! A conversation recording is modeled as a sum of components
//!
//! ```text
//! x = s0 + Σ s_conv + Σ s_inter + n
//! ```
//!
//! where `s0` is the reference speaker, `s_conv` are the other participants of
//! the reference speaker's conversation, `s_inter` are speakers of an
//! interfering conversation, and `n` is background noise. Given the mixture
//! `x` and a speaker embedding for the reference speaker, the extraction
//! network estimates `y = s0 + Σ s_conv` — everyone in the target
//! conversation, not just the enrolled speaker. Turn-taking timing (gaps,
//! overlaps, backchannels) is the cue that groups speakers into
//! conversations, so the data tooling here is built around preserving and
//! perturbing that timing.
//!
//! Module map:
//!
//! - [`audio`] — WAV I/O and the STFT/iSTFT front end.
//! - [`transcript`] — who-spoke-when timelines, overlap statistics, segment
//!   selection.
//! - [`corpus`] — pools of clean per-speaker utterances and speaker
//!   embeddings.
//! - [`augment`] — timing-preserving speaker replacement and fully synthetic
//!   conversations driven by turn-taking statistics.
//! - [`mixer`] — mixture assembly (reference choice, enrollment, interference
//!   sampling, SNR scaling) and batch dataset builds.
//! - [`metrics`] — SNR / SI-SDR, improvements, training loss, incorrect-target
//!   ratio, paired t-test.
//! - [`perturb`] — timing perturbations (random utterance shifts, leftward
//!   compaction) for probing turn-taking sensitivity.
//! - [`net`] — the extraction network forward pass with interchangeable
//!   global-module variants, plus a real-time-factor benchmark.
//!
//! Everything is deterministic given explicit seeds: random choices go
//! through [`seeding`], which derives independent streams from a master seed,
//! so batch generation parallelizes without losing reproducibility.

pub mod audio;
pub mod augment;
pub mod corpus;
pub mod metrics;
pub mod mixer;
pub mod net;
pub mod perturb;
pub mod seeding;
pub mod transcript;
