//! Audio containers, WAV file I/O, and the STFT/iSTFT front end.

mod stft;
mod wav;

pub use stft::{istft, stft, SpectrogramTF, StftConfig};
pub use wav::{read_wav, write_wav};

use thiserror::Error;

/// Sample rate every pipeline operation runs at.
pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("not a RIFF/WAVE file: {0}")]
    NotWav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("sample rate {found} Hz, pipeline requires {expected} Hz")]
    WrongSampleRate { found: u32, expected: u32 },
    #[error("empty input signal")]
    EmptyInput,
    #[error("incompatible STFT configuration: {0}")]
    IncompatibleConfig(String),
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono audio signal with its sample rate.
///
/// Samples are dimensionless amplitudes, nominally in `[-1, 1]`. The
/// constructor rejects empty or non-finite signals so downstream DSP can
/// assume well-formed input.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyInput);
        }
        if sample_rate == 0 {
            return Err(AudioError::IncompatibleConfig("zero sample rate".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(AudioError::NonFiniteSample(i));
        }
        Ok(Self { samples, sample_rate })
    }

    /// All-zero signal of `len` samples (silence).
    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        assert!(len > 0 && sample_rate > 0, "degenerate waveform");
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// Mutable sample access; callers must keep values finite.
    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Round a time in seconds to a sample index at `rate`.
pub fn sample_index(t_s: f64, rate: u32) -> usize {
    (t_s * rate as f64).round() as usize
}
