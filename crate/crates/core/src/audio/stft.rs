//! STFT / iSTFT with a square-root Hann window.
//!
//! Frames are centered: the signal is zero-padded by half a window on each
//! side, so frame `t` is centered at sample `t·hop` and transcript times map
//! directly to frame indices. Synthesis uses weighted overlap-add with the
//! accumulated squared-window envelope divided out, which reconstructs the
//! input exactly (up to float rounding) for any hop ≤ window without
//! requiring a strict constant-overlap-add window/hop pair.

use ndarray::Array2;
use rustfft::num_complex::{Complex, Complex32};
use rustfft::FftPlanner;

use super::{AudioError, Waveform};

/// Analysis/synthesis parameters for [`stft`] / [`istft`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub window_len_s: f64,
    pub hop_s: f64,
    pub nfft: usize,
}

impl Default for StftConfig {
    /// 12.5 ms window, 4 ms hop, 256-point FFT: at 16 kHz this is a
    /// 200-sample window, 64-sample hop, and 129 frequency bins.
    fn default() -> Self {
        Self { window_len_s: 0.0125, hop_s: 0.004, nfft: 256 }
    }
}

impl StftConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_len_s * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_s * sample_rate as f64).round() as usize
    }

    pub fn freq_bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    /// Check the config against a sample rate, returning the concrete
    /// (window, hop) sample counts it implies.
    pub fn validate(&self, sample_rate: u32) -> Result<(usize, usize), AudioError> {
        let win = self.window_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if win < 2 || hop == 0 {
            return Err(AudioError::IncompatibleConfig(format!(
                "window {win} / hop {hop} samples at {sample_rate} Hz"
            )));
        }
        if win > self.nfft {
            return Err(AudioError::IncompatibleConfig(format!(
                "window {win} exceeds nfft {}",
                self.nfft
            )));
        }
        if hop > win {
            return Err(AudioError::IncompatibleConfig(format!(
                "hop {hop} exceeds window {win}: synthesis envelope would have gaps"
            )));
        }
        Ok((win, hop))
    }
}

/// Complex time-frequency grid produced by [`stft`], `bins[t, f]`.
#[derive(Debug, Clone)]
pub struct SpectrogramTF {
    pub bins: Array2<Complex32>,
    pub frame_hop_s: f64,
    pub window_len_s: f64,
    pub sample_rate: u32,
}

impl SpectrogramTF {
    pub fn frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn freq_bins(&self) -> usize {
        self.bins.ncols()
    }
}

/// Square-root of a periodic Hann window, which is sin(πn/N).
fn sqrt_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| (std::f64::consts::PI * n as f64 / len as f64).sin())
        .collect()
}

/// Short-time Fourier transform with centered frames.
///
/// Frame count is `floor((len + 2·(win/2) − win)/hop) + 1`; with the default
/// config a 60 s input (960 000 samples) yields 15 001 frames × 129 bins.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<SpectrogramTF, AudioError> {
    if w.is_empty() {
        return Err(AudioError::EmptyInput);
    }
    let (win, hop) = cfg.validate(w.sample_rate())?;
    let pad = win / 2;
    let x = w.samples();
    let padded_len = x.len() + 2 * pad;
    let frames = (padded_len - win) / hop + 1;
    let window = sqrt_hann(win);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.nfft);
    let mut buf = vec![Complex::<f64>::default(); cfg.nfft];
    let n_bins = cfg.freq_bins();
    let mut bins = Array2::<Complex32>::default((frames, n_bins));

    for t in 0..frames {
        let start = t * hop; // position in the padded signal
        buf.fill(Complex::default());
        for n in 0..win {
            let m = start + n;
            // Padded signal: zeros outside [pad, pad + len).
            let v = if m >= pad && m < pad + x.len() { x[m - pad] as f64 } else { 0.0 };
            buf[n] = Complex::new(v * window[n], 0.0);
        }
        fft.process(&mut buf);
        let mut row = bins.row_mut(t);
        for f in 0..n_bins {
            row[f] = Complex32::new(buf[f].re as f32, buf[f].im as f32);
        }
    }

    Ok(SpectrogramTF {
        bins,
        frame_hop_s: cfg.hop_s,
        window_len_s: cfg.window_len_s,
        sample_rate: w.sample_rate(),
    })
}

/// Inverse STFT via weighted overlap-add, producing exactly `out_len`
/// samples.
///
/// If `out_len` is shorter than the reconstructable span the result is
/// truncated; if longer, the tail is zero-filled.
pub fn istft(s: &SpectrogramTF, out_len: usize) -> Result<Waveform, AudioError> {
    if out_len == 0 || s.frames() == 0 {
        return Err(AudioError::EmptyInput);
    }
    if s.freq_bins() < 2 {
        return Err(AudioError::IncompatibleConfig(format!(
            "{} frequency bins cannot come from a real FFT",
            s.freq_bins()
        )));
    }
    let nfft = (s.freq_bins() - 1) * 2;
    let cfg = StftConfig { window_len_s: s.window_len_s, hop_s: s.frame_hop_s, nfft };
    let (win, hop) = cfg.validate(s.sample_rate)?;
    let pad = win / 2;
    let frames = s.frames();
    let window = sqrt_hann(win);

    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(nfft);
    let mut buf = vec![Complex::<f64>::default(); nfft];
    let padded_len = (frames - 1) * hop + win;
    let mut acc = vec![0.0f64; padded_len];
    let mut env = vec![0.0f64; padded_len];
    let scale = 1.0 / nfft as f64;

    for t in 0..frames {
        let row = s.bins.row(t);
        buf[0] = Complex::new(row[0].re as f64, row[0].im as f64);
        for f in 1..s.freq_bins() {
            let v = Complex::new(row[f].re as f64, row[f].im as f64);
            buf[f] = v;
            if f != nfft - f {
                buf[nfft - f] = v.conj();
            }
        }
        ifft.process(&mut buf);
        let start = t * hop;
        for n in 0..win {
            acc[start + n] += buf[n].re * scale * window[n];
            env[start + n] += window[n] * window[n];
        }
    }

    let mut out = vec![0.0f32; out_len];
    let avail = padded_len.saturating_sub(pad);
    for (i, o) in out.iter_mut().enumerate().take(avail.saturating_sub(0)) {
        let m = pad + i;
        if m >= padded_len {
            break;
        }
        if env[m] > 1e-10 {
            *o = (acc[m] / env[m]) as f32;
        }
    }
    Waveform::new(out, s.sample_rate)
}
