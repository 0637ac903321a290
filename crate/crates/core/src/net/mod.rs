//! Extraction-network forward pass.
//!
//! The network maps a mixture waveform and a reference-speaker embedding to
//! the extracted conversation waveform: STFT → 3×3 conv encoder → B blocks
//! (embedding conditioning from the second block on, windowed local
//! recurrences, a long-range global module) → 3×3 conv decoder → iSTFT.
//! Inference only — weights come from a file or seeded random init.

pub mod bench;
pub mod config;
pub mod lstm;
pub mod math;
pub mod modules;
pub mod weights;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex32;
use thiserror::Error;

use crate::audio::{istft, stft, AudioError, SpectrogramTF, Waveform};
use modules::{conv3x3, film, global_module, local_module, FilmParams, GlobalParams, LocalParams};
use weights::WeightReader;

pub use bench::{rtf_bench, BenchReport, BenchRow};
pub use config::{param_count, parameter_specs, GlobalVariant, ModelConfig};
pub use weights::{Tensor, WeightStore};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("unknown global variant: {0}")]
    UnknownVariant(String),
    #[error("weight mismatch: {0}")]
    WeightMismatch(String),
    #[error("bad weight file: {0}")]
    BadWeightFile(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Run the extraction network: mixture + reference embedding → estimate of
/// the target conversation. Output length equals input length exactly.
pub fn forward(
    x: &Waveform,
    eps0: &[f32],
    weights: &WeightStore,
    cfg: &ModelConfig,
) -> Result<Waveform, NetError> {
    cfg.validate()?;
    if eps0.len() != cfg.k {
        return Err(NetError::ShapeMismatch(format!(
            "embedding has {} values, config expects {}",
            eps0.len(),
            cfg.k
        )));
    }

    let spec = stft(x, &cfg.stft)?;
    let (t_len, f_len) = spec.bins.dim();

    // stack real/imaginary parts as two input channels: [T, F, 2]
    let mut inp = Array3::<f32>::zeros((t_len, f_len, 2));
    for ((t, f), z) in spec.bins.indexed_iter() {
        inp[[t, f, 0]] = z.re;
        inp[[t, f, 1]] = z.im;
    }

    let reader = WeightReader::new(weights);
    let enc_w = reader.get("encode.conv.weight", &[cfg.d, 2, 3, 3])?;
    let enc_b = reader.get("encode.conv.bias", &[cfg.d])?;
    let mut y = conv3x3(inp.view(), enc_w, enc_b); // [T, F, D]
    drop(inp);

    let (gw, gs) = cfg.global_window_stride();
    for b in 0..cfg.b {
        let pfx = format!("block{b}");
        if b >= 1 {
            let film_p = FilmParams::read(&reader, &format!("{pfx}.film"), cfg.d, cfg.k)?;
            film(&mut y, &film_p, eps0)?;
        }
        let local_p = LocalParams::read(&reader, &format!("{pfx}.local"), cfg.d, cfg.h)?;
        local_module(&mut y, &local_p, cfg.w, cfg.s);
        let global_p = GlobalParams::read(&reader, &format!("{pfx}.global"), cfg)?;
        global_module(&mut y, &global_p, cfg.global_variant, gw, gs, cfg.e)?;
    }

    let dec_w = reader.get("decode.deconv.weight", &[2, cfg.d, 3, 3])?;
    let dec_b = reader.get("decode.deconv.bias", &[2])?;
    let out = conv3x3(y.view(), dec_w, dec_b); // [T, F, 2]
    reader.finish()?;

    let mut bins = Array2::<Complex32>::zeros((t_len, f_len));
    for ((t, f), z) in bins.indexed_iter_mut() {
        *z = Complex32::new(out[[t, f, 0]], out[[t, f, 1]]);
    }
    let spec_out = SpectrogramTF {
        bins,
        frame_hop_s: spec.frame_hop_s,
        window_len_s: spec.window_len_s,
        sample_rate: spec.sample_rate,
    };
    Ok(istft(&spec_out, x.len())?)
}
