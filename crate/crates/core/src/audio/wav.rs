//! Minimal WAV reader/writer.
//!
//! Reads PCM WAV files (16-bit integer or 32-bit IEEE float, mono or
//! multichannel — the first channel is kept) and writes 32-bit float mono.
//! Little-endian throughout; no compressed codecs, no resampling.

use std::fs;
use std::path::Path;

use super::{AudioError, Waveform, PIPELINE_SAMPLE_RATE};

const HEADER_LEN: usize = 44;

/// Read the first channel of a PCM WAV file at the pipeline sample rate.
///
/// 16-bit integer samples are scaled to `[-1, 1)` by `1/32768`; 32-bit float
/// samples are taken verbatim.
pub fn read_wav(path: &Path) -> Result<Waveform, AudioError> {
    let bytes = fs::read(path)?;
    let wav = parse_wav(&bytes).map_err(|e| match e {
        WavParseError::NotWav(m) => AudioError::NotWav(format!("{}: {m}", path.display())),
        WavParseError::Unsupported(m) => {
            AudioError::UnsupportedEncoding(format!("{}: {m}", path.display()))
        }
    })?;
    if wav.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(AudioError::WrongSampleRate {
            found: wav.sample_rate,
            expected: PIPELINE_SAMPLE_RATE,
        });
    }
    Waveform::new(wav.samples, wav.sample_rate)
}

/// Write a waveform as a mono 32-bit float PCM WAV file.
///
/// The header is the canonical 44-byte RIFF layout, so a file of `n` samples
/// is exactly `44 + 4n` bytes and `read_wav(write_wav(w)) == w` bit-exactly.
pub fn write_wav(w: &Waveform, path: &Path) -> Result<(), AudioError> {
    let data_len = w.len() * 4;
    let mut out = Vec::with_capacity(HEADER_LEN + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&3u16.to_le_bytes()); // IEEE float
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * 4).to_le_bytes()); // byte rate
    out.extend_from_slice(&4u16.to_le_bytes()); // block align
    out.extend_from_slice(&32u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &v in w.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

struct RawWav {
    samples: Vec<f32>,
    sample_rate: u32,
}

enum WavParseError {
    NotWav(String),
    Unsupported(String),
}

fn parse_wav(bytes: &[u8]) -> Result<RawWav, WavParseError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavParseError::NotWav("missing RIFF/WAVE header".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16, u16)> = None; // format, channels, rate, block_align, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(WavParseError::NotWav("truncated fmt chunk".into()));
                }
                let le16 = |o: usize| u16::from_le_bytes(body[o..o + 2].try_into().unwrap());
                let le32 = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap());
                fmt = Some((le16(0), le16(2), le32(4), le16(12), le16(14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned: odd sizes carry a pad byte.
        pos = pos + 8 + size + (size & 1);
    }
    let (format, channels, sample_rate, block_align, bits) =
        fmt.ok_or_else(|| WavParseError::NotWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| WavParseError::NotWav("no data chunk".into()))?;
    if channels == 0 {
        return Err(WavParseError::NotWav("zero channels".into()));
    }
    let sample_bytes = (bits / 8) as usize;
    let stride = if block_align > 0 {
        block_align as usize
    } else {
        sample_bytes * channels as usize
    };
    if stride == 0 || sample_bytes == 0 {
        return Err(WavParseError::NotWav("zero block alignment".into()));
    }
    let frames = data.len() / stride;
    let mut samples = Vec::with_capacity(frames);
    match (format, bits) {
        (1, 16) => {
            for i in 0..frames {
                let o = i * stride;
                let v = i16::from_le_bytes(data[o..o + 2].try_into().unwrap());
                samples.push(v as f32 / 32768.0);
            }
        }
        (3, 32) => {
            for i in 0..frames {
                let o = i * stride;
                samples.push(f32::from_le_bytes(data[o..o + 4].try_into().unwrap()));
            }
        }
        (f, b) => {
            return Err(WavParseError::Unsupported(format!(
                "format tag {f} with {b}-bit samples (supported: 16-bit int, 32-bit float)"
            )))
        }
    }
    Ok(RawWav { samples, sample_rate })
}
