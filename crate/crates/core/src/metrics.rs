//! Evaluation metrics: SNR, SI-SDR, their improvements, the negative-SNR
//! training loss, the incorrect-target ratio, and a paired t-test.
//!
//! Conventions, fixed here so numbers are reproducible:
//!
//! - All reductions accumulate in `f64` regardless of input precision.
//! - SI-SDR is computed **without** mean removal.
//! - `est == ref` gives `+∞` SNR/SI-SDR; an estimate orthogonal to the
//!   reference gives `-∞` SI-SDR. Infinities propagate through improvements;
//!   [`summarize`] excludes non-finite samples from mean/std and reports how
//!   many were excluded.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("reference signal is all zeros")]
    ZeroReference,
    #[error("estimate signal is all zeros")]
    ZeroEstimate,
    #[error("length mismatch: estimate {est} vs reference {reference}")]
    LengthMismatch { est: usize, reference: usize },
    #[error("empty sample list")]
    EmptyList,
    #[error("degenerate sample: paired differences have zero variance")]
    DegenerateSample,
}

/// Sample type accepted by the metric functions: `f32` waveform samples or
/// `f64` test vectors. All arithmetic happens in `f64` either way.
pub trait MetricSample: Copy {
    fn to_f64(self) -> f64;
}

impl MetricSample for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl MetricSample for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

fn check_lengths<T>(est: &[T], reference: &[T]) -> Result<(), MetricsError> {
    if est.len() != reference.len() {
        return Err(MetricsError::LengthMismatch { est: est.len(), reference: reference.len() });
    }
    Ok(())
}

fn energy<T: MetricSample>(x: &[T]) -> f64 {
    x.iter().map(|&v| v.to_f64() * v.to_f64()).sum()
}

fn dot<T: MetricSample>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.to_f64() * y.to_f64()).sum()
}

/// Signal-to-noise ratio in dB: `10·log10(‖ref‖² / ‖est − ref‖²)`.
///
/// Returns `+∞` when the residual is exactly zero. Not scale invariant:
/// `snr(2·ref, ref)` is 0 dB.
pub fn snr<T: MetricSample>(est: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    check_lengths(est, reference)?;
    let ref_energy = energy(reference);
    if ref_energy == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let residual: f64 = est
        .iter()
        .zip(reference)
        .map(|(&e, &r)| {
            let d = e.to_f64() - r.to_f64();
            d * d
        })
        .sum();
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (ref_energy / residual).log10())
}

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The estimate is decomposed against the scaled reference
/// `s_target = (⟨est,ref⟩/‖ref‖²)·ref`; the value is
/// `10·log10(‖s_target‖²/‖est − s_target‖²)`. An estimate exactly
/// proportional to the reference gives `+∞`; an estimate orthogonal to it
/// gives `-∞` (there is no target component to rate).
pub fn si_sdr<T: MetricSample>(est: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    check_lengths(est, reference)?;
    let ref_energy = energy(reference);
    if ref_energy == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    if energy(est) == 0.0 {
        return Err(MetricsError::ZeroEstimate);
    }
    let alpha = dot(est, reference) / ref_energy;
    if alpha == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let target_energy = alpha * alpha * ref_energy;
    let noise_energy: f64 = est
        .iter()
        .zip(reference)
        .map(|(&e, &r)| {
            let d = e.to_f64() - alpha * r.to_f64();
            d * d
        })
        .sum();
    if noise_energy == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (target_energy / noise_energy).log10())
}

/// Metric improvements of an estimate over the unprocessed mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvements {
    pub snri_db: f64,
    pub si_sdri_db: f64,
}

/// SNRi and SI-SDRi: `metric(est, ref) − metric(mixture, ref)`.
pub fn improvements<T: MetricSample>(
    mixture: &[T],
    est: &[T],
    reference: &[T],
) -> Result<Improvements, MetricsError> {
    Ok(Improvements {
        snri_db: snr(est, reference)? - snr(mixture, reference)?,
        si_sdri_db: si_sdr(est, reference)? - si_sdr(mixture, reference)?,
    })
}

/// Negative SNR, the training loss. The residual energy is floored at
/// `1e-10·‖ref‖²` so a perfect estimate yields −100 dB instead of −∞.
pub fn neg_snr_loss<T: MetricSample>(est: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    check_lengths(est, reference)?;
    let ref_energy = energy(reference);
    if ref_energy == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let residual: f64 = est
        .iter()
        .zip(reference)
        .map(|(&e, &r)| {
            let d = e.to_f64() - r.to_f64();
            d * d
        })
        .sum();
    let floored = residual.max(1e-10 * ref_energy);
    Ok(-10.0 * (ref_energy / floored).log10())
}

/// One evaluated sample for [`incorrect_target_ratio`]: the network output
/// plus both candidate ground truths and the mixture it was computed from.
#[derive(Debug, Clone)]
pub struct TargetComparison<'a> {
    pub output: &'a [f32],
    /// Target conversation: reference speaker + partners.
    pub target_conv: &'a [f32],
    /// Wrong conversation: reference speaker + interference speakers.
    pub wrong_conv: &'a [f32],
    pub mixture: &'a [f32],
}

/// Fraction of samples whose output improves SNR against the *wrong*
/// conversation strictly more than against the target conversation.
pub fn incorrect_target_ratio(samples: &[TargetComparison<'_>]) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let mut incorrect = 0usize;
    for s in samples {
        let snri_target = snr(s.output, s.target_conv)? - snr(s.mixture, s.target_conv)?;
        let snri_wrong = snr(s.output, s.wrong_conv)? - snr(s.mixture, s.wrong_conv)?;
        if snri_wrong > snri_target {
            incorrect += 1;
        }
    }
    Ok(incorrect as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub dof: f64,
}

/// Two-sided paired t-test on matched samples `a` and `b`.
///
/// Tests whether the mean of `a − b` differs from zero, using the Student-t
/// CDF with `n − 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { est: a.len(), reference: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricsError::EmptyList);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|&d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(MetricsError::DegenerateSample);
    }
    let se = (var / n as f64).sqrt();
    let t = mean / se;
    let dof = n as f64 - 1.0;
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid dof >= 1");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult { t_stat: t, p_value: p, dof })
}

/// Mean/std over the finite entries of a metric column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub finite_count: usize,
    pub non_finite_count: usize,
}

/// Summarize a metric column, excluding non-finite values (perfect or
/// orthogonal estimates) from the moments but counting them.
pub fn summarize(values: &[f64]) -> Result<Summary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let non_finite_count = values.len() - finite.len();
    if finite.is_empty() {
        return Ok(Summary { mean: f64::NAN, std: f64::NAN, finite_count: 0, non_finite_count });
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let var = if finite.len() > 1 {
        finite.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (finite.len() as f64 - 1.0)
    } else {
        0.0
    };
    Ok(Summary {
        mean,
        std: var.sqrt(),
        finite_count: finite.len(),
        non_finite_count,
    })
}

/// Per-sample evaluation row.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalResult {
    pub id: String,
    pub snr_db: f64,
    pub si_sdr_db: f64,
    pub snri_db: f64,
    pub si_sdri_db: f64,
}
