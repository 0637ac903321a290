//! Real-time-factor benchmark for the forward pass.

use std::time::Instant;

use rand::Rng;

use crate::audio::{Waveform, PIPELINE_SAMPLE_RATE};
use crate::net::config::{param_count, GlobalVariant, ModelConfig};
use crate::net::weights::WeightStore;
use crate::net::{forward, NetError};
use crate::seeding::derive_rng;

/// One benchmarked variant.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub variant: GlobalVariant,
    pub median_runtime_s: f64,
    pub rtf: f64,
    pub param_count: usize,
}

/// Full benchmark result.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub input_len_s: f64,
    pub reps: usize,
    /// Worker threads used by the forward pass (always 1: inference is
    /// single-threaded for stable timing).
    pub threads: usize,
    pub rows: Vec<BenchRow>,
}

/// Real-time factor: processing time divided by audio duration.
pub fn rtf(runtime_s: f64, input_len_s: f64) -> f64 {
    runtime_s / input_len_s
}

fn median(mut times: Vec<f64>) -> f64 {
    times.sort_by(f64::total_cmp);
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    }
}

/// Median wall-clock seconds to run the forward pass on seeded white noise of
/// `input_len_s` seconds. Requires at least 3 repetitions.
pub fn median_forward_seconds(
    cfg: &ModelConfig,
    input_len_s: f64,
    reps: usize,
    seed: u64,
) -> Result<f64, NetError> {
    if reps < 3 {
        return Err(NetError::BadConfig(format!(
            "benchmark needs at least 3 repetitions, got {reps}"
        )));
    }
    cfg.validate()?;
    let n = (input_len_s * PIPELINE_SAMPLE_RATE as f64).round() as usize;
    if n == 0 {
        return Err(NetError::BadConfig(format!(
            "input length {input_len_s} s is too short"
        )));
    }
    let mut rng = derive_rng(seed, "bench.input", 0);
    let samples: Vec<f32> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let x = Waveform::new(samples, PIPELINE_SAMPLE_RATE).expect("benched input is well-formed");
    let emb: Vec<f32> = {
        let mut r = derive_rng(seed, "bench.embedding", 0);
        (0..cfg.k).map(|_| r.random_range(-1.0..1.0)).collect()
    };
    let weights = WeightStore::random_init(cfg, seed);

    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        let y = forward(&x, &emb, &weights, cfg)?;
        times.push(t0.elapsed().as_secs_f64());
        assert_eq!(y.len(), x.len());
    }
    Ok(median(times))
}

/// Benchmark each variant on the same seeded input: median runtime over
/// `reps` repetitions, divided by the input duration.
pub fn rtf_bench(
    base: &ModelConfig,
    variants: &[GlobalVariant],
    input_len_s: f64,
    reps: usize,
    seed: u64,
) -> Result<BenchReport, NetError> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = ModelConfig { global_variant: variant, ..base.clone() };
        let median_runtime_s = median_forward_seconds(&cfg, input_len_s, reps, seed)?;
        rows.push(BenchRow {
            variant,
            median_runtime_s,
            rtf: rtf(median_runtime_s, input_len_s),
            param_count: param_count(&cfg),
        });
    }
    Ok(BenchReport { input_len_s, reps, threads: 1, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtf_is_runtime_over_duration() {
        assert!((rtf(1.8, 60.0) - 0.03).abs() < 1e-12);
        assert!((rtf(60.0, 60.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn median_handles_even_and_odd_counts() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn too_few_reps_are_rejected() {
        let cfg = ModelConfig::default();
        assert!(matches!(
            median_forward_seconds(&cfg, 1.0, 2, 0),
            Err(NetError::BadConfig(_))
        ));
    }

    #[test]
    fn bench_runs_on_a_tiny_config() {
        let cfg = ModelConfig {
            d: 4,
            b: 1,
            w: 8,
            s: 8,
            h: 2,
            l: 1,
            e: 3,
            k: 16,
            ..ModelConfig::default()
        };
        let report = rtf_bench(
            &cfg,
            &[GlobalVariant::MeanPool, GlobalVariant::FullLstm],
            0.3,
            3,
            42,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.threads, 1);
        for row in &report.rows {
            assert!(row.median_runtime_s > 0.0);
            assert!(row.rtf > 0.0);
            assert!(row.param_count > 0);
        }
        // the two variants have different parameter counts
        assert_ne!(report.rows[0].param_count, report.rows[1].param_count);
    }
}
