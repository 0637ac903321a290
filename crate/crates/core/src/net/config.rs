//! Network configuration and the parameter inventory derived from it.
//!
//! [`parameter_specs`] is the single source of truth for every tensor the
//! forward pass reads: weight files are validated against it, random
//! initialization fills it, and the parameter count is its total size.

use serde::{Deserialize, Serialize};

use crate::audio::StftConfig;
use crate::corpus::EMBEDDING_DIM;
use crate::net::NetError;

/// Interchangeable long-range ("global") module variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalVariant {
    /// Mean-pool windows to a short chunk sequence, multi-head self-attention
    /// across chunks, broadcast back (the default architecture).
    PoolingAttention,
    /// Mean-pool + feedforward only (no attention).
    MeanPool,
    /// Max-pool + feedforward only (no attention).
    MaxPool,
    /// One bidirectional recurrent layer over all frames.
    FullLstm,
    /// Self-attention restricted to frames within each window.
    LocalAttention,
    /// Frame-level self-attention over the whole sequence (W = S = 1).
    FullAttention,
}

impl GlobalVariant {
    pub const ALL: [GlobalVariant; 6] = [
        GlobalVariant::PoolingAttention,
        GlobalVariant::MeanPool,
        GlobalVariant::MaxPool,
        GlobalVariant::FullLstm,
        GlobalVariant::LocalAttention,
        GlobalVariant::FullAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GlobalVariant::PoolingAttention => "pooling_attention",
            GlobalVariant::MeanPool => "mean_pool",
            GlobalVariant::MaxPool => "max_pool",
            GlobalVariant::FullLstm => "full_lstm",
            GlobalVariant::LocalAttention => "local_attention",
            GlobalVariant::FullAttention => "full_attention",
        }
    }

    pub fn parse(s: &str) -> Result<Self, NetError> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| NetError::UnknownVariant(s.to_string()))
    }

    fn uses_attention(self) -> bool {
        matches!(
            self,
            GlobalVariant::PoolingAttention
                | GlobalVariant::LocalAttention
                | GlobalVariant::FullAttention
        )
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// TF embedding channels.
    pub d: usize,
    /// Number of extraction blocks.
    pub b: usize,
    /// Local window in TF frames.
    pub w: usize,
    /// Window stride in TF frames.
    pub s: usize,
    /// Recurrent hidden size per direction.
    pub h: usize,
    /// Attention heads.
    pub l: usize,
    /// Key/query dimension per head.
    pub e: usize,
    /// Speaker-embedding dimension.
    pub k: usize,
    pub stft: StftConfig,
    pub global_variant: GlobalVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 16,
            b: 3,
            w: 100,
            s: 100,
            h: 64,
            l: 4,
            e: 64,
            k: EMBEDDING_DIM,
            stft: StftConfig::default(),
            global_variant: GlobalVariant::PoolingAttention,
        }
    }
}

impl ModelConfig {
    /// Frequency bins implied by the STFT config.
    pub fn freq_bins(&self) -> usize {
        self.stft.freq_bins()
    }

    /// Flattened per-frame feature size D·F.
    pub fn df(&self) -> usize {
        self.d * self.freq_bins()
    }

    /// Per-head value dimension D·F / L.
    pub fn dv(&self) -> usize {
        self.df() / self.l
    }

    pub fn validate(&self) -> Result<(), NetError> {
        for (name, v) in [
            ("d", self.d),
            ("b", self.b),
            ("w", self.w),
            ("s", self.s),
            ("h", self.h),
            ("l", self.l),
            ("e", self.e),
            ("k", self.k),
        ] {
            if v == 0 {
                return Err(NetError::BadConfig(format!("{name} must be positive")));
            }
        }
        if self.s > self.w {
            return Err(NetError::BadConfig(format!(
                "stride {} exceeds window {}",
                self.s, self.w
            )));
        }
        if self.df() % self.l != 0 {
            return Err(NetError::BadConfig(format!(
                "D·F = {} not divisible by {} heads",
                self.df(),
                self.l
            )));
        }
        self.stft
            .validate(crate::audio::PIPELINE_SAMPLE_RATE)
            .map_err(|e| NetError::BadConfig(e.to_string()))?;
        Ok(())
    }

    /// Effective pooling geometry of the global module.
    pub(crate) fn global_window_stride(&self) -> (usize, usize) {
        match self.global_variant {
            GlobalVariant::FullAttention => (1, 1),
            _ => (self.w, self.s),
        }
    }
}

/// Every tensor the forward pass reads, with its exact shape, in a fixed
/// deterministic order.
pub fn parameter_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, h, k) = (cfg.d, cfg.h, cfg.k);
    let df = cfg.df();
    let dv = cfg.dv();
    let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| specs.push((name, shape));

    push("encode.conv.weight".into(), vec![d, 2, 3, 3]);
    push("encode.conv.bias".into(), vec![d]);

    for b in 0..cfg.b {
        let pfx = format!("block{b}");
        if b >= 1 {
            push(format!("{pfx}.film.gamma.weight"), vec![d, k]);
            push(format!("{pfx}.film.gamma.bias"), vec![d]);
            push(format!("{pfx}.film.beta.weight"), vec![d, k]);
            push(format!("{pfx}.film.beta.bias"), vec![d]);
        }
        for axis in ["freq", "time"] {
            for dir in ["fw", "bw"] {
                push(format!("{pfx}.local.{axis}.lstm.{dir}.w_ih"), vec![4 * h, d]);
                push(format!("{pfx}.local.{axis}.lstm.{dir}.w_hh"), vec![4 * h, h]);
                push(format!("{pfx}.local.{axis}.lstm.{dir}.b_ih"), vec![4 * h]);
                push(format!("{pfx}.local.{axis}.lstm.{dir}.b_hh"), vec![4 * h]);
            }
            push(format!("{pfx}.local.{axis}.proj.weight"), vec![d, 2 * h]);
            push(format!("{pfx}.local.{axis}.proj.bias"), vec![d]);
        }
        match cfg.global_variant {
            v if v.uses_attention() => {
                for l in 0..cfg.l {
                    push(format!("{pfx}.global.head{l}.key.weight"), vec![cfg.e, df]);
                    push(format!("{pfx}.global.head{l}.key.bias"), vec![cfg.e]);
                    push(format!("{pfx}.global.head{l}.query.weight"), vec![cfg.e, df]);
                    push(format!("{pfx}.global.head{l}.query.bias"), vec![cfg.e]);
                    push(format!("{pfx}.global.head{l}.value.weight"), vec![dv, df]);
                    push(format!("{pfx}.global.head{l}.value.bias"), vec![dv]);
                }
                push(format!("{pfx}.global.ffn.weight"), vec![d, d]);
                push(format!("{pfx}.global.ffn.bias"), vec![d]);
                push(format!("{pfx}.global.ffn.prelu"), vec![1]);
            }
            GlobalVariant::MeanPool | GlobalVariant::MaxPool => {
                push(format!("{pfx}.global.ffn.weight"), vec![d, d]);
                push(format!("{pfx}.global.ffn.bias"), vec![d]);
                push(format!("{pfx}.global.ffn.prelu"), vec![1]);
            }
            GlobalVariant::FullLstm => {
                for dir in ["fw", "bw"] {
                    push(format!("{pfx}.global.lstm.{dir}.w_ih"), vec![4 * h, d]);
                    push(format!("{pfx}.global.lstm.{dir}.w_hh"), vec![4 * h, h]);
                    push(format!("{pfx}.global.lstm.{dir}.b_ih"), vec![4 * h]);
                    push(format!("{pfx}.global.lstm.{dir}.b_hh"), vec![4 * h]);
                }
                push(format!("{pfx}.global.proj.weight"), vec![d, 2 * h]);
                push(format!("{pfx}.global.proj.bias"), vec![d]);
            }
            _ => unreachable!("attention variants handled above"),
        }
    }

    push("decode.deconv.weight".into(), vec![2, d, 3, 3]);
    push("decode.deconv.bias".into(), vec![2]);
    specs
}

/// Total parameter count implied by a config.
pub fn param_count(cfg: &ModelConfig) -> usize {
    parameter_specs(cfg)
        .iter()
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum()
}
