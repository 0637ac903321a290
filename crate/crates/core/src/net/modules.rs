//! Extraction-network building blocks over `[T, F, D]` activation tensors
//! (time frames × frequency bins × channels, channels last).

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};

use crate::net::config::GlobalVariant;
use crate::net::lstm::{blstm_projected, BlstmProjParams};
use crate::net::math::{prelu, softmax_rows};
use crate::net::weights::{Tensor, WeightReader};
use crate::net::NetError;

fn mat(t: &Tensor) -> ArrayView2<'_, f32> {
    ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("tensor shape checked")
}

// ---------------------------------------------------------------------------
// 3×3 convolution
// ---------------------------------------------------------------------------

/// 2D convolution with a 3×3 kernel, stride 1, zero padding 1:
/// `[T, F, Cin] → [T, F, Cout]`. Weight layout `[Cout, Cin, 3, 3]`.
///
/// A stride-1 "deconvolution" with symmetric padding has the same receptive
/// field with a flipped kernel, so this one routine serves both the encoder
/// and the decoder (the flip is absorbed into the learned weights).
pub fn conv3x3(input: ArrayView3<f32>, weight: &Tensor, bias: &Tensor) -> Array3<f32> {
    let (t_len, f_len, cin) = input.dim();
    let cout = weight.shape[0];
    assert_eq!(weight.shape, vec![cout, cin, 3, 3], "conv weight shape");
    assert_eq!(bias.shape, vec![cout], "conv bias shape");
    let w = &weight.data;
    let mut out = Array3::<f32>::zeros((t_len, f_len, cout));

    // gather each position's 3×3×Cin patch in [ci][kt][kf] order so the
    // per-channel weight rows are read linearly
    let mut patch = vec![0.0f32; cin * 9];
    for t in 0..t_len {
        for f in 0..f_len {
            patch.iter_mut().for_each(|v| *v = 0.0);
            for kt in 0..3usize {
                let ti = t as isize + kt as isize - 1;
                if ti < 0 || ti >= t_len as isize {
                    continue;
                }
                for kf in 0..3usize {
                    let fi = f as isize + kf as isize - 1;
                    if fi < 0 || fi >= f_len as isize {
                        continue;
                    }
                    let src = input.slice(s![ti as usize, fi as usize, ..]);
                    for ci in 0..cin {
                        patch[ci * 9 + kt * 3 + kf] = src[ci];
                    }
                }
            }
            let mut dst = out.slice_mut(s![t, f, ..]);
            for co in 0..cout {
                let row = &w[co * cin * 9..(co + 1) * cin * 9];
                let mut acc = bias.data[co];
                for (wv, xv) in row.iter().zip(patch.iter()) {
                    acc += wv * xv;
                }
                dst[co] = acc;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// FiLM conditioning
// ---------------------------------------------------------------------------

/// Per-channel affine conditioning weights: γ and β are each a single linear
/// map from the speaker embedding to one scalar per channel.
pub struct FilmParams<'a> {
    pub gamma_w: ArrayView2<'a, f32>, // [D, K]
    pub gamma_b: &'a [f32],           // [D]
    pub beta_w: ArrayView2<'a, f32>,  // [D, K]
    pub beta_b: &'a [f32],            // [D]
}

impl<'a> FilmParams<'a> {
    pub fn read(
        reader: &WeightReader<'a>,
        prefix: &str,
        d: usize,
        k: usize,
    ) -> Result<Self, NetError> {
        Ok(Self {
            gamma_w: mat(reader.get(&format!("{prefix}.gamma.weight"), &[d, k])?),
            gamma_b: &reader.get(&format!("{prefix}.gamma.bias"), &[d])?.data,
            beta_w: mat(reader.get(&format!("{prefix}.beta.weight"), &[d, k])?),
            beta_b: &reader.get(&format!("{prefix}.beta.bias"), &[d])?.data,
        })
    }
}

/// Apply `y[t,f,d] ← γ_d(emb)·y[t,f,d] + β_d(emb)` in place.
pub fn film(y: &mut Array3<f32>, p: &FilmParams<'_>, emb: &[f32]) -> Result<(), NetError> {
    let d = y.dim().2;
    if p.gamma_w.ncols() != emb.len() {
        return Err(NetError::ShapeMismatch(format!(
            "embedding length {} but conditioning expects {}",
            emb.len(),
            p.gamma_w.ncols()
        )));
    }
    if p.gamma_w.nrows() != d {
        return Err(NetError::ShapeMismatch(format!(
            "conditioning is {}-channel but activations have {d}",
            p.gamma_w.nrows()
        )));
    }
    let affine = |w: &ArrayView2<f32>, b: &[f32]| -> Vec<f32> {
        (0..d)
            .map(|i| {
                let mut acc = b[i];
                for (wv, ev) in w.row(i).iter().zip(emb) {
                    acc += wv * ev;
                }
                acc
            })
            .collect()
    };
    let gamma = affine(&p.gamma_w, p.gamma_b);
    let beta = affine(&p.beta_w, p.beta_b);
    for mut frame in y.rows_mut() {
        for (i, v) in frame.iter_mut().enumerate() {
            *v = gamma[i] * *v + beta[i];
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Local module: windowed frequency + time recurrences
// ---------------------------------------------------------------------------

pub struct LocalParams<'a> {
    pub freq: BlstmProjParams<'a>,
    pub time: BlstmProjParams<'a>,
}

impl<'a> LocalParams<'a> {
    pub fn read(
        reader: &WeightReader<'a>,
        prefix: &str,
        d: usize,
        h: usize,
    ) -> Result<Self, NetError> {
        Ok(Self {
            freq: BlstmProjParams::read(reader, &format!("{prefix}.freq"), d, h, d)?,
            time: BlstmProjParams::read(reader, &format!("{prefix}.time"), d, h, d)?,
        })
    }
}

/// Chunk the sequence into `ceil(T/stride)` windows of `w_len` frames (last
/// window zero-padded); within each window run a frequency-axis BLSTM +
/// projection + residual, then a time-axis BLSTM + projection + residual;
/// write windows back at their frame positions, averaging where they overlap.
pub fn local_module(y: &mut Array3<f32>, p: &LocalParams<'_>, w_len: usize, stride: usize) {
    let (t_len, f_len, d) = y.dim();
    assert!(stride >= 1 && stride <= w_len, "invalid window geometry");
    let c = t_len.div_ceil(stride);

    // padded windows [C, W, F, D]
    let mut win = Array4::<f32>::zeros((c, w_len, f_len, d));
    for ci in 0..c {
        let t0 = ci * stride;
        let n = (t_len - t0).min(w_len);
        win.slice_mut(s![ci, 0..n, .., ..])
            .assign(&y.slice(s![t0..t0 + n, .., ..]));
    }

    // frequency stage: sequence along F, every frame of every window is an
    // independent batch entry
    {
        let flat = win
            .view()
            .into_shape_with_order((c * w_len, f_len, d))
            .expect("windows are standard layout");
        let out = blstm_projected(flat.permuted_axes([1, 0, 2]), &p.freq); // [F, C·W, D]
        let mut win_flat = win
            .view_mut()
            .into_shape_with_order((c * w_len, f_len, d))
            .expect("windows are standard layout");
        for f in 0..f_len {
            win_flat
                .slice_mut(s![.., f, ..])
                .zip_mut_with(&out.index_axis(Axis(0), f), |a, &b| *a += b);
        }
    }

    // time stage: sequence along the window axis, batched over (window, bin)
    {
        let mut tin = Array3::<f32>::zeros((w_len, c * f_len, d));
        for ci in 0..c {
            for wi in 0..w_len {
                tin.slice_mut(s![wi, ci * f_len..(ci + 1) * f_len, ..])
                    .assign(&win.slice(s![ci, wi, .., ..]));
            }
        }
        let out = blstm_projected(tin.view(), &p.time); // [W, C·F, D]
        for ci in 0..c {
            for wi in 0..w_len {
                win.slice_mut(s![ci, wi, .., ..])
                    .zip_mut_with(&out.slice(s![wi, ci * f_len..(ci + 1) * f_len, ..]), |a, &b| {
                        *a += b
                    });
            }
        }
    }

    // write back, averaging overlapped frames (counts are all 1 when
    // stride == w_len)
    let counts = cover_counts(t_len, c, w_len, stride);
    let mut acc = Array3::<f32>::zeros((t_len, f_len, d));
    for ci in 0..c {
        let t0 = ci * stride;
        let n = (t_len - t0).min(w_len);
        for wi in 0..n {
            let inv = 1.0 / counts[t0 + wi];
            acc.index_axis_mut(Axis(0), t0 + wi)
                .zip_mut_with(&win.slice(s![ci, wi, .., ..]), |a, &b| *a += b * inv);
        }
    }
    std::mem::swap(y, &mut acc);
}

/// How many windows cover each frame.
fn cover_counts(t_len: usize, c: usize, w_len: usize, stride: usize) -> Vec<f32> {
    let mut counts = vec![0.0f32; t_len];
    for ci in 0..c {
        let t0 = ci * stride;
        let n = (t_len - t0).min(w_len);
        for item in counts.iter_mut().skip(t0).take(n) {
            *item += 1.0;
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// Global module
// ---------------------------------------------------------------------------

pub struct HeadParams<'a> {
    pub key_w: ArrayView2<'a, f32>, // [E, M]
    pub key_b: &'a [f32],
    pub query_w: ArrayView2<'a, f32>, // [E, M]
    pub query_b: &'a [f32],
    pub value_w: ArrayView2<'a, f32>, // [DV, M]
    pub value_b: &'a [f32],
}

pub struct FfnParams<'a> {
    pub weight: ArrayView2<'a, f32>, // [D, D]
    pub bias: &'a [f32],
    pub alpha: f32,
}

impl<'a> FfnParams<'a> {
    fn read(reader: &WeightReader<'a>, prefix: &str, d: usize) -> Result<Self, NetError> {
        Ok(Self {
            weight: mat(reader.get(&format!("{prefix}.weight"), &[d, d])?),
            bias: &reader.get(&format!("{prefix}.bias"), &[d])?.data,
            alpha: reader.get(&format!("{prefix}.prelu"), &[1])?.data[0],
        })
    }
}

pub enum GlobalParams<'a> {
    Attention { heads: Vec<HeadParams<'a>>, ffn: FfnParams<'a> },
    Pool { ffn: FfnParams<'a> },
    Lstm(BlstmProjParams<'a>),
}

impl<'a> GlobalParams<'a> {
    pub fn read(
        reader: &WeightReader<'a>,
        prefix: &str,
        cfg: &crate::net::config::ModelConfig,
    ) -> Result<Self, NetError> {
        let d = cfg.d;
        match cfg.global_variant {
            GlobalVariant::PoolingAttention
            | GlobalVariant::LocalAttention
            | GlobalVariant::FullAttention => {
                let (df, dv, e) = (cfg.df(), cfg.dv(), cfg.e);
                let mut heads = Vec::with_capacity(cfg.l);
                for l in 0..cfg.l {
                    let p = format!("{prefix}.head{l}");
                    heads.push(HeadParams {
                        key_w: mat(reader.get(&format!("{p}.key.weight"), &[e, df])?),
                        key_b: &reader.get(&format!("{p}.key.bias"), &[e])?.data,
                        query_w: mat(reader.get(&format!("{p}.query.weight"), &[e, df])?),
                        query_b: &reader.get(&format!("{p}.query.bias"), &[e])?.data,
                        value_w: mat(reader.get(&format!("{p}.value.weight"), &[dv, df])?),
                        value_b: &reader.get(&format!("{p}.value.bias"), &[dv])?.data,
                    });
                }
                let ffn = FfnParams::read(reader, &format!("{prefix}.ffn"), d)?;
                Ok(GlobalParams::Attention { heads, ffn })
            }
            GlobalVariant::MeanPool | GlobalVariant::MaxPool => Ok(GlobalParams::Pool {
                ffn: FfnParams::read(reader, &format!("{prefix}.ffn"), d)?,
            }),
            GlobalVariant::FullLstm => Ok(GlobalParams::Lstm(BlstmProjParams::read(
                reader, prefix, d, cfg.h, d,
            )?)),
        }
    }
}

/// `x·wᵀ + b` for row-major `x [n, m]`, `w [o, m]`.
fn linear(x: &ArrayView2<f32>, w: &ArrayView2<f32>, b: &[f32]) -> Array2<f32> {
    let mut out = Array2::<f32>::zeros((x.nrows(), w.nrows()));
    general_mat_mul(1.0, x, &w.t(), 0.0, &mut out);
    for mut row in out.rows_mut() {
        for (v, &bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
    out
}

/// Multi-head scaled dot-product self-attention over the rows of `x [n, m]`,
/// returning the head-concatenated context `[n, L·DV]`. Score rows are
/// processed in blocks so the full `n × n` attention matrix is never held in
/// memory.
pub fn multi_head_attention(x: &Array2<f32>, heads: &[HeadParams<'_>], e: usize) -> Array2<f32> {
    let n = x.nrows();
    let dv = heads[0].value_w.nrows();
    let scale = 1.0 / (e as f32).sqrt();
    let mut out = Array2::<f32>::zeros((n, heads.len() * dv));
    const ROW_BLOCK: usize = 512;
    let cap = ROW_BLOCK.min(n);
    let mut scores = Array2::<f32>::zeros((cap, n));

    for (hi, head) in heads.iter().enumerate() {
        let k = linear(&x.view(), &head.key_w, head.key_b); // [n, E]
        let q = linear(&x.view(), &head.query_w, head.query_b); // [n, E]
        let v = linear(&x.view(), &head.value_w, head.value_b); // [n, DV]
        let mut r0 = 0;
        while r0 < n {
            let r1 = (r0 + ROW_BLOCK).min(n);
            let rows = r1 - r0;
            {
                let mut sc = scores.slice_mut(s![0..rows, ..]);
                general_mat_mul(scale, &q.slice(s![r0..r1, ..]), &k.t(), 0.0, &mut sc);
                softmax_rows(sc.as_slice_mut().expect("score rows are contiguous"), n);
            }
            let mut dst = out.slice_mut(s![r0..r1, hi * dv..(hi + 1) * dv]);
            general_mat_mul(1.0, &scores.slice(s![0..rows, ..]), &v, 0.0, &mut dst);
            r0 = r1;
        }
    }
    out
}

/// Fixed sinusoidal positional encoding table `[n, m]`
/// (`pe[pos, 2i] = sin(pos·ω_i)`, `pe[pos, 2i+1] = cos(pos·ω_i)` with
/// `ω_i = 10000^(-2i/m)`).
pub fn positional_encoding(n: usize, m: usize) -> Array2<f32> {
    let mut pe = Array2::<f32>::zeros((n, m));
    for pos in 0..n {
        let mut i = 0;
        while i < m {
            let angle = pos as f64 / 10000f64.powf(i as f64 / m as f64);
            pe[[pos, i]] = angle.sin() as f32;
            if i + 1 < m {
                pe[[pos, i + 1]] = angle.cos() as f32;
            }
            i += 2;
        }
    }
    pe
}

/// Pool frames per window (mean or max over the actual, unpadded frames):
/// `[T, F, D] → [C, F, D]`.
fn pool_chunks(y: &Array3<f32>, w_len: usize, stride: usize, max: bool) -> Array3<f32> {
    let (t_len, f_len, d) = y.dim();
    let c = t_len.div_ceil(stride);
    let mut out = Array3::<f32>::zeros((c, f_len, d));
    for ci in 0..c {
        let t0 = ci * stride;
        let n = (t_len - t0).min(w_len);
        let mut dst = out.index_axis_mut(Axis(0), ci);
        if max {
            dst.fill(f32::NEG_INFINITY);
            for t in t0..t0 + n {
                dst.zip_mut_with(&y.index_axis(Axis(0), t), |a, &b| *a = a.max(b));
            }
        } else {
            for t in t0..t0 + n {
                dst.zip_mut_with(&y.index_axis(Axis(0), t), |a, &b| *a += b);
            }
            let inv = 1.0 / n as f32;
            dst.mapv_inplace(|v| v * inv);
        }
    }
    out
}

/// Apply the feedforward layer to each length-D row: `prelu(W·v + b)`.
fn ffn_apply(x: ArrayView2<f32>, p: &FfnParams<'_>) -> Array2<f32> {
    let mut out = Array2::<f32>::zeros((x.nrows(), p.weight.nrows()));
    general_mat_mul(1.0, &x, &p.weight.t(), 0.0, &mut out);
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = prelu(*v + p.bias[j], p.alpha);
        }
    }
    out
}

/// Broadcast each chunk's `[F, D]` result across the frames of its window and
/// residual-add into `y`, averaging where windows overlap.
fn residual_upsample_add(y: &mut Array3<f32>, vals: &Array3<f32>, w_len: usize, stride: usize) {
    let t_len = y.dim().0;
    let c = vals.dim().0;
    let counts = cover_counts(t_len, c, w_len, stride);
    for ci in 0..c {
        let t0 = ci * stride;
        let n = (t_len - t0).min(w_len);
        let src = vals.index_axis(Axis(0), ci);
        for t in t0..t0 + n {
            let inv = 1.0 / counts[t];
            y.index_axis_mut(Axis(0), t)
                .zip_mut_with(&src, |a, &b| *a += b * inv);
        }
    }
}

/// Long-range context module. `w_len`/`stride` are the effective pooling
/// geometry (already collapsed to 1/1 for the full-attention variant).
pub fn global_module(
    y: &mut Array3<f32>,
    params: &GlobalParams<'_>,
    variant: GlobalVariant,
    w_len: usize,
    stride: usize,
    e: usize,
) -> Result<(), NetError> {
    let (t_len, f_len, d) = y.dim();
    let m = f_len * d;
    match (variant, params) {
        (GlobalVariant::PoolingAttention | GlobalVariant::FullAttention, GlobalParams::Attention { heads, ffn }) => {
            let pooled = pool_chunks(y, w_len, stride, false); // [C, F, D]
            let c = pooled.dim().0;
            let mut x2 = pooled
                .into_shape_with_order((c, m))
                .expect("pooled tensor is standard layout");
            x2.zip_mut_with(&positional_encoding(c, m), |a, &b| *a += b);
            let att = multi_head_attention(&x2, heads, e); // [C, L·DV]
            if att.ncols() != m {
                return Err(NetError::ShapeMismatch(format!(
                    "attention heads produce {} features, activations need {m}",
                    att.ncols()
                )));
            }
            let flat = att
                .into_shape_with_order((c * f_len, d))
                .expect("attention output is standard layout");
            let vals = ffn_apply(flat.view(), ffn)
                .into_shape_with_order((c, f_len, d))
                .expect("ffn output is standard layout");
            residual_upsample_add(y, &vals, w_len, stride);
            Ok(())
        }
        (GlobalVariant::LocalAttention, GlobalParams::Attention { heads, ffn }) => {
            let c = t_len.div_ceil(stride);
            let pe = positional_encoding(w_len.min(t_len), m);
            let counts = cover_counts(t_len, c, w_len, stride);
            let mut acc = Array3::<f32>::zeros((t_len, f_len, d));
            for ci in 0..c {
                let t0 = ci * stride;
                let n = (t_len - t0).min(w_len);
                let mut xw = Array2::<f32>::zeros((n, m));
                for r in 0..n {
                    let frame = y.index_axis(Axis(0), t0 + r);
                    let row = frame.to_shape(m).expect("frame is contiguous");
                    xw.row_mut(r).assign(&row);
                }
                xw.zip_mut_with(&pe.slice(s![0..n, ..]), |a, &b| *a += b);
                let att = multi_head_attention(&xw, heads, e);
                if att.ncols() != m {
                    return Err(NetError::ShapeMismatch(format!(
                        "attention heads produce {} features, activations need {m}",
                        att.ncols()
                    )));
                }
                let flat = att
                    .into_shape_with_order((n * f_len, d))
                    .expect("attention output is standard layout");
                let vals = ffn_apply(flat.view(), ffn)
                    .into_shape_with_order((n, f_len, d))
                    .expect("ffn output is standard layout");
                for r in 0..n {
                    acc.index_axis_mut(Axis(0), t0 + r)
                        .zip_mut_with(&vals.index_axis(Axis(0), r), |a, &b| *a += b);
                }
            }
            for t in 0..t_len {
                let inv = 1.0 / counts[t];
                y.index_axis_mut(Axis(0), t)
                    .zip_mut_with(&acc.index_axis(Axis(0), t), |a, &b| *a += b * inv);
            }
            Ok(())
        }
        (GlobalVariant::MeanPool | GlobalVariant::MaxPool, GlobalParams::Pool { ffn }) => {
            let max = variant == GlobalVariant::MaxPool;
            let pooled = pool_chunks(y, w_len, stride, max); // [C, F, D]
            let c = pooled.dim().0;
            let flat = pooled
                .into_shape_with_order((c * f_len, d))
                .expect("pooled tensor is standard layout");
            let vals = ffn_apply(flat.view(), ffn)
                .into_shape_with_order((c, f_len, d))
                .expect("ffn output is standard layout");
            residual_upsample_add(y, &vals, w_len, stride);
            Ok(())
        }
        (GlobalVariant::FullLstm, GlobalParams::Lstm(p)) => {
            let out = blstm_projected(y.view(), p); // [T, F, D]
            y.zip_mut_with(&out, |a, &b| *a += b);
            Ok(())
        }
        _ => Err(NetError::ShapeMismatch(format!(
            "weights loaded for a different global variant than {}",
            variant.name()
        ))),
    }
}
