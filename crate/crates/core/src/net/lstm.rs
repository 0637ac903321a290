//! Batched bidirectional LSTM with fused output projection.
//!
//! Sequences are processed as `[seq, batch, features]`; each step runs two
//! GEMMs (input and recurrent) over the whole batch, applies the gate
//! nonlinearities, and immediately projects the hidden state into the output
//! accumulator. Fusing the projection means the `[seq, batch, 2H]` hidden
//! tensor is never materialized, which keeps memory bounded by the output
//! size even for minute-long sequences.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis, s};

use crate::net::math::{fast_sigmoid, fast_tanh};
use crate::net::weights::{Tensor, WeightReader};
use crate::net::NetError;

/// One direction's weights (gate row order: input, forget, cell, output).
pub struct LstmDirParams<'a> {
    pub w_ih: ArrayView2<'a, f32>, // [4H, Din]
    pub w_hh: ArrayView2<'a, f32>, // [4H, H]
    pub b_ih: &'a [f32],           // [4H]
    pub b_hh: &'a [f32],           // [4H]
}

/// Bidirectional pair plus the fused projection `2H → Dout`
/// (columns `0..H` of the projection weight read the forward hidden state,
/// `H..2H` the backward one).
pub struct BlstmProjParams<'a> {
    pub fw: LstmDirParams<'a>,
    pub bw: LstmDirParams<'a>,
    pub proj_weight: ArrayView2<'a, f32>, // [Dout, 2H]
    pub proj_bias: &'a [f32],             // [Dout]
}

fn view2<'a>(t: &'a Tensor) -> ArrayView2<'a, f32> {
    ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("tensor shape checked")
}

impl<'a> BlstmProjParams<'a> {
    /// Read one BLSTM+projection group from a weight store.
    /// `prefix` is e.g. `"block0.local.freq"`; tensors are
    /// `{prefix}.lstm.{fw,bw}.{w_ih,w_hh,b_ih,b_hh}` and
    /// `{prefix}.proj.{weight,bias}`.
    pub fn read(
        reader: &WeightReader<'a>,
        prefix: &str,
        din: usize,
        h: usize,
        dout: usize,
    ) -> Result<Self, NetError> {
        let dir = |d: &str| -> Result<LstmDirParams<'a>, NetError> {
            Ok(LstmDirParams {
                w_ih: view2(reader.get(&format!("{prefix}.lstm.{d}.w_ih"), &[4 * h, din])?),
                w_hh: view2(reader.get(&format!("{prefix}.lstm.{d}.w_hh"), &[4 * h, h])?),
                b_ih: &reader.get(&format!("{prefix}.lstm.{d}.b_ih"), &[4 * h])?.data,
                b_hh: &reader.get(&format!("{prefix}.lstm.{d}.b_hh"), &[4 * h])?.data,
            })
        };
        Ok(Self {
            fw: dir("fw")?,
            bw: dir("bw")?,
            proj_weight: view2(reader.get(&format!("{prefix}.proj.weight"), &[dout, 2 * h])?),
            proj_bias: &reader.get(&format!("{prefix}.proj.bias"), &[dout])?.data,
        })
    }
}

/// Run one direction over the sequence, adding the projected hidden states
/// into `out` (`out[t] += h_t · proj_halfᵀ`).
fn run_direction(
    input: &ArrayView3<f32>,
    p: &LstmDirParams<'_>,
    proj_half: ArrayView2<f32>, // [Dout, H]
    out: &mut Array3<f32>,
    reverse: bool,
) {
    let (seq, batch, _din) = input.dim();
    let h4 = p.w_ih.nrows();
    let h = h4 / 4;

    let w_ih_t = p.w_ih.t();
    let w_hh_t = p.w_hh.t();
    let proj_t = proj_half.t();

    let mut hid = Array2::<f32>::zeros((batch, h));
    let mut cell = Array2::<f32>::zeros((batch, h));
    let mut gates = Array2::<f32>::zeros((batch, h4));

    let steps: Vec<usize> = if reverse {
        (0..seq).rev().collect()
    } else {
        (0..seq).collect()
    };
    for t in steps {
        let x_t = input.index_axis(Axis(0), t);
        general_mat_mul(1.0, &x_t, &w_ih_t, 0.0, &mut gates);
        general_mat_mul(1.0, &hid, &w_hh_t, 1.0, &mut gates);

        // gates layout per row: [i | f | g | o], each h wide
        for b in 0..batch {
            let g_row = gates.row(b);
            let mut h_row = hid.row_mut(b);
            let mut c_row = cell.row_mut(b);
            for j in 0..h {
                let bi = |k: usize| p.b_ih[k] + p.b_hh[k];
                let i_g = fast_sigmoid(g_row[j] + bi(j));
                let f_g = fast_sigmoid(g_row[h + j] + bi(h + j));
                let g_g = fast_tanh(g_row[2 * h + j] + bi(2 * h + j));
                let o_g = fast_sigmoid(g_row[3 * h + j] + bi(3 * h + j));
                let c_new = f_g * c_row[j] + i_g * g_g;
                c_row[j] = c_new;
                h_row[j] = o_g * fast_tanh(c_new);
            }
        }

        let mut out_t = out.index_axis_mut(Axis(0), t);
        general_mat_mul(1.0, &hid, &proj_t, 1.0, &mut out_t);
    }
}

/// Bidirectional LSTM + projection: `[seq, batch, Din] → [seq, batch, Dout]`.
pub fn blstm_projected(input: ArrayView3<f32>, p: &BlstmProjParams<'_>) -> Array3<f32> {
    let (seq, batch, _) = input.dim();
    let dout = p.proj_weight.nrows();
    let h = p.proj_weight.ncols() / 2;

    // seed the accumulator with the projection bias
    let mut out = Array3::<f32>::zeros((seq, batch, dout));
    for mut row in out.rows_mut() {
        for (v, &b) in row.iter_mut().zip(p.proj_bias) {
            *v = b;
        }
    }

    run_direction(&input, &p.fw, p.proj_weight.slice(s![.., 0..h]), &mut out, false);
    run_direction(&input, &p.bw, p.proj_weight.slice(s![.., h..2 * h]), &mut out, true);
    out
}
