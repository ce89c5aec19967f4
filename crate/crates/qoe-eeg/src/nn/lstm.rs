//! LSTM cell, unrolled sequence pass, bidirectional wrapper, and their
//! exact backward passes.
//!
//! Weight layout follows the common convention: the input kernel `w_x` is
//! `[F, 4U]`, the recurrent kernel `w_h` is `[U, 4U]`, and the bias is
//! `[4U]`, with the four gate blocks ordered input, forget, candidate,
//! output. The forget-gate bias block is initialized to 1 elsewhere.

use super::layers::sigmoid;
use super::tensor::{matvec_acc, matvec_transpose_acc, outer_acc, Tensor};
use super::NnError;

/// Borrowed weights of one LSTM direction.
#[derive(Clone, Copy)]
pub struct LstmDir<'a> {
    pub w_x: &'a Tensor,
    pub w_h: &'a Tensor,
    pub b: &'a Tensor,
}

fn check_shapes(f: usize, dir: &LstmDir) -> Result<usize, NnError> {
    let u = dir.w_h.shape[0];
    if dir.w_x.shape[0] != f
        || dir.w_x.shape[1] != 4 * u
        || dir.w_h.shape[1] != 4 * u
        || dir.b.shape != vec![4 * u]
    {
        return Err(NnError::ShapeMismatch {
            detail: format!(
                "LSTM weights w_x {:?}, w_h {:?}, b {:?} inconsistent for input width {f}",
                dir.w_x.shape, dir.w_h.shape, dir.b.shape
            ),
        });
    }
    Ok(u)
}

/// Computes the pre-activation gate vector `x w_x + h w_h + b`, then applies
/// the gate nonlinearities in place: sigmoid on i, f, o and tanh on g.
fn gate_vector(x: &[f64], h: &[f64], dir: &LstmDir, u: usize) -> Vec<f64> {
    let mut z = dir.b.data.clone();
    matvec_acc(x, dir.w_x, &mut z);
    matvec_acc(h, dir.w_h, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if (2 * u..3 * u).contains(&k) { v.tanh() } else { sigmoid(*v) };
    }
    z
}

/// One LSTM step: `c' = f (.) c + i (.) g`, `h' = o (.) tanh(c')`.
pub fn lstm_cell(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    dir: LstmDir,
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let u = check_shapes(x.len(), &dir)?;
    if h.len() != u || c.len() != u {
        return Err(NnError::ShapeMismatch {
            detail: format!("state width {} / {} for {u} units", h.len(), c.len()),
        });
    }
    let z = gate_vector(x, h, &dir, u);
    let mut c_new = vec![0.0; u];
    let mut h_new = vec![0.0; u];
    for j in 0..u {
        let (i, f, g, o) = (z[j], z[u + j], z[2 * u + j], z[3 * u + j]);
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    Ok((h_new, c_new))
}

pub(super) struct LstmCache {
    x: Tensor,
    /// Post-activation gates per step, `[T, 4U]`.
    gates: Tensor,
    /// Cell states per step, `[T, U]`.
    c: Tensor,
    tanh_c: Tensor,
    h: Tensor,
}

pub(super) fn lstm_forward(seq: &Tensor, dir: &LstmDir) -> Result<LstmCache, NnError> {
    let t_len = seq.rows();
    let u = check_shapes(seq.cols(), dir)?;
    let mut cache = LstmCache {
        x: seq.clone(),
        gates: Tensor::zeros(vec![t_len, 4 * u]),
        c: Tensor::zeros(vec![t_len, u]),
        tanh_c: Tensor::zeros(vec![t_len, u]),
        h: Tensor::zeros(vec![t_len, u]),
    };
    let mut h_prev = vec![0.0; u];
    let mut c_prev = vec![0.0; u];
    for t in 0..t_len {
        let z = gate_vector(seq.row(t), &h_prev, dir, u);
        for j in 0..u {
            let (i, f, g, o) = (z[j], z[u + j], z[2 * u + j], z[3 * u + j]);
            let c_new = f * c_prev[j] + i * g;
            let tc = c_new.tanh();
            cache.c.set2(t, j, c_new);
            cache.tanh_c.set2(t, j, tc);
            cache.h.set2(t, j, o * tc);
        }
        cache.gates.row_mut(t).copy_from_slice(&z);
        h_prev.copy_from_slice(cache.h.row(t));
        c_prev.copy_from_slice(cache.c.row(t));
    }
    Ok(cache)
}

/// Hidden states of a unidirectional pass, `[T, U]`.
pub fn lstm_sequence(seq: &Tensor, dir: LstmDir) -> Result<Tensor, NnError> {
    Ok(lstm_forward(seq, &dir)?.h)
}

pub(super) struct LstmGrads {
    pub dx: Tensor,
    pub dw_x: Tensor,
    pub dw_h: Tensor,
    pub db: Tensor,
}

/// Backpropagation through time. `dh_seq` holds the upstream gradient of
/// every step's hidden state (zero rows for unused steps).
pub(super) fn lstm_backward(cache: &LstmCache, dir: &LstmDir, dh_seq: &Tensor) -> LstmGrads {
    let t_len = cache.x.rows();
    let u = cache.h.cols();
    let mut grads = LstmGrads {
        dx: Tensor::zeros(cache.x.shape.clone()),
        dw_x: Tensor::zeros(dir.w_x.shape.clone()),
        dw_h: Tensor::zeros(dir.w_h.shape.clone()),
        db: Tensor::zeros(vec![4 * u]),
    };

    let mut dh_rec = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut dz = vec![0.0; 4 * u];
    for t in (0..t_len).rev() {
        let gates = cache.gates.row(t);
        for j in 0..u {
            let (i, f, g, o) =
                (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
            let tc = cache.tanh_c.at2(t, j);
            let dh = dh_seq.at2(t, j) + dh_rec[j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            let c_prev = if t == 0 { 0.0 } else { cache.c.at2(t - 1, j) };

            dz[j] = dc * g * i * (1.0 - i);
            dz[u + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * u + j] = dc * i * (1.0 - g * g);
            dz[3 * u + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }

        grads.dx.row_mut(t).fill(0.0);
        matvec_transpose_acc(&dz, dir.w_x, grads.dx.row_mut(t));
        dh_rec.fill(0.0);
        matvec_transpose_acc(&dz, dir.w_h, &mut dh_rec);

        outer_acc(cache.x.row(t), &dz, &mut grads.dw_x);
        if t > 0 {
            outer_acc(cache.h.row(t - 1), &dz, &mut grads.dw_h);
        }
        for (dbv, &d) in grads.db.data.iter_mut().zip(&dz) {
            *dbv += d;
        }
    }
    grads
}

fn reverse_rows(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(t.shape.clone());
    let rows = t.rows();
    for r in 0..rows {
        out.row_mut(r).copy_from_slice(t.row(rows - 1 - r));
    }
    out
}

pub(super) struct BiLstmCache {
    pub fwd: LstmCache,
    /// Backward-direction cache over the time-reversed input.
    pub bwd: LstmCache,
    pub return_sequence: bool,
}

pub(super) fn bilstm_forward(
    seq: &Tensor,
    fwd: &LstmDir,
    bwd: &LstmDir,
    return_sequence: bool,
) -> Result<(Tensor, BiLstmCache), NnError> {
    let fwd_cache = lstm_forward(seq, fwd)?;
    let bwd_cache = lstm_forward(&reverse_rows(seq), bwd)?;
    let t_len = seq.rows();
    let u = fwd_cache.h.cols();
    let u2 = bwd_cache.h.cols();

    let out = if return_sequence {
        let mut out = Tensor::zeros(vec![t_len, u + u2]);
        for t in 0..t_len {
            out.row_mut(t)[..u].copy_from_slice(fwd_cache.h.row(t));
            out.row_mut(t)[u..].copy_from_slice(bwd_cache.h.row(t_len - 1 - t));
        }
        out
    } else {
        let mut out = Tensor::zeros(vec![1, u + u2]);
        out.row_mut(0)[..u].copy_from_slice(fwd_cache.h.row(t_len - 1));
        out.row_mut(0)[u..].copy_from_slice(bwd_cache.h.row(t_len - 1));
        out
    };
    Ok((out, BiLstmCache { fwd: fwd_cache, bwd: bwd_cache, return_sequence }))
}

pub(super) struct BiLstmGrads {
    pub dx: Tensor,
    pub fwd: LstmGrads,
    pub bwd: LstmGrads,
}

/// `d_out` matches the forward output: `[T, 2U]` when the layer returned the
/// sequence, `[1, 2U]` for the final-state form.
pub(super) fn bilstm_backward(
    cache: &BiLstmCache,
    fwd: &LstmDir,
    bwd: &LstmDir,
    d_out: &Tensor,
) -> BiLstmGrads {
    let t_len = cache.fwd.x.rows();
    let u = cache.fwd.h.cols();
    let u2 = cache.bwd.h.cols();

    let mut dh_fwd = Tensor::zeros(vec![t_len, u]);
    let mut dh_bwd = Tensor::zeros(vec![t_len, u2]);
    if cache.return_sequence {
        for t in 0..t_len {
            dh_fwd.row_mut(t).copy_from_slice(&d_out.row(t)[..u]);
            dh_bwd.row_mut(t_len - 1 - t).copy_from_slice(&d_out.row(t)[u..]);
        }
    } else {
        dh_fwd.row_mut(t_len - 1).copy_from_slice(&d_out.row(0)[..u]);
        dh_bwd.row_mut(t_len - 1).copy_from_slice(&d_out.row(0)[u..]);
    }

    let fwd_grads = lstm_backward(&cache.fwd, fwd, &dh_fwd);
    let bwd_grads = lstm_backward(&cache.bwd, bwd, &dh_bwd);
    let mut dx = fwd_grads.dx.clone();
    let bwd_dx = reverse_rows(&bwd_grads.dx);
    for (a, b) in dx.data.iter_mut().zip(&bwd_dx.data) {
        *a += b;
    }
    BiLstmGrads { dx, fwd: fwd_grads, bwd: bwd_grads }
}

/// Bidirectional layer: a forward pass and an independent backward pass over
/// the reversed sequence, concatenated `[forward; backward]` per step. With
/// `return_sequence` false the result is the forward final state next to the
/// backward final state (which sits at the first time step).
pub fn bilstm_layer(
    seq: &Tensor,
    fwd: LstmDir,
    bwd: LstmDir,
    return_sequence: bool,
) -> Result<Tensor, NnError> {
    if seq.rows() == 0 {
        return Err(NnError::ShapeMismatch { detail: "empty sequence".to_string() });
    }
    Ok(bilstm_forward(seq, &fwd, &bwd, return_sequence)?.0)
}
