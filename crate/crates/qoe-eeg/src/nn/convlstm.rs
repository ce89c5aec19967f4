//! Convolutional LSTM: each time step's feature row is reshaped to an
//! electrode-by-feature grid (one channel), gate pre-activations come from
//! same-padded convolutions over the input and the hidden state, and the
//! flattened final hidden state feeds the shared head through dropout.
//!
//! Grids are stored channel-last: `value[r * cols * ch + c * ch + channel]`.
//! The input kernel is `[k*k, 4K]`, the recurrent kernel `[k*k*K, 4K]`, with
//! gate blocks ordered input, forget, candidate, output along the channel
//! axis, matching the dense LSTM.

use super::layers::sigmoid;
use super::model::{acc_grad, head_backward, head_forward, head_infer, HeadCache, ModelConfig};
use super::tensor::{Gradients, Params, Tensor};
use super::NnError;

/// `out[r][c][oc] += sum_{kr,kc,ic} in[r+kr-pad][c+kc-pad][ic] * w[(kr*k+kc)*ch_in+ic][oc]`
/// with zero padding outside the grid.
fn conv_same(
    input: &[f64],
    rows: usize,
    cols: usize,
    ch_in: usize,
    w: &Tensor,
    k: usize,
    out: &mut [f64],
) {
    let ch_out = w.cols();
    let pad = k / 2;
    for r in 0..rows {
        for c in 0..cols {
            let out_base = (r * cols + c) * ch_out;
            for kr in 0..k {
                let ri = r + kr;
                if ri < pad || ri - pad >= rows {
                    continue;
                }
                let ri = ri - pad;
                for kc in 0..k {
                    let ci = c + kc;
                    if ci < pad || ci - pad >= cols {
                        continue;
                    }
                    let ci = ci - pad;
                    let in_base = (ri * cols + ci) * ch_in;
                    let w_base = (kr * k + kc) * ch_in;
                    for ic in 0..ch_in {
                        let x = input[in_base + ic];
                        if x == 0.0 {
                            continue;
                        }
                        let w_row = w.row(w_base + ic);
                        for oc in 0..ch_out {
                            out[out_base + oc] += x * w_row[oc];
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of [`conv_same`] w.r.t. its input, accumulated into `din`.
fn conv_same_input_grad(
    dout: &[f64],
    rows: usize,
    cols: usize,
    ch_in: usize,
    w: &Tensor,
    k: usize,
    din: &mut [f64],
) {
    let ch_out = w.cols();
    let pad = k / 2;
    for r in 0..rows {
        for c in 0..cols {
            let out_base = (r * cols + c) * ch_out;
            for kr in 0..k {
                let ri = r + kr;
                if ri < pad || ri - pad >= rows {
                    continue;
                }
                let ri = ri - pad;
                for kc in 0..k {
                    let ci = c + kc;
                    if ci < pad || ci - pad >= cols {
                        continue;
                    }
                    let ci = ci - pad;
                    let in_base = (ri * cols + ci) * ch_in;
                    let w_base = (kr * k + kc) * ch_in;
                    for ic in 0..ch_in {
                        let w_row = w.row(w_base + ic);
                        let mut acc = 0.0;
                        for oc in 0..ch_out {
                            acc += dout[out_base + oc] * w_row[oc];
                        }
                        din[in_base + ic] += acc;
                    }
                }
            }
        }
    }
}

/// Gradient of [`conv_same`] w.r.t. the kernel, accumulated into `dw`.
fn conv_same_kernel_grad(
    input: &[f64],
    dout: &[f64],
    rows: usize,
    cols: usize,
    ch_in: usize,
    k: usize,
    dw: &mut Tensor,
) {
    let ch_out = dw.cols();
    let pad = k / 2;
    for r in 0..rows {
        for c in 0..cols {
            let out_base = (r * cols + c) * ch_out;
            for kr in 0..k {
                let ri = r + kr;
                if ri < pad || ri - pad >= rows {
                    continue;
                }
                let ri = ri - pad;
                for kc in 0..k {
                    let ci = c + kc;
                    if ci < pad || ci - pad >= cols {
                        continue;
                    }
                    let ci = ci - pad;
                    let in_base = (ri * cols + ci) * ch_in;
                    let w_base = (kr * k + kc) * ch_in;
                    for ic in 0..ch_in {
                        let x = input[in_base + ic];
                        if x == 0.0 {
                            continue;
                        }
                        let dw_row = dw.row_mut(w_base + ic);
                        for oc in 0..ch_out {
                            dw_row[oc] += x * dout[out_base + oc];
                        }
                    }
                }
            }
        }
    }
}

struct CellCache {
    /// Raw input rows, `[T, R*C]`.
    x: Tensor,
    /// Post-activation gates, `[T, R*C*4K]`, channel-last per position.
    gates: Tensor,
    c: Tensor,
    tanh_c: Tensor,
    h: Tensor,
}

fn cell_forward(
    x: &Tensor,
    config: &ModelConfig,
    wx: &Tensor,
    wh: &Tensor,
    b: &Tensor,
) -> CellCache {
    let cfg = &config.convlstm;
    let (rows, cols, kf, k) = (cfg.grid_rows, cfg.grid_cols, cfg.filters, cfg.kernel);
    let pos = rows * cols;
    let t_len = x.rows();

    let mut cache = CellCache {
        x: x.clone(),
        gates: Tensor::zeros(vec![t_len, pos * 4 * kf]),
        c: Tensor::zeros(vec![t_len, pos * kf]),
        tanh_c: Tensor::zeros(vec![t_len, pos * kf]),
        h: Tensor::zeros(vec![t_len, pos * kf]),
    };
    let mut h_prev = vec![0.0; pos * kf];
    let mut c_prev = vec![0.0; pos * kf];
    for t in 0..t_len {
        let z = cache.gates.row_mut(t);
        for p in 0..pos {
            z[p * 4 * kf..(p + 1) * 4 * kf].copy_from_slice(&b.data);
        }
        conv_same(x.row(t), rows, cols, 1, wx, k, z);
        conv_same(&h_prev, rows, cols, kf, wh, k, z);
        for p in 0..pos {
            let zp = &mut z[p * 4 * kf..(p + 1) * 4 * kf];
            for (ch, v) in zp.iter_mut().enumerate() {
                *v = if (2 * kf..3 * kf).contains(&ch) { v.tanh() } else { sigmoid(*v) };
            }
            for j in 0..kf {
                let (i, f, g, o) = (zp[j], zp[kf + j], zp[2 * kf + j], zp[3 * kf + j]);
                let c_new = f * c_prev[p * kf + j] + i * g;
                let tc = c_new.tanh();
                cache.c.set2(t, p * kf + j, c_new);
                cache.tanh_c.set2(t, p * kf + j, tc);
                cache.h.set2(t, p * kf + j, o * tc);
            }
        }
        h_prev.copy_from_slice(cache.h.row(t));
        c_prev.copy_from_slice(cache.c.row(t));
    }
    cache
}

/// BPTT from the final hidden state only (no earlier step feeds the head).
/// Returns `(dwx, dwh, db)`; the raw input needs no gradient.
fn cell_backward(
    cache: &CellCache,
    config: &ModelConfig,
    wh: &Tensor,
    dh_final: &[f64],
) -> (Tensor, Tensor, Tensor) {
    let cfg = &config.convlstm;
    let (rows, cols, kf, k) = (cfg.grid_rows, cfg.grid_cols, cfg.filters, cfg.kernel);
    let pos = rows * cols;
    let t_len = cache.x.rows();

    let mut dwx = Tensor::zeros(vec![k * k, 4 * kf]);
    let mut dwh = Tensor::zeros(vec![k * k * kf, 4 * kf]);
    let mut db = Tensor::zeros(vec![4 * kf]);

    let mut dh_cur = dh_final.to_vec();
    let mut dc_next = vec![0.0; pos * kf];
    let mut dz = vec![0.0; pos * 4 * kf];
    for t in (0..t_len).rev() {
        let gates = cache.gates.row(t);
        for p in 0..pos {
            let zp = &gates[p * 4 * kf..(p + 1) * 4 * kf];
            for j in 0..kf {
                let (i, f, g, o) = (zp[j], zp[kf + j], zp[2 * kf + j], zp[3 * kf + j]);
                let tc = cache.tanh_c.at2(t, p * kf + j);
                let dh = dh_cur[p * kf + j];
                let dc = dc_next[p * kf + j] + dh * o * (1.0 - tc * tc);
                let c_prev = if t == 0 { 0.0 } else { cache.c.at2(t - 1, p * kf + j) };

                let zb = p * 4 * kf;
                dz[zb + j] = dc * g * i * (1.0 - i);
                dz[zb + kf + j] = dc * c_prev * f * (1.0 - f);
                dz[zb + 2 * kf + j] = dc * i * (1.0 - g * g);
                dz[zb + 3 * kf + j] = dh * tc * o * (1.0 - o);
                dc_next[p * kf + j] = dc * f;
            }
        }

        for p in 0..pos {
            for (dbv, &d) in db.data.iter_mut().zip(&dz[p * 4 * kf..(p + 1) * 4 * kf]) {
                *dbv += d;
            }
        }
        conv_same_kernel_grad(cache.x.row(t), &dz, rows, cols, 1, k, &mut dwx);
        if t > 0 {
            conv_same_kernel_grad(cache.h.row(t - 1), &dz, rows, cols, kf, k, &mut dwh);
        }
        dh_cur.fill(0.0);
        conv_same_input_grad(&dz, rows, cols, kf, wh, k, &mut dh_cur);
    }
    (dwx, dwh, db)
}

pub(super) struct Cache {
    examples: Vec<CellCache>,
    m1: Vec<f64>,
    head: HeadCache,
}

pub(super) fn forward_train(
    params: &Params,
    config: &ModelConfig,
    batch: &[&Tensor],
    masks: Vec<Vec<f64>>,
) -> Result<(Tensor, Cache), NnError> {
    let n = batch.len();
    let width = config.head_input_dim();
    let [m1, m_head]: [Vec<f64>; 2] = masks.try_into().expect("convlstm draws two masks");

    let wx = params.get("convlstm.w_x")?;
    let wh = params.get("convlstm.w_h")?;
    let b = params.get("convlstm.bias")?;
    let mut features = Tensor::zeros(vec![n, width]);
    let mut examples = Vec::with_capacity(n);
    for (e, x) in batch.iter().enumerate() {
        let cache = cell_forward(x, config, wx, wh, b);
        let final_h = cache.h.row(cache.h.rows() - 1);
        for (idx, (fv, &hv)) in features.row_mut(e).iter_mut().zip(final_h).enumerate() {
            *fv = hv * m1[e * width + idx];
        }
        examples.push(cache);
    }
    let (logits, head) = head_forward(params, &features, &m_head)?;
    Ok((logits, Cache { examples, m1, head }))
}

pub(super) fn backward_train(
    params: &Params,
    config: &ModelConfig,
    cache: &Cache,
    dlogits: &Tensor,
    grads: &mut Gradients,
) -> Result<(), NnError> {
    let width = config.head_input_dim();
    let wh = params.get("convlstm.w_h")?;
    let dfeatures = head_backward(params, &cache.head, dlogits, grads)?;
    for (e, example) in cache.examples.iter().enumerate() {
        let dh_final: Vec<f64> = dfeatures
            .row(e)
            .iter()
            .enumerate()
            .map(|(idx, &g)| g * cache.m1[e * width + idx])
            .collect();
        let (dwx, dwh, db) = cell_backward(example, config, wh, &dh_final);
        acc_grad(grads, params.index_of("convlstm.w_x")?, &dwx);
        acc_grad(grads, params.index_of("convlstm.w_h")?, &dwh);
        acc_grad(grads, params.index_of("convlstm.bias")?, &db);
    }
    Ok(())
}

pub(super) fn infer(params: &Params, config: &ModelConfig, x: &Tensor) -> Result<Vec<f64>, NnError> {
    let wx = params.get("convlstm.w_x")?;
    let wh = params.get("convlstm.w_h")?;
    let b = params.get("convlstm.bias")?;
    let cache = cell_forward(x, config, wx, wh, b);
    let features = Tensor {
        shape: vec![1, config.head_input_dim()],
        data: cache.h.row(cache.h.rows() - 1).to_vec(),
    };
    head_infer(params, &features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{backward, batch_loss, build_model, Architecture, ConvLstmConfig, Mode};
    use crate::nn::model::forward as model_forward;
    use crate::rng::Stream;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            architecture: Architecture::ConvLstm,
            convlstm: ConvLstmConfig { filters: 3, kernel: 3, grid_rows: 2, grid_cols: 4 },
            input_dim: 8,
            head_hidden: 4,
            dropout: 0.0,
            head_dropout: 0.0,
            l2: 0.05,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn one_by_one_kernel_is_a_per_position_linear_map() {
        let input: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let w = Tensor { shape: vec![1, 1], data: vec![2.5] };
        let mut out = vec![0.0; 6];
        conv_same(&input, 2, 3, 1, &w, 1, &mut out);
        for (i, (&o, &x)) in out.iter().zip(&input).enumerate() {
            assert_eq!(o, 2.5 * x, "position {i}");
        }
    }

    #[test]
    fn same_padding_sums_only_inside_the_grid() {
        // 2x2 grid of ones, 3x3 kernel of ones: each output counts its
        // in-bounds neighbours, so every position sees exactly 4.
        let input = vec![1.0; 4];
        let w = Tensor { shape: vec![9, 1], data: vec![1.0; 9] };
        let mut out = vec![0.0; 4];
        conv_same(&input, 2, 2, 1, &w, 3, &mut out);
        assert_eq!(out, vec![4.0; 4]);
    }

    #[test]
    fn convolution_gradients_match_finite_differences() {
        let (rows, cols, ch_in, ch_out, k) = (3, 4, 2, 3, 3);
        let mut stream = Stream::new(2);
        let input: Vec<f64> = (0..rows * cols * ch_in).map(|_| stream.next_gaussian()).collect();
        let w = Tensor {
            shape: vec![k * k * ch_in, ch_out],
            data: (0..k * k * ch_in * ch_out).map(|_| stream.next_gaussian()).collect(),
        };
        let loss = |input: &[f64], w: &Tensor| {
            let mut out = vec![0.0; rows * cols * ch_out];
            conv_same(input, rows, cols, ch_in, w, k, &mut out);
            0.5 * out.iter().map(|v| v * v).sum::<f64>()
        };

        let mut out = vec![0.0; rows * cols * ch_out];
        conv_same(&input, rows, cols, ch_in, &w, k, &mut out);
        let mut din = vec![0.0; input.len()];
        conv_same_input_grad(&out, rows, cols, ch_in, &w, k, &mut din);
        let mut dw = Tensor::zeros(w.shape.clone());
        conv_same_kernel_grad(&input, &out, rows, cols, ch_in, k, &mut dw);

        let step = 1e-6;
        for i in 0..input.len() {
            let mut xp = input.clone();
            xp[i] += step;
            let up = loss(&xp, &w);
            xp[i] -= 2.0 * step;
            let down = loss(&xp, &w);
            let numeric = (up - down) / (2.0 * step);
            assert!(
                (din[i] - numeric).abs() / numeric.abs().max(1e-6) < 1e-5,
                "din[{i}]: {} vs {numeric}",
                din[i]
            );
        }
        for i in 0..w.data.len() {
            let mut wp = w.clone();
            wp.data[i] += step;
            let up = loss(&input, &wp);
            wp.data[i] -= 2.0 * step;
            let down = loss(&input, &wp);
            let numeric = (up - down) / (2.0 * step);
            assert!(
                (dw.data[i] - numeric).abs() / numeric.abs().max(1e-6) < 1e-5,
                "dw[{i}]: {} vs {numeric}",
                dw.data[i]
            );
        }
    }

    #[test]
    fn forget_bias_initializes_to_one_per_filter() {
        let config = toy_config();
        let params = build_model(&config, 3).unwrap();
        let bias = params.get("convlstm.bias").unwrap();
        let kf = config.convlstm.filters;
        for ch in 0..4 * kf {
            let expect = if (kf..2 * kf).contains(&ch) { 1.0 } else { 0.0 };
            assert_eq!(bias.data[ch], expect, "channel {ch}");
        }
    }

    #[test]
    fn train_and_infer_agree_without_dropout() {
        let config = toy_config();
        let params = build_model(&config, 5).unwrap();
        let mut stream = Stream::new(6);
        let x = Tensor {
            shape: vec![4, 8],
            data: (0..32).map(|_| stream.next_gaussian()).collect(),
        };
        let mut rng = Stream::new(0);
        let train = model_forward(&params, &config, &x, Mode::Train, &mut rng).unwrap();
        let infer = model_forward(&params, &config, &x, Mode::Infer, &mut rng).unwrap();
        for (a, b) in train.iter().zip(&infer) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn whole_model_gradients_match_finite_differences() {
        let config = toy_config();
        let mut params = build_model(&config, 13).unwrap();
        let mut stream = Stream::new(14);
        let examples: Vec<Tensor> = (0..2)
            .map(|_| Tensor {
                shape: vec![3, 8],
                data: (0..24).map(|_| stream.next_gaussian()).collect(),
            })
            .collect();
        let batch: Vec<(&Tensor, usize)> =
            examples.iter().enumerate().map(|(i, x)| (x, (i + 1) % 3)).collect();

        let mut rng = Stream::new(0);
        let (loss, grads) = backward(&mut params.clone(), &config, &batch, &mut rng).unwrap();
        let direct = batch_loss(&params, &config, &batch).unwrap();
        assert!((loss - direct).abs() < 1e-12);

        let step = 1e-5;
        for idx in 0..params.len() {
            let len = params.at(idx).tensor.data.len();
            for i in (0..len).step_by(3) {
                let orig = params.at(idx).tensor.data[i];
                params.at_mut(idx).tensor.data[i] = orig + step;
                let up = batch_loss(&params, &config, &batch).unwrap();
                params.at_mut(idx).tensor.data[i] = orig - step;
                let down = batch_loss(&params, &config, &batch).unwrap();
                params.at_mut(idx).tensor.data[i] = orig;
                let numeric = (up - down) / (2.0 * step);
                let analytic = grads.at(idx).data[i];
                let rel = (analytic - numeric).abs() / numeric.abs().max(1e-6);
                assert!(
                    rel < 1e-4,
                    "{}[{i}]: analytic {analytic} vs numeric {numeric}",
                    params.at(idx).name
                );
            }
        }
    }
}
