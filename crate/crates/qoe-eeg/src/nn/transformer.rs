//! Transformer encoder: input projection plus sinusoidal positions, pre-norm
//! blocks (multi-head self-attention, then a two-layer feed-forward, each
//! with a residual connection and dropout on the branch output), mean pooling
//! over time, and the shared classification head. No batch norm, so train
//! and inference mode differ only by dropout.

use super::layers::{dense, softmax};
use super::model::{
    acc_grad, head_backward, head_forward, head_infer, HeadCache, ModelConfig,
};
use super::tensor::{Gradients, Params, Tensor};
use super::NnError;

const LN_EPS: f64 = 1e-5;

fn positional(t: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; d];
    for (c, v) in pe.iter_mut().enumerate() {
        let pair = (c / 2) as f64;
        let angle = t as f64 / 10_000f64.powf(2.0 * pair / d as f64);
        *v = if c % 2 == 0 { angle.sin() } else { angle.cos() };
    }
    pe
}

struct LnCache {
    xhat: Tensor,
    inv: Vec<f64>,
}

fn ln_forward(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> (Tensor, LnCache) {
    let (t_len, d) = (x.rows(), x.cols());
    let mut y = Tensor::zeros(vec![t_len, d]);
    let mut xhat = Tensor::zeros(vec![t_len, d]);
    let mut inv = vec![0.0; t_len];
    for t in 0..t_len {
        let row = x.row(t);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let iv = 1.0 / (var + LN_EPS).sqrt();
        inv[t] = iv;
        for c in 0..d {
            let h = (row[c] - mean) * iv;
            xhat.set2(t, c, h);
            y.set2(t, c, gamma.data[c] * h + beta.data[c]);
        }
    }
    (y, LnCache { xhat, inv })
}

/// Returns `(dx, dgamma, dbeta)`.
fn ln_backward(dy: &Tensor, gamma: &Tensor, cache: &LnCache) -> (Tensor, Tensor, Tensor) {
    let (t_len, d) = (dy.rows(), dy.cols());
    let mut dx = Tensor::zeros(vec![t_len, d]);
    let mut dgamma = Tensor::zeros(vec![d]);
    let mut dbeta = Tensor::zeros(vec![d]);
    for t in 0..t_len {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for c in 0..d {
            let g = dy.at2(t, c) * gamma.data[c];
            sum_g += g;
            sum_gx += g * cache.xhat.at2(t, c);
            dgamma.data[c] += dy.at2(t, c) * cache.xhat.at2(t, c);
            dbeta.data[c] += dy.at2(t, c);
        }
        let mg = sum_g / d as f64;
        let mgx = sum_gx / d as f64;
        for c in 0..d {
            let g = dy.at2(t, c) * gamma.data[c];
            dx.set2(t, c, cache.inv[t] * (g - mg - cache.xhat.at2(t, c) * mgx));
        }
    }
    (dx, dgamma, dbeta)
}

struct BlockParams<'a> {
    ln1_g: &'a Tensor,
    ln1_b: &'a Tensor,
    wq: &'a Tensor,
    bq: &'a Tensor,
    wk: &'a Tensor,
    bk: &'a Tensor,
    wv: &'a Tensor,
    bv: &'a Tensor,
    wo: &'a Tensor,
    bo: &'a Tensor,
    ln2_g: &'a Tensor,
    ln2_b: &'a Tensor,
    w1: &'a Tensor,
    b1: &'a Tensor,
    w2: &'a Tensor,
    b2: &'a Tensor,
}

fn block_params<'a>(params: &'a Params, block: usize) -> Result<BlockParams<'a>, NnError> {
    let p = |suffix: &str| params.get(&format!("block{block}.{suffix}"));
    Ok(BlockParams {
        ln1_g: p("ln1.gamma")?,
        ln1_b: p("ln1.beta")?,
        wq: p("attn.wq")?,
        bq: p("attn.bq")?,
        wk: p("attn.wk")?,
        bk: p("attn.bk")?,
        wv: p("attn.wv")?,
        bv: p("attn.bv")?,
        wo: p("attn.wo")?,
        bo: p("attn.bo")?,
        ln2_g: p("ln2.gamma")?,
        ln2_b: p("ln2.beta")?,
        w1: p("ff.w1")?,
        b1: p("ff.b1")?,
        w2: p("ff.w2")?,
        b2: p("ff.b2")?,
    })
}

struct BlockCache {
    ln1: LnCache,
    a: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Attention weights per head, each `[T, T]` with softmaxed rows.
    attn: Vec<Tensor>,
    ctx: Tensor,
    m_attn: Vec<f64>,
    ln2: LnCache,
    f: Tensor,
    pre1: Tensor,
    h1: Tensor,
    m_ff: Vec<f64>,
}

fn block_forward(
    bp: &BlockParams,
    heads: usize,
    x_in: Tensor,
    m_attn: &[f64],
    m_ff: &[f64],
) -> (Tensor, BlockCache) {
    let (t_len, d) = (x_in.rows(), x_in.cols());
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let (a, ln1) = ln_forward(&x_in, bp.ln1_g, bp.ln1_b);
    let q = dense(&a, bp.wq, bp.bq, false);
    let k = dense(&a, bp.wk, bp.bk, false);
    let v = dense(&a, bp.wv, bp.bv, false);

    let mut ctx = Tensor::zeros(vec![t_len, d]);
    let mut attn_heads = Vec::with_capacity(heads);
    for h in 0..heads {
        let col0 = h * dh;
        let mut attn = Tensor::zeros(vec![t_len, t_len]);
        for i in 0..t_len {
            for j in 0..t_len {
                let s: f64 = (0..dh).map(|c| q.at2(i, col0 + c) * k.at2(j, col0 + c)).sum();
                attn.set2(i, j, s * scale);
            }
            let p = softmax(attn.row(i));
            attn.row_mut(i).copy_from_slice(&p);
        }
        for i in 0..t_len {
            for j in 0..t_len {
                let w = attn.at2(i, j);
                for c in 0..dh {
                    ctx.data[i * d + col0 + c] += w * v.at2(j, col0 + c);
                }
            }
        }
        attn_heads.push(attn);
    }

    let o = dense(&ctx, bp.wo, bp.bo, false);
    let mut x2 = x_in.clone();
    for (idx, (x2v, ov)) in x2.data.iter_mut().zip(&o.data).enumerate() {
        *x2v += ov * m_attn[idx];
    }

    let (f, ln2) = ln_forward(&x2, bp.ln2_g, bp.ln2_b);
    let pre1 = dense(&f, bp.w1, bp.b1, false);
    let mut h1 = pre1.clone();
    for v in &mut h1.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let ff = dense(&h1, bp.w2, bp.b2, false);
    let mut x_out = x2.clone();
    for (idx, (xv, fv)) in x_out.data.iter_mut().zip(&ff.data).enumerate() {
        *xv += fv * m_ff[idx];
    }

    let cache = BlockCache {
        ln1,
        a,
        q,
        k,
        v,
        attn: attn_heads,
        ctx,
        m_attn: m_attn.to_vec(),
        ln2,
        f,
        pre1,
        h1,
        m_ff: m_ff.to_vec(),
    };
    (x_out, cache)
}

fn column_sums(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(vec![t.cols()]);
    for r in 0..t.rows() {
        for (o, &v) in out.data.iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out
}

struct BlockGrads {
    dx_in: Tensor,
    tensors: Vec<(&'static str, Tensor)>,
}

fn block_backward(
    bp: &BlockParams,
    heads: usize,
    cache: &BlockCache,
    dx_out: &Tensor,
) -> BlockGrads {
    let (t_len, d) = (dx_out.rows(), dx_out.cols());
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // Feed-forward branch: x_out = x2 + mask (.) ff(ln2(x2)).
    let mut dff = dx_out.clone();
    for (v, m) in dff.data.iter_mut().zip(&cache.m_ff) {
        *v *= m;
    }
    let mut dh1 = dff.matmul_transpose_b(bp.w2);
    let dw2 = cache.h1.matmul_transpose_a(&dff);
    let db2 = column_sums(&dff);
    for (g, &p) in dh1.data.iter_mut().zip(&cache.pre1.data) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    let df = dh1.matmul_transpose_b(bp.w1);
    let dw1 = cache.f.matmul_transpose_a(&dh1);
    let db1 = column_sums(&dh1);
    let (dx2_ln, dg2, dbeta2) = ln_backward(&df, bp.ln2_g, &cache.ln2);
    let mut dx2 = dx_out.clone();
    for (a, b) in dx2.data.iter_mut().zip(&dx2_ln.data) {
        *a += b;
    }

    // Attention branch: x2 = x_in + mask (.) attn(ln1(x_in)).
    let mut d_o = dx2.clone();
    for (v, m) in d_o.data.iter_mut().zip(&cache.m_attn) {
        *v *= m;
    }
    let dctx = d_o.matmul_transpose_b(bp.wo);
    let dwo = cache.ctx.matmul_transpose_a(&d_o);
    let dbo = column_sums(&d_o);

    let mut dq = Tensor::zeros(vec![t_len, d]);
    let mut dk = Tensor::zeros(vec![t_len, d]);
    let mut dv = Tensor::zeros(vec![t_len, d]);
    for h in 0..heads {
        let col0 = h * dh;
        let attn = &cache.attn[h];
        for i in 0..t_len {
            let mut dp = vec![0.0; t_len];
            for (j, dpv) in dp.iter_mut().enumerate() {
                *dpv = (0..dh)
                    .map(|c| dctx.at2(i, col0 + c) * cache.v.at2(j, col0 + c))
                    .sum();
            }
            let p = attn.row(i);
            let dot: f64 = dp.iter().zip(p).map(|(a, b)| a * b).sum();
            for j in 0..t_len {
                let ds = p[j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..dh {
                    dq.data[i * d + col0 + c] += ds * cache.k.at2(j, col0 + c);
                    dk.data[j * d + col0 + c] += ds * cache.q.at2(i, col0 + c);
                }
            }
        }
        for j in 0..t_len {
            for i in 0..t_len {
                let w = attn.at2(i, j);
                if w == 0.0 {
                    continue;
                }
                for c in 0..dh {
                    dv.data[j * d + col0 + c] += w * dctx.at2(i, col0 + c);
                }
            }
        }
    }

    let dwq = cache.a.matmul_transpose_a(&dq);
    let dbq = column_sums(&dq);
    let dwk = cache.a.matmul_transpose_a(&dk);
    let dbk = column_sums(&dk);
    let dwv = cache.a.matmul_transpose_a(&dv);
    let dbv = column_sums(&dv);

    let mut da = dq.matmul_transpose_b(bp.wq);
    for (a, b) in da.data.iter_mut().zip(&dk.matmul_transpose_b(bp.wk).data) {
        *a += b;
    }
    for (a, b) in da.data.iter_mut().zip(&dv.matmul_transpose_b(bp.wv).data) {
        *a += b;
    }
    let (dx_ln1, dg1, dbeta1) = ln_backward(&da, bp.ln1_g, &cache.ln1);
    let mut dx_in = dx2;
    for (a, b) in dx_in.data.iter_mut().zip(&dx_ln1.data) {
        *a += b;
    }

    BlockGrads {
        dx_in,
        tensors: vec![
            ("ln1.gamma", dg1),
            ("ln1.beta", dbeta1),
            ("attn.wq", dwq),
            ("attn.bq", dbq),
            ("attn.wk", dwk),
            ("attn.bk", dbk),
            ("attn.wv", dwv),
            ("attn.bv", dbv),
            ("attn.wo", dwo),
            ("attn.bo", dbo),
            ("ln2.gamma", dg2),
            ("ln2.beta", dbeta2),
            ("ff.w1", dw1),
            ("ff.b1", db1),
            ("ff.w2", dw2),
            ("ff.b2", db2),
        ],
    }
}

struct ExampleCache {
    /// Raw input example, kept for the projection kernel gradient.
    x: Tensor,
    blocks: Vec<BlockCache>,
}

pub(super) struct Cache {
    examples: Vec<ExampleCache>,
    t_len: usize,
    head: HeadCache,
}

fn project(params: &Params, x: &Tensor) -> Result<Tensor, NnError> {
    let mut xp = dense(x, params.get("proj.w")?, params.get("proj.b")?, false);
    let d = xp.cols();
    for t in 0..xp.rows() {
        let pe = positional(t, d);
        for (v, p) in xp.row_mut(t).iter_mut().zip(&pe) {
            *v += p;
        }
    }
    Ok(xp)
}

pub(super) fn forward_train(
    params: &Params,
    config: &ModelConfig,
    batch: &[&Tensor],
    masks: Vec<Vec<f64>>,
) -> Result<(Tensor, Cache), NnError> {
    let n = batch.len();
    let t_len = batch[0].rows();
    let tcfg = &config.transformer;
    let d = tcfg.model_dim;
    debug_assert_eq!(masks.len(), 2 * tcfg.blocks + 1);

    let mut features = Tensor::zeros(vec![n, d]);
    let mut examples = Vec::with_capacity(n);
    for (e, x) in batch.iter().enumerate() {
        let mut cur = project(params, x)?;
        let mut blocks = Vec::with_capacity(tcfg.blocks);
        for b in 0..tcfg.blocks {
            let bp = block_params(params, b)?;
            let span = e * t_len * d..(e + 1) * t_len * d;
            let (next, cache) =
                block_forward(&bp, tcfg.heads, cur, &masks[2 * b][span.clone()], &masks[2 * b + 1][span]);
            cur = next;
            blocks.push(cache);
        }
        for t in 0..t_len {
            for (fv, &cv) in features.row_mut(e).iter_mut().zip(cur.row(t)) {
                *fv += cv / t_len as f64;
            }
        }
        examples.push(ExampleCache { x: (*x).clone(), blocks });
    }

    let head_mask = masks.last().expect("head mask");
    let (logits, head) = head_forward(params, &features, head_mask)?;
    Ok((logits, Cache { examples, t_len, head }))
}

pub(super) fn backward_train(
    params: &Params,
    config: &ModelConfig,
    cache: &Cache,
    dlogits: &Tensor,
    grads: &mut Gradients,
) -> Result<(), NnError> {
    let tcfg = &config.transformer;
    let d = tcfg.model_dim;
    let t_len = cache.t_len;

    let dfeatures = head_backward(params, &cache.head, dlogits, grads)?;
    for (e, example) in cache.examples.iter().enumerate() {
        // Mean pool spreads the feature gradient evenly over time steps.
        let mut dx = Tensor::zeros(vec![t_len, d]);
        for t in 0..t_len {
            for (v, &g) in dx.row_mut(t).iter_mut().zip(dfeatures.row(e)) {
                *v = g / t_len as f64;
            }
        }
        for b in (0..tcfg.blocks).rev() {
            let bp = block_params(params, b)?;
            let bg = block_backward(&bp, tcfg.heads, &example.blocks[b], &dx);
            dx = bg.dx_in;
            for (suffix, tensor) in &bg.tensors {
                acc_grad(grads, params.index_of(&format!("block{b}.{suffix}"))?, tensor);
            }
        }
        // dx now holds the gradient at the projected input; the positional
        // offset is additive, so it passes through unchanged.
        let dw = example.x.matmul_transpose_a(&dx);
        acc_grad(grads, params.index_of("proj.w")?, &dw);
        acc_grad(grads, params.index_of("proj.b")?, &column_sums(&dx));
    }
    Ok(())
}

pub(super) fn infer(params: &Params, config: &ModelConfig, x: &Tensor) -> Result<Vec<f64>, NnError> {
    let tcfg = &config.transformer;
    let d = tcfg.model_dim;
    let t_len = x.rows();
    let ones = vec![1.0; t_len * d];
    let mut cur = project(params, x)?;
    for b in 0..tcfg.blocks {
        let bp = block_params(params, b)?;
        let (next, _) = block_forward(&bp, tcfg.heads, cur, &ones, &ones);
        cur = next;
    }
    let mut pooled = Tensor::zeros(vec![1, d]);
    for t in 0..t_len {
        for (p, &v) in pooled.data.iter_mut().zip(cur.row(t)) {
            *p += v / t_len as f64;
        }
    }
    head_infer(params, &pooled)
}
