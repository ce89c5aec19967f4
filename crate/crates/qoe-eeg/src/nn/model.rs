//! Model configuration, parameter layout, initialization, and the forward
//! and backward passes shared by all three architectures.
//!
//! [`param_spec`] is the single source of truth for which tensors a
//! configuration owns: [`build_model`] materializes exactly that list, and
//! checkpoint loading validates against it. All three architectures share the
//! classification head (one hidden ReLU layer, dropout, then the class
//! logits).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::init::{glorot_uniform, orthogonal};
use super::layers::{
    batchnorm_backward, batchnorm_infer, batchnorm_stats, dense, dense_backward, dense_forward,
    dropout_mask, softmax_crossentropy, BnCache, DenseCache, BN_MOMENTUM,
};
use super::lstm::{bilstm_backward, bilstm_forward, BiLstmCache, LstmDir};
use super::tensor::{Gradients, Param, Params, Tensor};
use super::{convlstm, transformer, NnError};
use crate::rng::{tag, Stream};

/// The three sequence classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    BiLstm,
    Transformer,
    ConvLstm,
}

impl Architecture {
    pub const ALL: [Architecture; 3] =
        [Architecture::BiLstm, Architecture::Transformer, Architecture::ConvLstm];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::BiLstm => "bilstm",
            Architecture::Transformer => "transformer",
            Architecture::ConvLstm => "convlstm",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Architecture, NnError> {
        match s.to_ascii_lowercase().as_str() {
            "bilstm" => Ok(Architecture::BiLstm),
            "transformer" => Ok(Architecture::Transformer),
            "convlstm" => Ok(Architecture::ConvLstm),
            other => Err(NnError::InvalidConfig {
                detail: format!("unknown architecture {other:?}"),
            }),
        }
    }
}

/// Encoder settings used when [`ModelConfig::architecture`] is
/// [`Architecture::Transformer`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub blocks: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
}

impl Default for TransformerConfig {
    fn default() -> TransformerConfig {
        TransformerConfig { blocks: 2, heads: 4, model_dim: 64, ff_dim: 128 }
    }
}

/// Encoder settings used when [`ModelConfig::architecture`] is
/// [`Architecture::ConvLstm`]. Each input row is reshaped to a
/// `grid_rows x grid_cols` single-channel image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvLstmConfig {
    pub filters: usize,
    pub kernel: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for ConvLstmConfig {
    fn default() -> ConvLstmConfig {
        ConvLstmConfig { filters: 16, kernel: 3, grid_rows: 8, grid_cols: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Units per direction in the first recurrent layer.
    pub units1: usize,
    /// Units per direction in the second recurrent layer.
    pub units2: usize,
    /// Dropout rate applied inside the encoder.
    pub dropout: f64,
    /// L2 penalty weight on the input kernels.
    pub l2: f64,
    pub head_hidden: usize,
    pub head_dropout: f64,
    pub classes: usize,
    /// Feature columns per time step.
    pub input_dim: usize,
    pub transformer: TransformerConfig,
    pub convlstm: ConvLstmConfig,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            architecture: Architecture::BiLstm,
            units1: 64,
            units2: 64,
            dropout: 0.4,
            l2: 0.2,
            head_hidden: 128,
            head_dropout: 0.3,
            classes: 3,
            input_dim: 80,
            transformer: TransformerConfig::default(),
            convlstm: ConvLstmConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |detail: String| Err(NnError::InvalidConfig { detail });
        if self.classes != 3 {
            return fail(format!("expected 3 rating classes, got {}", self.classes));
        }
        if self.input_dim == 0 {
            return fail("input_dim must be positive".into());
        }
        if self.head_hidden == 0 {
            return fail("head_hidden must be positive".into());
        }
        for (name, rate) in [("dropout", self.dropout), ("head_dropout", self.head_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return fail(format!("{name} {rate} outside [0, 1)"));
            }
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return fail(format!("l2 {} must be finite and non-negative", self.l2));
        }
        match self.architecture {
            Architecture::BiLstm => {
                if self.units1 == 0 || self.units2 == 0 {
                    return fail("recurrent layers need at least one unit".into());
                }
            }
            Architecture::Transformer => {
                let t = &self.transformer;
                if t.blocks == 0 || t.heads == 0 || t.model_dim == 0 || t.ff_dim == 0 {
                    return fail("transformer dimensions must be positive".into());
                }
                if t.model_dim % t.heads != 0 {
                    return fail(format!(
                        "model_dim {} not divisible by {} heads",
                        t.model_dim, t.heads
                    ));
                }
            }
            Architecture::ConvLstm => {
                let c = &self.convlstm;
                if c.filters == 0 {
                    return fail("convlstm needs at least one filter".into());
                }
                if c.kernel == 0 || c.kernel % 2 == 0 {
                    return fail(format!("kernel {} must be odd for same padding", c.kernel));
                }
                if c.grid_rows * c.grid_cols != self.input_dim {
                    return fail(format!(
                        "grid {}x{} does not cover input_dim {}",
                        c.grid_rows, c.grid_cols, self.input_dim
                    ));
                }
            }
        }
        Ok(())
    }

    /// Width of the feature vector entering the classification head.
    pub fn head_input_dim(&self) -> usize {
        match self.architecture {
            Architecture::BiLstm => 2 * self.units2,
            Architecture::Transformer => self.transformer.model_dim,
            Architecture::ConvLstm => {
                self.convlstm.grid_rows * self.convlstm.grid_cols * self.convlstm.filters
            }
        }
    }

    /// Value counts as `(trainable, total)`; the difference is the batch-norm
    /// running statistics.
    pub fn param_count(&self) -> Result<(usize, usize), NnError> {
        let spec = param_spec(self)?;
        let total: usize = spec.iter().map(|s| s.numel()).sum();
        let trainable: usize = spec.iter().filter(|s| s.trainable).map(|s| s.numel()).sum();
        Ok((trainable, total))
    }
}

/// Train applies dropout and batch statistics; Infer is deterministic and
/// uses the running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InitKind {
    Zeros,
    Ones,
    Glorot,
    /// Four independent orthogonal `U x U` blocks side by side, for the
    /// recurrent kernel `[U, 4U]`.
    OrthogonalGates,
    /// Zero bias with the forget-gate quarter set to one.
    ForgetBiasOne,
}

/// Declared layout of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub regularized: bool,
    pub(crate) init: InitKind,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn spec(name: String, shape: Vec<usize>, init: InitKind) -> ParamSpec {
    ParamSpec { name, shape, trainable: true, regularized: false, init }
}

fn push_lstm_dir(out: &mut Vec<ParamSpec>, prefix: &str, f: usize, u: usize) {
    let mut wx = spec(format!("{prefix}.w_x"), vec![f, 4 * u], InitKind::Glorot);
    wx.regularized = true;
    out.push(wx);
    out.push(spec(format!("{prefix}.w_h"), vec![u, 4 * u], InitKind::OrthogonalGates));
    out.push(spec(format!("{prefix}.bias"), vec![4 * u], InitKind::ForgetBiasOne));
}

fn push_batchnorm(out: &mut Vec<ParamSpec>, prefix: &str, channels: usize) {
    out.push(spec(format!("{prefix}.gamma"), vec![channels], InitKind::Ones));
    out.push(spec(format!("{prefix}.beta"), vec![channels], InitKind::Zeros));
    let mut rm = spec(format!("{prefix}.running_mean"), vec![channels], InitKind::Zeros);
    rm.trainable = false;
    out.push(rm);
    let mut rv = spec(format!("{prefix}.running_var"), vec![channels], InitKind::Ones);
    rv.trainable = false;
    out.push(rv);
}

fn push_dense(out: &mut Vec<ParamSpec>, prefix: &str, fan_in: usize, fan_out: usize, reg: bool) {
    let mut w = spec(format!("{prefix}.w"), vec![fan_in, fan_out], InitKind::Glorot);
    w.regularized = reg;
    out.push(w);
    out.push(spec(format!("{prefix}.b"), vec![fan_out], InitKind::Zeros));
}

/// Full parameter layout for a configuration, in checkpoint order.
pub fn param_spec(config: &ModelConfig) -> Result<Vec<ParamSpec>, NnError> {
    config.validate()?;
    let mut out = Vec::new();
    match config.architecture {
        Architecture::BiLstm => {
            for dir in ["fwd", "bwd"] {
                push_lstm_dir(&mut out, &format!("lstm1.{dir}"), config.input_dim, config.units1);
            }
            push_batchnorm(&mut out, "bn1", 2 * config.units1);
            for dir in ["fwd", "bwd"] {
                push_lstm_dir(&mut out, &format!("lstm2.{dir}"), 2 * config.units1, config.units2);
            }
            push_batchnorm(&mut out, "bn2", 2 * config.units2);
        }
        Architecture::Transformer => {
            let t = &config.transformer;
            let d = t.model_dim;
            push_dense(&mut out, "proj", config.input_dim, d, true);
            let kernel = |name: String, fan_in: usize, fan_out: usize| {
                let mut w = spec(name.clone(), vec![fan_in, fan_out], InitKind::Glorot);
                w.regularized = true;
                let b = spec(name.replace(".w", ".b"), vec![fan_out], InitKind::Zeros);
                (w, b)
            };
            for i in 0..t.blocks {
                let p = format!("block{i}");
                out.push(spec(format!("{p}.ln1.gamma"), vec![d], InitKind::Ones));
                out.push(spec(format!("{p}.ln1.beta"), vec![d], InitKind::Zeros));
                for gate in ["q", "k", "v", "o"] {
                    let (w, b) = kernel(format!("{p}.attn.w{gate}"), d, d);
                    out.push(w);
                    out.push(b);
                }
                out.push(spec(format!("{p}.ln2.gamma"), vec![d], InitKind::Ones));
                out.push(spec(format!("{p}.ln2.beta"), vec![d], InitKind::Zeros));
                let (w, b) = kernel(format!("{p}.ff.w1"), d, t.ff_dim);
                out.push(w);
                out.push(b);
                let (w, b) = kernel(format!("{p}.ff.w2"), t.ff_dim, d);
                out.push(w);
                out.push(b);
            }
        }
        Architecture::ConvLstm => {
            let c = &config.convlstm;
            let k2 = c.kernel * c.kernel;
            let mut wx = spec("convlstm.w_x".into(), vec![k2, 4 * c.filters], InitKind::Glorot);
            wx.regularized = true;
            out.push(wx);
            out.push(spec("convlstm.w_h".into(), vec![k2 * c.filters, 4 * c.filters], InitKind::Glorot));
            out.push(spec("convlstm.bias".into(), vec![4 * c.filters], InitKind::ForgetBiasOne));
        }
    }
    push_dense(&mut out, "head.dense1", config.head_input_dim(), config.head_hidden, false);
    push_dense(&mut out, "head.dense2", config.head_hidden, config.classes, false);
    Ok(out)
}

fn materialize(spec: &ParamSpec, stream: &mut Stream) -> Tensor {
    match spec.init {
        InitKind::Zeros => Tensor::zeros(spec.shape.clone()),
        InitKind::Ones => Tensor { shape: spec.shape.clone(), data: vec![1.0; spec.numel()] },
        InitKind::Glorot => glorot_uniform(spec.shape[0], spec.shape[1], stream),
        InitKind::OrthogonalGates => {
            let u = spec.shape[0];
            let mut t = Tensor::zeros(vec![u, 4 * u]);
            for block in 0..4 {
                let q = orthogonal(u, stream);
                for r in 0..u {
                    for c in 0..u {
                        t.set2(r, block * u + c, q.at2(r, c));
                    }
                }
            }
            t
        }
        InitKind::ForgetBiasOne => {
            let mut t = Tensor::zeros(spec.shape.clone());
            let u = spec.shape[0] / 4;
            for j in u..2 * u {
                t.data[j] = 1.0;
            }
            t
        }
    }
}

/// Fresh parameters for `config`. Every tensor draws from its own stream
/// derived from the seed and the parameter name, so the layout can grow
/// without disturbing existing tensors.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Params, NnError> {
    let mut params = Params::new();
    for s in param_spec(config)? {
        let mut stream = Stream::derived(seed, &[tag("init"), tag(&s.name)]);
        params.push(Param {
            tensor: materialize(&s, &mut stream),
            name: s.name,
            trainable: s.trainable,
            regularized: s.regularized,
        });
    }
    Ok(params)
}

/// A configuration with its learned parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub seed: u64,
    pub params: Params,
}

impl TrainedModel {
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>, NnError> {
        infer_logits(&self.params, &self.config, x)
    }

    /// Predicted class, lowest index on exact ties.
    pub fn predict(&self, x: &Tensor) -> Result<usize, NnError> {
        let logits = self.logits(x)?;
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

// ---------------------------------------------------------------------------
// Shared head and dispatch plumbing.

pub(super) struct HeadCache {
    d1: DenseCache,
    d2: DenseCache,
    mask: Vec<f64>,
}

/// Hidden ReLU layer, dropout mask, class logits.
pub(super) fn head_forward(
    params: &Params,
    x: &Tensor,
    mask: &[f64],
) -> Result<(Tensor, HeadCache), NnError> {
    let (a, d1) = dense_forward(x, params.get("head.dense1.w")?, params.get("head.dense1.b")?, true);
    let mut dropped = a;
    for (v, m) in dropped.data.iter_mut().zip(mask) {
        *v *= m;
    }
    let (logits, d2) =
        dense_forward(&dropped, params.get("head.dense2.w")?, params.get("head.dense2.b")?, false);
    Ok((logits, HeadCache { d1, d2, mask: mask.to_vec() }))
}

/// Returns the gradient w.r.t. the head input.
pub(super) fn head_backward(
    params: &Params,
    cache: &HeadCache,
    dlogits: &Tensor,
    grads: &mut Gradients,
) -> Result<Tensor, NnError> {
    let (mut da, dw2, db2) = dense_backward(dlogits, params.get("head.dense2.w")?, &cache.d2);
    acc_grad(grads, params.index_of("head.dense2.w")?, &dw2);
    acc_grad(grads, params.index_of("head.dense2.b")?, &db2);
    for (v, m) in da.data.iter_mut().zip(&cache.mask) {
        *v *= m;
    }
    let (dx, dw1, db1) = dense_backward(&da, params.get("head.dense1.w")?, &cache.d1);
    acc_grad(grads, params.index_of("head.dense1.w")?, &dw1);
    acc_grad(grads, params.index_of("head.dense1.b")?, &db1);
    Ok(dx)
}

/// Plain inference head without dropout.
pub(super) fn head_infer(params: &Params, x: &Tensor) -> Result<Vec<f64>, NnError> {
    let a = dense(x, params.get("head.dense1.w")?, params.get("head.dense1.b")?, true);
    let logits = dense(&a, params.get("head.dense2.w")?, params.get("head.dense2.b")?, false);
    Ok(logits.row(0).to_vec())
}

pub(super) fn acc_grad(grads: &mut Gradients, index: usize, delta: &Tensor) {
    let g = grads.at_mut(index);
    debug_assert_eq!(g.shape, delta.shape);
    for (gv, &dv) in g.data.iter_mut().zip(&delta.data) {
        *gv += dv;
    }
}

/// Deferred running-stat update for one batch-norm layer.
pub(super) struct StatUpdate {
    pub mean_index: usize,
    pub var_index: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub(super) enum ArchCache {
    Bi(Box<BiCache>),
    Tr(Box<transformer::Cache>),
    Conv(Box<convlstm::Cache>),
}

impl ArchCache {
    fn stat_updates(&self) -> &[StatUpdate] {
        match self {
            ArchCache::Bi(c) => &c.stats,
            ArchCache::Tr(_) | ArchCache::Conv(_) => &[],
        }
    }
}

/// Dropout mask sizes and rates in draw order, so forward and backward agree
/// on how much randomness a batch consumes.
fn mask_plan(config: &ModelConfig, n: usize, t_len: usize) -> Vec<(usize, f64)> {
    let head = (n * config.head_hidden, config.head_dropout);
    match config.architecture {
        Architecture::BiLstm => vec![
            (n * t_len * 2 * config.units1, config.dropout),
            (n * 2 * config.units2, config.dropout),
            head,
        ],
        Architecture::Transformer => {
            let d = config.transformer.model_dim;
            let mut plan = Vec::with_capacity(2 * config.transformer.blocks + 1);
            for _ in 0..config.transformer.blocks {
                plan.push((n * t_len * d, config.dropout));
                plan.push((n * t_len * d, config.dropout));
            }
            plan.push(head);
            plan
        }
        Architecture::ConvLstm => vec![(n * config.head_input_dim(), config.dropout), head],
    }
}

fn check_batch(config: &ModelConfig, batch: &[&Tensor]) -> Result<usize, NnError> {
    let first = batch.first().ok_or_else(|| NnError::ShapeMismatch {
        detail: "empty batch".to_string(),
    })?;
    let t_len = first.rows();
    if t_len == 0 {
        return Err(NnError::ShapeMismatch { detail: "empty sequence".to_string() });
    }
    for x in batch {
        if x.shape != vec![t_len, config.input_dim] {
            return Err(NnError::ShapeMismatch {
                detail: format!(
                    "example shaped {:?}, batch expects [{t_len}, {}]",
                    x.shape, config.input_dim
                ),
            });
        }
    }
    Ok(t_len)
}

fn forward_train(
    params: &Params,
    config: &ModelConfig,
    batch: &[&Tensor],
    masks: Vec<Vec<f64>>,
) -> Result<(Tensor, ArchCache), NnError> {
    match config.architecture {
        Architecture::BiLstm => {
            let (logits, cache) = bilstm_forward_train(params, config, batch, masks)?;
            Ok((logits, ArchCache::Bi(Box::new(cache))))
        }
        Architecture::Transformer => {
            let (logits, cache) = transformer::forward_train(params, config, batch, masks)?;
            Ok((logits, ArchCache::Tr(Box::new(cache))))
        }
        Architecture::ConvLstm => {
            let (logits, cache) = convlstm::forward_train(params, config, batch, masks)?;
            Ok((logits, ArchCache::Conv(Box::new(cache))))
        }
    }
}

fn backward_arch(
    params: &Params,
    config: &ModelConfig,
    cache: &ArchCache,
    dlogits: &Tensor,
    grads: &mut Gradients,
) -> Result<(), NnError> {
    match cache {
        ArchCache::Bi(c) => bilstm_backward_train(params, config, c, dlogits, grads),
        ArchCache::Tr(c) => transformer::backward_train(params, config, c, dlogits, grads),
        ArchCache::Conv(c) => convlstm::backward_train(params, config, c, dlogits, grads),
    }
}

fn infer_logits(params: &Params, config: &ModelConfig, x: &Tensor) -> Result<Vec<f64>, NnError> {
    check_batch(config, &[x])?;
    match config.architecture {
        Architecture::BiLstm => bilstm_infer(params, config, x),
        Architecture::Transformer => transformer::infer(params, config, x),
        Architecture::ConvLstm => convlstm::infer(params, config, x),
    }
}

fn l2_penalty(params: &Params, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let sum: f64 = params
        .iter()
        .filter(|p| p.regularized)
        .map(|p| p.tensor.data.iter().map(|v| v * v).sum::<f64>())
        .sum();
    l2 * sum
}

fn mean_crossentropy(
    logits: &Tensor,
    batch: &[(&Tensor, usize)],
    classes: usize,
) -> Result<(f64, Tensor), NnError> {
    let n = batch.len();
    let mut loss = 0.0;
    let mut dlogits = Tensor::zeros(vec![n, classes]);
    for (r, &(_, label)) in batch.iter().enumerate() {
        if label >= classes {
            return Err(NnError::ShapeMismatch {
                detail: format!("label {label} outside {classes} classes"),
            });
        }
        let (l, g) = softmax_crossentropy(logits.row(r), label);
        loss += l / n as f64;
        for (c, gv) in g.iter().enumerate() {
            dlogits.set2(r, c, gv / n as f64);
        }
    }
    Ok((loss, dlogits))
}

/// Train-mode logits for one example (Mode::Train draws dropout from `rng`),
/// or deterministic inference logits. Neither variant mutates parameters;
/// running statistics only move inside [`backward`].
pub fn forward(
    params: &Params,
    config: &ModelConfig,
    x: &Tensor,
    mode: Mode,
    rng: &mut Stream,
) -> Result<Vec<f64>, NnError> {
    match mode {
        Mode::Infer => infer_logits(params, config, x),
        Mode::Train => {
            let t_len = check_batch(config, &[x])?;
            let masks = mask_plan(config, 1, t_len)
                .into_iter()
                .map(|(len, rate)| dropout_mask(len, rate, rng))
                .collect();
            let (logits, _) = forward_train(params, config, &[x], masks)?;
            Ok(logits.row(0).to_vec())
        }
    }
}

/// One training step worth of gradients: mean cross-entropy over the batch
/// plus the L2 kernel penalty, with dropout drawn from `rng`. Updates the
/// batch-norm running statistics in place; everything else is left to the
/// optimizer.
pub fn backward(
    params: &mut Params,
    config: &ModelConfig,
    batch: &[(&Tensor, usize)],
    rng: &mut Stream,
) -> Result<(f64, Gradients), NnError> {
    let xs: Vec<&Tensor> = batch.iter().map(|&(x, _)| x).collect();
    let t_len = check_batch(config, &xs)?;
    let masks = mask_plan(config, batch.len(), t_len)
        .into_iter()
        .map(|(len, rate)| dropout_mask(len, rate, rng))
        .collect();
    let (logits, cache) = forward_train(params, config, &xs, masks)?;
    let (mut loss, dlogits) = mean_crossentropy(&logits, batch, config.classes)?;

    let mut grads = Gradients::zeros_like(params);
    backward_arch(params, config, &cache, &dlogits, &mut grads)?;

    loss += l2_penalty(params, config.l2);
    if config.l2 > 0.0 {
        let scale = 2.0 * config.l2;
        for idx in 0..params.len() {
            if params.at(idx).regularized {
                let w = &params.at(idx).tensor.data;
                for (gv, wv) in grads.tensors[idx].data.iter_mut().zip(w) {
                    *gv += scale * wv;
                }
            }
        }
    }

    for s in cache.stat_updates() {
        let rm = &mut params.at_mut(s.mean_index).tensor;
        for (r, &m) in rm.data.iter_mut().zip(&s.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
        }
        let rv = &mut params.at_mut(s.var_index).tensor;
        for (r, &v) in rv.data.iter_mut().zip(&s.var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
    }
    Ok((loss, grads))
}

/// The exact loss [`backward`] differentiates, with dropout disabled and no
/// side effects. Suitable for finite-difference checks.
pub fn batch_loss(
    params: &Params,
    config: &ModelConfig,
    batch: &[(&Tensor, usize)],
) -> Result<f64, NnError> {
    let xs: Vec<&Tensor> = batch.iter().map(|&(x, _)| x).collect();
    let t_len = check_batch(config, &xs)?;
    let masks = mask_plan(config, batch.len(), t_len)
        .into_iter()
        .map(|(len, _)| vec![1.0; len])
        .collect();
    let (logits, _) = forward_train(params, config, &xs, masks)?;
    let (loss, _) = mean_crossentropy(&logits, batch, config.classes)?;
    Ok(loss + l2_penalty(params, config.l2))
}

// ---------------------------------------------------------------------------
// BiLSTM pipeline.

struct BiDirs<'a> {
    fwd: LstmDir<'a>,
    bwd: LstmDir<'a>,
}

fn lstm_dirs<'a>(params: &'a Params, layer: &str) -> Result<BiDirs<'a>, NnError> {
    Ok(BiDirs {
        fwd: LstmDir {
            w_x: params.get(&format!("{layer}.fwd.w_x"))?,
            w_h: params.get(&format!("{layer}.fwd.w_h"))?,
            b: params.get(&format!("{layer}.fwd.bias"))?,
        },
        bwd: LstmDir {
            w_x: params.get(&format!("{layer}.bwd.w_x"))?,
            w_h: params.get(&format!("{layer}.bwd.w_h"))?,
            b: params.get(&format!("{layer}.bwd.bias"))?,
        },
    })
}

pub(super) struct BiCache {
    t_len: usize,
    l1: Vec<BiLstmCache>,
    bn1: BnCache,
    m1: Vec<f64>,
    l2: Vec<BiLstmCache>,
    bn2: BnCache,
    m2: Vec<f64>,
    head: HeadCache,
    stats: Vec<StatUpdate>,
}

fn bilstm_forward_train(
    params: &Params,
    config: &ModelConfig,
    batch: &[&Tensor],
    masks: Vec<Vec<f64>>,
) -> Result<(Tensor, BiCache), NnError> {
    let n = batch.len();
    let t_len = batch[0].rows();
    let (u1, u2) = (config.units1, config.units2);
    let [m1, m2, m3]: [Vec<f64>; 3] = masks.try_into().expect("bilstm draws three masks");

    let dirs1 = lstm_dirs(params, "lstm1")?;
    let mut x1 = Tensor::zeros(vec![n * t_len, 2 * u1]);
    let mut l1 = Vec::with_capacity(n);
    for (e, x) in batch.iter().enumerate() {
        let (out, cache) = bilstm_forward(x, &dirs1.fwd, &dirs1.bwd, true)?;
        for t in 0..t_len {
            x1.row_mut(e * t_len + t).copy_from_slice(out.row(t));
        }
        l1.push(cache);
    }
    let (mut z1, bn1, mean1, var1) =
        batchnorm_stats(&x1, params.get("bn1.gamma")?, params.get("bn1.beta")?)?;
    for (v, m) in z1.data.iter_mut().zip(&m1) {
        *v *= m;
    }

    let dirs2 = lstm_dirs(params, "lstm2")?;
    let mut x2 = Tensor::zeros(vec![n, 2 * u2]);
    let mut l2 = Vec::with_capacity(n);
    for e in 0..n {
        let seq = Tensor {
            shape: vec![t_len, 2 * u1],
            data: z1.data[e * t_len * 2 * u1..(e + 1) * t_len * 2 * u1].to_vec(),
        };
        let (out, cache) = bilstm_forward(&seq, &dirs2.fwd, &dirs2.bwd, false)?;
        x2.row_mut(e).copy_from_slice(out.row(0));
        l2.push(cache);
    }
    let (mut z2, bn2, mean2, var2) =
        batchnorm_stats(&x2, params.get("bn2.gamma")?, params.get("bn2.beta")?)?;
    for (v, m) in z2.data.iter_mut().zip(&m2) {
        *v *= m;
    }

    let (logits, head) = head_forward(params, &z2, &m3)?;
    let stats = vec![
        StatUpdate {
            mean_index: params.index_of("bn1.running_mean")?,
            var_index: params.index_of("bn1.running_var")?,
            mean: mean1,
            var: var1,
        },
        StatUpdate {
            mean_index: params.index_of("bn2.running_mean")?,
            var_index: params.index_of("bn2.running_var")?,
            mean: mean2,
            var: var2,
        },
    ];
    Ok((logits, BiCache { t_len, l1, bn1, m1, l2, bn2, m2, head, stats }))
}

fn bilstm_backward_train(
    params: &Params,
    config: &ModelConfig,
    cache: &BiCache,
    dlogits: &Tensor,
    grads: &mut Gradients,
) -> Result<(), NnError> {
    let n = cache.l1.len();
    let t_len = cache.t_len;
    let (u1, u2) = (config.units1, config.units2);

    let mut dz2 = head_backward(params, &cache.head, dlogits, grads)?;
    for (v, m) in dz2.data.iter_mut().zip(&cache.m2) {
        *v *= m;
    }
    let (dx2, dg2, db2) = batchnorm_backward(&dz2, params.get("bn2.gamma")?, &cache.bn2);
    acc_grad(grads, params.index_of("bn2.gamma")?, &dg2);
    acc_grad(grads, params.index_of("bn2.beta")?, &db2);

    let dirs2 = lstm_dirs(params, "lstm2")?;
    let mut dz1 = Tensor::zeros(vec![n * t_len, 2 * u1]);
    for e in 0..n {
        let d_out = Tensor { shape: vec![1, 2 * u2], data: dx2.row(e).to_vec() };
        let bi = bilstm_backward(&cache.l2[e], &dirs2.fwd, &dirs2.bwd, &d_out);
        for t in 0..t_len {
            dz1.row_mut(e * t_len + t).copy_from_slice(bi.dx.row(t));
        }
        for (name, t) in [
            ("lstm2.fwd.w_x", &bi.fwd.dw_x),
            ("lstm2.fwd.w_h", &bi.fwd.dw_h),
            ("lstm2.fwd.bias", &bi.fwd.db),
            ("lstm2.bwd.w_x", &bi.bwd.dw_x),
            ("lstm2.bwd.w_h", &bi.bwd.dw_h),
            ("lstm2.bwd.bias", &bi.bwd.db),
        ] {
            acc_grad(grads, params.index_of(name)?, t);
        }
    }

    for (v, m) in dz1.data.iter_mut().zip(&cache.m1) {
        *v *= m;
    }
    let (dx1, dg1, db1) = batchnorm_backward(&dz1, params.get("bn1.gamma")?, &cache.bn1);
    acc_grad(grads, params.index_of("bn1.gamma")?, &dg1);
    acc_grad(grads, params.index_of("bn1.beta")?, &db1);

    let dirs1 = lstm_dirs(params, "lstm1")?;
    for e in 0..n {
        let d_out = Tensor {
            shape: vec![t_len, 2 * u1],
            data: dx1.data[e * t_len * 2 * u1..(e + 1) * t_len * 2 * u1].to_vec(),
        };
        let bi = bilstm_backward(&cache.l1[e], &dirs1.fwd, &dirs1.bwd, &d_out);
        for (name, t) in [
            ("lstm1.fwd.w_x", &bi.fwd.dw_x),
            ("lstm1.fwd.w_h", &bi.fwd.dw_h),
            ("lstm1.fwd.bias", &bi.fwd.db),
            ("lstm1.bwd.w_x", &bi.bwd.dw_x),
            ("lstm1.bwd.w_h", &bi.bwd.dw_h),
            ("lstm1.bwd.bias", &bi.bwd.db),
        ] {
            acc_grad(grads, params.index_of(name)?, t);
        }
    }
    Ok(())
}

fn bilstm_infer(params: &Params, _config: &ModelConfig, x: &Tensor) -> Result<Vec<f64>, NnError> {
    let dirs1 = lstm_dirs(params, "lstm1")?;
    let (out1, _) = bilstm_forward(x, &dirs1.fwd, &dirs1.bwd, true)?;
    let y1 = batchnorm_infer(
        &out1,
        params.get("bn1.gamma")?,
        params.get("bn1.beta")?,
        params.get("bn1.running_mean")?,
        params.get("bn1.running_var")?,
    );
    let dirs2 = lstm_dirs(params, "lstm2")?;
    let (out2, _) = bilstm_forward(&y1, &dirs2.fwd, &dirs2.bwd, false)?;
    let y2 = batchnorm_infer(
        &out2,
        params.get("bn2.gamma")?,
        params.get("bn2.beta")?,
        params.get("bn2.running_mean")?,
        params.get("bn2.running_var")?,
    );
    head_infer(params, &y2)
}
