//! The feature-to-logits predictor and everything needed to train it:
//! Glorot initialization, MLP and two-layer GCN forward passes with
//! hand-derived reverse-mode gradients, softmax cross-entropy, first-layer
//! L2 regularization and Adam. All math is f64.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::sparse::CsrMatrix;

/// Uniform Glorot on [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
pub fn init_glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    assert!(rows > 0 && cols > 0);
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

/// MLP predictor layout. `layer_sizes` is [f, h1, ..., c]; the reference default
/// is a single hidden layer of 64 units.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    pub dropout: f64,
    pub l2: f64,
    #[serde(default = "default_true")]
    pub use_bias: bool,
    /// Dropout on the raw input features as well as between layers.
    #[serde(default = "default_true")]
    pub input_dropout: bool,
}

fn default_true() -> bool {
    true
}

impl MlpConfig {
    pub fn new(num_features: usize, hidden: usize, num_classes: usize) -> Self {
        MlpConfig {
            layer_sizes: vec![num_features, hidden, num_classes],
            dropout: 0.5,
            l2: 0.005,
            use_bias: true,
            input_dropout: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidParameter(
                "predictor needs at least input and output sizes".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter("zero-sized layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!(
                "dropout = {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.l2 < 0.0 {
            return Err(Error::InvalidParameter("negative L2 coefficient".into()));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// Trainable parameters plus Adam state.
#[derive(Debug, Clone)]
pub struct PredictorParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub m_weights: Vec<Array2<f64>>,
    pub v_weights: Vec<Array2<f64>>,
    pub m_biases: Vec<Array1<f64>>,
    pub v_biases: Vec<Array1<f64>>,
    pub step: u64,
}

impl PredictorParams {
    pub fn init(cfg: &MlpConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..cfg.num_layers() {
            let (rows, cols) = (cfg.layer_sizes[l], cfg.layer_sizes[l + 1]);
            weights.push(init_glorot(rows, cols, rng));
            biases.push(Array1::zeros(cols));
        }
        let m_weights = weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        let v_weights = weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        let m_biases = biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
        let v_biases = biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
        Ok(PredictorParams {
            weights,
            biases,
            m_weights,
            v_weights,
            m_biases,
            v_biases,
            step: 0,
        })
    }

    pub fn param_count(&self, with_bias: bool) -> usize {
        let w: usize = self.weights.iter().map(|w| w.len()).sum();
        let b: usize = if with_bias {
            self.biases.iter().map(|b| b.len()).sum()
        } else {
            0
        };
        w + b
    }
}

/// Parameter gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &PredictorParams) -> Self {
        Gradients {
            d_weights: params
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            d_biases: params
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }
}

/// Dropout masks for one MLP forward pass. Empty option means no dropout
/// (eval mode or rate 0). Masks are inverted-dropout multipliers.
#[derive(Debug, Clone, Default)]
pub struct MlpMasks {
    pub input_mask: Option<Vec<f64>>,
    pub layer_masks: Vec<Option<Array2<f64>>>,
}

/// Samples masks for a training pass; eval mode gets empty masks so the
/// pass is deterministic.
pub fn sample_mlp_masks(
    cfg: &MlpConfig,
    x: &CsrMatrix,
    train_mode: bool,
    rng: &mut impl Rng,
) -> MlpMasks {
    let active = train_mode && cfg.dropout > 0.0;
    let keep = 1.0 / (1.0 - cfg.dropout);
    let input_mask = if active && cfg.input_dropout {
        Some(
            (0..x.nnz())
                .map(|_| if rng.random::<f64>() < cfg.dropout { 0.0 } else { keep })
                .collect(),
        )
    } else {
        None
    };
    let mut layer_masks = Vec::new();
    for l in 1..cfg.num_layers() {
        layer_masks.push(if active {
            let h = cfg.layer_sizes[l];
            Some(Array2::from_shape_fn((x.n_rows, h), |_| {
                if rng.random::<f64>() < cfg.dropout {
                    0.0
                } else {
                    keep
                }
            }))
        } else {
            None
        });
    }
    MlpMasks {
        input_mask,
        layer_masks,
    }
}

/// Everything backward needs from the forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub masks: MlpMasks,
    /// Pre-activation of each non-final layer.
    pub pre_relu: Vec<Array2<f64>>,
    /// Post-ReLU, post-dropout input to each layer past the first.
    pub activations: Vec<Array2<f64>>,
}

fn apply_input_dropout(x: &CsrMatrix, mask: &Option<Vec<f64>>) -> CsrMatrix {
    match mask {
        None => x.clone(),
        Some(m) => {
            let mut out = x.clone();
            for (v, &f) in out.values.iter_mut().zip(m) {
                *v *= f;
            }
            out
        }
    }
}

fn add_bias(mut z: Array2<f64>, bias: &Array1<f64>, use_bias: bool) -> Array2<f64> {
    if use_bias {
        z += bias;
    }
    z
}

/// Per-row prediction H = f_θ(X). Dropout → linear → ReLU → dropout →
/// linear for the default two-layer configuration.
pub fn mlp_forward(
    params: &PredictorParams,
    cfg: &MlpConfig,
    x: &CsrMatrix,
    masks: &MlpMasks,
) -> Result<(Array2<f64>, MlpCache)> {
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input features".into()));
    }
    if x.n_cols != cfg.layer_sizes[0] {
        return Err(Error::ShapeMismatch(format!(
            "features have {} columns, first layer expects {}",
            x.n_cols, cfg.layer_sizes[0]
        )));
    }
    let x_dropped = apply_input_dropout(x, &masks.input_mask);
    let mut z = add_bias(
        x_dropped.matmul(&params.weights[0])?,
        &params.biases[0],
        cfg.use_bias,
    );
    let mut pre_relu = Vec::new();
    let mut activations = Vec::new();
    for l in 1..cfg.num_layers() {
        pre_relu.push(z.clone());
        let mut a = z.mapv(|v| v.max(0.0));
        if let Some(mask) = masks.layer_masks.get(l - 1).and_then(|m| m.as_ref()) {
            a = a * mask;
        }
        activations.push(a.clone());
        z = add_bias(a.dot(&params.weights[l]), &params.biases[l], cfg.use_bias);
    }
    let cache = MlpCache {
        masks: masks.clone(),
        pre_relu,
        activations,
    };
    Ok((z, cache))
}

/// Reverse-mode pass through the MLP; returns gradients for all weights
/// and biases. L2 is not added here.
pub fn mlp_backward(
    params: &PredictorParams,
    cfg: &MlpConfig,
    x: &CsrMatrix,
    cache: &MlpCache,
    d_out: &Array2<f64>,
) -> Result<Gradients> {
    let num_layers = cfg.num_layers();
    let mut grads = Gradients::zeros_like(params);
    let mut delta = d_out.clone();

    for l in (1..num_layers).rev() {
        grads.d_weights[l] = cache.activations[l - 1].t().dot(&delta);
        if cfg.use_bias {
            grads.d_biases[l] = delta.sum_axis(ndarray::Axis(0));
        }
        let mut da = delta.dot(&params.weights[l].t());
        if let Some(mask) = cache.masks.layer_masks.get(l - 1).and_then(|m| m.as_ref()) {
            da = da * mask;
        }
        let relu_gate = cache.pre_relu[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        delta = da * &relu_gate;
    }

    let x_dropped = apply_input_dropout(x, &cache.masks.input_mask);
    grads.d_weights[0] = x_dropped.matmul_transposed(&delta)?;
    if cfg.use_bias {
        grads.d_biases[0] = delta.sum_axis(ndarray::Axis(0));
    }
    Ok(grads)
}

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy of softmax(z) over `index_set`, with the gradient of
/// the loss w.r.t. z (zero outside the index set).
pub fn softmax_xent_loss(
    z: &Array2<f64>,
    labels: &[usize],
    index_set: &[usize],
) -> Result<(f64, Array2<f64>)> {
    if index_set.is_empty() {
        return Err(Error::InvalidParameter("empty loss index set".into()));
    }
    let n = z.nrows();
    let c = z.ncols();
    let mut grad = Array2::zeros((n, c));
    let mut loss = 0.0;
    let scale = 1.0 / index_set.len() as f64;
    for &i in index_set {
        if i >= n {
            return Err(Error::NodeOutOfRange { id: i, n });
        }
        let row = z.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let label = labels[i];
        loss -= ((exps[label] / sum).ln()) * scale;
        for j in 0..c {
            let p = exps[j] / sum;
            grad[[i, j]] = (p - if j == label { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((loss, grad))
}

/// λ·½‖W₀‖²_F and its gradient λ·W₀ on the first-layer weights only.
pub fn l2_penalty(params: &PredictorParams, l2: f64) -> (f64, Array2<f64>) {
    let w0 = &params.weights[0];
    let penalty = 0.5 * l2 * w0.iter().map(|v| v * v).sum::<f64>();
    (penalty, w0 * l2)
}

/// Adam hyperparameters; the defaults are the ones used everywhere here.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn adam_update(
    p: &mut f64,
    m: &mut f64,
    v: &mut f64,
    g: f64,
    cfg: &AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// Standard bias-corrected Adam step; increments the step counter.
pub fn adam_step(params: &mut PredictorParams, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    for (l, g) in grads.d_weights.iter().enumerate() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of weight {l}")));
        }
    }
    for (l, g) in grads.d_biases.iter().enumerate() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of bias {l}")));
        }
    }
    params.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(params.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(params.step as i32);
    for l in 0..params.weights.len() {
        for ((p, m), (v, g)) in params.weights[l]
            .iter_mut()
            .zip(params.m_weights[l].iter_mut())
            .zip(params.v_weights[l].iter_mut().zip(grads.d_weights[l].iter()))
        {
            adam_update(p, m, v, *g, cfg, bc1, bc2);
        }
        for ((p, m), (v, g)) in params.biases[l]
            .iter_mut()
            .zip(params.m_biases[l].iter_mut())
            .zip(params.v_biases[l].iter_mut().zip(grads.d_biases[l].iter()))
        {
            adam_update(p, m, v, *g, cfg, bc1, bc2);
        }
    }
    Ok(())
}

/// GCN hyperparameters. The two named variants carry the reference values;
/// `custom` is free.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GcnConfig {
    pub hidden: usize,
    pub l2: f64,
    pub feature_dropout: f64,
    pub adj_dropout: Option<f64>,
}

impl GcnConfig {
    /// Original settings: h = 16, λ = 5e-4, no adjacency dropout.
    pub fn vanilla() -> Self {
        GcnConfig {
            hidden: 16,
            l2: 5e-4,
            feature_dropout: 0.5,
            adj_dropout: None,
        }
    }

    /// Tuned settings: h = 64, λ = 0.02, adjacency dropout 0.5.
    pub fn optimized() -> Self {
        GcnConfig {
            hidden: 64,
            l2: 0.02,
            feature_dropout: 0.5,
            adj_dropout: Some(0.5),
        }
    }

    pub fn as_mlp_config(&self, num_features: usize, num_classes: usize) -> MlpConfig {
        MlpConfig {
            layer_sizes: vec![num_features, self.hidden, num_classes],
            dropout: self.feature_dropout,
            l2: self.l2,
            use_bias: true,
            input_dropout: true,
        }
    }
}

/// Masks for one GCN pass: feature masks plus one adjacency mask per Â
/// application.
#[derive(Debug, Clone, Default)]
pub struct GcnMasks {
    pub mlp: MlpMasks,
    pub adj_masks: [Option<Vec<f64>>; 2],
}

pub fn sample_gcn_masks(
    cfg: &GcnConfig,
    mlp_cfg: &MlpConfig,
    x: &CsrMatrix,
    adj: &NormalizedAdjacency,
    train_mode: bool,
    rng: &mut impl Rng,
) -> GcnMasks {
    let mlp = sample_mlp_masks(mlp_cfg, x, train_mode, rng);
    let adj_masks = match (train_mode, cfg.adj_dropout) {
        (true, Some(rate)) if rate > 0.0 => [
            Some(adj.sample_edge_mask(rate, rng)),
            Some(adj.sample_edge_mask(rate, rng)),
        ],
        _ => [None, None],
    };
    GcnMasks { mlp, adj_masks }
}

#[derive(Debug, Clone)]
pub struct GcnCache {
    pub masks: GcnMasks,
    pub pre_relu: Array2<f64>,
    pub hidden_activation: Array2<f64>,
}

fn adj_apply(
    adj: &NormalizedAdjacency,
    h: &Array2<f64>,
    mask: &Option<Vec<f64>>,
    transposed: bool,
) -> Result<Array2<f64>> {
    match (mask, transposed) {
        (None, _) => adj.matmul(h),
        (Some(m), false) => adj.matmul_masked(h, m),
        (Some(m), true) => adj.matmul_masked_transposed(h, m),
    }
}

/// Two-layer GCN: Â ReLU(Â X W₀) W₁, pre-softmax, with biases added after
/// each propagation.
pub fn gcn_forward(
    params: &PredictorParams,
    cfg: &GcnConfig,
    mlp_cfg: &MlpConfig,
    adj: &NormalizedAdjacency,
    x: &CsrMatrix,
    masks: &GcnMasks,
) -> Result<(Array2<f64>, GcnCache)> {
    if x.n_rows != adj.n {
        return Err(Error::ShapeMismatch(format!(
            "features have {} rows, graph has {} nodes",
            x.n_rows, adj.n
        )));
    }
    let _ = cfg;
    let x_dropped = apply_input_dropout(x, &masks.mlp.input_mask);
    let xw = x_dropped.matmul(&params.weights[0])?;
    let pre_relu = add_bias(
        adj_apply(adj, &xw, &masks.adj_masks[0], false)?,
        &params.biases[0],
        mlp_cfg.use_bias,
    );
    let mut hidden = pre_relu.mapv(|v| v.max(0.0));
    if let Some(mask) = masks.mlp.layer_masks.first().and_then(|m| m.as_ref()) {
        hidden = hidden * mask;
    }
    let hw = hidden.dot(&params.weights[1]);
    let z = add_bias(
        adj_apply(adj, &hw, &masks.adj_masks[1], false)?,
        &params.biases[1],
        mlp_cfg.use_bias,
    );
    Ok((
        z,
        GcnCache {
            masks: masks.clone(),
            pre_relu,
            hidden_activation: hidden,
        },
    ))
}

pub fn gcn_backward(
    params: &PredictorParams,
    mlp_cfg: &MlpConfig,
    adj: &NormalizedAdjacency,
    x: &CsrMatrix,
    cache: &GcnCache,
    d_out: &Array2<f64>,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(params);
    if mlp_cfg.use_bias {
        grads.d_biases[1] = d_out.sum_axis(ndarray::Axis(0));
    }
    let d_hw = adj_apply(adj, d_out, &cache.masks.adj_masks[1], true)?;
    grads.d_weights[1] = cache.hidden_activation.t().dot(&d_hw);
    let mut d_hidden = d_hw.dot(&params.weights[1].t());
    if let Some(mask) = cache.masks.mlp.layer_masks.first().and_then(|m| m.as_ref()) {
        d_hidden = d_hidden * mask;
    }
    let relu_gate = cache.pre_relu.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let d_pre = d_hidden * &relu_gate;
    if mlp_cfg.use_bias {
        grads.d_biases[0] = d_pre.sum_axis(ndarray::Axis(0));
    }
    let d_xw = adj_apply(adj, &d_pre, &cache.masks.adj_masks[0], true)?;
    let x_dropped = apply_input_dropout(x, &cache.masks.mlp.input_mask);
    grads.d_weights[0] = x_dropped.matmul_transposed(&d_xw)?;
    Ok(grads)
}
