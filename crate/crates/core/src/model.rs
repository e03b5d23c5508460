//! End-to-end models: plain MLP, APPNP (iterative propagation), PPNP
//! (exact dense propagation) and the two-layer GCN baseline. A model binds
//! a spec to one graph's features and normalized adjacency and exposes
//! forward, backward and a frozen-mask replay used by gradient checks.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::neural::{
    gcn_backward, gcn_forward, l2_penalty, mlp_backward, mlp_forward, sample_gcn_masks,
    sample_mlp_masks, softmax_xent_loss, GcnCache, GcnConfig, GcnMasks, Gradients, MlpCache,
    MlpConfig, MlpMasks, PredictorParams,
};
use crate::propagation::{exact_ppr_matrix, ExactPpr, IterativePpr, PropagationTrace};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Mlp(MlpConfig),
    /// alpha = 0 is the GCN-limit degradation mode used by the K/α sweeps.
    Appnp {
        mlp: MlpConfig,
        alpha: f64,
        steps: usize,
        adj_dropout: f64,
    },
    Ppnp {
        mlp: MlpConfig,
        alpha: f64,
    },
    Gcn {
        gcn: GcnConfig,
        mlp: MlpConfig,
    },
}

impl ModelSpec {
    pub fn mlp_config(&self) -> &MlpConfig {
        match self {
            ModelSpec::Mlp(mlp) => mlp,
            ModelSpec::Appnp { mlp, .. } => mlp,
            ModelSpec::Ppnp { mlp, .. } => mlp,
            ModelSpec::Gcn { mlp, .. } => mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mlp_config().validate()?;
        match *self {
            ModelSpec::Appnp { alpha, adj_dropout, .. } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::InvalidParameter(format!(
                        "alpha = {alpha} outside [0, 1]"
                    )));
                }
                if !(0.0..1.0).contains(&adj_dropout) {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency dropout = {adj_dropout} outside [0, 1)"
                    )));
                }
            }
            ModelSpec::Ppnp { alpha, .. } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "alpha = {alpha} outside (0, 1]"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum ModelCache {
    Mlp(MlpCache),
    Appnp {
        mlp: MlpCache,
        trace: PropagationTrace,
        dropout_active: bool,
    },
    Ppnp(MlpCache),
    Gcn(GcnCache),
}

/// A model bound to one graph.
pub struct Model<'a> {
    pub spec: ModelSpec,
    pub adj: &'a NormalizedAdjacency,
    pub x: &'a CsrMatrix,
    exact: Option<ExactPpr>,
}

impl<'a> Model<'a> {
    pub fn new(
        spec: ModelSpec,
        adj: &'a NormalizedAdjacency,
        x: &'a CsrMatrix,
        dense_cap: usize,
    ) -> Result<Self> {
        spec.validate()?;
        if x.n_rows != adj.n {
            return Err(Error::ShapeMismatch(format!(
                "features have {} rows, graph has {} nodes",
                x.n_rows, adj.n
            )));
        }
        let exact = match spec {
            ModelSpec::Ppnp { alpha, .. } => Some(exact_ppr_matrix(adj, alpha, dense_cap)?),
            _ => None,
        };
        Ok(Model {
            spec,
            adj,
            x,
            exact,
        })
    }

    pub fn init_params(&self, seed: u64) -> Result<PredictorParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PredictorParams::init(self.spec.mlp_config(), &mut rng)
    }

    fn iterative_op(&self, alpha: f64, steps: usize, dropout: f64) -> Result<IterativePpr<'a>> {
        let op = if alpha == 0.0 {
            IterativePpr::gcn_limit(self.adj, steps)
        } else {
            IterativePpr::new(self.adj, alpha, steps)?
        };
        if dropout > 0.0 {
            op.with_dropout(dropout, true)
        } else {
            Ok(op)
        }
    }

    /// Pre-softmax logits plus the cache needed for backward. Dropout is
    /// active only in train mode.
    pub fn forward(
        &self,
        params: &PredictorParams,
        train_mode: bool,
        rng: &mut impl Rng,
    ) -> Result<(Array2<f64>, ModelCache)> {
        match &self.spec {
            ModelSpec::Mlp(mlp_cfg) => {
                let masks = sample_mlp_masks(mlp_cfg, self.x, train_mode, rng);
                let (z, cache) = mlp_forward(params, mlp_cfg, self.x, &masks)?;
                Ok((z, ModelCache::Mlp(cache)))
            }
            ModelSpec::Appnp {
                mlp: mlp_cfg,
                alpha,
                steps,
                adj_dropout,
            } => {
                let masks = sample_mlp_masks(mlp_cfg, self.x, train_mode, rng);
                let (h, mlp_cache) = mlp_forward(params, mlp_cfg, self.x, &masks)?;
                let dropout = if train_mode { *adj_dropout } else { 0.0 };
                let op = self.iterative_op(*alpha, *steps, dropout)?;
                let (z, trace) = op.propagate(&h, rng)?;
                Ok((
                    z,
                    ModelCache::Appnp {
                        mlp: mlp_cache,
                        trace,
                        dropout_active: dropout > 0.0,
                    },
                ))
            }
            ModelSpec::Ppnp { mlp: mlp_cfg, .. } => {
                let masks = sample_mlp_masks(mlp_cfg, self.x, train_mode, rng);
                let (h, mlp_cache) = mlp_forward(params, mlp_cfg, self.x, &masks)?;
                let z = self.exact.as_ref().expect("built in new").propagate(&h)?;
                Ok((z, ModelCache::Ppnp(mlp_cache)))
            }
            ModelSpec::Gcn { gcn, mlp: mlp_cfg } => {
                let masks = sample_gcn_masks(gcn, mlp_cfg, self.x, self.adj, train_mode, rng);
                let (z, cache) = gcn_forward(params, gcn, mlp_cfg, self.adj, self.x, &masks)?;
                Ok((z, ModelCache::Gcn(cache)))
            }
        }
    }

    /// Recomputes the forward pass with the masks recorded in `cache`.
    /// Same masks, same output; this is what finite-difference checks use.
    pub fn forward_with_masks(
        &self,
        params: &PredictorParams,
        cache: &ModelCache,
    ) -> Result<Array2<f64>> {
        match (&self.spec, cache) {
            (ModelSpec::Mlp(mlp_cfg), ModelCache::Mlp(c)) => {
                Ok(mlp_forward(params, mlp_cfg, self.x, &c.masks)?.0)
            }
            (
                ModelSpec::Appnp {
                    mlp: mlp_cfg,
                    alpha,
                    steps,
                    adj_dropout,
                },
                ModelCache::Appnp {
                    mlp,
                    trace,
                    dropout_active,
                },
            ) => {
                let (h, _) = mlp_forward(params, mlp_cfg, self.x, &mlp.masks)?;
                let dropout = if *dropout_active { *adj_dropout } else { 0.0 };
                let op = self.iterative_op(*alpha, *steps, dropout)?;
                op.propagate_with_trace(&h, trace)
            }
            (ModelSpec::Ppnp { mlp: mlp_cfg, .. }, ModelCache::Ppnp(c)) => {
                let (h, _) = mlp_forward(params, mlp_cfg, self.x, &c.masks)?;
                self.exact.as_ref().expect("built in new").propagate(&h)
            }
            (ModelSpec::Gcn { gcn, mlp: mlp_cfg }, ModelCache::Gcn(c)) => {
                Ok(gcn_forward(params, gcn, mlp_cfg, self.adj, self.x, &c.masks)?.0)
            }
            _ => Err(Error::Invalid("cache does not match model".into())),
        }
    }

    /// Reverse-mode gradients of the logits w.r.t. all parameters, routing
    /// the upstream gradient through the propagation adjoint. L2 is not
    /// included here.
    pub fn backward(
        &self,
        params: &PredictorParams,
        cache: &ModelCache,
        d_logits: &Array2<f64>,
    ) -> Result<Gradients> {
        match (&self.spec, cache) {
            (ModelSpec::Mlp(mlp_cfg), ModelCache::Mlp(c)) => {
                mlp_backward(params, mlp_cfg, self.x, c, d_logits)
            }
            (
                ModelSpec::Appnp {
                    mlp: mlp_cfg,
                    alpha,
                    steps,
                    adj_dropout,
                },
                ModelCache::Appnp {
                    mlp,
                    trace,
                    dropout_active,
                },
            ) => {
                let dropout = if *dropout_active { *adj_dropout } else { 0.0 };
                let op = self.iterative_op(*alpha, *steps, dropout)?;
                let dh = op.adjoint(d_logits, trace)?;
                mlp_backward(params, mlp_cfg, self.x, mlp, &dh)
            }
            (ModelSpec::Ppnp { mlp: mlp_cfg, .. }, ModelCache::Ppnp(c)) => {
                let dh = self.exact.as_ref().expect("built in new").adjoint(d_logits)?;
                mlp_backward(params, mlp_cfg, self.x, c, &dh)
            }
            (ModelSpec::Gcn { mlp: mlp_cfg, .. }, ModelCache::Gcn(c)) => {
                gcn_backward(params, mlp_cfg, self.adj, self.x, c, d_logits)
            }
            _ => Err(Error::Invalid("cache does not match model".into())),
        }
    }

    /// Training objective for one full-batch pass: cross-entropy over the
    /// index set plus first-layer L2, with its exact gradients.
    pub fn loss_and_gradients(
        &self,
        params: &PredictorParams,
        labels: &[usize],
        index_set: &[usize],
        train_mode: bool,
        rng: &mut impl Rng,
    ) -> Result<(f64, Gradients, ModelCache)> {
        let (z, cache) = self.forward(params, train_mode, rng)?;
        let (xent, d_logits) = softmax_xent_loss(&z, labels, index_set)?;
        let mut grads = self.backward(params, &cache, &d_logits)?;
        let l2 = self.spec.mlp_config().l2;
        let (penalty, d_w0) = l2_penalty(params, l2);
        grads.d_weights[0] += &d_w0;
        Ok((xent + penalty, grads, cache))
    }

    /// Objective value at `params` with every mask frozen to `cache`.
    pub fn loss_with_masks(
        &self,
        params: &PredictorParams,
        cache: &ModelCache,
        labels: &[usize],
        index_set: &[usize],
    ) -> Result<f64> {
        let z = self.forward_with_masks(params, cache)?;
        let (xent, _) = softmax_xent_loss(&z, labels, index_set)?;
        let (penalty, _) = l2_penalty(params, self.spec.mlp_config().l2);
        Ok(xent + penalty)
    }

    /// Deterministic eval-mode logits.
    pub fn predict(&self, params: &PredictorParams) -> Result<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0); // unused in eval mode
        Ok(self.forward(params, false, &mut rng)?.0)
    }
}

/// Eval-mode masks for a given MLP config (no dropout anywhere).
pub fn eval_mlp_masks(cfg: &MlpConfig) -> MlpMasks {
    MlpMasks {
        input_mask: None,
        layer_masks: vec![None; cfg.num_layers().saturating_sub(1)],
    }
}

/// Eval-mode GCN masks.
pub fn eval_gcn_masks(cfg: &MlpConfig) -> GcnMasks {
    GcnMasks {
        mlp: eval_mlp_masks(cfg),
        adj_masks: [None, None],
    }
}
