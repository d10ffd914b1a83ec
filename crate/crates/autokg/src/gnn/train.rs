//! Fully unsupervised training: stage 1 fits the feature-denoising layer
//! with the link-prediction loss on its output embeddings; stage 2 freezes
//! it and fits the semantic-filtering stack (topological, Chebyshev,
//! semantic convolution) with the same loss on the final embeddings.
//! Plain gradient descent, fresh negatives per epoch, deterministic per
//! seed.

use ndarray::{concatenate, s, Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{estimate_lambda_max, scaled_laplacian, KnowledgeGraph};
use crate::hash::derive_seed;

use super::layers::{
    cheb_bases, closed_neighborhoods, fdn_backward, fdn_forward_cached, semantic_backward,
    semantic_forward_cached, topo_aggregate,
};
use super::loss::{loss_with_grad, negative_sample, self_supervised_loss};
use super::LayerParams;

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    /// Epochs per stage.
    pub epochs: usize,
    pub step_size: f64,
    pub neg_samples_per_edge: usize,
    pub seed: u64,
    pub leaky_relu_slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            step_size: 0.01,
            neg_samples_per_edge: 1,
            seed: 0,
            leaky_relu_slope: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Final parameters plus the per-epoch loss traces. A non-empty trace has
/// `epochs + 1` entries: the loss before each update, then the loss after
/// the last one.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: LayerParams,
    pub stage1_loss: Vec<f64>,
    pub stage2_loss: Vec<f64>,
}

/// The scaled Laplacian used by the Chebyshev layer: power-iteration
/// lambda_max times a 1.01 safety margin keeps the spectrum inside
/// `[-1, 1]`.
pub fn chebyshev_operator(g: &KnowledgeGraph, seed: u64) -> Result<Array2<f64>> {
    let l = g.normalized_laplacian();
    let lambda = estimate_lambda_max(&l, 100, seed) * 1.01;
    scaled_laplacian(&l, lambda)
}

fn epoch_seed(seed: u64, stage: u8, epoch: usize) -> u64 {
    derive_seed(seed, &format!("stage{stage}-epoch{epoch}"))
}

fn training_pairs(g: &KnowledgeGraph, cfg: &TrainConfig) -> (Vec<(usize, usize)>, usize) {
    let pos: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.src, e.dst)).collect();
    let n = g.node_count();
    let available = n * n.saturating_sub(1) / 2 - g.edge_count();
    let neg_count = (pos.len() * cfg.neg_samples_per_edge).min(available);
    (pos, neg_count)
}

/// Stage 1: fit `w_fd`/`a_fd` on the denoised embeddings.
pub fn train_stage1(
    g: &KnowledgeGraph,
    xo: &Array2<f64>,
    params: &mut LayerParams,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if g.edge_count() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    super::fdn_forward(xo, g, params, cfg.leaky_relu_slope)?; // shape validation
    let closed = closed_neighborhoods(g);
    let (pos, neg_count) = training_pairs(g, cfg);
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let neg = negative_sample(g, neg_count, epoch_seed(cfg.seed, 1, epoch))?;
        let (z, cache) =
            fdn_forward_cached(xo, &closed, &params.w_fd, &params.a_fd, cfg.leaky_relu_slope);
        let (loss, gz) = loss_with_grad(&z, &pos, &neg);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: 1,
                epoch,
                value: loss,
            });
        }
        trace.push(loss);
        let (dw, da) = fdn_backward(&gz, &cache, xo, &closed, &params.a_fd, cfg.leaky_relu_slope);
        params.w_fd.scaled_add(-cfg.step_size, &dw);
        params.a_fd.scaled_add(-cfg.step_size, &da);
    }
    if cfg.epochs > 0 {
        let neg = negative_sample(g, neg_count, epoch_seed(cfg.seed, 1, cfg.epochs))?;
        let z = fdn_forward_cached(xo, &closed, &params.w_fd, &params.a_fd, cfg.leaky_relu_slope).0;
        let loss = self_supervised_loss(&z, &pos, &neg);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: 1,
                epoch: cfg.epochs,
                value: loss,
            });
        }
        trace.push(loss);
    }
    Ok(trace)
}

/// Stage 2: with the denoised features fixed, fit `w_tr`, `w_nr`, `w_s`,
/// `a_s` on the final embeddings.
pub fn train_stage2(
    g: &KnowledgeGraph,
    xd: &Array2<f64>,
    params: &mut LayerParams,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if g.edge_count() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let f = params.feature_len();
    if xd.ncols() != f || xd.nrows() != g.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "stage-2 features are {}x{}, expected {}x{f}",
            xd.nrows(),
            xd.ncols(),
            g.node_count()
        )));
    }
    let closed = closed_neighborhoods(g);
    let (pos, neg_count) = training_pairs(g, cfg);
    let lhat = chebyshev_operator(g, derive_seed(cfg.seed, "lambda"))?;
    // X^d is frozen here, so the aggregation and Chebyshev bases are
    // constant across epochs.
    let agg = topo_aggregate(xd, g);
    let zs = cheb_bases(xd, &lhat, params.filter_size());
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let forward = |params: &LayerParams, closed: &[Vec<usize>]| {
        let xt = agg.dot(&params.w_tr);
        let mut xl = zs[0].dot(&params.w_nr[0]);
        for t in 1..params.w_nr.len() {
            xl += &zs[t].dot(&params.w_nr[t]);
        }
        let x = concatenate![Axis(1), xt, xl];
        let (h, cache) =
            semantic_forward_cached(&x, closed, &params.w_s, &params.a_s, cfg.leaky_relu_slope);
        (x, h, cache)
    };
    for epoch in 0..cfg.epochs {
        let neg = negative_sample(g, neg_count, epoch_seed(cfg.seed, 2, epoch))?;
        let (x, h, cache) = forward(params, &closed);
        let (loss, gh) = loss_with_grad(&h, &pos, &neg);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: 2,
                epoch,
                value: loss,
            });
        }
        trace.push(loss);
        let (dws, das, dx) = semantic_backward(
            &gh,
            &cache,
            &x,
            &closed,
            &params.w_s,
            &params.a_s,
            cfg.leaky_relu_slope,
        );
        let dxt = dx.slice(s![.., ..f]);
        let dxl = dx.slice(s![.., f..]);
        let dwtr = agg.t().dot(&dxt);
        params.w_tr.scaled_add(-cfg.step_size, &dwtr);
        for t in 0..params.w_nr.len() {
            let dwnr = zs[t].t().dot(&dxl);
            params.w_nr[t].scaled_add(-cfg.step_size, &dwnr);
        }
        params.w_s.scaled_add(-cfg.step_size, &dws);
        params.a_s.scaled_add(-cfg.step_size, &das);
    }
    if cfg.epochs > 0 {
        let neg = negative_sample(g, neg_count, epoch_seed(cfg.seed, 2, cfg.epochs))?;
        let (_, h, _) = forward(params, &closed);
        let loss = self_supervised_loss(&h, &pos, &neg);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: 2,
                epoch: cfg.epochs,
                value: loss,
            });
        }
        trace.push(loss);
    }
    Ok(trace)
}

/// Run both stages from a fresh seeded initialization.
pub fn train(
    g: &KnowledgeGraph,
    xo: &Array2<f64>,
    f: usize,
    k: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut params = LayerParams::init(xo.ncols(), f, k, cfg.seed);
    let stage1_loss = train_stage1(g, xo, &mut params, cfg)?;
    let xd = super::fdn_forward(xo, g, &params, cfg.leaky_relu_slope)?;
    let stage2_loss = train_stage2(g, &xd, &mut params, cfg)?;
    Ok(TrainOutcome {
        params,
        stage1_loss,
        stage2_loss,
    })
}
