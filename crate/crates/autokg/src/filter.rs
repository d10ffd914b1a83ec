//! Semantic filtering's final step: cosine-similarity edge pruning over
//! the refined node features, plus the A-SFAS metric (mean cosine
//! similarity across connected pairs).

use ndarray::{Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Edge, FeatureMatrix, KnowledgeGraph, Stage};

/// Cosine similarity; zero vectors compare as 0 so degenerate embeddings
/// degrade gracefully.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity per stored edge, in edge storage order.
pub fn edge_similarities(g: &KnowledgeGraph, h: &Array2<f64>) -> Result<Vec<(Edge, f64)>> {
    if h.nrows() != g.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "feature matrix has {} rows for {} nodes",
            h.nrows(),
            g.node_count()
        )));
    }
    Ok(g.edges()
        .iter()
        .map(|e| (*e, cosine(h.row(e.src), h.row(e.dst))))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PruneMode {
    /// Keep the ceil(retain_fraction * M) highest-similarity edges.
    RetainFraction,
    /// Keep edges with similarity >= gamma.
    AbsoluteThreshold,
}

#[derive(Debug, Clone, Serialize)]
pub struct PruneConfig {
    pub mode: PruneMode,
    pub retain_fraction: f64,
    pub gamma: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            mode: PruneMode::RetainFraction,
            retain_fraction: 0.9,
            gamma: 0.0,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PruneMode::RetainFraction => {
                if !(self.retain_fraction > 0.0 && self.retain_fraction <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "retain_fraction must be in (0, 1], got {}",
                        self.retain_fraction
                    )));
                }
            }
            PruneMode::AbsoluteThreshold => {
                if !(-1.0..=1.0).contains(&self.gamma) {
                    return Err(Error::InvalidConfig(format!(
                        "gamma must be in [-1, 1], got {}",
                        self.gamma
                    )));
                }
            }
        }
        Ok(())
    }
}

/// What pruning removed, with the similarity each removed edge had.
#[derive(Debug, Clone)]
pub struct PruneReport {
    pub kept: usize,
    pub removed: Vec<(Edge, f64)>,
}

/// Threshold pruning on feature similarities. Nodes are never removed;
/// the refined features are attached to the result under the `final`
/// stage tag. Ties at the retention boundary break by ascending
/// `(src, dst)` for determinism.
pub fn prune(
    g: &KnowledgeGraph,
    h: &Array2<f64>,
    cfg: &PruneConfig,
) -> Result<(KnowledgeGraph, PruneReport)> {
    cfg.validate()?;
    if g.edge_count() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let sims = edge_similarities(g, h)?;
    let (kept, removed): (Vec<(Edge, f64)>, Vec<(Edge, f64)>) = match cfg.mode {
        PruneMode::RetainFraction => {
            let m = sims.len();
            let keep_n = (cfg.retain_fraction * m as f64).ceil() as usize;
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| {
                sims[b]
                    .1
                    .total_cmp(&sims[a].1)
                    .then_with(|| sims[a].0.key().cmp(&sims[b].0.key()))
            });
            let keep_set: Vec<bool> = {
                let mut mask = vec![false; m];
                for &idx in order.iter().take(keep_n) {
                    mask[idx] = true;
                }
                mask
            };
            let mut kept = Vec::with_capacity(keep_n);
            let mut removed = Vec::with_capacity(m - keep_n);
            for (idx, pair) in sims.into_iter().enumerate() {
                if keep_set[idx] {
                    kept.push(pair);
                } else {
                    removed.push(pair);
                }
            }
            (kept, removed)
        }
        PruneMode::AbsoluteThreshold => sims.into_iter().partition(|(_, s)| *s >= cfg.gamma),
    };
    let mut pruned = KnowledgeGraph::new(
        g.nodes().to_vec(),
        kept.iter().map(|(e, _)| *e).collect(),
    )?;
    for (stage, fm) in g.feature_stages() {
        pruned = pruned.with_features(stage, fm.clone())?;
    }
    pruned = pruned.with_features(Stage::Final, FeatureMatrix::new(h.clone())?)?;
    Ok((
        pruned,
        PruneReport {
            kept: kept.len(),
            removed,
        },
    ))
}

/// Average Semantic Feature Alignment Score: the arithmetic mean of edge
/// cosine similarities over stored edges.
pub fn asfas(g: &KnowledgeGraph, h: &Array2<f64>) -> Result<f64> {
    if g.edge_count() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let sims = edge_similarities(g, h)?;
    Ok(sims.iter().map(|(_, s)| s).sum::<f64>() / sims.len() as f64)
}
