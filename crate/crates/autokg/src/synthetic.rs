//! Planted-noise synthetic corpora for the ablation harness: clustered
//! nodes with a shared feature direction per cluster, intra-cluster edges,
//! and flagged cross-cluster noise edges that pruning should remove first.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::PruneReport;
use crate::graph::{Edge, EdgeProvenance, Entity, FeatureMatrix, KnowledgeGraph, Stage};

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub nodes_per_cluster: usize,
    pub intra_edge_prob: f64,
    pub noise_edges: usize,
    pub feature_noise_sigma: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            clusters: 5,
            nodes_per_cluster: 10,
            intra_edge_prob: 0.6,
            noise_edges: 15,
            feature_noise_sigma: 0.3,
            feature_dim: 728,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intra_edge_prob) {
            return Err(Error::InvalidConfig(format!(
                "intra_edge_prob must be in [0, 1], got {}",
                self.intra_edge_prob
            )));
        }
        if self.clusters == 0 || self.nodes_per_cluster == 0 {
            return Err(Error::InvalidConfig(
                "need at least one cluster and one node per cluster".into(),
            ));
        }
        if self.feature_noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("feature_noise_sigma must be >= 0".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// A generated graph together with its planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub graph: KnowledgeGraph,
    /// Unordered pairs of the planted cross-cluster noise edges.
    pub noise_edges: BTreeSet<(usize, usize)>,
}

fn unit_normal(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Deterministically generate a clustered graph: per cluster a shared unit
/// feature direction plus per-node Gaussian perturbation (renormalized),
/// intra-cluster edges at `intra_edge_prob`, and `noise_edges` distinct
/// cross-cluster edges flagged as ground-truth noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.clusters * spec.nodes_per_cluster;
    let npc = spec.nodes_per_cluster;

    let directions: Vec<Array1<f64>> = (0..spec.clusters)
        .map(|_| unit_normal(&mut rng, spec.feature_dim))
        .collect();

    let mut features = Array2::zeros((n, spec.feature_dim));
    for c in 0..spec.clusters {
        for t in 0..npc {
            let idx = c * npc + t;
            let mut x = directions[c].clone();
            if spec.feature_noise_sigma > 0.0 {
                let noise = Array1::from_shape_fn(spec.feature_dim, |_| {
                    rng.sample::<f64, _>(StandardNormal) * spec.feature_noise_sigma
                });
                x += &noise;
            }
            let norm = x.dot(&x).sqrt();
            if norm > 1e-12 {
                x /= norm;
            } else {
                x = directions[c].clone();
            }
            features.row_mut(idx).assign(&x);
        }
    }

    let mut edges: Vec<Edge> = Vec::new();
    for c in 0..spec.clusters {
        let base = c * npc;
        for a in 0..npc {
            for b in (a + 1)..npc {
                if rng.gen::<f64>() < spec.intra_edge_prob {
                    edges.push(Edge::new(base + a, base + b, 1.0, EdgeProvenance::Synthetic));
                }
            }
        }
    }

    let cross_capacity = n * (n - 1) / 2 - spec.clusters * (npc * (npc - 1) / 2);
    if spec.noise_edges > cross_capacity {
        return Err(Error::NotEnoughNonEdges {
            requested: spec.noise_edges,
            available: cross_capacity,
        });
    }
    let mut noise = BTreeSet::new();
    while noise.len() < spec.noise_edges {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b || a / npc == b / npc {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if noise.insert(key) {
            edges.push(Edge::new(key.0, key.1, 1.0, EdgeProvenance::Synthetic));
        }
    }

    let nodes = (0..n)
        .map(|i| Entity {
            id: i,
            surface: format!("c{}n{}", i / npc, i % npc),
            entity_type: format!("CLUSTER{}", i / npc),
            tags: vec![],
        })
        .collect();
    let graph = KnowledgeGraph::new(nodes, edges)?
        .with_features(Stage::Raw, FeatureMatrix::new(features)?)?;
    Ok(SyntheticGraph {
        graph,
        noise_edges: noise,
    })
}

/// Precision/recall of planted-noise removal.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseReport {
    pub precision: f64,
    pub recall: f64,
}

/// Score a prune report against the planted ground truth. With nothing
/// removed, precision is reported as 0; with no planted noise, recall is
/// vacuously 1.
pub fn noise_removal_report(
    report: &PruneReport,
    noise: &BTreeSet<(usize, usize)>,
) -> NoiseReport {
    let removed_noise = report
        .removed
        .iter()
        .filter(|(e, _)| noise.contains(&e.key()))
        .count();
    let precision = if report.removed.is_empty() {
        0.0
    } else {
        removed_noise as f64 / report.removed.len() as f64
    };
    let recall = if noise.is_empty() {
        1.0
    } else {
        removed_noise as f64 / noise.len() as f64
    };
    NoiseReport { precision, recall }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{asfas, edge_similarities, prune, PruneConfig};

    #[test]
    fn full_intra_probability_gives_complete_clusters() {
        let spec = SyntheticSpec {
            clusters: 2,
            nodes_per_cluster: 3,
            intra_edge_prob: 1.0,
            noise_edges: 0,
            feature_noise_sigma: 0.0,
            feature_dim: 8,
            seed: 1,
        };
        let out = generate_synthetic(&spec).unwrap();
        assert_eq!(out.graph.edge_count(), 6); // 2 * C(3,2)
        assert!(out.noise_edges.is_empty());
        for e in out.graph.edges() {
            assert_eq!(e.src / 3, e.dst / 3, "cross-cluster edge leaked in");
        }
    }

    #[test]
    fn zero_sigma_gives_exact_intra_similarity() {
        let spec = SyntheticSpec {
            clusters: 2,
            nodes_per_cluster: 3,
            intra_edge_prob: 1.0,
            noise_edges: 2,
            feature_noise_sigma: 0.0,
            feature_dim: 16,
            seed: 3,
        };
        let out = generate_synthetic(&spec).unwrap();
        let h = out.graph.features(Stage::Raw).unwrap().as_array().clone();
        for (e, s) in edge_similarities(&out.graph, &h).unwrap() {
            if out.noise_edges.contains(&e.key()) {
                assert!(s < 1.0 - 1e-9, "noise edge at sim {s}");
            } else {
                assert!((s - 1.0).abs() < 1e-12, "intra edge at sim {s}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.noise_edges, b.noise_edges);
    }

    #[test]
    fn too_many_noise_edges_rejected() {
        let spec = SyntheticSpec {
            clusters: 2,
            nodes_per_cluster: 2,
            intra_edge_prob: 0.0,
            noise_edges: 5, // capacity is 4
            feature_noise_sigma: 0.0,
            feature_dim: 4,
            seed: 0,
        };
        assert!(matches!(
            generate_synthetic(&spec),
            Err(Error::NotEnoughNonEdges { .. })
        ));
    }

    #[test]
    fn pruning_with_clean_features_removes_noise_first() {
        let spec = SyntheticSpec {
            clusters: 3,
            nodes_per_cluster: 4,
            intra_edge_prob: 1.0,
            noise_edges: 3,
            feature_noise_sigma: 0.0,
            feature_dim: 32,
            seed: 9,
        };
        let out = generate_synthetic(&spec).unwrap();
        let h = out.graph.features(Stage::Raw).unwrap().as_array().clone();
        let m = out.graph.edge_count();
        let fraction = (m - 3) as f64 / m as f64;
        let cfg = PruneConfig {
            retain_fraction: fraction,
            ..PruneConfig::default()
        };
        let (pruned, report) = prune(&out.graph, &h, &cfg).unwrap();
        let scored = noise_removal_report(&report, &out.noise_edges);
        assert_eq!(scored.precision, 1.0);
        assert_eq!(scored.recall, 1.0);
        assert!(asfas(&pruned, &h).unwrap() > asfas(&out.graph, &h).unwrap());
    }

    #[test]
    fn noise_report_conventions() {
        let empty = PruneReport {
            kept: 4,
            removed: vec![],
        };
        let noise: BTreeSet<(usize, usize)> = [(0, 1), (2, 3)].into_iter().collect();
        let r = noise_removal_report(&empty, &noise);
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.recall, 0.0);

        let half = PruneReport {
            kept: 2,
            removed: vec![
                (Edge::new(0, 1, 1.0, EdgeProvenance::Synthetic), 0.1),
                (Edge::new(4, 5, 1.0, EdgeProvenance::Synthetic), 0.2),
            ],
        };
        let r = noise_removal_report(&half, &noise);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 0.5);
    }
}
