//! Link-prediction self-supervision: cross-entropy on sigmoid inner
//! products over stored edges (positives) and sampled non-edges
//! (negatives).

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;

const CLAMP_LO: f64 = 1e-7;
const CLAMP_HI: f64 = 1.0 - 1e-7;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy link-prediction loss. `phi_ij = sigmoid(z_i · z_j)` is
/// clamped to `[1e-7, 1 - 1e-7]` before the log; the loss is the mean
/// `-log phi` over positives plus the mean `-log (1 - phi)` over
/// negatives. An empty pair set contributes zero.
pub fn self_supervised_loss(
    z: &Array2<f64>,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
) -> f64 {
    let mut loss = 0.0;
    if !pos.is_empty() {
        let mut total = 0.0;
        for &(i, j) in pos {
            let phi = sigmoid(z.row(i).dot(&z.row(j))).clamp(CLAMP_LO, CLAMP_HI);
            total -= phi.ln();
        }
        loss += total / pos.len() as f64;
    }
    if !neg.is_empty() {
        let mut total = 0.0;
        for &(i, j) in neg {
            let phi = sigmoid(z.row(i).dot(&z.row(j))).clamp(CLAMP_LO, CLAMP_HI);
            total -= (1.0 - phi).ln();
        }
        loss += total / neg.len() as f64;
    }
    loss
}

/// Loss plus its gradient with respect to the embeddings. Pairs in the
/// clamped sigmoid region contribute zero gradient.
pub(crate) fn loss_with_grad(
    z: &Array2<f64>,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
) -> (f64, Array2<f64>) {
    let mut loss = 0.0;
    let mut gz = Array2::zeros(z.raw_dim());
    if !pos.is_empty() {
        let scale = 1.0 / pos.len() as f64;
        for &(i, j) in pos {
            let phi = sigmoid(z.row(i).dot(&z.row(j)));
            let clamped = phi.clamp(CLAMP_LO, CLAMP_HI);
            loss -= scale * clamped.ln();
            if phi > CLAMP_LO && phi < CLAMP_HI {
                let gs = -scale * (1.0 - phi);
                gz.row_mut(i).scaled_add(gs, &z.row(j));
                gz.row_mut(j).scaled_add(gs, &z.row(i));
            }
        }
    }
    if !neg.is_empty() {
        let scale = 1.0 / neg.len() as f64;
        for &(i, j) in neg {
            let phi = sigmoid(z.row(i).dot(&z.row(j)));
            let clamped = phi.clamp(CLAMP_LO, CLAMP_HI);
            loss -= scale * (1.0 - clamped).ln();
            if phi > CLAMP_LO && phi < CLAMP_HI {
                let gs = scale * phi;
                gz.row_mut(i).scaled_add(gs, &z.row(j));
                gz.row_mut(j).scaled_add(gs, &z.row(i));
            }
        }
    }
    (loss, gz)
}

/// Uniform rejection sampling of distinct unordered non-adjacent pairs,
/// deterministic per seed, no duplicates within one call. Falls back to
/// enumerating the remaining non-edges if rejection stalls on a dense
/// graph (the fallback is reached deterministically too).
pub fn negative_sample(
    g: &KnowledgeGraph,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let n = g.node_count();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let available = total_pairs - g.edge_count();
    if count > available {
        return Err(Error::NotEnoughNonEdges {
            requested: count,
            available,
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let max_attempts = 50 * count + 1000;
    let mut attempts = 0usize;
    while out.len() < count && attempts < max_attempts {
        attempts += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if g.has_edge(key.0, key.1) || chosen.contains(&key) {
            continue;
        }
        chosen.insert(key);
        out.push(key);
    }
    if out.len() < count {
        let mut rest: Vec<(usize, usize)> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if !g.has_edge(i, j) && !chosen.contains(&(i, j)) {
                    rest.push((i, j));
                }
            }
        }
        while out.len() < count {
            let pick = rng.gen_range(0..rest.len());
            out.push(rest.swap_remove(pick));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeProvenance, Entity, KnowledgeGraph};
    use ndarray::array;

    fn graph(n: usize, edges: &[(usize, usize)]) -> KnowledgeGraph {
        let nodes = (0..n)
            .map(|i| Entity {
                id: i,
                surface: format!("n{i}"),
                entity_type: "UNKNOWN".to_string(),
                tags: vec![],
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(a, b)| Edge::new(a, b, 1.0, EdgeProvenance::Synthetic))
            .collect();
        KnowledgeGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn orthogonal_embeddings_hit_ln2() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let loss = self_supervised_loss(&z, &[(0, 1)], &[(0, 1)]);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        // One positive pair alone: phi = 0.5, loss = ln 2.
        let loss_pos = self_supervised_loss(&z, &[(0, 1)], &[]);
        assert!((loss_pos - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_positive_pair_loss_vanishes() {
        let z = array![[30.0, 0.0], [30.0, 0.0]];
        let loss = self_supervised_loss(&z, &[(0, 1)], &[]);
        assert!(loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn contradictory_labels_cannot_beat_ln2() {
        // The same pair as positive and negative: minimum over phi of
        // -ln(phi) - ln(1-phi) is 2 ln 2, so per-pair mean >= ln 2.
        for scale in [-3.0, -0.5, 0.0, 0.5, 3.0] {
            let z = array![[scale, 0.0], [1.0, 0.0]];
            let loss = self_supervised_loss(&z, &[(0, 1)], &[(0, 1)]);
            assert!(loss >= 2.0 * std::f64::consts::LN_2 - 1e-12, "loss {loss}");
        }
    }

    #[test]
    fn loss_grad_matches_finite_differences() {
        let mut z = array![[0.3, -0.2], [0.1, 0.4], [-0.5, 0.2]];
        let pos = [(0, 1), (1, 2)];
        let neg = [(0, 2)];
        let (_, g) = loss_with_grad(&z, &pos, &neg);
        let eps = 1e-6;
        for i in 0..3 {
            for c in 0..2 {
                let orig = z[[i, c]];
                z[[i, c]] = orig + eps;
                let fp = self_supervised_loss(&z, &pos, &neg);
                z[[i, c]] = orig - eps;
                let fm = self_supervised_loss(&z, &pos, &neg);
                z[[i, c]] = orig;
                let gn = (fp - fm) / (2.0 * eps);
                assert!(
                    (g[[i, c]] - gn).abs() < 1e-8,
                    "grad mismatch at ({i},{c}): {} vs {gn}",
                    g[[i, c]]
                );
            }
        }
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!(matches!(
            negative_sample(&g, 1, 0),
            Err(Error::NotEnoughNonEdges { .. })
        ));
    }

    #[test]
    fn path_graph_single_non_edge() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let neg = negative_sample(&g, 1, 0).unwrap();
        assert_eq!(neg, vec![(0, 2)]);
    }

    #[test]
    fn zero_count_is_empty() {
        let g = graph(3, &[(0, 1)]);
        assert!(negative_sample(&g, 0, 0).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_deterministic_and_duplicate_free() {
        let g = graph(8, &[(0, 1), (2, 3), (4, 5)]);
        let a = negative_sample(&g, 10, 42).unwrap();
        let b = negative_sample(&g, 10, 42).unwrap();
        assert_eq!(a, b);
        let set: BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), a.len());
        for &(i, j) in &a {
            assert!(i < j);
            assert!(!g.has_edge(i, j));
        }
    }

    #[test]
    fn exhaustive_request_returns_all_non_edges() {
        let g = graph(5, &[(0, 1)]);
        let all = negative_sample(&g, 9, 7).unwrap();
        assert_eq!(all.len(), 9);
        let set: BTreeSet<_> = all.into_iter().collect();
        assert_eq!(set.len(), 9);
    }
}
