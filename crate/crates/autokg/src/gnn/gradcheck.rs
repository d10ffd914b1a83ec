//! Finite-difference validation of the hand-written layer gradients:
//! compare analytic parameter gradients of the self-supervised loss
//! composed with one layer's forward pass against central differences on
//! every parameter entry.

use ndarray::Array2;

use crate::error::Result;
use crate::graph::KnowledgeGraph;

use super::layers::{
    cheb_bases, closed_neighborhoods, fdn_backward, fdn_forward_cached, semantic_backward,
    semantic_forward_cached, topo_aggregate,
};
use super::loss::{loss_with_grad, self_supervised_loss};
use super::LayerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradLayer {
    FeatureDenoise,
    Topological,
    Chebyshev,
    Semantic,
}

/// Everything a single-layer loss evaluation needs. `x` is the layer
/// input (d_in wide for the denoiser, F for the topological/Chebyshev
/// layers, 2F for the semantic layer); `lhat` is only read by the
/// Chebyshev check.
pub struct GradCheckInputs<'a> {
    pub graph: &'a KnowledgeGraph,
    pub x: &'a Array2<f64>,
    pub lhat: Option<&'a Array2<f64>>,
    pub pos: &'a [(usize, usize)],
    pub neg: &'a [(usize, usize)],
    pub slope: f64,
}

/// Maximum relative error `|g_a - g_n| / max(1, |g_a|, |g_n|)` over every
/// parameter entry of the chosen layer.
pub fn grad_check(
    layer: GradLayer,
    params: &LayerParams,
    inputs: &GradCheckInputs,
    epsilon: f64,
) -> Result<f64> {
    assert!(
        (1e-7..=1e-3).contains(&epsilon),
        "epsilon {epsilon} outside [1e-7, 1e-3]"
    );
    let closed = closed_neighborhoods(inputs.graph);
    match layer {
        GradLayer::FeatureDenoise => {
            let (z, cache) =
                fdn_forward_cached(inputs.x, &closed, &params.w_fd, &params.a_fd, inputs.slope);
            let (_, gz) = loss_with_grad(&z, inputs.pos, inputs.neg);
            let (dw, da) =
                fdn_backward(&gz, &cache, inputs.x, &closed, &params.a_fd, inputs.slope);
            let eval = |p: &LayerParams| {
                let z = fdn_forward_cached(inputs.x, &closed, &p.w_fd, &p.a_fd, inputs.slope).0;
                self_supervised_loss(&z, inputs.pos, inputs.neg)
            };
            let e1 = check_tensor(params, dw.as_slice().unwrap(), |p| flat(&mut p.w_fd), &eval, epsilon);
            let e2 = check_tensor(params, da.as_slice().unwrap(), |p| p.a_fd.as_slice_mut().unwrap(), &eval, epsilon);
            Ok(e1.max(e2))
        }
        GradLayer::Topological => {
            let agg = topo_aggregate(inputs.x, inputs.graph);
            let out = agg.dot(&params.w_tr);
            let (_, gout) = loss_with_grad(&out, inputs.pos, inputs.neg);
            let dw = agg.t().dot(&gout);
            let eval = |p: &LayerParams| {
                let out = agg.dot(&p.w_tr);
                self_supervised_loss(&out, inputs.pos, inputs.neg)
            };
            Ok(check_tensor(params, dw.as_slice().unwrap(), |p| flat(&mut p.w_tr), &eval, epsilon))
        }
        GradLayer::Chebyshev => {
            let lhat = inputs.lhat.expect("Chebyshev check needs a scaled Laplacian");
            let zs = cheb_bases(inputs.x, lhat, params.filter_size());
            let forward = |p: &LayerParams| {
                let mut out = zs[0].dot(&p.w_nr[0]);
                for t in 1..p.w_nr.len() {
                    out += &zs[t].dot(&p.w_nr[t]);
                }
                out
            };
            let (_, gout) = loss_with_grad(&forward(params), inputs.pos, inputs.neg);
            let eval = |p: &LayerParams| self_supervised_loss(&forward(p), inputs.pos, inputs.neg);
            let mut worst = 0.0f64;
            for t in 0..params.w_nr.len() {
                let dw = zs[t].t().dot(&gout);
                let err = check_tensor(
                    params,
                    dw.as_slice().unwrap(),
                    |p| flat(&mut p.w_nr[t]),
                    &eval,
                    epsilon,
                );
                worst = worst.max(err);
            }
            Ok(worst)
        }
        GradLayer::Semantic => {
            let (h, cache) =
                semantic_forward_cached(inputs.x, &closed, &params.w_s, &params.a_s, inputs.slope);
            let (_, gh) = loss_with_grad(&h, inputs.pos, inputs.neg);
            let (dw, da, _) = semantic_backward(
                &gh,
                &cache,
                inputs.x,
                &closed,
                &params.w_s,
                &params.a_s,
                inputs.slope,
            );
            let eval = |p: &LayerParams| {
                let h = semantic_forward_cached(inputs.x, &closed, &p.w_s, &p.a_s, inputs.slope).0;
                self_supervised_loss(&h, inputs.pos, inputs.neg)
            };
            let e1 = check_tensor(params, dw.as_slice().unwrap(), |p| flat(&mut p.w_s), &eval, epsilon);
            let e2 = check_tensor(params, da.as_slice().unwrap(), |p| p.a_s.as_slice_mut().unwrap(), &eval, epsilon);
            Ok(e1.max(e2))
        }
    }
}

fn flat(m: &mut Array2<f64>) -> &mut [f64] {
    m.as_slice_mut().expect("parameters are contiguous")
}

fn check_tensor<F, G>(
    params: &LayerParams,
    analytic: &[f64],
    mut select: G,
    eval: &F,
    epsilon: f64,
) -> f64
where
    F: Fn(&LayerParams) -> f64,
    G: FnMut(&mut LayerParams) -> &mut [f64],
{
    let mut worst = 0.0f64;
    for (idx, &ga) in analytic.iter().enumerate() {
        let mut p = params.clone();
        select(&mut p)[idx] += epsilon;
        let fp = eval(&p);
        select(&mut p)[idx] -= 2.0 * epsilon;
        let fm = eval(&p);
        let gn = (fp - fm) / (2.0 * epsilon);
        let rel = (ga - gn).abs() / 1.0f64.max(ga.abs()).max(gn.abs());
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeProvenance, Entity, KnowledgeGraph};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn random_x(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn fdn_gradients_match_finite_differences() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]);
        let x = random_x(4, 5, 10);
        let params = LayerParams::init(5, 3, 2, 11);
        let inputs = GradCheckInputs {
            graph: &g,
            x: &x,
            lhat: None,
            pos: &[(0, 1), (1, 2), (2, 3), (0, 2)],
            neg: &[(0, 3), (1, 3)],
            slope: 0.2,
        };
        let err = grad_check(GradLayer::FeatureDenoise, &params, &inputs, 1e-5).unwrap();
        assert!(err <= 1e-4, "max rel err {err}");
    }

    #[test]
    fn topo_gradients_are_tight() {
        // The loss is smooth in w_tr, so central differences are accurate.
        let g = graph(3, &[(0, 1), (1, 2)]);
        let x = random_x(3, 3, 20);
        let params = LayerParams::init(3, 3, 1, 21);
        let inputs = GradCheckInputs {
            graph: &g,
            x: &x,
            lhat: None,
            pos: &[(0, 1), (1, 2)],
            neg: &[(0, 2)],
            slope: 0.2,
        };
        let err = grad_check(GradLayer::Topological, &params, &inputs, 1e-5).unwrap();
        assert!(err <= 1e-6, "max rel err {err}");
    }

    #[test]
    fn topo_zero_edge_graph_has_pure_self_gradients() {
        // With no edges the aggregation is a diagonal scale, so the
        // analytic gradient must equal the no-neighbor closed form
        // X^T gout exactly (dhat = 1 everywhere).
        let g = graph(3, &[]);
        let x = random_x(3, 2, 30);
        let params = LayerParams::init(2, 2, 1, 31);
        let agg = topo_aggregate(&x, &g);
        assert!(agg.abs_diff_eq(&x, 0.0), "aggregation must be exactly X");
        let out = agg.dot(&params.w_tr);
        let neg = [(0, 1), (1, 2), (0, 2)];
        let (_, gout) = loss_with_grad(&out, &[], &neg);
        let dw = agg.t().dot(&gout);
        let dw_self = x.t().dot(&gout);
        assert_eq!(dw, dw_self);
    }

    #[test]
    fn cheb_gradients_match_finite_differences() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let x = random_x(4, 3, 40);
        let params = LayerParams::init(3, 3, 3, 41);
        let lhat = super::super::chebyshev_operator(&g, 7).unwrap();
        let inputs = GradCheckInputs {
            graph: &g,
            x: &x,
            lhat: Some(&lhat),
            pos: &[(0, 1), (1, 2), (2, 3)],
            neg: &[(0, 2), (0, 3)],
            slope: 0.2,
        };
        let err = grad_check(GradLayer::Chebyshev, &params, &inputs, 1e-5).unwrap();
        assert!(err <= 1e-6, "max rel err {err}");
    }

    #[test]
    fn semantic_gradients_match_finite_differences() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let x = random_x(4, 6, 50);
        let params = LayerParams::init(9, 3, 1, 51); // w_s is 3x6
        let inputs = GradCheckInputs {
            graph: &g,
            x: &x,
            lhat: None,
            pos: &[(0, 1), (1, 2)],
            neg: &[(0, 2), (1, 3)],
            slope: 0.2,
        };
        let err = grad_check(GradLayer::Semantic, &params, &inputs, 1e-5).unwrap();
        assert!(err <= 1e-4, "max rel err {err}");
    }

    #[test]
    #[should_panic(expected = "epsilon")]
    fn epsilon_outside_range_panics() {
        let g = graph(2, &[(0, 1)]);
        let x = random_x(2, 2, 0);
        let params = LayerParams::init(2, 2, 1, 0);
        let inputs = GradCheckInputs {
            graph: &g,
            x: &x,
            lhat: None,
            pos: &[(0, 1)],
            neg: &[],
            slope: 0.2,
        };
        let _ = grad_check(GradLayer::Topological, &params, &inputs, 1e-2);
    }
}
