//! Forward and reverse-mode passes for the four layers. The per-node
//! neighborhood sums below are the reference implementations; dense-matrix
//! oracles for them live in the test suites.

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;

use super::LayerParams;

/// Closed neighborhoods: for each node, sorted neighbor ids plus the node
/// itself. Fixed ordering keeps gradient accumulation deterministic.
pub(crate) fn closed_neighborhoods(g: &KnowledgeGraph) -> Vec<Vec<usize>> {
    let mut lists = g.neighbor_lists();
    for (i, list) in lists.iter_mut().enumerate() {
        list.push(i);
        list.sort_unstable();
    }
    lists
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Max-subtracted softmax, in place.
fn softmax(scores: &mut [f64]) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - m).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

fn shape_err(msg: String) -> Error {
    Error::ShapeMismatch(msg)
}

// ---------------------------------------------------------------------------
// Feature denoising
// ---------------------------------------------------------------------------

pub(crate) struct FdnCache {
    u: Array2<f64>,
    alpha: Vec<Vec<f64>>,
    score: Vec<Vec<f64>>,
    concat: Vec<Vec<f64>>,
    sig: Vec<Vec<f64>>,
}

/// Attention-denoised features: per node, an attention-weighted sum of
/// linearly transformed neighbors (self included). The raw score for a
/// pair is the concatenation attention times a sigmoid dot-product gate;
/// LeakyReLU applies to the full product before the softmax.
pub fn fdn_forward(
    x: &Array2<f64>,
    g: &KnowledgeGraph,
    params: &LayerParams,
    slope: f64,
) -> Result<Array2<f64>> {
    validate_fdn(x, g, params)?;
    let closed = closed_neighborhoods(g);
    Ok(fdn_forward_cached(x, &closed, &params.w_fd, &params.a_fd, slope).0)
}

fn validate_fdn(x: &Array2<f64>, g: &KnowledgeGraph, params: &LayerParams) -> Result<()> {
    if x.nrows() != g.node_count() {
        return Err(shape_err(format!(
            "features have {} rows for {} nodes",
            x.nrows(),
            g.node_count()
        )));
    }
    if params.w_fd.ncols() != x.ncols() {
        return Err(shape_err(format!(
            "w_fd expects input dim {}, features have {}",
            params.w_fd.ncols(),
            x.ncols()
        )));
    }
    if params.a_fd.len() != 2 * params.w_fd.nrows() {
        return Err(shape_err(format!(
            "a_fd has length {}, expected {}",
            params.a_fd.len(),
            2 * params.w_fd.nrows()
        )));
    }
    Ok(())
}

pub(crate) fn fdn_forward_cached(
    x: &Array2<f64>,
    closed: &[Vec<usize>],
    w: &Array2<f64>,
    a: &Array1<f64>,
    slope: f64,
) -> (Array2<f64>, FdnCache) {
    let n = x.nrows();
    let f = w.nrows();
    let u = x.dot(&w.t());
    let (a1, a2) = a.view().split_at(Axis(0), f);
    let mut z = Array2::zeros((n, f));
    let mut alpha_all = Vec::with_capacity(n);
    let mut score_all = Vec::with_capacity(n);
    let mut concat_all = Vec::with_capacity(n);
    let mut sig_all = Vec::with_capacity(n);
    for i in 0..n {
        let ui = u.row(i);
        let self_attn = a1.dot(&ui);
        let list = &closed[i];
        let mut concat = Vec::with_capacity(list.len());
        let mut sig = Vec::with_capacity(list.len());
        let mut score = Vec::with_capacity(list.len());
        for &j in list {
            let uj = u.row(j);
            let c = self_attn + a2.dot(&uj);
            let s = sigmoid(ui.dot(&uj));
            concat.push(c);
            sig.push(s);
            score.push(c * s);
        }
        let mut alpha: Vec<f64> = score.iter().map(|&e| leaky_relu(e, slope)).collect();
        softmax(&mut alpha);
        for (t, &j) in list.iter().enumerate() {
            z.row_mut(i).scaled_add(alpha[t], &u.row(j));
        }
        alpha_all.push(alpha);
        score_all.push(score);
        concat_all.push(concat);
        sig_all.push(sig);
    }
    (
        z,
        FdnCache {
            u,
            alpha: alpha_all,
            score: score_all,
            concat: concat_all,
            sig: sig_all,
        },
    )
}

/// Attention rows of the denoising layer, aligned with each node's closed
/// neighborhood in ascending id order. Each row sums to 1.
pub fn fdn_attention(
    x: &Array2<f64>,
    g: &KnowledgeGraph,
    params: &LayerParams,
    slope: f64,
) -> Result<Vec<Vec<f64>>> {
    validate_fdn(x, g, params)?;
    let closed = closed_neighborhoods(g);
    Ok(fdn_forward_cached(x, &closed, &params.w_fd, &params.a_fd, slope)
        .1
        .alpha)
}

/// Gradients of a scalar loss with respect to `w_fd` and `a_fd`, given the
/// loss gradient on the layer output.
pub(crate) fn fdn_backward(
    gz: &Array2<f64>,
    cache: &FdnCache,
    x: &Array2<f64>,
    closed: &[Vec<usize>],
    a: &Array1<f64>,
    slope: f64,
) -> (Array2<f64>, Array1<f64>) {
    let n = x.nrows();
    let f = cache.u.ncols();
    let mut du = Array2::zeros((n, f));
    let mut da = Array1::zeros(2 * f);
    let (a1, a2) = a.view().split_at(Axis(0), f);
    for i in 0..n {
        let gi = gz.row(i);
        let list = &closed[i];
        let alpha = &cache.alpha[i];
        let mut dalpha = Vec::with_capacity(list.len());
        for (t, &j) in list.iter().enumerate() {
            dalpha.push(gi.dot(&cache.u.row(j)));
            du.row_mut(j).scaled_add(alpha[t], &gi);
        }
        let inner: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        for (t, &j) in list.iter().enumerate() {
            let dl = alpha[t] * (dalpha[t] - inner);
            let de = dl * leaky_relu_grad(cache.score[i][t], slope);
            let sig = cache.sig[i][t];
            let dc = de * sig;
            let dd = de * cache.concat[i][t] * sig * (1.0 - sig);
            da.slice_mut(s![..f]).scaled_add(dc, &cache.u.row(i));
            da.slice_mut(s![f..]).scaled_add(dc, &cache.u.row(j));
            du.row_mut(i).scaled_add(dc, &a1);
            du.row_mut(j).scaled_add(dc, &a2);
            du.row_mut(i).scaled_add(dd, &cache.u.row(j));
            du.row_mut(j).scaled_add(dd, &cache.u.row(i));
        }
    }
    let dw = du.t().dot(x);
    (dw, da)
}

// ---------------------------------------------------------------------------
// Topological relation extraction
// ---------------------------------------------------------------------------

/// The normalized neighborhood aggregation of the topological layer:
/// per node, `sum_{j in N(i) ∪ {i}} e_ji / sqrt(dhat_j dhat_i) x_j` with
/// `dhat_i = 1 + weighted degree` (self term coefficient `1/dhat_i`).
pub(crate) fn topo_aggregate(xd: &Array2<f64>, g: &KnowledgeGraph) -> Array2<f64> {
    let n = g.node_count();
    let mut dhat = vec![1.0; n];
    for e in g.edges() {
        dhat[e.src] += e.weight;
        dhat[e.dst] += e.weight;
    }
    let mut agg = Array2::zeros((n, xd.ncols()));
    for i in 0..n {
        agg.row_mut(i).scaled_add(1.0 / dhat[i], &xd.row(i));
    }
    for e in g.edges() {
        let coef = e.weight / (dhat[e.src] * dhat[e.dst]).sqrt();
        agg.row_mut(e.src).scaled_add(coef, &xd.row(e.dst));
        agg.row_mut(e.dst).scaled_add(coef, &xd.row(e.src));
    }
    agg
}

/// Degree-normalized graph convolution; equals the dense computation
/// `Dhat^{-1/2} (A + I) Dhat^{-1/2} X W`.
pub fn topo_forward(
    xd: &Array2<f64>,
    g: &KnowledgeGraph,
    w_tr: &Array2<f64>,
) -> Result<Array2<f64>> {
    if xd.nrows() != g.node_count() {
        return Err(shape_err(format!(
            "features have {} rows for {} nodes",
            xd.nrows(),
            g.node_count()
        )));
    }
    if w_tr.nrows() != xd.ncols() {
        return Err(shape_err(format!(
            "w_tr expects input dim {}, features have {}",
            w_tr.nrows(),
            xd.ncols()
        )));
    }
    Ok(topo_aggregate(xd, g).dot(w_tr))
}

// ---------------------------------------------------------------------------
// Chebyshev local relation extraction
// ---------------------------------------------------------------------------

/// Chebyshev bases `Z^(1) = X`, `Z^(2) = Lhat X`,
/// `Z^(k) = 2 Lhat Z^(k-1) - Z^(k-2)`.
pub(crate) fn cheb_bases(xd: &Array2<f64>, lhat: &Array2<f64>, k: usize) -> Vec<Array2<f64>> {
    let mut zs: Vec<Array2<f64>> = Vec::with_capacity(k);
    zs.push(xd.clone());
    if k >= 2 {
        zs.push(lhat.dot(xd));
    }
    for t in 2..k {
        let z = 2.0 * lhat.dot(&zs[t - 1]) - &zs[t - 2];
        zs.push(z);
    }
    zs
}

/// Spectral filtering over the scaled Laplacian:
/// `X^l = sum_k Z^(k) W_NR^(k)`.
pub fn cheb_forward(
    xd: &Array2<f64>,
    lhat: &Array2<f64>,
    w_nr: &[Array2<f64>],
) -> Result<Array2<f64>> {
    if w_nr.is_empty() {
        return Err(shape_err("Chebyshev filter needs K >= 1 weights".into()));
    }
    if lhat.nrows() != lhat.ncols() || lhat.nrows() != xd.nrows() {
        return Err(shape_err(format!(
            "scaled Laplacian is {}x{} for {} feature rows",
            lhat.nrows(),
            lhat.ncols(),
            xd.nrows()
        )));
    }
    for (t, w) in w_nr.iter().enumerate() {
        if w.nrows() != xd.ncols() {
            return Err(shape_err(format!(
                "w_nr[{t}] expects input dim {}, features have {}",
                w.nrows(),
                xd.ncols()
            )));
        }
    }
    let zs = cheb_bases(xd, lhat, w_nr.len());
    let mut out = zs[0].dot(&w_nr[0]);
    for t in 1..w_nr.len() {
        out += &zs[t].dot(&w_nr[t]);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Semantic information convolution
// ---------------------------------------------------------------------------

pub(crate) struct SemanticCache {
    v: Array2<f64>,
    alpha: Vec<Vec<f64>>,
}

/// Attention convolution over the concatenated topological/local features
/// `X = [X^t || X^l]`. Scores are `a · LeakyReLU([W x_i || W x_j])`; the
/// output is the attention-weighted sum of transformed neighbors.
pub fn semantic_forward(
    x: &Array2<f64>,
    g: &KnowledgeGraph,
    w_s: &Array2<f64>,
    a_s: &Array1<f64>,
    slope: f64,
) -> Result<Array2<f64>> {
    if x.nrows() != g.node_count() {
        return Err(shape_err(format!(
            "features have {} rows for {} nodes",
            x.nrows(),
            g.node_count()
        )));
    }
    if w_s.ncols() != x.ncols() {
        return Err(shape_err(format!(
            "w_s expects input dim {}, features have {}",
            w_s.ncols(),
            x.ncols()
        )));
    }
    if a_s.len() != 2 * w_s.nrows() {
        return Err(shape_err(format!(
            "a_s has length {}, expected {}",
            a_s.len(),
            2 * w_s.nrows()
        )));
    }
    let closed = closed_neighborhoods(g);
    Ok(semantic_forward_cached(x, &closed, w_s, a_s, slope).0)
}

pub(crate) fn semantic_forward_cached(
    x: &Array2<f64>,
    closed: &[Vec<usize>],
    w: &Array2<f64>,
    a: &Array1<f64>,
    slope: f64,
) -> (Array2<f64>, SemanticCache) {
    let n = x.nrows();
    let f = w.nrows();
    let v = x.dot(&w.t());
    let lv = v.mapv(|t| leaky_relu(t, slope));
    let (a1, a2) = a.view().split_at(Axis(0), f);
    // Score s_ij = a1 · lrelu(v_i) + a2 · lrelu(v_j) factorizes per node.
    let p1: Vec<f64> = (0..n).map(|i| a1.dot(&lv.row(i))).collect();
    let p2: Vec<f64> = (0..n).map(|j| a2.dot(&lv.row(j))).collect();
    let mut h = Array2::zeros((n, f));
    let mut alpha_all = Vec::with_capacity(n);
    for i in 0..n {
        let list = &closed[i];
        let mut alpha: Vec<f64> = list.iter().map(|&j| p1[i] + p2[j]).collect();
        softmax(&mut alpha);
        for (t, &j) in list.iter().enumerate() {
            h.row_mut(i).scaled_add(alpha[t], &v.row(j));
        }
        alpha_all.push(alpha);
    }
    (h, SemanticCache { v, alpha: alpha_all })
}

/// Attention rows of the semantic convolution, aligned with each node's
/// closed neighborhood in ascending id order. Each row sums to 1.
pub fn semantic_attention(
    x: &Array2<f64>,
    g: &KnowledgeGraph,
    w_s: &Array2<f64>,
    a_s: &Array1<f64>,
    slope: f64,
) -> Result<Vec<Vec<f64>>> {
    semantic_forward(x, g, w_s, a_s, slope)?;
    let closed = closed_neighborhoods(g);
    Ok(semantic_forward_cached(x, &closed, w_s, a_s, slope).1.alpha)
}

/// Gradients with respect to `w_s`, `a_s`, and the layer input.
pub(crate) fn semantic_backward(
    gh: &Array2<f64>,
    cache: &SemanticCache,
    x: &Array2<f64>,
    closed: &[Vec<usize>],
    w: &Array2<f64>,
    a: &Array1<f64>,
    slope: f64,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let n = x.nrows();
    let f = cache.v.ncols();
    let mut dv = Array2::zeros((n, f));
    let mut da = Array1::zeros(2 * f);
    let (a1, a2) = a.view().split_at(Axis(0), f);
    let lv = cache.v.mapv(|t| leaky_relu(t, slope));
    let lvg = cache.v.mapv(|t| leaky_relu_grad(t, slope));
    for i in 0..n {
        let gi = gh.row(i);
        let list = &closed[i];
        let alpha = &cache.alpha[i];
        let mut dalpha = Vec::with_capacity(list.len());
        for (t, &j) in list.iter().enumerate() {
            dalpha.push(gi.dot(&cache.v.row(j)));
            dv.row_mut(j).scaled_add(alpha[t], &gi);
        }
        let inner: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        for (t, &j) in list.iter().enumerate() {
            let ds = alpha[t] * (dalpha[t] - inner);
            da.slice_mut(s![..f]).scaled_add(ds, &lv.row(i));
            da.slice_mut(s![f..]).scaled_add(ds, &lv.row(j));
            for c in 0..f {
                dv[[i, c]] += ds * a1[c] * lvg[[i, c]];
                dv[[j, c]] += ds * a2[c] * lvg[[j, c]];
            }
        }
    }
    let dw = dv.t().dot(x);
    let dx = dv.dot(w);
    (dw, da, dx)
}
