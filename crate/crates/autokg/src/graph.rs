//! Graph data model: nodes, undirected edges, adjacency, degree and
//! Laplacian construction shared by all downstream stages.
//!
//! Graphs are immutable after construction; edge pruning produces a new
//! graph value. Dense matrices are fine at this scale (tens of entities
//! per text) — the edge list stays the source of truth and adjacency is
//! built on demand.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// A graph node: one extracted entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Index in `[0, N)`; unique and contiguous within one graph.
    pub id: usize,
    /// The token/phrase as it appeared in the text (UTF-8, NFC expected).
    pub surface: String,
    /// Type tag, e.g. "PERSON", "DATE", "UNKNOWN".
    pub entity_type: String,
    pub tags: Vec<String>,
}

/// Which rule produced an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeProvenance {
    SentenceCooccur,
    TypeMatch,
    LlmSuggested,
    Synthetic,
}

/// Undirected edge, stored once with `src < dst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub provenance: EdgeProvenance,
}

impl Edge {
    /// Build an edge with endpoints normalized to `src < dst`.
    pub fn new(a: usize, b: usize, weight: f64, provenance: EdgeProvenance) -> Self {
        let (src, dst) = if a <= b { (a, b) } else { (b, a) };
        Edge {
            src,
            dst,
            weight,
            provenance,
        }
    }

    pub fn key(&self) -> (usize, usize) {
        (self.src, self.dst)
    }
}

/// Stage tag for node feature matrices attached to a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// Initial features straight from the embedding provider.
    Raw,
    /// After feature denoising (or the ablation projection).
    Denoised,
    /// After the semantic filtering stack.
    Final,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Denoised => "denoised",
            Stage::Final => "final",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "raw" => Some(Stage::Raw),
            "denoised" => Some(Stage::Denoised),
            "final" => Some(Stage::Final),
            _ => None,
        }
    }
}

/// Dense N×d node feature matrix. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph(format!(
                "feature matrix contains non-finite value {bad}"
            )));
        }
        Ok(FeatureMatrix(data))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.0.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn from_nested(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::ShapeMismatch(format!(
                "feature row {i} has {} columns, expected {d}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        FeatureMatrix::new(arr)
    }
}

/// The knowledge graph: entities, undirected edges, and per-stage features.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    nodes: Vec<Entity>,
    edges: Vec<Edge>,
    features: BTreeMap<Stage, FeatureMatrix>,
}

impl KnowledgeGraph {
    /// Validate and build a graph. Edges are normalized to `src < dst` and
    /// stored sorted by `(src, dst)`; duplicates and self-loops are rejected.
    pub fn new(nodes: Vec<Entity>, edges: Vec<Edge>) -> Result<Self> {
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidGraph(format!(
                    "node at position {i} has id {}; ids must be contiguous from 0",
                    node.id
                )));
            }
            let normalized: String = node.surface.nfc().collect();
            if normalized.trim().is_empty() {
                return Err(Error::InvalidGraph(format!(
                    "node {i} has an empty surface after NFC normalization"
                )));
            }
        }
        let n = nodes.len();
        let mut seen = BTreeSet::new();
        let mut normalized: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            let e = Edge::new(e.src, e.dst, e.weight, e.provenance);
            if e.src == e.dst {
                return Err(Error::InvalidGraph(format!("self-loop on node {}", e.src)));
            }
            if e.dst >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside [0, {n})",
                    e.src, e.dst
                )));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has invalid weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            if !seen.insert(e.key()) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    e.src, e.dst
                )));
            }
            normalized.push(e);
        }
        normalized.sort_by_key(Edge::key);
        Ok(KnowledgeGraph {
            nodes,
            edges: normalized,
            features: BTreeMap::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Entity] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self, stage: Stage) -> Option<&FeatureMatrix> {
        self.features.get(&stage)
    }

    pub fn feature_stages(&self) -> impl Iterator<Item = (Stage, &FeatureMatrix)> {
        self.features.iter().map(|(s, f)| (*s, f))
    }

    /// Attach a feature matrix under a stage tag. Row count must equal N.
    pub fn with_features(mut self, stage: Stage, features: FeatureMatrix) -> Result<Self> {
        if features.rows() != self.nodes.len() {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix has {} rows for a graph with {} nodes",
                features.rows(),
                self.nodes.len()
            )));
        }
        self.features.insert(stage, features);
        Ok(self)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.edges.binary_search_by_key(&key, Edge::key).is_ok()
    }

    pub fn find_node(&self, surface: &str) -> Option<usize> {
        let wanted: String = surface.nfc().collect();
        self.nodes
            .iter()
            .position(|n| n.surface.nfc().collect::<String>() == wanted)
    }

    /// Symmetric N×N weight matrix; zero where no edge is stored.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.nodes.len();
        let mut a = Array2::zeros((n, n));
        for e in &self.edges {
            a[[e.src, e.dst]] = e.weight;
            a[[e.dst, e.src]] = e.weight;
        }
        a
    }

    /// Sorted neighbor lists (self excluded).
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            nbrs[e.src].push(e.dst);
            nbrs[e.dst].push(e.src);
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }

    /// Weighted degree of a node (sum of incident edge weights).
    pub fn degree(&self, id: usize) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.src == id || e.dst == id)
            .map(|e| e.weight)
            .sum()
    }

    /// Symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}`.
    ///
    /// Isolated nodes get a zero diagonal entry so spectral filtering leaves
    /// their features fixed instead of injecting a self-interaction.
    pub fn normalized_laplacian(&self) -> Array2<f64> {
        let n = self.nodes.len();
        let a = self.adjacency();
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        let inv_sqrt: Vec<f64> = deg
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            if deg[i] > 0.0 {
                l[[i, i]] = 1.0;
            }
            for j in 0..n {
                if i != j && a[[i, j]] != 0.0 {
                    l[[i, j]] = -a[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
                }
            }
        }
        l
    }

    /// Node ids reachable from `start`, including `start`, in ascending order.
    pub fn connected_component(&self, start: usize) -> Vec<usize> {
        let nbrs = self.neighbor_lists();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &nbrs[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }

    /// Canonical JSON serialization (compact, keys sorted, shortest
    /// round-trip floats). Byte-stable for identical graphs.
    pub fn to_canonical_json(&self) -> String {
        let doc = GraphJson {
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson {
                    dst: e.dst,
                    provenance: e.provenance,
                    src: e.src,
                    weight: e.weight,
                })
                .collect(),
            features: self
                .features
                .iter()
                .map(|(stage, fm)| (stage.as_str().to_string(), fm.to_nested()))
                .collect(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id,
                    surface: n.surface.clone(),
                    tags: n.tags.clone(),
                    entity_type: n.entity_type.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("graph serialization cannot fail")
    }

    /// Parse and validate the canonical JSON schema.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: GraphJson = serde_json::from_str(text)
            .map_err(|e| Error::schema("$", e.to_string()))?;
        let nodes: Vec<Entity> = doc
            .nodes
            .iter()
            .map(|n| Entity {
                id: n.id,
                surface: n.surface.clone(),
                entity_type: n.entity_type.clone(),
                tags: n.tags.clone(),
            })
            .collect();
        let edges: Vec<Edge> = doc
            .edges
            .iter()
            .map(|e| Edge {
                src: e.src,
                dst: e.dst,
                weight: e.weight,
                provenance: e.provenance,
            })
            .collect();
        let mut graph = KnowledgeGraph::new(nodes, edges)
            .map_err(|e| Error::schema("$", e.to_string()))?;
        for (key, rows) in &doc.features {
            let stage = Stage::parse(key).ok_or_else(|| {
                Error::schema(format!("features.{key}"), "unknown stage tag")
            })?;
            let fm = FeatureMatrix::from_nested(rows)
                .map_err(|e| Error::schema(format!("features.{key}"), e.to_string()))?;
            graph = graph
                .with_features(stage, fm)
                .map_err(|e| Error::schema(format!("features.{key}"), e.to_string()))?;
        }
        Ok(graph)
    }
}

// Field declaration order is alphabetical by serialized name, so plain
// serde_json output carries sorted keys.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    edges: Vec<EdgeJson>,
    features: BTreeMap<String, Vec<Vec<f64>>>,
    nodes: Vec<NodeJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeJson {
    dst: usize,
    provenance: EdgeProvenance,
    src: usize,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeJson {
    id: usize,
    surface: String,
    tags: Vec<String>,
    #[serde(rename = "type")]
    entity_type: String,
}

/// Scaled Laplacian `(2/lambda_max) * L - I`. With `lambda_max` at or above
/// the true spectral maximum, all eigenvalues land in `[-1, 1]`.
pub fn scaled_laplacian(l: &Array2<f64>, lambda_max: f64) -> Result<Array2<f64>> {
    if !(lambda_max > 0.0) {
        return Err(Error::NonPositiveLambda(lambda_max));
    }
    let n = l.nrows();
    let mut out = l * (2.0 / lambda_max);
    for i in 0..n {
        out[[i, i]] -= 1.0;
    }
    Ok(out)
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric
/// matrix, clamped to `[1e-6, 2.0]`. Deterministic for a fixed seed.
pub fn estimate_lambda_max(l: &Array2<f64>, iters: usize, seed: u64) -> f64 {
    assert!(iters >= 1, "power iteration needs at least one step");
    assert_eq!(l.nrows(), l.ncols(), "matrix must be square");
    let n = l.nrows();
    if n == 0 {
        return 1e-6;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Array1<f64> = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v /= norm;
    } else {
        v[0] = 1.0;
    }
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = l.dot(&v);
        lambda = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn < 1e-300 {
            lambda = 0.0;
            break;
        }
        v = w / wn;
    }
    lambda.clamp(1e-6, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: usize, surface: &str) -> Entity {
        Entity {
            id,
            surface: surface.to_string(),
            entity_type: "UNKNOWN".to_string(),
            tags: vec![],
        }
    }

    fn simple_edge(a: usize, b: usize) -> Edge {
        Edge::new(a, b, 1.0, EdgeProvenance::SentenceCooccur)
    }

    pub(crate) fn path_graph(n: usize) -> KnowledgeGraph {
        let nodes = (0..n).map(|i| node(i, &format!("n{i}"))).collect();
        let edges = (1..n).map(|i| simple_edge(i - 1, i)).collect();
        KnowledgeGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn adjacency_single_edge() {
        let g = path_graph(2);
        let a = g.adjacency();
        assert_eq!(a, ndarray::array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn adjacency_empty_graph_is_zero() {
        let g = KnowledgeGraph::new((0..3).map(|i| node(i, "x")).collect(), vec![]).unwrap();
        let a = g.adjacency();
        assert_eq!(a, Array2::<f64>::zeros((3, 3)));
    }

    #[test]
    fn adjacency_path_graph() {
        let g = path_graph(3);
        let a = g.adjacency();
        let expect = ndarray::array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        assert_eq!(a, expect);
    }

    #[test]
    fn zero_node_graph_adjacency() {
        let g = KnowledgeGraph::new(vec![], vec![]).unwrap();
        assert_eq!(g.adjacency().dim(), (0, 0));
    }

    #[test]
    fn laplacian_k2() {
        let g = path_graph(2);
        let l = g.normalized_laplacian();
        let expect = ndarray::array![[1.0, -1.0], [-1.0, 1.0]];
        assert!(l.abs_diff_eq(&expect, 1e-12));
    }

    #[test]
    fn laplacian_isolated_node_diagonal_is_zero() {
        let g = KnowledgeGraph::new(vec![node(0, "a")], vec![]).unwrap();
        let l = g.normalized_laplacian();
        assert_eq!(l[[0, 0]], 0.0);
    }

    #[test]
    fn laplacian_path3() {
        let g = path_graph(3);
        let l = g.normalized_laplacian();
        let s = 1.0 / 2.0_f64.sqrt();
        let expect = ndarray::array![[1.0, -s, 0.0], [-s, 1.0, -s], [0.0, -s, 1.0]];
        assert!(l.abs_diff_eq(&expect, 1e-12));
    }

    #[test]
    fn scaled_laplacian_k2() {
        let g = path_graph(2);
        let lhat = scaled_laplacian(&g.normalized_laplacian(), 2.0).unwrap();
        let expect = ndarray::array![[0.0, -1.0], [-1.0, 0.0]];
        assert!(lhat.abs_diff_eq(&expect, 1e-12));
    }

    #[test]
    fn scaled_laplacian_identity_cancels() {
        let lhat = scaled_laplacian(&Array2::eye(3), 2.0).unwrap();
        assert!(lhat.abs_diff_eq(&Array2::zeros((3, 3)), 1e-12));
    }

    #[test]
    fn scaled_laplacian_zero_matrix() {
        let lhat = scaled_laplacian(&Array2::zeros((2, 2)), 2.0).unwrap();
        let mut expect = Array2::zeros((2, 2));
        expect[[0, 0]] = -1.0;
        expect[[1, 1]] = -1.0;
        assert!(lhat.abs_diff_eq(&expect, 1e-12));
    }

    #[test]
    fn scaled_laplacian_rejects_bad_lambda() {
        assert!(matches!(
            scaled_laplacian(&Array2::eye(2), 0.0),
            Err(Error::NonPositiveLambda(_))
        ));
        assert!(matches!(
            scaled_laplacian(&Array2::eye(2), -1.0),
            Err(Error::NonPositiveLambda(_))
        ));
    }

    #[test]
    fn lambda_max_k2_converges_to_two() {
        let g = path_graph(2);
        let est = estimate_lambda_max(&g.normalized_laplacian(), 100, 7);
        assert!((est - 2.0).abs() < 1e-6, "estimate {est}");
    }

    #[test]
    fn lambda_max_identity_is_one() {
        let est = estimate_lambda_max(&Array2::eye(3), 100, 1);
        assert!((est - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_max_zero_matrix_clamps_to_floor() {
        let est = estimate_lambda_max(&Array2::zeros((3, 3)), 10, 1);
        assert_eq!(est, 1e-6);
    }

    #[test]
    fn lambda_max_is_deterministic() {
        let g = path_graph(5);
        let l = g.normalized_laplacian();
        assert_eq!(
            estimate_lambda_max(&l, 50, 3).to_bits(),
            estimate_lambda_max(&l, 50, 3).to_bits()
        );
    }

    #[test]
    fn construction_rejects_self_loops_and_duplicates() {
        let nodes = vec![node(0, "a"), node(1, "b")];
        assert!(KnowledgeGraph::new(nodes.clone(), vec![simple_edge(0, 0)]).is_err());
        assert!(
            KnowledgeGraph::new(nodes.clone(), vec![simple_edge(0, 1), simple_edge(1, 0)])
                .is_err()
        );
        assert!(KnowledgeGraph::new(nodes, vec![simple_edge(0, 5)]).is_err());
    }

    #[test]
    fn construction_rejects_bad_ids_and_surfaces() {
        let bad_id = vec![node(1, "a")];
        assert!(KnowledgeGraph::new(bad_id, vec![]).is_err());
        let empty_surface = vec![node(0, "  ")];
        assert!(KnowledgeGraph::new(empty_surface, vec![]).is_err());
    }

    #[test]
    fn feature_rows_must_match_node_count() {
        let g = path_graph(2);
        let fm = FeatureMatrix::new(Array2::zeros((3, 4))).unwrap();
        assert!(g.with_features(Stage::Raw, fm).is_err());
    }

    #[test]
    fn feature_matrix_rejects_non_finite() {
        let mut m = Array2::zeros((1, 2));
        m[[0, 1]] = f64::NAN;
        assert!(FeatureMatrix::new(m).is_err());
    }

    #[test]
    fn json_round_trip_preserves_everything() {
        let mut g = path_graph(3);
        let feats = FeatureMatrix::new(Array2::from_shape_fn((3, 2), |(i, j)| {
            0.1 * i as f64 - 1.5 * j as f64 + 0.123456789012345
        }))
        .unwrap();
        g = g.with_features(Stage::Final, feats).unwrap();
        let json = g.to_canonical_json();
        let back = KnowledgeGraph::from_json_str(&json).unwrap();
        assert_eq!(g, back);
        assert_eq!(json, back.to_canonical_json());
    }

    #[test]
    fn json_rejects_truncated_input() {
        let g = path_graph(2);
        let json = g.to_canonical_json();
        let err = KnowledgeGraph::from_json_str(&json[..json.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }));
    }

    #[test]
    fn json_keys_are_sorted() {
        let g = path_graph(2);
        let json = g.to_canonical_json();
        let e = json.find("\"edges\"").unwrap();
        let f = json.find("\"features\"").unwrap();
        let n = json.find("\"nodes\"").unwrap();
        assert!(e < f && f < n);
    }

    #[test]
    fn component_and_degree() {
        let nodes = (0..4).map(|i| node(i, &format!("n{i}"))).collect();
        let g = KnowledgeGraph::new(nodes, vec![simple_edge(0, 1), simple_edge(2, 3)]).unwrap();
        assert_eq!(g.connected_component(0), vec![0, 1]);
        assert_eq!(g.connected_component(3), vec![2, 3]);
        assert_eq!(g.degree(0), 1.0);
    }
}
