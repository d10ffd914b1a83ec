//! Graph exporters: canonical JSON (round-trippable) and DOT for quick
//! visual inspection of the final graph.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::filter::cosine;
use crate::graph::{KnowledgeGraph, Stage};

/// Write the canonical graph JSON (one trailing newline).
pub fn write_json(g: &KnowledgeGraph, path: &Path) -> Result<()> {
    let mut text = g.to_canonical_json();
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read and validate a graph JSON file.
pub fn read_json(path: &Path) -> Result<KnowledgeGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    KnowledgeGraph::from_json_str(&text)
}

fn escape_label(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Render an undirected DOT `graph` with surface labels. When final
/// features are attached, each edge is labelled with its cosine
/// similarity to three decimals. Node and edge order is stable.
pub fn dot_string(g: &KnowledgeGraph) -> String {
    let final_features = g.features(Stage::Final).map(|fm| fm.as_array());
    let mut out = String::from("graph kg {\n");
    for node in g.nodes() {
        out.push_str(&format!(
            "  n{} [label=\"{}\"];\n",
            node.id,
            escape_label(&node.surface)
        ));
    }
    for e in g.edges() {
        match final_features {
            Some(h) => {
                let sim = cosine(h.row(e.src), h.row(e.dst));
                out.push_str(&format!(
                    "  n{} -- n{} [label=\"{:.3}\"];\n",
                    e.src, e.dst, sim
                ));
            }
            None => out.push_str(&format!("  n{} -- n{};\n", e.src, e.dst)),
        }
    }
    out.push_str("}\n");
    out
}

pub fn write_dot(g: &KnowledgeGraph, path: &Path) -> Result<()> {
    fs::write(path, dot_string(g)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeProvenance, Entity, FeatureMatrix};
    use ndarray::array;

    fn two_node_graph() -> KnowledgeGraph {
        let nodes = vec![
            Entity {
                id: 0,
                surface: "স্বাধীনতা".to_string(),
                entity_type: "CONCEPT".to_string(),
                tags: vec![],
            },
            Entity {
                id: 1,
                surface: "যুদ্ধ".to_string(),
                entity_type: "EVENT".to_string(),
                tags: vec![],
            },
        ];
        let edges = vec![Edge::new(0, 1, 1.0, EdgeProvenance::SentenceCooccur)];
        KnowledgeGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn dot_contains_undirected_edge_statement() {
        let g = two_node_graph();
        let dot = dot_string(&g);
        assert!(dot.contains("n0 -- n1"));
        assert!(dot.starts_with("graph kg {"));
    }

    #[test]
    fn dot_empty_graph_is_valid_block() {
        let g = KnowledgeGraph::new(vec![], vec![]).unwrap();
        assert_eq!(dot_string(&g), "graph kg {\n}\n");
    }

    #[test]
    fn dot_preserves_bengali_labels_and_similarity() {
        let g = two_node_graph()
            .with_features(
                Stage::Final,
                FeatureMatrix::new(array![[1.0, 0.0], [1.0, 0.0]]).unwrap(),
            )
            .unwrap();
        let dot = dot_string(&g);
        assert!(dot.contains("label=\"স্বাধীনতা\""));
        assert!(dot.contains("label=\"1.000\""));
    }

    #[test]
    fn json_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        let g = two_node_graph();
        write_json(&g, &path).unwrap();
        let back = read_json(&path).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_json(Path::new("/nonexistent/graph.json")),
            Err(Error::Io { .. })
        ));
    }
}
