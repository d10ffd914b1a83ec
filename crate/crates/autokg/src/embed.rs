//! Initial node features: translation-dictionary lookup plus a pluggable
//! embedding provider. The default provider hashes character n-grams with
//! a seed-keyed FNV-1a — a deterministic stand-in for pre-trained BERT
//! vectors, which can be imported from file instead.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::Serialize;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::graph::{Entity, FeatureMatrix, KnowledgeGraph};
use crate::hash::fnv1a64;

/// One dictionary headword with its translations and synonyms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryEntry {
    pub headword: String,
    pub translations: Vec<String>,
    pub synonyms: Vec<String>,
}

/// Bangla-to-English translation dictionary, NFC-keyed.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    entries: HashMap<String, DictionaryEntry>,
}

impl Dictionary {
    /// Parse TSV content: `headword<TAB>trans1;trans2<TAB>syn1;syn2`.
    /// The synonym column may be absent. Duplicate headwords merge their
    /// lists in order, skipping repeats.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: HashMap<String, DictionaryEntry> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::MalformedLine(line_no));
            }
            let headword: String = fields[0].trim().nfc().collect();
            if headword.is_empty() {
                return Err(Error::MalformedLine(line_no));
            }
            let translations = split_list(fields[1]);
            let synonyms = fields.get(2).map(|f| split_list(f)).unwrap_or_default();
            let entry = entries
                .entry(headword.clone())
                .or_insert_with(|| DictionaryEntry {
                    headword,
                    translations: Vec::new(),
                    synonyms: Vec::new(),
                });
            merge_unique(&mut entry.translations, translations);
            merge_unique(&mut entry.synonyms, synonyms);
        }
        Ok(Dictionary { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Exact-match lookup after NFC normalization.
    pub fn lookup(&self, word: &str) -> Option<&DictionaryEntry> {
        let key: String = word.nfc().collect();
        self.entries.get(&key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn split_list(field: &str) -> Vec<String> {
    field
        .split(';')
        .map(|s| s.trim().nfc().collect::<String>())
        .filter(|s| !s.is_empty())
        .collect()
}

fn merge_unique(target: &mut Vec<String>, extra: Vec<String>) {
    for item in extra {
        if !target.contains(&item) {
            target.push(item);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProviderKind {
    HashNGram,
    FileBacked,
}

/// Configuration for the embedding provider.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingProviderConfig {
    pub kind: ProviderKind,
    /// Vector length; 728 by default.
    pub dim: usize,
    pub ngram_sizes: Vec<usize>,
    pub seed: u64,
    /// `token<TAB>comma-separated floats` per line, used by FileBacked.
    pub vector_file: Option<PathBuf>,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        EmbeddingProviderConfig {
            kind: ProviderKind::HashNGram,
            dim: 728,
            ngram_sizes: vec![2, 3],
            seed: 0,
            vector_file: None,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
        }
        if self.kind == ProviderKind::FileBacked && self.vector_file.is_none() {
            return Err(Error::InvalidConfig(
                "FileBacked embedding provider needs a vector_file".into(),
            ));
        }
        Ok(())
    }
}

/// Embed a token by hashing its character n-grams: each n-gram adds ±1 at
/// `hash % dim` (sign from the hash's top bit), then the vector is
/// L2-normalized. All-zero accumulation stays the zero vector.
pub fn hash_embed(token: &str, dim: usize, ngram_sizes: &[usize], seed: u64) -> Array1<f64> {
    assert!(dim >= 1, "embedding dim must be >= 1");
    let normalized: String = token.nfc().collect();
    let chars: Vec<char> = normalized.chars().collect();
    let mut v: Array1<f64> = Array1::zeros(dim);
    for &n in ngram_sizes {
        if n == 0 || chars.len() < n {
            continue;
        }
        for window in chars.windows(n) {
            let gram: String = window.iter().collect();
            let h = fnv1a64(gram.as_bytes(), seed);
            let idx = (h % dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[idx] += sign;
        }
    }
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

/// Token-to-vector provider: hashing n-grams or file-backed vectors (with
/// hashing fallback for tokens missing from the file).
#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    dim: usize,
    ngram_sizes: Vec<usize>,
    seed: u64,
    vectors: Option<HashMap<String, Array1<f64>>>,
}

impl EmbeddingProvider {
    pub fn new(cfg: &EmbeddingProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let vectors = match cfg.kind {
            ProviderKind::HashNGram => None,
            ProviderKind::FileBacked => {
                let path = cfg.vector_file.as_ref().expect("checked by validate");
                Some(load_vector_file(path, cfg.dim)?)
            }
        };
        Ok(EmbeddingProvider {
            dim: cfg.dim,
            ngram_sizes: cfg.ngram_sizes.clone(),
            seed: cfg.seed,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, token: &str) -> Array1<f64> {
        if let Some(vectors) = &self.vectors {
            let key: String = token.nfc().collect();
            if let Some(v) = vectors.get(&key) {
                return v.clone();
            }
        }
        hash_embed(token, self.dim, &self.ngram_sizes, self.seed)
    }
}

fn load_vector_file(path: &Path, dim: usize) -> Result<HashMap<String, Array1<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (token, rest) = line.split_once('\t').ok_or(Error::MalformedLine(line_no))?;
        let values: Vec<f64> = rest
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::MalformedLine(line_no))?;
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                token: token.to_string(),
                got: values.len(),
                expected: dim,
            });
        }
        map.insert(token.nfc().collect(), Array1::from_vec(values));
    }
    Ok(map)
}

/// Embed one entity: the mean of the surface embedding and the embeddings
/// of its dictionary translations and synonyms, re-normalized. Entities
/// without a dictionary entry use the surface embedding alone.
pub fn embed_entity(
    entity: &Entity,
    dict: &Dictionary,
    provider: &EmbeddingProvider,
) -> Array1<f64> {
    let mut acc = provider.embed(&entity.surface);
    let mut count = 1.0;
    if let Some(entry) = dict.lookup(&entity.surface) {
        for word in entry.translations.iter().chain(entry.synonyms.iter()) {
            acc += &provider.embed(word);
            count += 1.0;
        }
    }
    acc /= count;
    let norm = acc.dot(&acc).sqrt();
    if norm > 0.0 {
        acc /= norm;
    }
    acc
}

/// Build the initial feature matrix: row i embeds node i.
pub fn build_feature_matrix(
    g: &KnowledgeGraph,
    dict: &Dictionary,
    provider: &EmbeddingProvider,
) -> Result<FeatureMatrix> {
    if g.node_count() == 0 {
        return Err(Error::InvalidGraph(
            "cannot build features for an empty graph".into(),
        ));
    }
    let mut data = Array2::zeros((g.node_count(), provider.dim()));
    for (i, node) in g.nodes().iter().enumerate() {
        let row = embed_entity(node, dict, provider);
        data.row_mut(i).assign(&row);
    }
    FeatureMatrix::new(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_parses_minimal_line() {
        let d = Dictionary::parse("জল\twater\t").unwrap();
        let e = d.lookup("জল").unwrap();
        assert_eq!(e.translations, vec!["water"]);
        assert!(e.synonyms.is_empty());
    }

    #[test]
    fn dictionary_merges_duplicates_in_order() {
        let d = Dictionary::parse("জল\twater\t\nজল\taqua;water\tপানি").unwrap();
        let e = d.lookup("জল").unwrap();
        assert_eq!(e.translations, vec!["water", "aqua"]);
        assert_eq!(e.synonyms, vec!["পানি"]);
    }

    #[test]
    fn dictionary_rejects_single_field_line() {
        assert!(matches!(
            Dictionary::parse("জল water"),
            Err(Error::MalformedLine(1))
        ));
    }

    #[test]
    fn dictionary_two_field_line_is_fine() {
        let d = Dictionary::parse("নদী\triver").unwrap();
        assert_eq!(d.lookup("নদী").unwrap().translations, vec!["river"]);
    }

    #[test]
    fn hash_embed_is_deterministic() {
        let a = hash_embed("স্বাধীনতা", 64, &[2, 3], 9);
        let b = hash_embed("স্বাধীনতা", 64, &[2, 3], 9);
        assert_eq!(a, b);
    }

    #[test]
    fn hash_embed_unit_norm() {
        let v = hash_embed("independence", 128, &[2, 3], 0);
        assert!((v.dot(&v).sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hash_embed_empty_token_is_zero() {
        let v = hash_embed("", 16, &[2, 3], 0);
        assert_eq!(v, Array1::<f64>::zeros(16));
    }

    #[test]
    fn hash_embed_seed_changes_vector() {
        let a = hash_embed("নদী", 64, &[2], 0);
        let b = hash_embed("নদী", 64, &[2], 1);
        assert_ne!(a, b);
    }

    fn provider(dim: usize) -> EmbeddingProvider {
        EmbeddingProvider::new(&EmbeddingProviderConfig {
            dim,
            ..EmbeddingProviderConfig::default()
        })
        .unwrap()
    }

    fn entity(surface: &str) -> Entity {
        Entity {
            id: 0,
            surface: surface.to_string(),
            entity_type: "UNKNOWN".to_string(),
            tags: vec![],
        }
    }

    #[test]
    fn embed_entity_without_dict_is_surface_embedding() {
        let p = provider(64);
        let e = entity("পাহাড়");
        let got = embed_entity(&e, &Dictionary::default(), &p);
        assert_eq!(got, p.embed("পাহাড়"));
    }

    #[test]
    fn embed_entity_self_referential_dict_keeps_direction() {
        let p = provider(64);
        let d = Dictionary::parse("নদী\t\tনদী").unwrap();
        let e = entity("নদী");
        let with = embed_entity(&e, &d, &p);
        let without = p.embed("নদী");
        let cos = with.dot(&without);
        assert!((cos - 1.0).abs() < 1e-9, "cos {cos}");
    }

    #[test]
    fn embed_entity_mean_matches_recomputation() {
        // Independent oracle: average the three vectors by hand.
        let p = provider(32);
        let d = Dictionary::parse("নদী\triver;stream\t").unwrap();
        let e = entity("নদী");
        let got = embed_entity(&e, &d, &p);
        let mut manual = p.embed("নদী") + p.embed("river") + p.embed("stream");
        manual /= 3.0;
        let norm = manual.dot(&manual).sqrt();
        manual /= norm;
        let diff = (&got - &manual).mapv(f64::abs).sum();
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn dictionary_influence_changes_embedding() {
        let p = provider(64);
        let d = Dictionary::parse("নদী\tqqqq\t").unwrap();
        let e = entity("নদী");
        let with = embed_entity(&e, &d, &p);
        let without = embed_entity(&e, &Dictionary::default(), &p);
        let cos = with.dot(&without);
        assert!(cos < 1.0 - 1e-6, "cos {cos}");
    }

    fn graph_of(surfaces: &[&str]) -> KnowledgeGraph {
        let nodes = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| Entity {
                id: i,
                surface: s.to_string(),
                entity_type: "UNKNOWN".to_string(),
                tags: vec![],
            })
            .collect();
        KnowledgeGraph::new(nodes, vec![]).unwrap()
    }

    #[test]
    fn feature_matrix_shape_and_row_norms() {
        let g = graph_of(&["নদী", "সাগর", "পাহাড়"]);
        let p = provider(32);
        let fm = build_feature_matrix(&g, &Dictionary::default(), &p).unwrap();
        assert_eq!((fm.rows(), fm.cols()), (3, 32));
        for row in fm.as_array().rows() {
            let norm = row.dot(&row).sqrt();
            assert!(norm.abs() < 1e-12 || (norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn feature_matrix_is_node_order_equivariant_and_reproducible() {
        let p = provider(16);
        let d = Dictionary::default();
        let a = build_feature_matrix(&graph_of(&["নদী", "সাগর"]), &d, &p).unwrap();
        let b = build_feature_matrix(&graph_of(&["সাগর", "নদী"]), &d, &p).unwrap();
        assert_eq!(a.as_array().row(0), b.as_array().row(1));
        assert_eq!(a.as_array().row(1), b.as_array().row(0));
        let again = build_feature_matrix(&graph_of(&["নদী", "সাগর"]), &d, &p).unwrap();
        let bits = |m: &FeatureMatrix| {
            m.as_array().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&again));
    }

    #[test]
    fn empty_graph_has_no_features() {
        let g = KnowledgeGraph::new(vec![], vec![]).unwrap();
        let p = provider(8);
        assert!(build_feature_matrix(&g, &Dictionary::default(), &p).is_err());
    }

    #[test]
    fn file_backed_provider_passthrough_and_dim_check() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "নদী\t1.0,0.0,0.0").unwrap();
        let cfg = EmbeddingProviderConfig {
            kind: ProviderKind::FileBacked,
            dim: 3,
            vector_file: Some(f.path().to_path_buf()),
            ..EmbeddingProviderConfig::default()
        };
        let p = EmbeddingProvider::new(&cfg).unwrap();
        assert_eq!(p.embed("নদী"), ndarray::array![1.0, 0.0, 0.0]);
        // Unknown token falls back to hashing, still dim 3.
        assert_eq!(p.embed("সাগর").len(), 3);

        let cfg_bad = EmbeddingProviderConfig {
            dim: 4,
            ..cfg
        };
        assert!(matches!(
            EmbeddingProvider::new(&cfg_bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
