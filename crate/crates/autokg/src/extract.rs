//! Turn raw text into entity candidates, refined entities, and the initial
//! edge set — via an offline rule-based extractor, a recorded-fixture
//! replayer, or the external LLM client in [`crate::llm`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeProvenance};

/// One extracted entity candidate with the sentences it appeared in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedEntity {
    pub surface: String,
    #[serde(rename = "type", default = "unknown_type")]
    pub entity_type: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub sentence_indices: Vec<usize>,
}

fn unknown_type() -> String {
    "UNKNOWN".to_string()
}

/// A relation suggestion between two entity surfaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestedRelation {
    pub head_surface: String,
    pub tail_surface: String,
    #[serde(default)]
    pub label: String,
}

/// Entity candidates plus suggested relation pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExtractionResult {
    #[serde(default)]
    pub entities: Vec<ExtractedEntity>,
    #[serde(default)]
    pub relations: Vec<SuggestedRelation>,
}

impl ExtractionResult {
    /// Check the schema invariants; error paths point at the offending field.
    pub fn validate(&self) -> Result<()> {
        let surfaces: BTreeSet<String> = self
            .entities
            .iter()
            .map(|e| e.surface.nfc().collect())
            .collect();
        for (i, e) in self.entities.iter().enumerate() {
            if e.surface.nfc().collect::<String>().trim().is_empty() {
                return Err(Error::schema(
                    format!("entities[{i}].surface"),
                    "empty surface",
                ));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            for (field, surface) in [("head_surface", &r.head_surface), ("tail_surface", &r.tail_surface)] {
                if !surfaces.contains(&surface.nfc().collect::<String>()) {
                    return Err(Error::schema(
                        format!("relations[{i}].{field}"),
                        format!("names unknown entity {surface:?}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON (deterministic byte-for-byte for equal results).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("extraction serialization cannot fail")
    }
}

/// Knobs for the rule-based extractor and the post-hoc refinement of
/// fixture/LLM results.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractorConfig {
    /// Entities longer than this (in chars) are dropped as "very long".
    pub max_entity_chars: usize,
    pub min_token_chars: usize,
    /// One stopword per line, UTF-8, `#` comments. `None` = no stopwords.
    pub stopword_path: Option<PathBuf>,
    /// Entities carrying any of these tags are dropped during refinement.
    pub excluded_pos_tags: Vec<String>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            max_entity_chars: 32,
            min_token_chars: 2,
            stopword_path: None,
            excluded_pos_tags: Vec::new(),
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_token_chars < 1 || self.max_entity_chars <= self.min_token_chars {
            return Err(Error::InvalidConfig(format!(
                "need max_entity_chars > min_token_chars >= 1, got {} and {}",
                self.max_entity_chars, self.min_token_chars
            )));
        }
        Ok(())
    }
}

/// Split text into sentences on the Bengali danda, `.`, `?`, `!`, and
/// blank lines. Segments are trimmed; empty ones dropped.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for para in split_paragraphs(text) {
        for piece in para.split(['।', '.', '?', '!']) {
            let t = piece.trim();
            if !t.is_empty() {
                out.push(t.to_string());
            }
        }
    }
    out
}

fn split_paragraphs(text: &str) -> Vec<String> {
    let mut paras = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.trim().is_empty() {
                paras.push(std::mem::take(&mut cur));
            }
            cur.clear();
        } else {
            if !cur.is_empty() {
                cur.push(' ');
            }
            cur.push_str(line);
        }
    }
    if !cur.trim().is_empty() {
        paras.push(cur);
    }
    paras
}

// Punctuation stripped from token edges. Bengali combining marks are NOT
// in this set: a vowel sign at the end of a word must survive trimming.
fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '।' | '॥' | '…' | '–' | '—' | '‘' | '’' | '“' | '”' | '«' | '»' | '·' | '•' | '॰'
        )
}

/// Load a stopword file: one token per line, `#` comments, NFC-normalized.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::StopwordFileMissing {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut set = BTreeSet::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        set.insert(line.nfc().collect());
    }
    Ok(set)
}

/// Offline stand-in for LLM extraction: whitespace/punctuation
/// tokenization, NFC normalization, stopword and length filtering,
/// duplicate merging. All entities come out typed `"UNKNOWN"` with no
/// relation suggestions.
pub fn extract_rule_based(text: &str, cfg: &ExtractorConfig) -> Result<ExtractionResult> {
    cfg.validate()?;
    let stopwords = match &cfg.stopword_path {
        Some(p) => load_stopwords(p)?,
        None => BTreeSet::new(),
    };
    let sentences = segment_sentences(text);
    let mut order: Vec<String> = Vec::new();
    let mut occurrences: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (si, sentence) in sentences.iter().enumerate() {
        for raw in sentence.split_whitespace() {
            let trimmed = raw.trim_matches(is_edge_punct);
            if trimmed.is_empty() {
                continue;
            }
            let token: String = trimmed.nfc().collect();
            let len = token.chars().count();
            if len < cfg.min_token_chars || len > cfg.max_entity_chars {
                continue;
            }
            if stopwords.contains(&token) {
                continue;
            }
            if !occurrences.contains_key(&token) {
                order.push(token.clone());
            }
            occurrences.entry(token).or_default().insert(si);
        }
    }
    let entities = order
        .into_iter()
        .map(|surface| {
            let sentence_indices = occurrences[&surface].iter().copied().collect();
            ExtractedEntity {
                surface,
                entity_type: "UNKNOWN".to_string(),
                tags: Vec::new(),
                sentence_indices,
            }
        })
        .collect();
    Ok(ExtractionResult {
        entities,
        relations: Vec::new(),
    })
}

/// Parse extraction JSON (the fixture/LLM response schema) and check its
/// invariants.
pub fn parse_extraction_json(text: &str) -> Result<ExtractionResult> {
    let result: ExtractionResult =
        serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
    result.validate()?;
    Ok(result)
}

/// Replay a recorded extraction from disk.
pub fn extract_from_fixture(path: &Path) -> Result<ExtractionResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_extraction_json(&text)
}

/// Refine a fixture/LLM extraction: drop entities whose tags intersect the
/// excluded set or whose surface violates the length bounds, then drop
/// relations that no longer resolve.
pub fn refine_extraction(result: ExtractionResult, cfg: &ExtractorConfig) -> Result<ExtractionResult> {
    cfg.validate()?;
    let excluded: BTreeSet<&str> = cfg.excluded_pos_tags.iter().map(String::as_str).collect();
    let entities: Vec<ExtractedEntity> = result
        .entities
        .into_iter()
        .filter(|e| {
            let len = e.surface.nfc().count();
            len >= cfg.min_token_chars
                && len <= cfg.max_entity_chars
                && !e.tags.iter().any(|t| excluded.contains(t.as_str()))
        })
        .collect();
    let surfaces: BTreeSet<String> = entities
        .iter()
        .map(|e| e.surface.nfc().collect())
        .collect();
    let relations = result
        .relations
        .into_iter()
        .filter(|r| {
            surfaces.contains(&r.head_surface.nfc().collect::<String>())
                && surfaces.contains(&r.tail_surface.nfc().collect::<String>())
        })
        .collect();
    Ok(ExtractionResult {
        entities,
        relations,
    })
}

/// Which edge-building rules are active.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgeRules {
    /// Connect entities sharing a sentence index.
    pub cooccur: bool,
    /// Connect entities with the same non-"UNKNOWN" type.
    pub type_match: bool,
    /// Connect entities linked by a suggested relation.
    pub llm: bool,
}

impl Default for EdgeRules {
    fn default() -> Self {
        EdgeRules {
            cooccur: true,
            type_match: true,
            llm: true,
        }
    }
}

/// Build the initial connection set. Each unordered pair gets at most one
/// edge; provenance records the first rule that fired, in the order
/// co-occurrence, type match, LLM suggestion.
pub fn build_base_edges(
    entities: &[ExtractedEntity],
    relations: &[SuggestedRelation],
    rules: &EdgeRules,
) -> Vec<Edge> {
    let sentence_sets: Vec<BTreeSet<usize>> = entities
        .iter()
        .map(|e| e.sentence_indices.iter().copied().collect())
        .collect();
    let surfaces: Vec<String> = entities
        .iter()
        .map(|e| e.surface.nfc().collect())
        .collect();
    let mut related: BTreeSet<(usize, usize)> = BTreeSet::new();
    if rules.llm {
        let index: BTreeMap<&str, usize> = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        for r in relations {
            let head: String = r.head_surface.nfc().collect();
            let tail: String = r.tail_surface.nfc().collect();
            if let (Some(&a), Some(&b)) = (index.get(head.as_str()), index.get(tail.as_str())) {
                if a != b {
                    related.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    let mut edges = Vec::new();
    for i in 0..entities.len() {
        for j in (i + 1)..entities.len() {
            let provenance = if rules.cooccur && !sentence_sets[i].is_disjoint(&sentence_sets[j]) {
                Some(EdgeProvenance::SentenceCooccur)
            } else if rules.type_match
                && entities[i].entity_type != "UNKNOWN"
                && entities[i].entity_type == entities[j].entity_type
            {
                Some(EdgeProvenance::TypeMatch)
            } else if rules.llm && related.contains(&(i, j)) {
                Some(EdgeProvenance::LlmSuggested)
            } else {
                None
            };
            if let Some(p) = provenance {
                edges.push(Edge::new(i, j, 1.0, p));
            }
        }
    }
    edges
}
