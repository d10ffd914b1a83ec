//! Flat key-value config files with INI-like sections, for the pipeline
//! and the bench harness. Unknown sections or keys are errors so typos
//! surface immediately.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bench::BenchSpec;
use crate::embed::ProviderKind;
use crate::error::{Error, Result};
use crate::filter::PruneMode;
use crate::pipeline::{ExtractorMode, PipelineConfig};

struct KvDoc {
    values: BTreeMap<(String, String), (String, usize)>,
}

impl KvDoc {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw);
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    Error::InvalidConfig(format!("line {line_no}: malformed section header"))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {line_no}: expected `key = value`"))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::InvalidConfig(format!("line {line_no}: empty key")));
            }
            if values
                .insert((section.clone(), key.clone()), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(Error::InvalidConfig(format!(
                    "line {line_no}: duplicate key [{section}] {key}"
                )));
            }
        }
        Ok(KvDoc { values })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.values
            .remove(&(section.to_string(), key.to_string()))
            .map(|(v, _)| v)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("[{section}] {key}: cannot parse {v:?}"))
            }),
        }
    }

    fn take_bool(&mut self, section: &str, key: &str) -> Result<Option<bool>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(Some(true)),
                "false" | "no" | "off" | "0" => Ok(Some(false)),
                _ => Err(Error::InvalidConfig(format!(
                    "[{section}] {key}: expected a boolean, got {v:?}"
                ))),
            },
        }
    }

    fn take_list<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|_| {
                        Error::InvalidConfig(format!("[{section}] {key}: cannot parse {s:?}"))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn take_string_list(&mut self, section: &str, key: &str) -> Option<Vec<String>> {
        self.take(section, key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
    }

    fn finish(self) -> Result<()> {
        if let Some(((section, key), (_, line_no))) = self.values.into_iter().next() {
            return Err(Error::InvalidConfig(format!(
                "line {line_no}: unknown key [{section}] {key}"
            )));
        }
        Ok(())
    }
}

// A comment starts with `#` or `;` at the start of a line or after
// whitespace, so URLs with fragments survive.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if (b == b'#' || b == b';') && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

fn apply_extract_section(doc: &mut KvDoc, cfg: &mut PipelineConfig) -> Result<()> {
    if let Some(mode) = doc.take("extract", "mode") {
        cfg.extract.mode = match mode.as_str() {
            "rule" => ExtractorMode::Rule,
            "fixture" => ExtractorMode::Fixture,
            "llm" => ExtractorMode::Llm,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "[extract] mode: expected rule|fixture|llm, got {other:?}"
                )))
            }
        };
    }
    if let Some(p) = doc.take("extract", "stopwords") {
        cfg.extract.rule.stopword_path = Some(PathBuf::from(p));
    }
    if let Some(p) = doc.take("extract", "fixture") {
        cfg.extract.fixture_path = Some(PathBuf::from(p));
    }
    if let Some(v) = doc.take_parsed::<usize>("extract", "max_entity_chars")? {
        cfg.extract.rule.max_entity_chars = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("extract", "min_token_chars")? {
        cfg.extract.rule.min_token_chars = v;
    }
    if let Some(v) = doc.take_string_list("extract", "excluded_pos") {
        cfg.extract.rule.excluded_pos_tags = v;
    }
    if let Some(v) = doc.take("extract", "endpoint") {
        cfg.extract.llm.endpoint = v;
    }
    if let Some(v) = doc.take("extract", "model") {
        cfg.extract.llm.model = v;
    }
    if let Some(v) = doc.take_parsed::<f64>("extract", "timeout_s")? {
        cfg.extract.llm.timeout_s = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("extract", "retries")? {
        cfg.extract.llm.retries = v;
    }
    if let Some(v) = doc.take_bool("extract", "cooccur")? {
        cfg.extract.edge_rules.cooccur = v;
    }
    if let Some(v) = doc.take_bool("extract", "type_match")? {
        cfg.extract.edge_rules.type_match = v;
    }
    if let Some(v) = doc.take_bool("extract", "llm_relations")? {
        cfg.extract.edge_rules.llm = v;
    }
    Ok(())
}

fn apply_embedding_section(doc: &mut KvDoc, cfg: &mut PipelineConfig) -> Result<()> {
    if let Some(kind) = doc.take("embedding", "kind") {
        cfg.embedding.kind = match kind.as_str() {
            "hash" => ProviderKind::HashNGram,
            "file" => ProviderKind::FileBacked,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "[embedding] kind: expected hash|file, got {other:?}"
                )))
            }
        };
    }
    if let Some(v) = doc.take_parsed::<usize>("embedding", "dim")? {
        cfg.embedding.dim = v;
    }
    if let Some(v) = doc.take_list::<usize>("embedding", "ngram_sizes")? {
        cfg.embedding.ngram_sizes = v;
    }
    if let Some(v) = doc.take_parsed::<u64>("embedding", "seed")? {
        cfg.embedding.seed = v;
    }
    if let Some(p) = doc.take("embedding", "vector_file") {
        cfg.embedding.vector_file = Some(PathBuf::from(p));
    }
    Ok(())
}

fn apply_train_section(doc: &mut KvDoc, train: &mut crate::gnn::TrainConfig) -> Result<Option<u64>> {
    if let Some(v) = doc.take_parsed::<usize>("train", "epochs")? {
        train.epochs = v;
    }
    if let Some(v) = doc.take_parsed::<f64>("train", "step_size")? {
        train.step_size = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("train", "neg_samples_per_edge")? {
        train.neg_samples_per_edge = v;
    }
    if let Some(v) = doc.take_parsed::<f64>("train", "leaky_relu_slope")? {
        train.leaky_relu_slope = v;
    }
    doc.take_parsed::<u64>("train", "seed")
}

fn apply_prune_section(doc: &mut KvDoc, prune: &mut crate::filter::PruneConfig) -> Result<()> {
    if let Some(mode) = doc.take("prune", "mode") {
        prune.mode = match mode.as_str() {
            "retain" => PruneMode::RetainFraction,
            "absolute" => PruneMode::AbsoluteThreshold,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "[prune] mode: expected retain|absolute, got {other:?}"
                )))
            }
        };
    }
    if let Some(v) = doc.take_parsed::<f64>("prune", "retain_fraction")? {
        prune.retain_fraction = v;
    }
    if let Some(v) = doc.take_parsed::<f64>("prune", "gamma")? {
        prune.gamma = v;
    }
    Ok(())
}

/// Parse a pipeline config file. Every key is optional; defaults are the
/// reference configuration. The training seed derives from `global_seed`
/// unless `[train] seed` is given explicitly.
pub fn parse_pipeline_config(text: &str) -> Result<PipelineConfig> {
    let mut doc = KvDoc::parse(text)?;
    let mut cfg = PipelineConfig::default();
    if let Some(v) = doc.take_parsed::<u64>("pipeline", "global_seed")? {
        cfg = cfg.with_global_seed(v);
    }
    if let Some(v) = doc.take_parsed::<usize>("pipeline", "f")? {
        cfg.f = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("pipeline", "k")? {
        cfg.k = v;
    }
    if let Some(p) = doc.take("pipeline", "dictionary") {
        cfg.dictionary_path = Some(PathBuf::from(p));
    }
    apply_extract_section(&mut doc, &mut cfg)?;
    apply_embedding_section(&mut doc, &mut cfg)?;
    if let Some(seed) = apply_train_section(&mut doc, &mut cfg.train)? {
        cfg.train.seed = seed;
    }
    apply_prune_section(&mut doc, &mut cfg.prune)?;
    if let Some(v) = doc.take_bool("ablation", "enable_sf")? {
        cfg.ablation.enable_sf = v;
    }
    if let Some(v) = doc.take_bool("ablation", "enable_fdn")? {
        cfg.ablation.enable_fdn = v;
    }
    doc.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_pipeline_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pipeline_config(&text)
}

/// Parse a bench spec file: `[bench] seeds`, a `[synthetic]` corpus
/// description, and the usual `[pipeline]`, `[train]`, `[prune]` knobs.
pub fn parse_bench_spec(text: &str) -> Result<BenchSpec> {
    let mut doc = KvDoc::parse(text)?;
    let mut spec = BenchSpec::default();
    if let Some(v) = doc.take_list::<u64>("bench", "seeds")? {
        if v.is_empty() {
            return Err(Error::InvalidConfig("[bench] seeds: empty list".into()));
        }
        spec.seeds = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("synthetic", "clusters")? {
        spec.synthetic.clusters = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("synthetic", "nodes_per_cluster")? {
        spec.synthetic.nodes_per_cluster = v;
    }
    if let Some(v) = doc.take_parsed::<f64>("synthetic", "intra_edge_prob")? {
        spec.synthetic.intra_edge_prob = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("synthetic", "noise_edges")? {
        spec.synthetic.noise_edges = v;
    }
    if let Some(v) = doc.take_parsed::<f64>("synthetic", "feature_noise_sigma")? {
        spec.synthetic.feature_noise_sigma = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("synthetic", "feature_dim")? {
        spec.synthetic.feature_dim = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("pipeline", "f")? {
        spec.f = v;
    }
    if let Some(v) = doc.take_parsed::<usize>("pipeline", "k")? {
        spec.k = v;
    }
    if apply_train_section(&mut doc, &mut spec.train)?.is_some() {
        return Err(Error::InvalidConfig(
            "[train] seed is unused by bench; per-run seeds come from [bench] seeds".into(),
        ));
    }
    apply_prune_section(&mut doc, &mut spec.prune)?;
    doc.finish()?;
    spec.synthetic.validate()?;
    spec.train.validate()?;
    spec.prune.validate()?;
    Ok(spec)
}

pub fn load_bench_spec(path: &Path) -> Result<BenchSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bench_spec(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::derive_seed;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = parse_pipeline_config("").unwrap();
        assert_eq!(cfg.embedding.dim, 728);
        assert_eq!(cfg.f, 128);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.prune.retain_fraction, 0.9);
    }

    #[test]
    fn sections_and_comments_parse() {
        let text = "\
# comment
[pipeline]
global_seed = 7   # trailing comment
f = 16
k = 2

[extract]
mode = rule
min_token_chars = 3

[ablation]
enable_sf = false
";
        let cfg = parse_pipeline_config(text).unwrap();
        assert_eq!(cfg.global_seed, 7);
        assert_eq!(cfg.f, 16);
        assert_eq!(cfg.extract.rule.min_token_chars, 3);
        assert!(!cfg.ablation.enable_sf);
        // Train seed derives from the global seed.
        assert_eq!(cfg.train.seed, derive_seed(7, "train"));
    }

    #[test]
    fn explicit_train_seed_wins() {
        let cfg = parse_pipeline_config("[pipeline]\nglobal_seed = 7\n[train]\nseed = 99\n").unwrap();
        assert_eq!(cfg.train.seed, 99);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_pipeline_config("[pipeline]\nglobal_sed = 7\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("global_sed"), "{msg}");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(parse_pipeline_config("[pipeline\n").is_err());
        assert!(parse_pipeline_config("just words\n").is_err());
        assert!(parse_pipeline_config("[pipeline]\nf = twelve\n").is_err());
    }

    #[test]
    fn bench_spec_parses() {
        let text = "\
[bench]
seeds = 0, 1, 2
[synthetic]
clusters = 4
nodes_per_cluster = 6
intra_edge_prob = 0.8
noise_edges = 5
feature_noise_sigma = 0.2
feature_dim = 32
[train]
epochs = 10
[pipeline]
f = 8
k = 2
";
        let spec = parse_bench_spec(text).unwrap();
        assert_eq!(spec.seeds, vec![0, 1, 2]);
        assert_eq!(spec.synthetic.clusters, 4);
        assert_eq!(spec.train.epochs, 10);
        assert_eq!(spec.f, 8);
    }

    #[test]
    fn url_fragments_survive_comment_stripping() {
        let cfg =
            parse_pipeline_config("[extract]\nendpoint = http://host/a#frag\n").unwrap();
        assert_eq!(cfg.extract.llm.endpoint, "http://host/a#frag");
    }
}
