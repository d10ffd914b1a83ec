//! Full pipeline wiring: extract → base edges → initial features →
//! feature denoising → semantic filtering → pruning, with ablation
//! switches that skip the denoise or filter stages.

use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embed::{build_feature_matrix, Dictionary, EmbeddingProvider, EmbeddingProviderConfig};
use crate::error::{Error, Result};
use crate::extract::{
    build_base_edges, extract_from_fixture, extract_rule_based, refine_extraction, EdgeRules,
    ExtractionResult, ExtractorConfig,
};
use crate::filter::{asfas, prune, PruneConfig, PruneReport};
use crate::gnn::{
    cheb_forward, chebyshev_operator, fdn_forward, semantic_forward, topo_forward, train_stage1,
    train_stage2, LayerParams, TrainConfig,
};
use crate::graph::{Entity, FeatureMatrix, KnowledgeGraph, Stage};
use crate::hash::derive_seed;
use crate::llm::{LlmClient, ENDPOINT_ENV_VAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtractorMode {
    Rule,
    Fixture,
    Llm,
}

#[derive(Debug, Clone, Serialize)]
pub struct LlmSettings {
    pub endpoint: String,
    pub model: String,
    pub timeout_s: f64,
    pub retries: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            endpoint: String::new(),
            model: "gpt-3.5-turbo".to_string(),
            timeout_s: 30.0,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractStageConfig {
    pub mode: ExtractorMode,
    pub rule: ExtractorConfig,
    pub fixture_path: Option<PathBuf>,
    pub llm: LlmSettings,
    pub edge_rules: EdgeRules,
}

impl Default for ExtractStageConfig {
    fn default() -> Self {
        ExtractStageConfig {
            mode: ExtractorMode::Rule,
            rule: ExtractorConfig::default(),
            fixture_path: None,
            llm: LlmSettings::default(),
            edge_rules: EdgeRules::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AblationConfig {
    pub enable_sf: bool,
    pub enable_fdn: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            enable_sf: true,
            enable_fdn: true,
        }
    }
}

/// Every pipeline hyperparameter, with defaults matching the reference
/// configuration (728-dim embeddings, F = 128, K = 3, 90% retention,
/// 200-epoch unsupervised training).
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub extract: ExtractStageConfig,
    pub embedding: EmbeddingProviderConfig,
    pub dictionary_path: Option<PathBuf>,
    /// Node feature length after denoising.
    pub f: usize,
    /// Chebyshev filter size.
    pub k: usize,
    pub prune: PruneConfig,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
    pub global_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut cfg = PipelineConfig {
            extract: ExtractStageConfig::default(),
            embedding: EmbeddingProviderConfig::default(),
            dictionary_path: None,
            f: 128,
            k: 3,
            prune: PruneConfig::default(),
            train: TrainConfig::default(),
            ablation: AblationConfig::default(),
            global_seed: 0,
        };
        cfg.train.seed = derive_seed(cfg.global_seed, "train");
        cfg
    }
}

impl PipelineConfig {
    /// Set the global seed and re-derive the training seed from it.
    pub fn with_global_seed(mut self, seed: u64) -> Self {
        self.global_seed = seed;
        self.train.seed = derive_seed(seed, "train");
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.f == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("F and K must be >= 1".into()));
        }
        self.embedding.validate()?;
        self.prune.validate()?;
        self.train.validate()?;
        self.extract.rule.validate()?;
        Ok(())
    }
}

/// Counts, scores, timings, loss traces, and the config echo for one run.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_edges_final: usize,
    /// A-SFAS of the final features over the pre-prune edge set.
    pub asfas_before: Option<f64>,
    /// A-SFAS of the final features over the post-prune edge set.
    pub asfas_after: Option<f64>,
    pub stage_timings_ms: Vec<(String, f64)>,
    pub stage1_loss: Vec<f64>,
    pub stage2_loss: Vec<f64>,
    pub config: serde_json::Value,
}

/// A finished pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub graph: KnowledgeGraph,
    pub report: PipelineReport,
    pub prune_report: Option<PruneReport>,
}

/// Fixed seeded projection used when feature denoising is disabled, so the
/// spectral stack still sees F-dimensional features and the ablation
/// isolates denoising rather than dimensionality.
fn seeded_projection(d_in: usize, f: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d_in as f64).sqrt();
    Array2::from_shape_fn((d_in, f), |_| {
        rng.sample::<f64, _>(rand_distr::StandardNormal) * scale
    })
}

/// Run extraction according to the configured mode.
pub fn run_extraction(text: &str, cfg: &PipelineConfig) -> Result<ExtractionResult> {
    match cfg.extract.mode {
        ExtractorMode::Rule => extract_rule_based(text, &cfg.extract.rule),
        ExtractorMode::Fixture => {
            let path = cfg.extract.fixture_path.as_ref().ok_or_else(|| {
                Error::InvalidConfig("fixture mode needs extract.fixture path".into())
            })?;
            let raw = extract_from_fixture(path)?;
            refine_extraction(raw, &cfg.extract.rule)
        }
        ExtractorMode::Llm => {
            let endpoint = std::env::var(ENDPOINT_ENV_VAR)
                .ok()
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| cfg.extract.llm.endpoint.clone());
            if endpoint.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "llm mode needs an endpoint (config or {ENDPOINT_ENV_VAR})"
                )));
            }
            let client = LlmClient {
                endpoint,
                model: cfg.extract.llm.model.clone(),
                timeout_s: cfg.extract.llm.timeout_s,
                retries: cfg.extract.llm.retries,
                backoff_base_s: 1.0,
            };
            let raw = client.extract(text)?;
            refine_extraction(raw, &cfg.extract.rule)
        }
    }
}

/// Build the base graph (nodes + initial edges) from an extraction.
pub fn base_graph(extraction: &ExtractionResult, rules: &EdgeRules) -> Result<KnowledgeGraph> {
    let nodes: Vec<Entity> = extraction
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| Entity {
            id: i,
            surface: e.surface.clone(),
            entity_type: e.entity_type.clone(),
            tags: e.tags.clone(),
        })
        .collect();
    let edges = build_base_edges(&extraction.entities, &extraction.relations, rules);
    KnowledgeGraph::new(nodes, edges)
}

/// Run the trainable stages on a graph that already carries raw features.
pub fn run_on_graph(g: KnowledgeGraph, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let xo = g
        .features(Stage::Raw)
        .ok_or_else(|| Error::InvalidGraph("graph carries no raw features".into()))?
        .as_array()
        .clone();
    let n = g.node_count();
    let m = g.edge_count();
    let mut timings: Vec<(String, f64)> = Vec::new();
    let mut stage1_loss = Vec::new();
    let mut stage2_loss = Vec::new();
    let slope = cfg.train.leaky_relu_slope;

    let trainable = m >= 1;
    if !trainable {
        log::warn!("graph has no edges; denoising and filtering are skipped");
    }
    let mut params = LayerParams::init(xo.ncols(), cfg.f, cfg.k, cfg.train.seed);

    // Denoise (or project) down to F dims.
    let xd = if cfg.ablation.enable_fdn && trainable {
        let t = Instant::now();
        stage1_loss = train_stage1(&g, &xo, &mut params, &cfg.train)
            .map_err(|e| e.in_stage("denoise-train"))?;
        timings.push(("denoise_train".into(), ms(t)));
        let t = Instant::now();
        let xd = fdn_forward(&xo, &g, &params, slope).map_err(|e| e.in_stage("denoise"))?;
        timings.push(("denoise_forward".into(), ms(t)));
        xd
    } else {
        let t = Instant::now();
        let proj = seeded_projection(xo.ncols(), cfg.f, derive_seed(cfg.global_seed, "projection"));
        let xd = xo.dot(&proj);
        timings.push(("projection".into(), ms(t)));
        xd
    };

    // Semantic filtering stack plus pruning.
    let (final_graph, h, prune_report) = if cfg.ablation.enable_sf && trainable {
        let t = Instant::now();
        stage2_loss = train_stage2(&g, &xd, &mut params, &cfg.train)
            .map_err(|e| e.in_stage("filter-train"))?;
        timings.push(("filter_train".into(), ms(t)));
        let t = Instant::now();
        let lhat = chebyshev_operator(&g, derive_seed(cfg.train.seed, "lambda"))
            .map_err(|e| e.in_stage("filter"))?;
        let xt = topo_forward(&xd, &g, &params.w_tr).map_err(|e| e.in_stage("filter"))?;
        let xl = cheb_forward(&xd, &lhat, &params.w_nr).map_err(|e| e.in_stage("filter"))?;
        let x = ndarray::concatenate![ndarray::Axis(1), xt, xl];
        let h = semantic_forward(&x, &g, &params.w_s, &params.a_s, slope)
            .map_err(|e| e.in_stage("filter"))?;
        timings.push(("filter_forward".into(), ms(t)));
        let t = Instant::now();
        let staged = g
            .clone()
            .with_features(Stage::Denoised, FeatureMatrix::new(xd.clone())?)?;
        let (pruned, report) = prune(&staged, &h, &cfg.prune).map_err(|e| e.in_stage("prune"))?;
        timings.push(("prune".into(), ms(t)));
        (pruned, h, Some(report))
    } else {
        let h = xd.clone();
        let staged = g
            .clone()
            .with_features(Stage::Denoised, FeatureMatrix::new(xd.clone())?)?
            .with_features(Stage::Final, FeatureMatrix::new(h.clone())?)?;
        (staged, h, None)
    };

    let asfas_before = if m >= 1 { Some(asfas(&g, &h)?) } else { None };
    let asfas_after = if final_graph.edge_count() >= 1 {
        Some(asfas(&final_graph, &h)?)
    } else {
        None
    };

    let report = PipelineReport {
        n_nodes: n,
        n_edges: m,
        n_edges_final: final_graph.edge_count(),
        asfas_before,
        asfas_after,
        stage_timings_ms: timings,
        stage1_loss,
        stage2_loss,
        config: serde_json::to_value(cfg).expect("config serialization cannot fail"),
    };
    Ok(PipelineRun {
        graph: final_graph,
        report,
        prune_report,
    })
}

/// End-to-end run from raw text.
pub fn run_pipeline(text: &str, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let t = Instant::now();
    let extraction = run_extraction(text, cfg).map_err(|e| e.in_stage("extract"))?;
    let extract_ms = ms(t);
    let g = base_graph(&extraction, &cfg.extract.edge_rules)
        .map_err(|e| e.in_stage("extract"))?;

    let t = Instant::now();
    let dict = match &cfg.dictionary_path {
        Some(p) => Dictionary::load(p).map_err(|e| e.in_stage("embed"))?,
        None => Dictionary::default(),
    };
    let provider = EmbeddingProvider::new(&cfg.embedding).map_err(|e| e.in_stage("embed"))?;
    let xo = build_feature_matrix(&g, &dict, &provider).map_err(|e| e.in_stage("embed"))?;
    let embed_ms = ms(t);

    let g = g.with_features(Stage::Raw, xo)?;
    let mut run = run_on_graph(g, cfg)?;
    let mut timings = vec![("extract".into(), extract_ms), ("embed".into(), embed_ms)];
    timings.append(&mut run.report.stage_timings_ms);
    run.report.stage_timings_ms = timings;
    Ok(run)
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
