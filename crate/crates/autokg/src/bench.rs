//! Ablation bench: run the SF×FDN variant grid over seeded synthetic
//! corpora and report A-SFAS plus planted-noise removal quality per
//! variant as CSV rows.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::PruneConfig;
use crate::gnn::TrainConfig;
use crate::hash::derive_seed;
use crate::pipeline::{AblationConfig, PipelineConfig, run_on_graph};
use crate::synthetic::{generate_synthetic, noise_removal_report, SyntheticSpec};

/// The SF×FDN grid, in emission order.
pub const VARIANTS: [(&str, bool, bool); 4] = [
    ("sf_on_fdn_on", true, true),
    ("sf_on_fdn_off", true, false),
    ("sf_off_fdn_on", false, true),
    ("sf_off_fdn_off", false, false),
];

#[derive(Debug, Clone, Serialize)]
pub struct BenchSpec {
    /// Corpus shape; the per-run seed overrides `synthetic.seed`.
    pub synthetic: SyntheticSpec,
    pub seeds: Vec<u64>,
    pub f: usize,
    pub k: usize,
    pub train: TrainConfig,
    pub prune: PruneConfig,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            synthetic: SyntheticSpec::default(),
            seeds: vec![0],
            f: 128,
            k: 3,
            train: TrainConfig::default(),
            prune: PruneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub variant: String,
    pub asfas_before: f64,
    pub asfas_after: f64,
    pub edges_removed: usize,
    pub noise_precision: f64,
    pub noise_recall: f64,
    pub seed: u64,
}

/// Run all four ablation variants for every seed, in deterministic order.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(spec.seeds.len() * VARIANTS.len());
    for &seed in &spec.seeds {
        let corpus_spec = SyntheticSpec {
            seed,
            ..spec.synthetic.clone()
        };
        let corpus = generate_synthetic(&corpus_spec)?;
        if corpus.graph.edge_count() == 0 {
            return Err(Error::EmptyEdgeSet);
        }
        for (name, sf, fdn) in VARIANTS {
            let cfg = PipelineConfig {
                f: spec.f,
                k: spec.k,
                prune: spec.prune.clone(),
                train: TrainConfig {
                    seed: derive_seed(seed, "train"),
                    ..spec.train.clone()
                },
                ablation: AblationConfig {
                    enable_sf: sf,
                    enable_fdn: fdn,
                },
                global_seed: seed,
                ..PipelineConfig::default()
            };
            let run = run_on_graph(corpus.graph.clone(), &cfg)?;
            let (precision, recall, removed) = match &run.prune_report {
                Some(r) => {
                    let nr = noise_removal_report(r, &corpus.noise_edges);
                    (nr.precision, nr.recall, r.removed.len())
                }
                None => (0.0, 0.0, 0),
            };
            rows.push(BenchRow {
                variant: name.to_string(),
                asfas_before: run.report.asfas_before.unwrap_or(f64::NAN),
                asfas_after: run.report.asfas_after.unwrap_or(f64::NAN),
                edges_removed: removed,
                noise_precision: precision,
                noise_recall: recall,
                seed,
            });
        }
    }
    Ok(rows)
}

/// Render rows as CSV (header + one line per row), byte-deterministic.
pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "variant,asfas_before,asfas_after,edges_removed,noise_precision,noise_recall,seed\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.variant,
            r.asfas_before,
            r.asfas_after,
            r.edges_removed,
            r.noise_precision,
            r.noise_recall,
            r.seed
        )
        .expect("string write cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> BenchSpec {
        BenchSpec {
            synthetic: SyntheticSpec {
                clusters: 2,
                nodes_per_cluster: 4,
                intra_edge_prob: 1.0,
                noise_edges: 2,
                feature_noise_sigma: 0.2,
                feature_dim: 16,
                seed: 0,
            },
            seeds: vec![3],
            f: 4,
            k: 2,
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            prune: PruneConfig::default(),
        }
    }

    #[test]
    fn bench_emits_one_row_per_variant() {
        let rows = run_bench(&tiny_spec()).unwrap();
        assert_eq!(rows.len(), 4);
        let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
        assert_eq!(
            names,
            vec!["sf_on_fdn_on", "sf_on_fdn_off", "sf_off_fdn_on", "sf_off_fdn_off"]
        );
        for r in &rows {
            assert!(r.asfas_before.is_finite());
            assert!(r.asfas_after.is_finite());
        }
    }

    #[test]
    fn bench_csv_is_deterministic() {
        let spec = tiny_spec();
        let a = rows_to_csv(&run_bench(&spec).unwrap());
        let b = rows_to_csv(&run_bench(&spec).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("variant,asfas_before"));
        assert_eq!(a.lines().count(), 5);
    }

    #[test]
    fn sf_off_variants_remove_nothing() {
        let rows = run_bench(&tiny_spec()).unwrap();
        for r in rows.iter().filter(|r| r.variant.starts_with("sf_off")) {
            assert_eq!(r.edges_removed, 0);
            assert_eq!(r.asfas_before, r.asfas_after);
        }
    }
}
