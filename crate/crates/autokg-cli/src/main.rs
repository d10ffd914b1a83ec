//! Command-line front end: build graphs from text, evaluate them, run the
//! synthetic ablation bench, or run extraction alone. Logs go to stderr;
//! results go to files or stdout. Exit codes: 0 success, 1 usage error,
//! 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use autokg::bench::{rows_to_csv, run_bench, BenchSpec};
use autokg::config::{load_bench_spec, load_pipeline_config};
use autokg::error::{Error, Result};
use autokg::export::{read_json, write_dot, write_json};
use autokg::extract::{extract_from_fixture, extract_rule_based, ExtractorConfig};
use autokg::filter::asfas;
use autokg::llm::{LlmClient, ENDPOINT_ENV_VAR};
use autokg::pipeline::{run_pipeline, PipelineConfig};
use autokg::Stage;

#[derive(Parser)]
#[command(
    name = "autokg",
    version,
    about = "Automatic knowledge-graph construction for Bangla text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a knowledge graph from a text file.
    Build {
        /// Input text file (UTF-8).
        #[arg(long)]
        input: PathBuf,
        /// Bangla-to-English dictionary TSV.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Pipeline config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output graph JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Also write a DOT rendering here.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Disable semantic filtering (no pruning).
        #[arg(long = "no-sf")]
        no_sf: bool,
        /// Disable feature denoising (seeded projection instead).
        #[arg(long = "no-fdn")]
        no_fdn: bool,
        /// Override the global seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a metric over a graph JSON file.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_parser = ["asfas"], default_value = "asfas")]
        metric: String,
    },
    /// Run the synthetic ablation sweep and write a CSV report.
    Bench {
        /// Bench spec file; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run extraction alone and print extraction JSON to stdout.
    Extract {
        /// Text file (rule/llm modes) or extraction JSON (fixture mode).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = ["rule", "fixture", "llm"])]
        mode: String,
        /// Stopword list for rule mode.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// LLM endpoint for llm mode (or AUTOKG_LLM_ENDPOINT).
        #[arg(long)]
        endpoint: Option<String>,
        /// Model name for llm mode.
        #[arg(long, default_value = "gpt-3.5-turbo")]
        model: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn read_text(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Build {
            input,
            dict,
            config,
            out,
            dot,
            no_sf,
            no_fdn,
            seed,
        } => {
            let mut cfg = match config {
                Some(path) => load_pipeline_config(&path)?,
                None => PipelineConfig::default(),
            };
            if let Some(path) = dict {
                cfg.dictionary_path = Some(path);
            }
            if let Some(seed) = seed {
                cfg = cfg.with_global_seed(seed);
            }
            if no_sf {
                cfg.ablation.enable_sf = false;
            }
            if no_fdn {
                cfg.ablation.enable_fdn = false;
            }
            let text = read_text(&input)?;
            let run = run_pipeline(&text, &cfg)?;
            write_json(&run.graph, &out)?;
            if let Some(dot_path) = dot {
                write_dot(&run.graph, &dot_path)?;
            }
            log::info!(
                "built graph: {} nodes, {} -> {} edges",
                run.report.n_nodes,
                run.report.n_edges,
                run.report.n_edges_final
            );
            println!(
                "{}",
                serde_json::to_string(&run.report).expect("report serialization cannot fail")
            );
            Ok(())
        }
        Command::Eval { graph, metric } => {
            let g = read_json(&graph)?;
            match metric.as_str() {
                "asfas" => {
                    let h = g
                        .features(Stage::Final)
                        .or_else(|| g.features(Stage::Denoised))
                        .or_else(|| g.features(Stage::Raw))
                        .ok_or_else(|| {
                            Error::InvalidGraph("graph carries no feature matrix".into())
                        })?;
                    let value = asfas(&g, h.as_array())?;
                    println!("{value}");
                }
                _ => unreachable!("clap validates metric values"),
            }
            Ok(())
        }
        Command::Bench { spec, out } => {
            let spec = match spec {
                Some(path) => load_bench_spec(&path)?,
                None => BenchSpec::default(),
            };
            let rows = run_bench(&spec)?;
            let csv = rows_to_csv(&rows);
            std::fs::write(&out, csv).map_err(|e| Error::io(out.clone(), e))?;
            log::info!("bench wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Extract {
            input,
            mode,
            stopwords,
            endpoint,
            model,
        } => {
            let result = match mode.as_str() {
                "rule" => {
                    let cfg = ExtractorConfig {
                        stopword_path: stopwords,
                        ..ExtractorConfig::default()
                    };
                    extract_rule_based(&read_text(&input)?, &cfg)?
                }
                "fixture" => extract_from_fixture(&input)?,
                "llm" => {
                    let endpoint = endpoint
                        .or_else(|| std::env::var(ENDPOINT_ENV_VAR).ok())
                        .filter(|s| !s.is_empty())
                        .ok_or_else(|| {
                            Error::InvalidConfig(format!(
                                "llm mode needs --endpoint or {ENDPOINT_ENV_VAR}"
                            ))
                        })?;
                    LlmClient::new(endpoint, model).extract(&read_text(&input)?)?
                }
                _ => unreachable!("clap validates mode values"),
            };
            println!("{}", result.to_json());
            Ok(())
        }
    }
}
