use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use tot_core::datasets::{Dataset, Sample};
use tot_core::engine::RunTrace;
use tot_core::eval::{
    aggregate, metrics_csv, metrics_table, score_sample, EvalError, Extraction, Extractor,
    LlmExtractor, SampleMetrics,
};

use crate::config::{ExtractionMode, RunConfig};
use crate::output::{write_atomic, write_json};
use crate::run::{select_samples, REPORT_FILE, TRACE_FILE};
use crate::Status;

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_TXT: &str = "metrics.txt";
pub const EXTRACTION_FILE: &str = "extraction.json";

#[derive(Serialize)]
struct Extractions<'a> {
    generated: &'a Extraction,
    gold: &'a Extraction,
}

enum Outcome {
    Missing,
    Failed(EvalError),
    Scored(SampleMetrics),
}

fn score(cfg: &RunConfig, extractor: &Extractor<'_>, sample: &Sample) -> Result<Outcome> {
    let dir = cfg.out.join(&sample.id);
    let report_path = dir.join(REPORT_FILE);
    if !report_path.is_file() {
        return Ok(Outcome::Missing);
    }
    let report = std::fs::read_to_string(&report_path)
        .with_context(|| format!("cannot read {}", report_path.display()))?;
    let (seconds, cost) = match std::fs::read_to_string(dir.join(TRACE_FILE)) {
        Ok(text) => {
            let trace: RunTrace = serde_json::from_str(&text)
                .with_context(|| format!("invalid trace in {}", dir.display()))?;
            (trace.totals.wall_seconds, trace.totals.cost)
        }
        Err(_) => (0.0, None),
    };
    let scored = match score_sample(&report, &sample.gold_report, &sample.tables, extractor, seconds, cost) {
        Ok(s) => s,
        Err(e) => return Ok(Outcome::Failed(e)),
    };
    write_json(
        &dir.join(EXTRACTION_FILE),
        &Extractions {
            generated: &scored.generated,
            gold: &scored.gold,
        },
    )?;
    Ok(Outcome::Scored(scored.metrics))
}

/// Scores the generated reports of the selected samples against their gold
/// reports and writes the metric tables.
pub fn evaluate(cfg: &RunConfig) -> Result<Status> {
    let dataset = Dataset::load(&cfg.dataset)
        .with_context(|| format!("cannot load dataset {}", cfg.dataset.display()))?;
    let templates = cfg.templates(&dataset.profile.sport)?;
    cfg.check_extraction_backend(&templates)?;
    let profile = dataset.profile.clone();
    let backend;
    let extractor = match cfg.extraction {
        ExtractionMode::Lexical => Extractor::Lexical,
        ExtractionMode::Llm => {
            backend = cfg.backend()?;
            Extractor::Llm(LlmExtractor {
                backend: &*backend,
                template: &templates.ie,
                table_description: profile.table_description(),
                example: profile.ie_example.clone().unwrap_or_default(),
                model: cfg.engine.model.clone(),
                max_tokens: cfg.engine.budgets.ie,
            })
        }
    };
    let samples = select_samples(cfg, dataset)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.engine.parallelism)
        .build()?;
    let outcomes: Vec<Result<Outcome>> =
        pool.install(|| samples.par_iter().map(|s| score(cfg, &extractor, s)).collect());

    let mut status = Status::Success;
    let mut missing = Vec::new();
    let mut scored: Vec<(String, SampleMetrics)> = Vec::new();
    for (sample, outcome) in samples.iter().zip(outcomes) {
        match outcome {
            Ok(Outcome::Scored(m)) => scored.push((sample.id.clone(), m)),
            Ok(Outcome::Missing) => missing.push(sample.id.as_str()),
            Ok(Outcome::Failed(e)) => {
                tracing::error!(sample = %sample.id, "{e}");
                let exhausted = matches!(&e, EvalError::Backend(b) if b.is_exhaustion());
                status = status.max(if exhausted {
                    Status::Exhausted
                } else {
                    Status::Partial
                });
            }
            Err(e) => {
                tracing::error!(sample = %sample.id, "{e:#}");
                status = status.max(Status::Partial);
            }
        }
    }
    if !missing.is_empty() {
        eprintln!("missing reports for: {}", missing.join(", "));
        status = status.max(Status::Partial);
    }
    if scored.is_empty() {
        eprintln!("no sample could be scored");
        return Ok(status.max(Status::Partial));
    }
    let corpus = aggregate(
        &scored.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>(),
    )?;
    write_atomic(&cfg.out.join(METRICS_CSV), metrics_csv(&scored, &corpus).as_bytes())?;
    let table = metrics_table(&scored, &corpus);
    write_atomic(&cfg.out.join(METRICS_TXT), table.as_bytes())?;
    print!("{table}");
    Ok(status)
}
