use anyhow::{Context, Result};
use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::Serialize;
use tot_core::datasets::{split, Dataset, Sample, SplitName};
use tot_core::engine::{Engine, EngineError, RunTrace};
use tot_core::llm::Usage;

use crate::config::RunConfig;
use crate::output::{write_atomic, write_json};
use crate::Status;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.txt";
pub const TRACE_FILE: &str = "trace.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Tree,
    SinglePrompt,
}

impl Strategy {
    fn command(self) -> &'static str {
        match self {
            Strategy::Tree => "generate",
            Strategy::SinglePrompt => "baseline",
        }
    }
}

#[derive(Debug, Serialize)]
struct SampleStatus {
    id: String,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Default, Serialize)]
struct Totals {
    samples: usize,
    failed: usize,
    calls: usize,
    usage: Usage,
    /// Milli-USD over the successful samples; absent without pricing.
    cost: Option<Decimal>,
}

/// Everything needed to repeat the run: `tot <command> --config manifest.json`.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'static str,
    config: &'a RunConfig,
    samples: Vec<SampleStatus>,
    totals: Totals,
}

/// The samples of the configured split, in dataset order for `all`.
pub fn select_samples(cfg: &RunConfig, dataset: Dataset) -> Result<Vec<Sample>> {
    if cfg.split_name == SplitName::All {
        return Ok(dataset.samples);
    }
    Ok(split(dataset.samples, &cfg.split)?.take(cfg.split_name))
}

fn run_sample(engine: &Engine<'_>, strategy: Strategy, sample: &Sample) -> Result<RunTrace, EngineError> {
    tracing::info!(sample = %sample.id, "generating");
    let trace = match strategy {
        Strategy::Tree => engine.run(&sample.tables)?,
        Strategy::SinglePrompt => engine.run_single_prompt(&sample.tables)?,
    };
    Ok(trace)
}

fn save_sample(cfg: &RunConfig, id: &str, trace: &RunTrace) -> Result<()> {
    let dir = cfg.out.join(id);
    write_atomic(&dir.join(REPORT_FILE), trace.report().as_bytes())?;
    write_json(&dir.join(TRACE_FILE), trace)
}

/// Runs `strategy` over the selected samples and writes reports, traces
/// and the manifest under the output directory.
pub fn generate(cfg: &RunConfig, strategy: Strategy) -> Result<Status> {
    let dataset = Dataset::load(&cfg.dataset)
        .with_context(|| format!("cannot load dataset {}", cfg.dataset.display()))?;
    let templates = cfg.templates(&dataset.profile.sport)?;
    cfg.check_extraction_backend(&templates)?;
    let backend = cfg.backend()?;
    let mut engine = Engine::new(cfg.engine.clone(), &*backend, &templates)?
        .with_table_description(dataset.profile.table_description());
    if let Some(p) = &cfg.pricing {
        engine = engine.with_pricing(p.clone())?;
    }
    let samples = select_samples(cfg, dataset)?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create {}", cfg.out.display()))?;

    let results: Vec<(Result<RunTrace, EngineError>, Result<()>)> = engine.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let run = run_sample(&engine, strategy, s);
                let saved = match &run {
                    Ok(trace) => save_sample(cfg, &s.id, trace),
                    Err(_) => Ok(()),
                };
                (run, saved)
            })
            .collect()
    });

    let mut status = Status::Success;
    let mut totals = Totals {
        samples: samples.len(),
        cost: cfg.pricing.as_ref().map(|_| Decimal::ZERO),
        ..Totals::default()
    };
    let mut statuses = Vec::new();
    for (sample, (run, saved)) in samples.iter().zip(results) {
        let error = match (run, saved) {
            (Ok(trace), Ok(())) => {
                totals.calls += trace.totals.calls;
                totals.usage += trace.totals.usage;
                totals.cost = totals.cost.zip(trace.totals.cost).map(|(a, b)| a + b);
                None
            }
            (Ok(_), Err(e)) => {
                status = status.max(Status::Partial);
                Some(format!("{e:#}"))
            }
            (Err(e), _) => {
                status = status.max(if e.is_exhaustion() {
                    Status::Exhausted
                } else {
                    Status::Partial
                });
                Some(e.to_string())
            }
        };
        if let Some(e) = &error {
            tracing::error!(sample = %sample.id, "{e}");
            totals.failed += 1;
        }
        statuses.push(SampleStatus {
            id: sample.id.clone(),
            ok: error.is_none(),
            error,
        });
    }
    totals.cost = totals.cost.map(|c| c.normalize());
    let manifest = Manifest {
        command: strategy.command(),
        config: cfg,
        samples: statuses,
        totals,
    };
    write_json(&cfg.out.join(MANIFEST_FILE), &manifest)?;
    tracing::info!(
        samples = manifest.totals.samples,
        failed = manifest.totals.failed,
        calls = manifest.totals.calls,
        "done"
    );
    Ok(status)
}
