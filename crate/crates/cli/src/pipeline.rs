//! Config-driven execution of the stages in dependency order.

use crate::bench;
use crate::config::{EndpointSpec, MarkersSpec, PipelineConfig};
use crate::failure::InputContext;
use crate::stages::{self, NormalizeInput, StageReport};
use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use toolpref_client::EndpointConfig;

pub const STAGES: [&str; 9] = [
    "normalize",
    "segment",
    "sample-responses",
    "score",
    "build-pairs",
    "bmds",
    "split",
    "render",
    "bench",
];

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    pub stages: Vec<StageReport>,
}

/// Output locations under `output_dir`.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn report(&self, stage: &str) -> PathBuf {
        self.root.join("reports").join(format!("{stage}.json"))
    }
}

pub struct Run {
    config: PipelineConfig,
    layout: Layout,
}

impl Run {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config.output_dir);
        Ok(Self { config, layout })
    }

    fn seed(&self) -> u64 {
        self.config.seed.expect("validated config has a seed")
    }

    fn enabled(&self, stage: &str) -> bool {
        stage != "bench" || self.config.bench.is_some()
    }

    /// Runs `stage` or every stage for `"all"`. Stops at the first failure,
    /// which is returned with the stage name attached.
    pub fn execute(&self, stage: &str) -> (RunReport, Result<()>) {
        let selected: Vec<&str> = match stage {
            "all" => STAGES.iter().copied().filter(|s| self.enabled(s)).collect(),
            s => vec![s],
        };
        let mut reports = Vec::new();
        for name in selected {
            let started = std::time::Instant::now();
            let outcome = self
                .run_stage(name)
                .and_then(|r| if r.balanced() { Ok(r) } else { Err(anyhow!("report counts do not balance: {r:?}")) })
                .with_context(|| format!("stage {name} failed"));
            match outcome {
                Ok(report) => {
                    tracing::info!(
                        stage = name,
                        input = report.input,
                        output = report.output,
                        elapsed_ms = started.elapsed().as_millis() as u64,
                        "stage done"
                    );
                    if let Err(e) = stages::write_json(&self.layout.report(name), &report) {
                        return (self.finish(reports, Some(name)), Err(e));
                    }
                    reports.push(report);
                }
                Err(e) => return (self.finish(reports, Some(name)), Err(e)),
            }
        }
        (self.finish(reports, None), Ok(()))
    }

    fn finish(&self, stages: Vec<StageReport>, failed: Option<&str>) -> RunReport {
        let report = RunReport {
            status: if failed.is_some() { "failed" } else { "ok" }.to_string(),
            failed_stage: failed.map(str::to_string),
            stages,
        };
        if let Err(e) = stages::write_json(&self.layout.file("run_report.json"), &report) {
            tracing::error!(error = %e, "cannot write run report");
        }
        report
    }

    fn run_stage(&self, name: &str) -> Result<StageReport> {
        let c = &self.config;
        let f = |n: &str| self.layout.file(n);
        match name {
            "normalize" => {
                let inputs = c
                    .inputs
                    .iter()
                    .map(|i| {
                        Ok(NormalizeInput {
                            adapter: stages::resolve_adapter(&i.adapter, i.source.as_deref())?,
                            path: i.path.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (report, ingest) = stages::normalize(&inputs, &f("trajectories.jsonl"))?;
                stages::write_json(&f("ingest_report.json"), &ingest)?;
                Ok(report)
            }
            "segment" => {
                let markers = match &c.failure_markers {
                    None => stages::load_markers(None)?,
                    Some(MarkersSpec::Path(p)) => stages::load_markers(Some(p))?,
                    Some(MarkersSpec::Inline(m)) => toolpref_core::segment::FailureMarkers::new(m.clone())
                        .input(|| "invalid failure marker pattern".into())?,
                };
                stages::segment(&f("trajectories.jsonl"), &f("segments.jsonl"), &markers)
            }
            "sample-responses" => {
                let endpoints = stages::build_endpoints(c.endpoint_configs()?, c.cache_dir.as_deref())?;
                stages::sample_responses(&f("segments.jsonl"), &endpoints, c.n_per_endpoint, &f("responses.jsonl"))
            }
            "score" => stages::score(&f("segments.jsonl"), &f("responses.jsonl"), &f("scored.jsonl")),
            "build-pairs" => stages::build_pair_dataset(
                &f("segments.jsonl"),
                &f("scored.jsonl"),
                &c.bins()?,
                &c.pair_config(),
                &f("pairs.jsonl"),
            ),
            "bmds" => stages::bmds(&f("pairs.jsonl"), &c.bins()?, c.target_n, &f("sampled.jsonl")),
            "split" => stages::split(&f("sampled.jsonl"), c.holdout, self.seed(), &f("train.jsonl"), &f("val.jsonl")),
            "render" => stages::render(&f("train.jsonl"), c.mode, self.seed(), &f("queries.jsonl")),
            "bench" => {
                let spec = c.bench.as_ref().ok_or_else(|| anyhow!("no [bench] section")).input(|| "config".into())?;
                let judge = load_endpoint(&spec.judge)?;
                let endpoint = stages::build_endpoints(vec![judge], c.cache_dir.as_deref())?.remove(0);
                let (report, _) = bench::build_pairs(&spec.tasks, &f("bench_pairs.jsonl"))?;
                tracing::info!(pairs = report.output, "bench pairs built");
                bench::eval(
                    &f("bench_pairs.jsonl"),
                    &endpoint,
                    spec.mode.unwrap_or(c.mode),
                    &f("bench_report.json"),
                    Some(&f("bench_records.jsonl")),
                )
            }
            other => Err(anyhow!("unknown stage {other:?}; expected all or one of {}", STAGES.join(", ")))
                .input(|| "invalid --stage".into()),
        }
    }
}

pub fn load_endpoint(spec: &EndpointSpec) -> Result<EndpointConfig> {
    match spec {
        EndpointSpec::Inline(c) => Ok((**c).clone()),
        EndpointSpec::Path(p) => load_endpoint_file(p),
    }
}

/// First endpoint of a JSON endpoint file.
pub fn load_endpoint_file(path: &Path) -> Result<EndpointConfig> {
    EndpointConfig::load_all(path)
        .input(|| format!("cannot load endpoint {}", path.display()))?
        .into_iter()
        .next()
        .ok_or_else(|| anyhow!("{} lists no endpoint", path.display()))
        .input(|| "endpoint configuration".into())
}
