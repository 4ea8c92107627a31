//! Pipeline configuration file. Relative paths resolve against the directory
//! holding the config file.

use crate::failure::InputContext;
use anyhow::{anyhow, Result};
use serde::Deserialize;
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use toolpref_client::EndpointConfig;
use toolpref_core::critique::Mode;
use toolpref_core::pref::{BinSpec, PairConfig, DEFAULT_COMPLEXITY_CAP};
use toolpref_core::segment::FailureMarkerConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    /// Preset name or adapter JSON path.
    pub adapter: String,
    /// Overrides the adapter's source label.
    #[serde(default)]
    pub source: Option<String>,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MarkersSpec {
    Path(PathBuf),
    Inline(FailureMarkerConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BinsSpec {
    Named(String),
    Edges(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EndpointSpec {
    Path(PathBuf),
    Inline(Box<EndpointConfig>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub tasks: PathBuf,
    pub judge: EndpointSpec,
    #[serde(default)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub inputs: Vec<InputSpec>,
    #[serde(default)]
    pub failure_markers: Option<MarkersSpec>,
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
    #[serde(default)]
    pub endpoints_file: Option<PathBuf>,
    #[serde(default = "default_n_per_endpoint")]
    pub n_per_endpoint: u32,
    #[serde(default = "default_complexity_cap")]
    pub complexity_cap: usize,
    #[serde(default)]
    pub max_pairs_per_context: Option<usize>,
    pub target_n: usize,
    #[serde(default = "default_bins")]
    pub bins: BinsSpec,
    #[serde(default)]
    pub holdout: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub bench: Option<BenchSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_n_per_endpoint() -> u32 {
    1
}

fn default_complexity_cap() -> usize {
    DEFAULT_COMPLEXITY_CAP
}

fn default_bins() -> BinsSpec {
    BinsSpec::Named("default".into())
}

fn default_mode() -> Mode {
    Mode::Think
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).input(|| format!("cannot read config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).input(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.output_dir);
        if let Some(c) = &mut self.cache_dir {
            rebase(base, c);
        }
        for input in &mut self.inputs {
            rebase(base, &mut input.path);
            let adapter = base.join(&input.adapter);
            if adapter.is_file() {
                input.adapter = adapter.display().to_string();
            }
        }
        if let Some(MarkersSpec::Path(p)) = &mut self.failure_markers {
            rebase(base, p);
        }
        if let Some(p) = &mut self.endpoints_file {
            rebase(base, p);
        }
        if let Some(bench) = &mut self.bench {
            rebase(base, &mut bench.tasks);
            if let EndpointSpec::Path(p) = &mut bench.judge {
                rebase(base, p);
            }
        }
    }

    pub fn bins(&self) -> Result<BinSpec> {
        match &self.bins {
            BinsSpec::Named(s) => BinSpec::parse(s),
            BinsSpec::Edges(e) => BinSpec::new(e.clone()),
        }
        .input(|| "invalid bins".into())
    }

    pub fn pair_config(&self) -> PairConfig {
        PairConfig {
            complexity_cap: self.complexity_cap,
            max_pairs_per_context: self.max_pairs_per_context,
        }
    }

    pub fn endpoint_configs(&self) -> Result<Vec<EndpointConfig>> {
        let mut all = self.endpoints.clone();
        if let Some(p) = &self.endpoints_file {
            all.extend(EndpointConfig::load_all(p).input(|| format!("cannot load endpoints {}", p.display()))?);
        }
        Ok(all)
    }

    /// Checks everything that can be checked before any stage runs.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(anyhow!(msg)).input(|| "invalid config".into());
        if self.inputs.is_empty() {
            return fail("no inputs".into());
        }
        if self.seed.is_none() {
            return fail("seed is required by the split and render stages".into());
        }
        if self.target_n == 0 {
            return fail("target_n must be positive".into());
        }
        if self.holdout >= self.target_n {
            return fail(format!("holdout {} must be below target_n {}", self.holdout, self.target_n));
        }
        self.bins()?;
        let endpoints = self.endpoint_configs()?;
        if endpoints.is_empty() {
            return fail("no endpoints configured".into());
        }
        let mut ids = HashSet::new();
        for e in &endpoints {
            e.validate().input(|| format!("endpoint {}", e.model_id))?;
            if !ids.insert(e.model_id.as_str()) {
                return fail(format!("duplicate endpoint model_id {}", e.model_id));
            }
        }
        let mut paths = HashSet::new();
        for input in &self.inputs {
            if !paths.insert(&input.path) {
                return fail(format!("input {} listed twice", input.path.display()));
            }
            if input.path.starts_with(&self.output_dir) {
                return fail(format!("input {} lies inside output_dir", input.path.display()));
            }
        }
        Ok(())
    }
}
