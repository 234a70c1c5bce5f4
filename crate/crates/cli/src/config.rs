use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tot_core::datasets::{SplitName, SplitSpec};
use tot_core::engine::{EngineConfig, MergePolicy};
use tot_core::llm::{
    BudgetedBackend, ChatBackend, ChatRequest, HttpBackend, HttpConfig, PricingTable, Script,
    ScriptedBackend,
};
use tot_core::ops::{OperationKind, OperationPool};
use tot_core::prompts::{render_prompt, PromptBindings, TemplateSet};
use tot_core::table::TableFormat;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    #[default]
    Lexical,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// A `/v1/chat/completions` server; the key comes from `TOT_API_KEY`.
    Http(HttpConfig),
    /// Replies from a script file, for offline runs.
    Scripted { script: PathBuf },
}

/// Everything needed to reproduce a run. Relative paths are resolved
/// against the directory of the file they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Directory overriding some or all of the shipped prompt templates.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub engine: EngineConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub pricing: Option<PricingTable>,
    #[serde(default)]
    pub extraction: ExtractionMode,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_split_name")]
    pub split_name: SplitName,
    /// Total tokens the whole command may spend.
    #[serde(default)]
    pub token_budget: Option<u64>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_split_name() -> SplitName {
    SplitName::All
}

/// Per-field overrides given on the command line.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub max_degree: Option<usize>,
    /// Table serialization: csv, pipe, markdown or html.
    #[arg(long)]
    pub format: Option<TableFormat>,
    /// merge_root_only or merge_every_node.
    #[arg(long)]
    pub merge_policy: Option<MergePolicy>,
    /// Comma-separated operation names, e.g. select_row,sort,write.
    #[arg(long, value_delimiter = ',')]
    pub pool: Option<Vec<String>>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub model: Option<String>,
    /// Token budget for the whole command.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long, value_enum)]
    pub extraction: Option<ExtractionMode>,
    /// train, validation, test or all.
    #[arg(long, value_parser = parse_split_name)]
    pub split: Option<SplitName>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use a scripted backend reading this file.
    #[arg(long, conflicts_with = "base_url")]
    pub script: Option<PathBuf>,
    /// Use an HTTP backend at this root URL.
    #[arg(long)]
    pub base_url: Option<String>,
}

fn parse_split_name(s: &str) -> Result<SplitName, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown split {s:?} (expected train, validation, test or all)"))
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a config file or the `config` member of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("config {} is not JSON", path.display()))?;
        if let Some(inner) = value.get_mut("config").filter(|_| value_is_manifest(&text)) {
            value = inner.take();
        }
        let mut cfg: RunConfig = serde_json::from_value(value)
            .with_context(|| format!("invalid config {}", path.display()))?;
        let full = std::path::absolute(path)
            .with_context(|| format!("cannot resolve {}", path.display()))?;
        cfg.resolve_paths(full.parent().unwrap_or(Path::new("/")));
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.dataset = absolute(base, &self.dataset);
        self.out = absolute(base, &self.out);
        if let Some(t) = &self.templates {
            self.templates = Some(absolute(base, t));
        }
        if let BackendConfig::Scripted { script } = &mut self.backend {
            *script = absolute(base, script);
        }
    }

    /// A config built from flags alone, for runs without a config file.
    pub fn from_flags(o: &Overrides) -> Result<Self> {
        let Some(dataset) = &o.dataset else {
            bail!("--dataset is required without --config");
        };
        let backend = match (&o.script, &o.base_url) {
            (Some(s), _) => BackendConfig::Scripted { script: s.clone() },
            (None, Some(u)) => BackendConfig::Http(HttpConfig::new(u.clone())),
            (None, None) => bail!("--script or --base-url is required without --config"),
        };
        Ok(RunConfig {
            dataset: dataset.clone(),
            templates: None,
            engine: EngineConfig::default(),
            backend,
            pricing: None,
            extraction: ExtractionMode::default(),
            out: default_out(),
            split: SplitSpec::default(),
            split_name: default_split_name(),
            token_budget: None,
        })
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        let cwd = std::env::current_dir().context("no working directory")?;
        if let Some(d) = &o.dataset {
            self.dataset = absolute(&cwd, d);
        }
        if let Some(d) = &o.out {
            self.out = absolute(&cwd, d);
        }
        let e = &mut self.engine;
        if let Some(v) = o.max_depth {
            e.max_depth = v;
        }
        if let Some(v) = o.max_degree {
            e.max_degree = v;
        }
        if let Some(v) = o.format {
            e.table_format = v;
        }
        if let Some(v) = o.merge_policy {
            e.merge_policy = v;
        }
        if let Some(v) = o.parallelism {
            e.parallelism = v;
        }
        if let Some(v) = &o.model {
            e.model = v.clone();
        }
        if let Some(names) = &o.pool {
            let kinds = names
                .iter()
                .map(|n| {
                    OperationKind::from_name(n.trim())
                        .filter(|k| *k != OperationKind::Root)
                        .with_context(|| format!("unknown pool operation {n:?}"))
                })
                .collect::<Result<Vec<_>>>()?;
            e.enabled_pool = OperationPool::from_kinds(kinds);
        }
        if let Some(v) = o.budget {
            self.token_budget = Some(v);
        }
        if let Some(v) = o.extraction {
            self.extraction = v;
        }
        if let Some(v) = o.split {
            self.split_name = v;
        }
        if let Some(v) = o.seed {
            self.split.seed = v;
        }
        if let Some(s) = &o.script {
            self.backend = BackendConfig::Scripted {
                script: absolute(&cwd, s),
            };
        }
        if let Some(u) = &o.base_url {
            self.backend = BackendConfig::Http(HttpConfig::new(u.clone()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if let Some(p) = &self.pricing {
            if p.get(&self.engine.model).is_none() {
                bail!("pricing has no entry for model {:?}", self.engine.model);
            }
        }
        Ok(())
    }

    pub fn templates(&self, sport: &str) -> Result<TemplateSet> {
        Ok(match &self.templates {
            Some(dir) => TemplateSet::load_dir(dir, sport)?,
            None => TemplateSet::builtin(sport),
        })
    }

    /// The configured backend, wrapped in the token budget if one is set.
    pub fn backend(&self) -> Result<Arc<dyn ChatBackend>> {
        let inner: Arc<dyn ChatBackend> = match &self.backend {
            BackendConfig::Http(cfg) => Arc::new(HttpBackend::new(cfg.clone())?),
            BackendConfig::Scripted { script } => {
                let script = Script::load(script).map_err(anyhow::Error::msg)?;
                Arc::new(ScriptedBackend::new(script))
            }
        };
        Ok(match self.token_budget {
            Some(budget) => Arc::new(BudgetedBackend::new(inner, budget)),
            None => inner,
        })
    }

    /// A scripted backend can only serve LLM extraction if some rule
    /// answers an extraction prompt.
    pub fn check_extraction_backend(&self, templates: &TemplateSet) -> Result<()> {
        let BackendConfig::Scripted { script } = &self.backend else {
            return Ok(());
        };
        if self.extraction != ExtractionMode::Llm {
            return Ok(());
        }
        let script = Script::load(script).map_err(anyhow::Error::msg)?;
        let bindings = PromptBindings::new()
            .set("TABLE_DESCRIPTION", "-")
            .set("EXAMPLE", "-")
            .set("REPORT", "-")
            .set("TABLE_RELATION", "[]");
        let prompt = render_prompt(&templates.ie, &bindings)?;
        let probe = ChatRequest::new(prompt.system, prompt.user, 1, &self.engine.model)?;
        if script.find(&probe).is_none() {
            bail!("llm extraction needs a script rule matching the relation-extraction prompt");
        }
        Ok(())
    }
}

fn value_is_manifest(text: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(text)
        .ok()
        .and_then(|v| v.get("command").map(|c| c.is_string()))
        .unwrap_or(false)
}

/// Loads `--config` if given, applies flag overrides and validates.
pub fn resolve(config: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_flags(overrides)?,
    };
    cfg.apply(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}
