use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use coembed::graphdata::{self, AttributedNetwork, LoadOptions, SplitRatios};
use coembed::model::{HyperParams, PosWeightMode};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const OUTPUT_ENV: &str = "COEMBED_OUTPUT";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Class,
    Attr,
    Link,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Class => "class",
            Task::Attr => "attr",
            Task::Link => "link",
        }
    }
}

/// Everything one run needs. Serialized flat: hyperparameters sit next to
/// paths and split settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(flatten)]
    pub hyper: HyperParams,
    /// Directory holding `edges.tsv`, `attributes.tsv`, optional
    /// `labels.tsv` and `meta.json`.
    pub data: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub attrs: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub n_classes: Option<usize>,
    pub output: Option<PathBuf>,
    pub task: Task,
    pub split: SplitRatios,
    /// Fraction of nodes whose label is revealed; 0 hides every label.
    pub label_ratio: f64,
    pub run_id: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hyper: HyperParams::default(),
            data: None,
            edges: None,
            attrs: None,
            labels: None,
            n_classes: None,
            output: None,
            task: Task::Class,
            split: SplitRatios::STANDARD,
            label_ratio: 0.1,
            run_id: "run".into(),
        }
    }
}

/// Command-line overrides. Each flag is named exactly like its config key.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Overrides {
    #[arg(long = "latent_dim")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[arg(long = "hidden_node")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_node: Option<usize>,
    #[arg(long = "hidden_attr")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_attr: Option<usize>,
    #[arg(long = "hidden_disc")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_disc: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[arg(long = "learning_rate")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long = "pos_weight", value_parser = parse_pos_weight)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos_weight: Option<PosWeightMode>,
    #[arg(long = "self_loops")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_loops: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attrs: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[arg(long = "n_classes")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[arg(long = "label_ratio")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_ratio: Option<f64>,
    #[arg(long = "run_id")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

fn parse_pos_weight(s: &str) -> Result<PosWeightMode, String> {
    serde_json::from_value(Value::String(s.to_owned()))
        .map_err(|_| format!("expected `balanced` or `unit`, got `{s}`"))
}

/// Shallow-merge `over` into `base`.
fn merge(base: &mut Map<String, Value>, over: Map<String, Value>) {
    for (k, v) in over {
        base.insert(k, v);
    }
}

impl RunConfig {
    /// Read `path` (if any), apply overrides, validate.
    pub fn resolve(path: Option<&Path>, over: &Overrides) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("{}", p.display()))?;
                let v: Value = serde_json::from_str(&text)
                    .with_context(|| format!("{}: invalid JSON", p.display()))?;
                match v {
                    Value::Object(m) => m,
                    _ => bail!("{}: config must be a JSON object", p.display()),
                }
            }
            None => Map::new(),
        };
        if let Value::Object(m) = serde_json::to_value(over)? {
            merge(&mut value, m);
        }
        let cfg: RunConfig = serde_json::from_value(Value::Object(value)).context("config")?;
        cfg.hyper.validate()?;
        if !(0.0..1.0).contains(&cfg.label_ratio) {
            bail!("label_ratio {} must lie in [0, 1)", cfg.label_ratio);
        }
        Ok(cfg)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(|root| PathBuf::from(root).join(&self.run_id)))
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.run_id))
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("{}", path.display()))
    }

    /// Load the network named by `data` or by explicit file paths.
    pub fn load_network(&self) -> Result<AttributedNetwork> {
        let (edges, attrs, labels, meta) = match &self.data {
            Some(dir) => {
                let labels = dir.join(graphdata::io::LABELS_FILE);
                let meta_path = dir.join(graphdata::sbm::META_FILE);
                let meta = if meta_path.exists() {
                    Some(graphdata::read_meta(dir)?)
                } else {
                    None
                };
                (
                    self.edges.clone().unwrap_or_else(|| dir.join(graphdata::io::EDGES_FILE)),
                    self.attrs.clone().unwrap_or_else(|| dir.join(graphdata::io::ATTRS_FILE)),
                    self.labels.clone().or_else(|| labels.exists().then_some(labels)),
                    meta,
                )
            }
            None => match (&self.edges, &self.attrs) {
                (Some(e), Some(a)) => (e.clone(), a.clone(), self.labels.clone(), None),
                _ => bail!("config needs `data` or both `edges` and `attrs`"),
            },
        };
        let opts = match (meta, self.n_classes) {
            (_, Some(k)) => LoadOptions::new(k),
            (Some(m), None) => m.load_options(),
            (None, None) => bail!("`n_classes` is required when the data has no meta.json"),
        };
        Ok(graphdata::load_network_files(&edges, &attrs, labels.as_deref(), opts)?)
    }
}
