use std::path::{Path, PathBuf};

use gaml::model::{AttentionMode, ModelConfig};
use gaml::training::TrainConfig;
use gaml::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// The config file as written. `model` and `train` are partial: keys left
/// out take their defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub threshold: Option<f64>,
    #[serde(default)]
    pub data: DataPaths,
    pub label_graph: Option<PathBuf>,
    pub label_threshold: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub model: Option<Value>,
    pub train: Option<Value>,
    pub generate: Option<GenerateSection>,
    pub explain: Option<ExplainSection>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub spec: Option<PathBuf>,
    pub n: Option<usize>,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
}

fn default_ratios() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    #[serde(default)]
    pub graphs: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    3
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub threshold: Option<f64>,
    pub attention: Option<String>,
    pub factors: Option<usize>,
    pub label_graph: Option<PathBuf>,
    pub label_threshold: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

/// Fully resolved settings; echoed into the output directory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Effective {
    pub command: String,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: usize,
    pub threshold: f64,
    pub data: DataPaths,
    pub label_graph: Option<PathBuf>,
    pub label_threshold: f64,
    pub checkpoint: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explain: Option<ExplainSection>,
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Overlays `partial` on the serialized defaults, so unknown keys are still
/// rejected by the target type.
fn merge<T: Serialize + for<'de> Deserialize<'de>>(section: &str, defaults: &T, partial: Option<&Value>) -> Result<T> {
    let mut base = serde_json::to_value(defaults)?;
    if let Some(p) = partial {
        let Value::Object(entries) = p else {
            return Err(Error::Config(format!("{section}: expected an object")));
        };
        let Value::Object(target) = &mut base else { unreachable!() };
        for (k, v) in entries {
            target.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(base).map_err(|e| Error::Config(format!("{section}: {e}")))
}

fn attention_from_flags(name: &str, factors: Option<usize>, current: AttentionMode) -> Result<AttentionMode> {
    let current_k = match current {
        AttentionMode::Hierarchical { factors } => factors,
        _ => 5,
    };
    Ok(match name {
        "pairwise" => AttentionMode::Pairwise,
        "hierarchical" => AttentionMode::Hierarchical {
            factors: factors.unwrap_or(current_k),
        },
        "label_to_input" => AttentionMode::LabelToInputOnly,
        "none" => AttentionMode::None,
        other => {
            return Err(Error::Config(format!(
                "--attention: unknown mode {other:?} (pairwise, hierarchical, label_to_input, none)"
            )))
        }
    })
}

pub fn resolve(command: &str, file: RunConfig, flags: Overrides) -> Result<Effective> {
    let mut model: ModelConfig = merge("model", &ModelConfig::default(), file.model.as_ref())?;
    let mut train: TrainConfig = merge("train", &TrainConfig::default(), file.train.as_ref())?;
    match (flags.attention.as_deref(), flags.factors) {
        (Some(name), k) => model.attention = attention_from_flags(name, k, model.attention)?,
        (None, Some(k)) => match &mut model.attention {
            AttentionMode::Hierarchical { factors } => *factors = k,
            _ => return Err(Error::Config("--factors needs hierarchical attention".into())),
        },
        (None, None) => {}
    }
    let seed = flags.seed.or(file.seed);
    let threads = flags.threads.or(file.threads).unwrap_or(1);
    let threshold = flags.threshold.or(file.threshold).unwrap_or(0.5);
    if let Some(s) = seed {
        train.seed = s;
    }
    train.threads = threads;
    train.threshold = threshold;
    let mut data = file.data;
    if let Some(d) = flags.data {
        data.test = Some(d);
    }
    let label_graph = flags.label_graph.or(file.label_graph);
    if label_graph.is_some() {
        model.use_label_graph = true;
    }
    let eff = Effective {
        command: command.to_string(),
        seed,
        out: flags.out.or(file.out),
        threads,
        threshold,
        data,
        label_graph,
        label_threshold: flags.label_threshold.or(file.label_threshold).unwrap_or(0.5),
        checkpoint: flags.checkpoint.or(file.checkpoint),
        model,
        train,
        generate: file.generate,
        explain: file.explain,
    };
    eff.validate()?;
    Ok(eff)
}

fn require_file(key: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
    let Some(p) = path else {
        return Err(Error::Config(format!("{key} is required")));
    };
    if !p.exists() {
        return Err(Error::Config(format!("{key}: {} does not exist", p.display())));
    }
    Ok(p.clone())
}

impl Effective {
    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if let Some(p) = &self.label_graph {
            require_file("label_graph", &Some(p.clone()))?;
        }
        match self.command.as_str() {
            "generate" | "train" if self.seed.is_none() => {
                Err(Error::Config("seed is required (set \"seed\" or pass --seed)".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.out
            .clone()
            .ok_or_else(|| Error::Config("out is required (set \"out\" or pass --out)".into()))
    }

    pub fn train_path(&self) -> Result<PathBuf> {
        require_file("data.train", &self.data.train)
    }

    pub fn valid_path(&self) -> Result<PathBuf> {
        require_file("data.valid", &self.data.valid)
    }

    /// Dataset for eval, predict and explain: `--data` or `data.test`.
    pub fn eval_path(&self) -> Result<PathBuf> {
        require_file("data.test", &self.data.test)
    }

    pub fn checkpoint_path(&self) -> Result<PathBuf> {
        require_file("checkpoint", &self.checkpoint)
    }

    /// Writes this config as `config.json` under `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("config.json"), text + "\n")?;
        Ok(())
    }
}
