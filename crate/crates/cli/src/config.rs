//! Pipeline configuration file (TOML). Relative paths resolve against the
//! directory of the config file. See the README for the full key list.

use std::path::{Path, PathBuf};

use ontorel::eval::Averaging;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult, PipelineArgs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
    pub source: SourceConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub ontology: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    /// Dataset source tag; defaults to the ontology file stem or
    /// `synthetic-<seed>`.
    pub tag: Option<String>,
    #[serde(default = "defaults::error_cap")]
    pub error_cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub entities: usize,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Pseudo,
    /// A precomputed embedding file, e.g. from the transformer extractor.
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub provider: Provider,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    pub file: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: Provider::Pseudo,
            dim: defaults::dim(),
            file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "defaults::val_fraction")]
    pub val_fraction: f64,
    pub cap: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            val_fraction: defaults::val_fraction(),
            cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "defaults::hidden_sizes")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_sizes: defaults::hidden_sizes(),
            learning_rate: defaults::learning_rate(),
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub averaging: Averaging,
}

mod defaults {
    use std::path::PathBuf;

    pub fn out_dir() -> PathBuf {
        PathBuf::from("run")
    }
    pub fn error_cap() -> usize {
        1000
    }
    pub fn dim() -> usize {
        64
    }
    pub fn val_fraction() -> f64 {
        0.3
    }
    pub fn hidden_sizes() -> Vec<usize> {
        vec![100, 100, 100]
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn epochs() -> usize {
        100
    }
    pub fn batch_size() -> usize {
        32
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        if let Some(p) = cfg.source.ontology.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.embedding.file.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| e.context(path.display()))
    }

    /// Command-line flags win over the file.
    pub fn apply_overrides(&mut self, a: &PipelineArgs) {
        if let Some(d) = &a.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(s) = a.seed {
            self.seed = s;
        }
        if let Some(e) = a.epochs {
            self.model.epochs = e;
        }
        if let Some(v) = a.val_fraction {
            self.split.val_fraction = v;
        }
    }

    pub fn validate(&self) -> CliResult {
        match (&self.source.ontology, &self.source.synthetic) {
            (Some(_), Some(_)) => return Err(CliError::config("source: set either ontology or synthetic, not both")),
            (None, None) => return Err(CliError::config("source: set ontology or synthetic")),
            _ => {}
        }
        if self.source.ontology.is_some() && self.embedding.provider == Provider::File && self.embedding.file.is_none()
        {
            return Err(CliError::config("embedding: provider \"file\" needs a file"));
        }
        if self.embedding.dim == 0 {
            return Err(CliError::config("embedding: dim must be at least 1"));
        }
        Ok(())
    }

    pub fn source_tag(&self) -> String {
        if let Some(tag) = &self.source.tag {
            return tag.clone();
        }
        match &self.source.ontology {
            Some(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "ontology".into()),
            None => format!("synthetic-{}", self.seed),
        }
    }
}
