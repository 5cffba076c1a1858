use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, DataError};
use crate::augment::AugmentMode;
use crate::model::TrainConfig;
use crate::vocab::WordTargetMode;

/// Environment variable naming the default run config file.
pub const CONFIG_ENV: &str = "QSUP_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPaths {
    pub dataset: PathBuf,
    pub features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_features: Option<PathBuf>,
    /// Object vocabulary table; the built-in table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<PathBuf>,
    /// Question-type table; the built-in table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_types: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Modes {
    pub augment: AugmentMode,
    pub word_targets: WordTargetMode,
    /// Feed the other questions of a test image as extras.
    pub test_extras: bool,
    pub vocab_min_count: usize,
}

impl Default for Modes {
    fn default() -> Self {
        Self {
            augment: AugmentMode::Powerset,
            word_targets: WordTargetMode::Full,
            test_extras: false,
            vocab_min_count: 1,
        }
    }
}

/// A training/evaluation run.
///
/// ```toml
/// seed = 7
///
/// [paths]
/// dataset = "train.json"
/// features = "train.qvft"
/// test_dataset = "val.json"
/// test_features = "val.qvft"
/// output_dir = "out"
///
/// [modes]
/// augment = "powerset"
/// test_extras = false
///
/// [train]
/// learning_rate = 0.5
/// epochs = 20
/// ```
///
/// Relative paths are resolved against the directory of the config file.
/// The top-level `seed` is required and overrides `train.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: RunPaths,
    #[serde(default)]
    pub modes: Modes,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    /// Parse without touching the file system.
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        cfg.train.seed = cfg.seed;
        cfg.train
            .validate()
            .map_err(|e| DataError::Config(e.to_string()))?;
        if cfg.modes.vocab_min_count == 0 {
            return Err(DataError::Config("vocab_min_count must be positive".into()));
        }
        Ok(cfg)
    }

    /// Load, resolve relative paths and check that every input exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = String::from_utf8(read_file(path)?)
            .map_err(|e| DataError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.check_inputs()?;
        Ok(cfg)
    }

    /// The path in `QSUP_CONFIG`, if set.
    pub fn default_path() -> Option<PathBuf> {
        std::env::var_os(CONFIG_ENV).map(PathBuf::from)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        join(&mut p.dataset);
        join(&mut p.features);
        join(&mut p.output_dir);
        for opt in [
            &mut p.test_dataset,
            &mut p.test_features,
            &mut p.objects,
            &mut p.question_types,
        ] {
            if let Some(x) = opt.as_mut() {
                join(x);
            }
        }
    }

    fn check_inputs(&self) -> Result<(), DataError> {
        let p = &self.paths;
        let inputs = [Some(&p.dataset), Some(&p.features)]
            .into_iter()
            .chain([&p.test_dataset, &p.test_features, &p.objects, &p.question_types].map(Option::as_ref))
            .flatten();
        for input in inputs {
            if !input.exists() {
                return Err(DataError::Config(format!(
                    "{} does not exist",
                    input.display()
                )));
            }
        }
        if p.test_dataset.is_some() != p.test_features.is_some() {
            return Err(DataError::Config(
                "test_dataset and test_features must be given together".into(),
            ));
        }
        Ok(())
    }
}
