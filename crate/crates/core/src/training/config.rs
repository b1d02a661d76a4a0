//! Training configuration, read from a TOML key-value file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::c2f::C2fConfig;
use crate::error::{Error, Result};
use crate::inference::PruneConfig;

use super::adam::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    #[default]
    S2e,
    C2f,
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s2e" => Ok(HeadKind::S2e),
            "c2f" => Ok(HeadKind::C2f),
            other => Err(Error::Config(format!("unknown head `{other}` (expected s2e or c2f)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub head: HeadKind,
    pub top_lambda: f64,
    pub max_span_len: usize,
    /// d′ of the s2e head.
    pub head_dim: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub token_budget: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    /// c2f has no hand-written backward; training it requires opting in to
    /// finite-difference gradients.
    pub c2f_numeric_gradients: bool,
    pub c2f_feature_dim: usize,
    pub c2f_max_antecedents: usize,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub embeddings_dir: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let prune = PruneConfig::default();
        let adam = AdamConfig::default();
        let c2f = C2fConfig::default();
        TrainConfig {
            seed: 0,
            head: HeadKind::S2e,
            top_lambda: prune.top_lambda,
            max_span_len: prune.max_span_len,
            head_dim: 64,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            epochs: 20,
            token_budget: 5000,
            max_steps: None,
            c2f_numeric_gradients: false,
            c2f_feature_dim: c2f.feature_dim,
            c2f_max_antecedents: c2f.max_antecedents,
            train_path: None,
            dev_path: None,
            embeddings_dir: None,
            checkpoint_path: None,
            log_path: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn prune(&self) -> PruneConfig {
        PruneConfig {
            max_span_len: self.max_span_len,
            top_lambda: self.top_lambda,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn c2f(&self) -> C2fConfig {
        C2fConfig {
            feature_dim: self.c2f_feature_dim,
            max_antecedents: self.c2f_max_antecedents,
            ..C2fConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prune().validate()?;
        self.adam().validate()?;
        if self.head_dim == 0 {
            return Err(Error::Config("head_dim must be at least 1".into()));
        }
        if self.token_budget == 0 {
            return Err(Error::Config("token_budget must be at least 1".into()));
        }
        if self.c2f_feature_dim == 0 || self.c2f_max_antecedents == 0 {
            return Err(Error::Config("c2f sizes must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_file() {
        let cfg =
            TrainConfig::from_toml("seed = 7\nlearning_rate = 0.01\nepochs = 3\ntrain_path = \"a.jsonl\"\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.top_lambda, 0.4);
        assert_eq!(cfg.train_path.as_deref(), Some(Path::new("a.jsonl")));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_toml("top_lambda = 0.0").is_err());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
        assert!(TrainConfig::from_toml("head = \"c2f\"").is_ok());
        assert!(TrainConfig::from_toml("head = \"c2f\"\nc2f_numeric_gradients = true").is_ok());
    }

    #[test]
    fn round_trip() {
        let cfg = TrainConfig {
            max_steps: Some(5),
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
