use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::net::NetworkConfig;

/// Either a bundled preset (`"default"` or `"desk"`) or a full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkChoice {
    Preset(String),
    Custom(NetworkConfig),
}

impl NetworkChoice {
    pub fn resolve(&self) -> Result<NetworkConfig> {
        match self {
            NetworkChoice::Preset(name) => match name.as_str() {
                "default" => Ok(NetworkConfig::default()),
                "desk" => Ok(NetworkConfig::desk()),
                other => Err(Error::Config(format!("unknown network preset {other:?}"))),
            },
            NetworkChoice::Custom(cfg) => {
                cfg.validate()?;
                Ok(cfg.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Optimizers {
    pub encoder: AdamConfig,
    pub generator: AdamConfig,
    pub critic: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Dataset directory; relative paths resolve against the config file.
    pub dataset: PathBuf,
    pub epochs: u64,
    /// Reduced to the training-set size when larger.
    pub batch_size: usize,
    /// Optional cap on the total number of steps.
    pub max_steps: Option<u64>,
    pub seed: u64,
    /// Critic updates per generator/encoder update.
    pub n_critic: usize,
    /// Sequences taken from the end of the dataset for held-out evaluation.
    pub heldout: usize,
    /// Steps between held-out evaluations (0: only at the end).
    pub eval_every: u64,
    /// Steps between checkpoints (0: only at the end).
    pub checkpoint_every: u64,
    pub network: NetworkChoice,
    pub optimizer: Optimizers,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset"),
            epochs: 60,
            batch_size: 256,
            max_steps: None,
            seed: 0,
            n_critic: 1,
            heldout: 64,
            eval_every: 100,
            checkpoint_every: 1000,
            network: NetworkChoice::Preset("default".into()),
            optimizer: Optimizers::default(),
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    /// Single-core preset: batch 64 with the small network.
    pub fn desk() -> Self {
        let fast = AdamConfig {
            lr: 5e-4,
            ..Default::default()
        };
        Self {
            batch_size: 64,
            heldout: 16,
            network: NetworkChoice::Preset("desk".into()),
            optimizer: Optimizers {
                encoder: fast,
                generator: fast,
                critic: fast,
            },
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::format(origin, e))?;
        if cfg.dataset.is_relative() {
            if let Some(dir) = origin.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&crate::io::read_to_string(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.n_critic == 0 {
            return Err(Error::Config("n_critic must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        self.network.resolve()?;
        for a in [&self.optimizer.encoder, &self.optimizer.generator, &self.optimizer.critic] {
            a.validate()?;
        }
        self.weights.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epochs_rejected() {
        let err = TrainConfig::from_toml("epochs = 0\n", Path::new("c.toml")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn presets_and_relative_dataset() {
        let cfg = TrainConfig::from_toml(
            "dataset = \"data\"\nnetwork = \"desk\"\n[weights]\nlambda_p = 50.0\n",
            Path::new("/tmp/run/c.toml"),
        )
        .unwrap();
        assert_eq!(cfg.dataset, PathBuf::from("/tmp/run/data"));
        assert_eq!(cfg.network.resolve().unwrap(), NetworkConfig::desk());
        assert_eq!(cfg.weights.lambda_p, 50.0);
        assert_eq!(cfg.weights.lambda_s, 100.0);
        assert!(TrainConfig::from_toml("network = \"huge\"\n", Path::new("c.toml")).is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = TrainConfig::desk();
        let back: TrainConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
