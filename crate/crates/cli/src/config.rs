use std::path::Path;

use anyhow::{bail, Context};
use insitu_core::dataset::WindowConfig;
use insitu_core::mechanisms::MechanismId;
use insitu_core::simulator::DEFAULT_USERS;
use insitu_rnn::{ModelSpec, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything a batch run needs. Loaded from TOML; every key is optional.
///
/// ```toml
/// seed = 7
/// users = 10
/// session_s = 180.0
/// mechanisms = ["three_button", "touch"]
/// models = ["gru", "lstm", "stacked"]
/// hidden = 64
/// alpha = 0.05
///
/// [window]
/// length = 100
/// overlap = { samples = 20 }
/// purity_min = 0.6
///
/// [train]
/// learning_rate = 0.0025
/// batch_size = 32
/// epochs = 10
/// folds = 10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed for simulation, folds and training.
    pub seed: u64,
    pub users: usize,
    pub session_s: f64,
    pub mechanisms: Vec<MechanismId>,
    pub models: Vec<String>,
    pub hidden: usize,
    pub alpha: f64,
    /// Zero sensor noise and a perfect labeller.
    pub noise_free: bool,
    pub window: WindowConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            users: DEFAULT_USERS,
            session_s: 180.0,
            mechanisms: MechanismId::ALL.to_vec(),
            models: vec!["gru".into(), "lstm".into(), "stacked".into()],
            hidden: ModelSpec::DEFAULT_HIDDEN,
            alpha: insitu_stats::comparison::DEFAULT_ALPHA,
            noise_free: false,
            window: WindowConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.mechanisms.is_empty() {
            bail!("at least one mechanism is required");
        }
        if self.models.is_empty() {
            bail!("at least one model is required");
        }
        if self.users == 0 || !(self.session_s > 0.0) {
            bail!("users and session_s must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1)");
        }
        self.window.step()?;
        self.train.validate()?;
        self.specs()?;
        Ok(())
    }

    /// Model specs named in `models`, at `hidden` units.
    pub fn specs(&self) -> anyhow::Result<Vec<ModelSpec>> {
        self.models
            .iter()
            .map(|name| Ok(ModelSpec::preset(name)?.with_hidden(self.hidden)))
            .collect()
    }

    /// Training settings with the master seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}
