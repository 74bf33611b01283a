//! Run configuration: defaults, TOML loading, validation.
//!
//! The config file is TOML with `env`, `policy`, `psc`, `psa`, and
//! `objective` sections. Unknown keys anywhere are hard errors so a typo
//! in a hyperparameter name fails loudly instead of silently using the
//! default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::episode::PscConfig;
use crate::error::{Error, Result};
use crate::objective::ObjectiveConfig;
use crate::policy::MIN_FEATURE_DIM;
use crate::step_credit::PsaConfig;
use crate::types::Estimator;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub feature_dim: usize,
    pub hash_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            feature_dim: 512,
            hash_seed: 0x517c_c1b7_2722_0a95,
        }
    }
}

/// Full training configuration. Scalar defaults: group size 8, steepness
/// 4.0, strength 0.1, temperature 0.1, discount 0.95, omega 1.0, clip 0.2.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub estimator: Estimator,
    /// Trajectories sampled per task instance (N).
    pub group_size: usize,
    pub tasks_per_iter: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Optimization passes over each collected batch; advantages are
    /// frozen across passes.
    pub epochs: usize,
    pub seed: u64,
    /// Seed list for sweep and ablation grids; empty means "just `seed`".
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub psc: PscConfig,
    pub psa: PsaConfig,
    pub objective: ObjectiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::Proxmo,
            group_size: 8,
            tasks_per_iter: 8,
            iterations: 50,
            learning_rate: 0.05,
            epochs: 1,
            seed: 1,
            seeds: Vec::new(),
            eval_episodes: 64,
            env: EnvConfig::default(),
            policy: PolicyConfig::default(),
            psc: PscConfig::default(),
            psa: PsaConfig::default(),
            objective: ObjectiveConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::Config(format!(
                "group_size must be at least 2 (group statistics need it), got {}",
                self.group_size
            )));
        }
        if self.tasks_per_iter == 0 {
            return Err(Error::Config("tasks_per_iter must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.policy.feature_dim < MIN_FEATURE_DIM {
            return Err(Error::Config(format!(
                "policy.feature_dim must be at least {MIN_FEATURE_DIM}, got {}",
                self.policy.feature_dim
            )));
        }
        self.env.validate()?;
        self.psc.validate()?;
        self.psa.validate()?;
        self.objective.validate()?;
        Ok(())
    }

    /// Seeds for grid harnesses: the `seeds` list, or `[seed]` when empty.
    pub fn grid_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Serialize the resolved config; feeding the output back in re-runs
    /// identically.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_roundtrip() {
        let config = TrainConfig::default();
        config.validate().unwrap();
        let text = config.to_toml_string().unwrap();
        let back = TrainConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.group_size, 8);
        assert_eq!(back.psc.alpha, 4.0);
        assert_eq!(back.psc.beta, 0.1);
        assert_eq!(back.psa.temperature, 0.1);
        assert_eq!(back.psa.gamma, 0.95);
        assert_eq!(back.objective.omega, 1.0);
        assert_eq!(back.objective.clip_epsilon, 0.2);
        let echoed = back.to_toml_string().unwrap();
        assert_eq!(text, echoed);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let text = "alhpa_typo = 4.0\n";
        assert!(TrainConfig::from_toml_str(text).is_err());
        let nested = "[psc]\nalpha = 4.0\nbetta = 0.1\n";
        assert!(TrainConfig::from_toml_str(nested).is_err());
    }

    #[test]
    fn section_overrides_apply() {
        let text = r#"
estimator = "grpo"
group_size = 4
[psa]
temperature = 0.5
[env]
n_containers = 4
horizon = 7
"#;
        let config = TrainConfig::from_toml_str(text).unwrap();
        assert_eq!(config.estimator, Estimator::Grpo);
        assert_eq!(config.group_size, 4);
        assert_eq!(config.psa.temperature, 0.5);
        assert_eq!(config.env.n_containers, 4);
        assert_eq!(config.env.horizon, 7);
        // Untouched sections keep defaults.
        assert_eq!(config.psc.alpha, 4.0);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(TrainConfig::from_toml_str("group_size = 1").is_err());
        assert!(TrainConfig::from_toml_str("[psa]\ntemperature = 0.0").is_err());
        assert!(TrainConfig::from_toml_str("[psa]\ngamma = 1.5").is_err());
        assert!(TrainConfig::from_toml_str("[objective]\nclip_epsilon = 1.0").is_err());
        assert!(TrainConfig::from_toml_str("[env]\nsynonym_noise = 2.0").is_err());
    }

    #[test]
    fn grid_seeds_fall_back_to_seed() {
        let mut config = TrainConfig::default();
        config.seed = 9;
        assert_eq!(config.grid_seeds(), vec![9]);
        config.seeds = vec![1, 2, 3];
        assert_eq!(config.grid_seeds(), vec![1, 2, 3]);
    }
}
