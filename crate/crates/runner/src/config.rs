use std::path::Path;

use anyhow::Context;
use fakeinv_core::info::Tolerances;
use fakeinv_core::scm::BenchmarkConfig;
use fakeinv_learn::train::TrainConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Raised for configuration problems, mapped to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub tolerances: Tolerances,
    /// Benchmark used for the exact claim suite.
    pub desk: BenchmarkConfig,
    /// Random instances per family for sampled claims.
    pub random_instances: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { tolerances: Tolerances::default(), desk: BenchmarkConfig::desk(), random_instances: 50, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub run_id: String,
    pub benchmark: BenchmarkConfig,
    pub train: TrainConfig,
    pub verify: VerifyConfig,
    pub samples_per_env: usize,
    pub test_samples: usize,
    /// Training seeds; each gives one row per method and shift.
    pub seeds: Vec<u64>,
    /// Compression weight for the bottleneck variant of the game.
    pub iib_bottleneck_weight: f64,
    /// Extra λ values for the selector-loss ablation.
    pub ablate_lambda: Vec<f64>,
    /// Also train the alternating loop without the MI term (`--ablate-mi off`).
    pub ablate_mi: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            run_id: "default".into(),
            benchmark: BenchmarkConfig::default(),
            train: TrainConfig::default(),
            verify: VerifyConfig::default(),
            samples_per_env: 20_000,
            test_samples: 10_000,
            seeds: vec![0, 1, 2, 3, 4],
            iib_bottleneck_weight: 0.01,
            ablate_lambda: Vec::new(),
            ablate_mi: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return Err(ConfigError(format!("run_id {:?} is not a plain directory name", self.run_id)));
        }
        self.benchmark.validate().map_err(|e| ConfigError(format!("benchmark: {e}")))?;
        self.verify.desk.validate().map_err(|e| ConfigError(format!("verify.desk: {e}")))?;
        self.train.validate().map_err(|e| ConfigError(format!("train: {e}")))?;
        if self.benchmark.train_envs.len() < 2 {
            return Err(ConfigError("benchmark.train_envs: at least two environments are required".into()));
        }
        let tol = self.verify.tolerances;
        if !(tol.zero >= 0.0) || !(tol.positive >= 0.0) {
            return Err(ConfigError("verify.tolerances: thresholds must be nonnegative".into()));
        }
        if self.samples_per_env < 10 || self.test_samples == 0 {
            return Err(ConfigError("samples_per_env must be at least 10 and test_samples positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError("seeds: at least one seed is required".into()));
        }
        if !(self.iib_bottleneck_weight > 0.0 && self.iib_bottleneck_weight.is_finite()) {
            return Err(ConfigError("iib_bottleneck_weight must be positive".into()));
        }
        if let Some(l) = self.ablate_lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(ConfigError(format!("ablate_lambda: {l} is not a nonnegative number")));
        }
        Ok(())
    }
}
