//! Declarative run configuration, loaded from JSON documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::budget::BudgetGrid;
use crate::crater::{build_crater_walk, CraterWalkConfig};
use crate::mdp::TabularMdp;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub environment: EnvironmentSpec,
    pub grid: GridConfig,
    #[serde(default)]
    pub mode: ModeConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Grid resolutions used by the bounds comparison command; nominal
    /// counts are normalized to odd point counts.
    #[serde(default = "default_compare_bins")]
    pub compare_bins: Vec<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_compare_bins() -> Vec<usize> {
    vec![100, 500, 1000, 5000]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentSpec {
    /// Built-in stochastic gridworld.
    CraterWalk(CraterWalkConfig),
    /// Path to a JSON MDP document, relative to the config file.
    MdpFile(PathBuf),
}

impl EnvironmentSpec {
    pub fn build(&self, base_dir: &Path) -> Result<TabularMdp> {
        match self {
            EnvironmentSpec::CraterWalk(config) => {
                build_crater_walk(config).map_err(|e| Error::Config(e.to_string()))
            }
            EnvironmentSpec::MdpFile(path) => {
                let resolved = base_dir.join(path);
                if !resolved.exists() {
                    return Err(Error::Config(format!(
                        "MDP file {} does not exist",
                        resolved.display()
                    )));
                }
                let mdp = TabularMdp::read_json(&resolved)?;
                mdp.check().map_err(|e| Error::Config(e.to_string()))?;
                Ok(mdp)
            }
        }
    }

    pub fn crater_config(&self) -> Option<&CraterWalkConfig> {
        match self {
            EnvironmentSpec::CraterWalk(config) => Some(config),
            EnvironmentSpec::MdpFile(_) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub bins: usize,
    /// Optional `[z_min, z_max]` replacing the theoretical range.
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

impl GridConfig {
    pub fn build(&self, r_gamma: f64) -> Result<BudgetGrid> {
        self.build_with_bins(r_gamma, self.bins)
    }

    pub fn build_with_bins(&self, r_gamma: f64, bins: usize) -> Result<BudgetGrid> {
        match self.range {
            None => BudgetGrid::from_bins(r_gamma, bins).map_err(|e| Error::Config(e.to_string())),
            Some([z_min, z_max]) => {
                let k = (((bins.max(3) - 1) as f64) / 2.0).round() as usize;
                BudgetGrid::custom(z_min, z_max, 2 * k + 1, r_gamma)
                    .map_err(|e| Error::Config(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Lower,
    Upper,
    #[default]
    Both,
}

impl ModeConfig {
    pub fn modes(&self) -> Vec<crate::budget::RoundingMode> {
        use crate::budget::RoundingMode::*;
        match self {
            ModeConfig::Lower => vec![Lower],
            ModeConfig::Upper => vec![Upper],
            ModeConfig::Both => vec![Lower, Upper],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverConfig {
    Vi(ViConfig),
    Qlearn(QlearnConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViConfig {
    pub epsilon: f64,
    pub max_iters: Option<usize>,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            epsilon: 1e-4,
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlearnConfig {
    pub episodes: usize,
    pub step_cap: usize,
    pub kappa: f64,
    pub kappa_min: f64,
    pub lambda: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay_steps: u64,
    pub checkpoint_every: usize,
}

impl Default for QlearnConfig {
    fn default() -> Self {
        QlearnConfig {
            episodes: 75_000,
            step_cap: 150,
            kappa: 1.0,
            kappa_min: 1e-4,
            lambda: 0.01,
            eps_start: 1.0,
            eps_end: 0.1,
            decay_steps: 100_000_000,
            checkpoint_every: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub alphas: Vec<f64>,
    pub n_rollouts: usize,
    pub step_cap: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            alphas: vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            n_rollouts: 10_000,
            step_cap: 150,
        }
    }
}

impl RunConfig {
    /// Parse and validate a config document. Returns the config together
    /// with its base directory for resolving relative paths.
    pub fn load(path: &Path) -> Result<(RunConfig, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok((config, base))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.grid.bins < 2 {
            return Err(Error::Config("grid.bins must be at least 2".to_string()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".to_string()));
        }
        for &alpha in &self.evaluation.alphas {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Config(format!("alpha {alpha} outside (0, 1]")));
            }
        }
        if self.evaluation.n_rollouts == 0 || self.evaluation.step_cap == 0 {
            return Err(Error::Config("evaluation needs n_rollouts and step_cap >= 1".to_string()));
        }
        if let SolverConfig::Vi(vi) = &self.solver {
            if !(vi.epsilon > 0.0) {
                return Err(Error::Config("vi.epsilon must be positive".to_string()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "schema_version": 1,
            "environment": {"crater_walk": {}},
            "grid": {"bins": 101},
            "mode": "both",
            "solver": {"vi": {"epsilon": 1e-4}}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config: RunConfig = serde_json::from_str(&minimal_json()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.seeds, vec![0]);
        assert_eq!(config.evaluation.alphas.len(), 12);
        assert_eq!(config.compare_bins, vec![100, 500, 1000, 5000]);
        let crater = config.environment.crater_config().unwrap();
        assert_eq!(crater.slip_probability, 0.25);
    }

    #[test]
    fn bad_schema_version_is_rejected() {
        let text = minimal_json().replace("\"schema_version\": 1", "\"schema_version\": 9");
        let config: RunConfig = serde_json::from_str(&text).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn parse_error_carries_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\n  \"schema_version\": 1,\n  oops\n}").unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("line 3"), "{message}");
    }

    #[test]
    fn invalid_slip_probability_fails_at_build() {
        let text = minimal_json().replace(
            "\"crater_walk\": {}",
            "\"crater_walk\": {\"slip_probability\": 1.5}",
        );
        let config: RunConfig = serde_json::from_str(&text).unwrap();
        config.validate().unwrap();
        let err = config.environment.build(Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_mdp_file_is_a_config_error() {
        let spec = EnvironmentSpec::MdpFile(PathBuf::from("nope.json"));
        assert!(matches!(spec.build(Path::new("/tmp")), Err(Error::Config(_))));
    }

    #[test]
    fn grid_range_override_builds_custom_grid() {
        let grid_config = GridConfig {
            bins: 200,
            range: Some([-110.0, -90.0]),
        };
        let grid = grid_config.build(100.0).unwrap();
        assert_eq!(grid.n_points(), 201);
        assert_eq!(grid.min_value(), -110.0);
        assert_eq!(grid.max_value(), -90.0);
    }
}
