//! Experiment configs: TOML or JSON in, canonical JSON out.

use std::path::{Path, PathBuf};

use ifista::problems::{ProblemSpec, REFERENCE_TOL};
use ifista::solvers::{DeterministicConfig, StochasticConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SEED_ENV: &str = "IFISTA_SEED";

fn default_reference_tol() -> f64 {
    REFERENCE_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SolverSpec {
    Deterministic(DeterministicConfig),
    Stochastic(StochasticConfig),
    /// Proximal gradient (`t_k = 1`) with the deterministic error model.
    Baseline(DeterministicConfig),
}

fn nested<T: DeserializeOwned, E: serde::de::Error>(tree: serde_json::Value) -> Result<T, E> {
    serde_path_to_error::deserialize(tree).map_err(|e| E::custom(format!("`{}`: {}", e.path(), e.inner())))
}

// By hand so that errors inside the mode's config keep their field path.
impl<'de> Deserialize<'de> for SolverSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut map = serde_json::Map::deserialize(deserializer)?;
        let mode = match map.remove("mode") {
            Some(serde_json::Value::String(m)) => m,
            Some(other) => return Err(D::Error::custom(format!("`mode` must be a string, got {other}"))),
            None => return Err(D::Error::missing_field("mode")),
        };
        let rest = serde_json::Value::Object(map);
        match mode.as_str() {
            "deterministic" => nested(rest).map(SolverSpec::Deterministic),
            "stochastic" => nested(rest).map(SolverSpec::Stochastic),
            "baseline" => nested(rest).map(SolverSpec::Baseline),
            other => Err(D::Error::unknown_variant(
                other,
                &["deterministic", "stochastic", "baseline"],
            )),
        }
    }
}

impl SolverSpec {
    pub fn mode(&self) -> &'static str {
        match self {
            SolverSpec::Deterministic(_) => "deterministic",
            SolverSpec::Stochastic(_) => "stochastic",
            SolverSpec::Baseline(_) => "baseline",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SolverSpec::Deterministic(c) | SolverSpec::Baseline(c) => c.seed,
            SolverSpec::Stochastic(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            SolverSpec::Deterministic(c) | SolverSpec::Baseline(c) => c.seed = seed,
            SolverSpec::Stochastic(c) => c.seed = seed,
        }
    }

    pub fn set_max_iters(&mut self, max_iters: usize) {
        match self {
            SolverSpec::Deterministic(c) | SolverSpec::Baseline(c) => c.max_iters = max_iters,
            SolverSpec::Stochastic(c) => c.max_iters = max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
}

impl ExperimentConfig {
    /// Compact JSON in declaration order; parsing it back yields an equal config.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form without the output directory.
    pub fn config_hash(&self) -> String {
        let mut identity = self.clone();
        identity.out_dir = None;
        sha256_hex(identity.canonical().as_bytes())
    }

    pub fn run_id(&self) -> String {
        let digest = sha256_hex(format!("{}:{}", self.config_hash(), self.solver.seed()).as_bytes());
        digest[..16].to_string()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.reference_tol > 0.0) {
            return Err(CliError::Config(format!(
                "reference_tol: must be > 0, got {}",
                self.reference_tol
            )));
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads TOML (`.toml`) or JSON (anything else) into a generic tree.
pub fn read_tree(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Deserializes with the offending field path in the error message.
pub fn from_tree<T: DeserializeOwned>(tree: serde_json::Value, origin: &Path) -> Result<T, CliError> {
    serde_path_to_error::deserialize(tree).map_err(|e| {
        let field = e.path().to_string();
        CliError::Config(format!("{}: field `{field}`: {}", origin.display(), e.inner()))
    })
}

pub fn has_seed(tree: &serde_json::Value, section: &str) -> bool {
    tree.get(section).and_then(|s| s.get("seed")).is_some()
}

/// Seed precedence: `--seed`, then the config file, then `IFISTA_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, from_config: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag.or(from_config) {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Overrides supplied on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn load_experiment(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let tree = read_tree(path)?;
    let seeded = has_seed(&tree, "solver");
    let mut config: ExperimentConfig = from_tree(tree, path)?;
    apply_overrides(&mut config, seeded, overrides)?;
    Ok(config)
}

pub fn apply_overrides(config: &mut ExperimentConfig, seeded: bool, overrides: &Overrides) -> Result<(), CliError> {
    let seed = resolve_seed(overrides.seed, seeded.then(|| config.solver.seed()))?;
    config.solver.set_seed(seed);
    if let Some(n) = overrides.max_iters {
        config.solver.set_max_iters(n);
    }
    if let Some(out) = &overrides.out {
        config.out_dir = Some(out.clone());
    }
    config.validate()
}
