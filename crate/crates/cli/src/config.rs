//! Per-command settings. Each command resolves its settings from built-in
//! defaults, then an optional `--config` JSON file, then explicit flags.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vfar_core::concentration::Fixture;
use vfar_core::solver::{Criterion, DEFAULT_MAX_ITER, DEFAULT_PATH_LEN, DEFAULT_PATH_RATIO, DEFAULT_TOL};
use vfar_core::{Result, VfarError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    N100p40,
    N200p40,
    N200p80,
}

impl Preset {
    pub fn size(self) -> (usize, usize) {
        match self {
            Preset::Desk => (200, 20),
            Preset::N100p40 => (100, 40),
            Preset::N200p40 => (200, 40),
            Preset::N200p80 => (200, 80),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Block sparse: a fixed number of nonzero blocks per row.
    Sparse,
    /// Block banded: `B_jk` nonzero iff `|j - k| <= bandwidth`.
    Banded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub preset: Option<Preset>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub model: ModelKind,
    pub degree: usize,
    pub bandwidth: usize,
    pub basis_dim: usize,
    pub grid_len: usize,
    pub burn_in: usize,
    pub measurement_noise: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            preset: None,
            n: None,
            p: None,
            model: ModelKind::Banded,
            degree: 5,
            bandwidth: 2,
            basis_dim: 5,
            grid_len: 50,
            burn_in: vfar_core::vfar::DEFAULT_BURN_IN,
            measurement_noise: 0.5,
        }
    }
}

impl SimulateConfig {
    /// `(n, p)`: explicit values win over the preset, which wins over desk.
    pub fn size(&self) -> (usize, usize) {
        let (pn, pp) = self.preset.unwrap_or(Preset::Desk).size();
        (self.n.unwrap_or(pn), self.p.unwrap_or(pp))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub panel: PathBuf,
    pub truth: Option<PathBuf>,
    pub lag: usize,
    pub basis_dim: usize,
    pub q_max: usize,
    pub eta_grid: Vec<f64>,
    pub folds: usize,
    pub path_len: usize,
    pub path_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Fit every row at this standardized level instead of selecting along
    /// a path.
    pub gamma: Option<f64>,
    pub ic: Criterion,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            panel: PathBuf::from("panel.csv"),
            truth: None,
            lag: 1,
            basis_dim: 12,
            q_max: 5,
            eta_grid: vec![0.0, 1e-7, 1e-6, 1e-5],
            folds: 5,
            path_len: DEFAULT_PATH_LEN,
            path_ratio: DEFAULT_PATH_RATIO,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            gamma: None,
            ic: Criterion::Bic,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub path: PathBuf,
    pub truth: Option<PathBuf>,
    pub ic: Criterion,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { path: PathBuf::from("path.json"), truth: None, ic: Criterion::Bic }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub kernels: PathBuf,
    pub threshold: Option<f64>,
    pub indegree: Option<usize>,
    pub no_self: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { kernels: PathBuf::from("kernels.json"), threshold: None, indegree: None, no_self: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub theta_grid: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            a: vec![0.2, 0.5, 0.8],
            b: (0..=20).map(|i| i as f64 * 0.1).collect(),
            theta_grid: vfar_core::moments::DEFAULT_THETA_GRID,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationSettings {
    pub fixture: Fixture,
    pub p: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub score_lags: Vec<usize>,
    pub alpha: f64,
}

impl Default for ConcentrationSettings {
    fn default() -> Self {
        let c = vfar_core::concentration::ConcentrationConfig::default();
        Self { fixture: c.fixture, p: c.p, n_grid: c.n_grid, reps: c.reps, score_lags: c.score_lags, alpha: c.alpha }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CidrConfig {
    pub prices: PathBuf,
}

impl Default for CidrConfig {
    fn default() -> Self {
        Self { prices: PathBuf::from("prices.csv") }
    }
}

/// Reads `--config`. The file is either the settings object itself or a
/// manifest written by an earlier run, in which case its `config` and
/// `seed` are reused.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<(T, Option<u64>)> {
    let Some(path) = path else {
        return Ok((T::default(), None));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| VfarError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| VfarError::Config(format!("{}: {e}", path.display())))?;
    let (settings, seed) = match value.get("command").and_then(|c| c.as_str()) {
        Some(found) => {
            if found != command {
                return Err(VfarError::Config(format!("{} is a manifest for `{found}`, not `{command}`", path.display())));
            }
            (value.get("config").cloned().unwrap_or_default(), value.get("seed").and_then(|s| s.as_u64()))
        }
        None => (value, None),
    };
    let settings = serde_json::from_value(settings).map_err(|e| VfarError::Config(format!("{}: {e}", path.display())))?;
    Ok((settings, seed))
}
