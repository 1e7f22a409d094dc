//! Run configuration: a versioned JSON document plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use critmetric::balance::{Method, SolveOptions};
use critmetric::io::ModelDef;
use critmetric::{PolarizedModel, QuadratureScheme, SubtorusAction};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "critmetric/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub model: ModelDef,
    pub m: i64,
    /// Character matrix of the torus; absent or empty means the trivial torus.
    #[serde(default)]
    pub torus: Vec<Vec<i64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub start: StartConfig,
    #[serde(default)]
    pub chow: ChowConfig,
    #[serde(default)]
    pub git: GitConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub extremal: ExtremalConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
    pub anderson: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { method: d.method, tol: d.tol, max_iter: d.max_iter, anderson: d.anderson }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub resolution: usize,
    /// Angular nodes per coordinate; defaults to the resolution.
    pub angular: Option<usize>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { resolution: 48, angular: None }
    }
}

/// Initial state: a saved state file, or a seeded perturbation of the
/// Fubini-Study state.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartConfig {
    pub state: Option<PathBuf>,
    pub perturbation: f64,
    pub diagonal: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChowConfig {
    /// Integer weights of a special subgroup; random when absent.
    pub gamma: Option<Vec<i64>>,
    pub t_max: f64,
    pub points: usize,
}

impl Default for ChowConfig {
    fn default() -> Self {
        Self { gamma: None, t_max: 2.0, points: 17 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GitConfig {
    /// Weight configuration for the exact torus test.
    pub weights: Option<Vec<Vec<i64>>>,
    pub covering_samples: usize,
    /// Special subgroups probed on the state; zero skips the probe.
    pub probe_directions: usize,
    pub t_max: f64,
}

impl Default for GitConfig {
    fn default() -> Self {
        Self { weights: None, covering_samples: 1000, probe_directions: 0, t_max: 4.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    /// Torus direction `Y`; absent means no twist.
    pub y: Option<Vec<f64>>,
    /// Index `b`; uniform when absent.
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtremalConfig {
    pub levels: Vec<usize>,
}

impl Default for ExtremalConfig {
    fn default() -> Self {
        Self { levels: vec![8, 16, 32] }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(state) = &config.start.state {
            if state.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.start.state = Some(base.join(state));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.schema == SCHEMA, "unsupported schema {:?} (expected {SCHEMA:?})", self.schema);
        ensure!(self.m >= 1, "level m must be positive");
        ensure!(self.solver.tol > 0.0, "solver tolerance must be positive");
        ensure!(self.quadrature.resolution >= critmetric::geometry::MIN_RESOLUTION, "quadrature resolution too small");
        ensure!(self.start.perturbation.is_finite() && self.start.perturbation >= 0.0, "perturbation must be nonnegative");
        ensure!(self.chow.points >= 3 && self.chow.t_max > 0.0, "chow grid needs at least 3 points and t_max > 0");
        if let Some(state) = &self.start.state {
            ensure!(state.exists(), "state file {} does not exist", state.display());
        }
        let model = self.model()?;
        self.torus_action(&model)?;
        Ok(())
    }

    pub fn model(&self) -> Result<PolarizedModel> {
        Ok(self.model.build()?)
    }

    pub fn torus_action(&self, model: &PolarizedModel) -> Result<SubtorusAction> {
        let n = model.dim();
        if self.torus.is_empty() {
            return Ok(SubtorusAction::trivial(n));
        }
        if self.torus.iter().any(|row| row.len() != n) {
            bail!("torus matrix rows must have length {n}");
        }
        Ok(SubtorusAction::new(n, self.torus.clone())?)
    }

    pub fn quadrature(&self, dim: usize) -> Result<QuadratureScheme<f64>> {
        let r = self.quadrature.resolution;
        Ok(QuadratureScheme::tensor_with_angular(dim, r, self.quadrature.angular.unwrap_or(r))?)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            method: self.solver.method,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            anderson: self.solver.anderson,
            ..Default::default()
        }
    }

    /// Canonical serialization used for the manifest hash.
    pub fn canonical(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
