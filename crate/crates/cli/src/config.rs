//! The structured run configuration: one TOML file with sections for the
//! model, optimizer, bootstrap, hyperprior, Gibbs, simulation, and bench
//! sweeps. Matrices are nested row-major arrays. Missing sections fall
//! back to documented defaults; commands reject configs that lack the
//! sections they need.

use crate::error::{CliError, CliResult};
use mlndlm::{
    builtin_local_trend, builtin_random_walk, DirichletAlpha, DmdbConfig, GibbsOptions,
    HyperPrior, InitMode, ModelSpec, OptimizerConfig, SimConfig,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub use mlndlm::model::ModelConfig;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct FileConfig {
    pub model: Option<ModelSection>,
    pub optimizer: Option<OptimizerSection>,
    pub dmdb: Option<DmdbSection>,
    pub hyperprior: Option<HyperPriorSection>,
    pub gibbs: Option<GibbsSection>,
    pub sim: Option<SimSection>,
    pub bench: Option<BenchSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<FileConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn model_spec(&self) -> CliResult<ModelSpec> {
        let section = self
            .model
            .as_ref()
            .ok_or_else(|| CliError::Validation("config needs a [model] section".into()))?;
        section.to_spec()
    }

    pub fn optimizer_config(&self) -> CliResult<OptimizerConfig> {
        Ok(self
            .optimizer
            .as_ref()
            .map(|s| s.to_config())
            .transpose()?
            .unwrap_or_default())
    }

    pub fn dmdb_config(&self) -> DmdbConfig {
        self.dmdb.as_ref().map(|s| s.to_config()).unwrap_or_default()
    }

    pub fn hyperprior(&self) -> CliResult<HyperPrior> {
        let section = self
            .hyperprior
            .as_ref()
            .ok_or_else(|| CliError::Validation("config needs a [hyperprior] section".into()))?;
        HyperPrior::new(section.a.clone(), section.b.clone()).map_err(Into::into)
    }
}

/// Either a builtin shorthand or fully explicit system matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSection {
    Builtin(BuiltinModel),
    Explicit(ModelConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuiltinModel {
    /// "random_walk" or "local_trend".
    pub builtin: String,
    pub d: usize,
    #[serde(default)]
    pub w: Option<f64>,
    #[serde(default)]
    pub w_theta: Option<f64>,
    #[serde(default)]
    pub w_alpha: Option<f64>,
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub m0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub c0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub xi0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub nu0: Option<f64>,
}

fn nested_to_matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::Validation(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Validation(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl ModelSection {
    pub fn to_spec(&self) -> CliResult<ModelSpec> {
        match self {
            ModelSection::Explicit(config) => config.to_spec().map_err(Into::into),
            ModelSection::Builtin(b) => {
                let mut spec = match b.builtin.as_str() {
                    "random_walk" => {
                        let w = b.w.ok_or_else(|| {
                            CliError::Validation("random_walk model needs `w`".into())
                        })?;
                        builtin_random_walk(b.d, 1, w)?
                    }
                    "local_trend" => {
                        let w_theta = b.w_theta.ok_or_else(|| {
                            CliError::Validation("local_trend model needs `w_theta`".into())
                        })?;
                        let w_alpha = b.w_alpha.ok_or_else(|| {
                            CliError::Validation("local_trend model needs `w_alpha`".into())
                        })?;
                        builtin_local_trend(b.d, 1, w_theta, w_alpha, b.damping.unwrap_or(1.0))?
                    }
                    other => {
                        return Err(CliError::Validation(format!(
                            "unknown builtin model '{other}'"
                        )))
                    }
                };
                if let Some(m0) = &b.m0 {
                    spec.m0 = nested_to_matrix(m0, "m0")?;
                }
                if let Some(c0) = &b.c0 {
                    spec.c0 = nested_to_matrix(c0, "c0")?;
                }
                if let Some(xi0) = &b.xi0 {
                    spec.xi0 = nested_to_matrix(xi0, "xi0")?;
                }
                if let Some(nu0) = b.nu0 {
                    spec.nu0 = nu0;
                }
                Ok(spec)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OptimizerSection {
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub rel_obj_tol: Option<f64>,
    pub history_size: Option<usize>,
    /// "smoothed" (default) or "zeros".
    pub init: Option<String>,
}

impl OptimizerSection {
    pub fn to_config(&self) -> CliResult<OptimizerConfig> {
        let mut config = OptimizerConfig::default();
        if let Some(v) = self.max_iters {
            config.max_iters = v;
        }
        if let Some(v) = self.grad_tol {
            config.grad_tol = v;
        }
        if let Some(v) = self.rel_obj_tol {
            config.rel_obj_tol = v;
        }
        if let Some(v) = self.history_size {
            config.history_size = v;
        }
        if let Some(init) = &self.init {
            config.init_mode = match init.as_str() {
                "smoothed" => InitMode::AlrOfSmoothedProportions,
                "zeros" => InitMode::Zeros,
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown init mode '{other}' (use 'smoothed' or 'zeros')"
                    )))
                }
            };
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaRaw {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DmdbSection {
    pub alpha: Option<AlphaRaw>,
    pub num_samples: Option<usize>,
    pub seed: Option<u64>,
}

impl DmdbSection {
    pub fn to_config(&self) -> DmdbConfig {
        let mut config = DmdbConfig::default();
        match &self.alpha {
            Some(AlphaRaw::Scalar(a)) => config.alpha = DirichletAlpha::Scalar(*a),
            Some(AlphaRaw::Vector(v)) => config.alpha = DirichletAlpha::Vector(v.clone()),
            None => {}
        }
        if let Some(s) = self.num_samples {
            config.num_samples = s;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperPriorSection {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct GibbsSection {
    pub iterations: Option<usize>,
    pub point_mode: Option<bool>,
    pub seed: Option<u64>,
}

impl GibbsSection {
    pub fn to_options(&self, optimizer: OptimizerConfig, alpha: DirichletAlpha) -> GibbsOptions {
        GibbsOptions {
            optimizer,
            alpha,
            point_mode: self.point_mode.unwrap_or(false),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSection {
    pub d: usize,
    pub t_total: usize,
    pub seed: u64,
    pub series_length: Option<usize>,
    pub missing_fraction: Option<f64>,
    pub w: Option<f64>,
    pub reversion: Option<f64>,
    pub counts_per_timepoint: Option<u64>,
    pub nu0: Option<f64>,
    pub xi0: Option<Vec<Vec<f64>>>,
    pub m0_range: Option<[f64; 2]>,
    pub c0_range: Option<[f64; 2]>,
}

impl SimSection {
    pub fn to_config(&self) -> CliResult<SimConfig> {
        let mut config = SimConfig::new(self.d, self.t_total, self.seed);
        if let Some(v) = self.series_length {
            config.series_length = v;
        }
        if let Some(v) = self.missing_fraction {
            config.missing_fraction = v;
        }
        if let Some(v) = self.w {
            config.w = v;
        }
        if let Some(v) = self.reversion {
            config.reversion = v;
        }
        if let Some(v) = self.counts_per_timepoint {
            config.counts_per_timepoint = v;
        }
        if let Some(v) = self.nu0 {
            config.nu0 = Some(v);
        }
        if let Some(xi0) = &self.xi0 {
            config.xi0 = Some(nested_to_matrix(xi0, "sim.xi0")?);
        }
        if let Some([lo, hi]) = self.m0_range {
            config.m0_range = (lo, hi);
        }
        if let Some([lo, hi]) = self.c0_range {
            config.c0_range = (lo, hi);
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSection {
    #[serde(default = "default_d_values")]
    pub d_values: Vec<usize>,
    #[serde(default = "default_t_values")]
    pub t_values: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub counts_per_timepoint: Option<u64>,
    pub missing_fraction: Option<f64>,
}

fn default_d_values() -> Vec<usize> {
    vec![3, 10, 30]
}

fn default_t_values() -> Vec<usize> {
    vec![100, 300, 600]
}

fn default_reps() -> usize {
    10
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            d_values: default_d_values(),
            t_values: default_t_values(),
            reps: default_reps(),
            seed: 0,
            counts_per_timepoint: None,
            missing_fraction: None,
        }
    }
}
