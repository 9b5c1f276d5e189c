use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qsync::models::{CoupledModel, ModelKind};
use qsync::tongue::{linspace, ClassifyOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub spectra: SpectraBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelKind,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_point_one")]
    pub eta: f64,
    #[serde(default = "default_point_one")]
    pub diffusion: f64,
}

fn default_omega() -> f64 {
    2.0
}

fn default_point_one() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    /// Fourier truncation `J` for ring models.
    pub j: usize,
    /// Continued-fraction depth.
    pub m: usize,
    /// Lattice index `N` for ring eigenfunctions.
    pub n: i64,
    pub tol_im_rel: f64,
    pub tol_re_rel: f64,
    pub kappa_tol: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let o = ClassifyOptions::default();
        Self { j: o.j, m: 40, n: 1, tol_im_rel: o.tol_im_rel, tol_re_rel: o.tol_re_rel, kappa_tol: o.kappa_tol }
    }
}

impl SolverBlock {
    pub fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions { j: self.j, tol_im_rel: self.tol_im_rel, tol_re_rel: self.tol_re_rel, kappa_tol: self.kappa_tol }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Keep every `stride`-th Euler–Maruyama step.
    pub stride: usize,
    /// Sampling grid for Gillespie paths.
    pub grid_dt: f64,
    pub discard: f64,
    /// Histogram bins per angle (ring stationary comparison).
    pub bins: usize,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 1e3, seed: 0, stride: 10, grid_dt: 0.01, discard: 100.0, bins: 20 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraBlock {
    pub segment_len: usize,
    pub overlap: f64,
    pub window: String,
    pub analytic_only: bool,
    /// Analytic frequency grid; defaults to `ω ± 2`.
    pub nu_min: Option<f64>,
    pub nu_max: Option<f64>,
    pub nu_points: usize,
}

impl Default for SpectraBlock {
    fn default() -> Self {
        Self {
            segment_len: 4096,
            overlap: 0.5,
            window: "hann".into(),
            analytic_only: false,
            nu_min: None,
            nu_max: None,
            nu_points: 401,
        }
    }
}

/// Either an explicit list or an inclusive evenly spaced range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range(Linspace),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Range(l) => linspace(l.start, l.stop, l.n),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub tau: GridSpec,
    pub kappa: GridSpec,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            tau: GridSpec::Range(Linspace { start: -0.5, stop: 0.5, n: 21 }),
            kappa: GridSpec::Range(Linspace { start: 0.0, stop: 0.5, n: 26 }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub format: Format,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), format: Format::Csv }
    }
}

/// An error in the configuration or command line (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.model().map_err(|e| config_err(format!("[model] {e}")))?;
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.dt.is_finite()) || !(s.grid_dt > 0.0) || s.stride == 0 || s.bins == 0 {
            return Err(config_err("[simulation] dt, grid_dt, stride and bins must be positive"));
        }
        if !(s.t_end >= 0.0) || !(s.discard >= 0.0) {
            return Err(config_err("[simulation] t_end and discard must be nonnegative"));
        }
        if self.spectra.window != "hann" {
            return Err(config_err(format!("[spectra] window {:?} is not supported (only \"hann\")", self.spectra.window)));
        }
        if self.spectra.nu_points < 2 {
            return Err(config_err("[spectra] nu_points must be at least 2"));
        }
        if self.solver.j < 4 || self.solver.m == 0 {
            return Err(config_err("[solver] j must be at least 4 and m positive"));
        }
        Ok(())
    }

    pub fn model(&self) -> qsync::Result<CoupledModel> {
        let m = &self.model;
        CoupledModel::new(m.kind, m.omega, m.tau, m.kappa, m.eta, m.diffusion)
    }

    pub fn nu_grid(&self) -> Vec<f64> {
        let w = self.model.omega;
        let lo = self.spectra.nu_min.unwrap_or(w - 2.0);
        let hi = self.spectra.nu_max.unwrap_or(w + 2.0);
        linspace(lo, hi, self.spectra.nu_points)
    }
}
