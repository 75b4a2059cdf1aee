//! JSON configuration schema. Strict: unknown keys are rejected, defaults
//! are injected at load time and echoed back in every report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Lattice,
    Montecarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LatticeBacking {
    /// Full non-recombining tree when K fits under the cap and the problem
    /// is path-dependent; state-collapsed otherwise.
    #[default]
    Auto,
    Full,
    Markov,
}

fn default_d() -> usize {
    1
}

fn default_paths() -> usize {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub engine: Engine,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lattice_backing: LatticeBacking,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    /// `const` or `abs_tanh`.
    pub kind: String,
    pub value: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Ordered transformation stack, e.g.
    /// ["clamp_y:1.0", "truncate:3,5", "mollify:0.05", "infconv:2,1.0"].
    #[serde(default)]
    pub transform: Vec<String>,
    #[serde(default)]
    pub phi: Option<PhiConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CriterionConfig {
    #[default]
    Measure,
    Almost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DensityFormConfig {
    #[default]
    Product,
    Exponential,
}

fn default_max_iter() -> usize {
    200
}

fn default_damping() -> f64 {
    1.0
}

fn default_clip() -> f64 {
    0.95
}

fn default_z_eps() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Residual tolerance; default 1e-9 on the lattice, 1e-4 under Monte
    /// Carlo (resolved at load time).
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default = "default_z_eps")]
    pub z_eps: f64,
    #[serde(default)]
    pub criterion: CriterionConfig,
    /// Monte Carlo one-step density increment.
    #[serde(default)]
    pub density_form: DensityFormConfig,
    /// Test-only: accept terminals without a uniform bound.
    #[serde(default)]
    pub allow_unbounded: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: None,
            max_iter: default_max_iter(),
            damping: default_damping(),
            clip: default_clip(),
            z_eps: default_z_eps(),
            criterion: CriterionConfig::Measure,
            density_form: DensityFormConfig::Product,
            allow_unbounded: false,
        }
    }
}

fn default_degree() -> usize {
    3
}

fn default_bins() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// `polynomial` or `piecewise_constant`; `default` picks by dimension.
    pub family: String,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_oracle_tolerance() -> f64 {
    5e-3
}

fn default_min_order() -> f64 {
    0.8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// `conditional_mean`, `girsanov_shift` or `exp_transform`.
    pub name: String,
    pub steps_list: Vec<usize>,
    #[serde(default = "default_oracle_tolerance")]
    pub tolerance: f64,
    /// Minimal empirical convergence order in 1/K (log-log fit), checked
    /// when more than one refinement level is given.
    #[serde(default = "default_min_order")]
    pub min_order: f64,
}

fn default_p() -> f64 {
    2.0
}

fn default_z_measure_delta() -> f64 {
    1e-3
}

fn default_weak_gap_threshold() -> f64 {
    1e-6
}

fn default_z_gap_threshold() -> f64 {
    1e-3
}

fn default_z_probe_min() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// `constant`, `truncation` or `mollification`.
    pub family: String,
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub levels: Vec<u32>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub xi_shifts: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_p")]
    pub q: f64,
    #[serde(default = "default_z_measure_delta")]
    pub z_measure_delta: f64,
    #[serde(default = "default_weak_gap_threshold")]
    pub weak_gap_threshold: f64,
    #[serde(default = "default_z_gap_threshold")]
    pub z_gap_threshold: f64,
    /// Off-zero variant: compacts avoid |z| < z_probe_min and the limit run
    /// converges in the almost-measure sense.
    #[serde(default)]
    pub off_zero: bool,
    #[serde(default = "default_z_probe_min")]
    pub z_probe_min: f64,
}

fn default_quantile() -> f64 {
    0.999
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AprioriConfig {
    pub c: f64,
    #[serde(default)]
    pub psi: f64,
    #[serde(default)]
    pub phi: f64,
    pub y_sup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmoConfig {
    /// Evaluate the quantitative formulas at this norm.
    #[serde(default)]
    pub k_norm: Option<f64>,
    /// Solve the configured model and estimate the BMO norm of its Z.
    #[serde(default)]
    pub estimate_from_solve: bool,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    /// Explicit a priori inputs; derived from the generator tag when absent
    /// and a solve is requested.
    #[serde(default)]
    pub apriori: Option<AprioriConfig>,
}

fn default_z_window() -> (f64, f64, usize) {
    (-3.0, 3.0, 61)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizeConfig {
    #[serde(default)]
    pub infconv_n: Vec<u32>,
    #[serde(default)]
    pub truncate: Vec<(u32, u32)>,
    #[serde(default)]
    pub smooth_eps: Vec<f64>,
    #[serde(default = "default_k_y")]
    pub k_y: f64,
    #[serde(default)]
    pub z_window: Option<(f64, f64, usize)>,
    #[serde(default)]
    pub y_values: Vec<f64>,
}

fn default_k_y() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub terminal: Option<TerminalConfig>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub basis: Option<BasisConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub bmo: Option<BmoConfig>,
    #[serde(default)]
    pub regularize: Option<RegularizeConfig>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, String> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        cfg.resolve_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Inject engine-dependent defaults so the echoed config is complete.
    pub fn resolve_defaults(&mut self) {
        if self.solver.tol.is_none() {
            self.solver.tol = Some(match self.model.engine {
                Engine::Lattice => 1e-9,
                Engine::Montecarlo => 1e-4,
            });
        }
        if let Some(reg) = &mut self.regularize {
            if reg.z_window.is_none() {
                reg.z_window = Some(default_z_window());
            }
            if reg.y_values.is_empty() {
                reg.y_values = vec![0.0];
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.model.horizon > 0.0) {
            return Err("model.T must be > 0".into());
        }
        if self.model.steps == 0 {
            return Err("model.steps must be >= 1".into());
        }
        if self.model.d == 0 {
            return Err("model.d must be >= 1".into());
        }
        if self.model.engine == Engine::Lattice && self.model.d != 1 {
            return Err(
                "the lattice engine is one-dimensional; use the montecarlo engine for d > 1".into(),
            );
        }
        Ok(())
    }
}
