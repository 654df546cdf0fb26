//! Scenario configuration: TOML with strict schema validation (unknown keys
//! rejected). The formal schema ships in docs/config.schema.json.

use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSection,
    pub scaling: Option<ScalingSection>,
    #[serde(default)]
    pub integrator: IntegratorSection,
    pub run: Option<RunSection>,
    #[serde(default)]
    pub output: OutputSection,
    pub compare: Option<CompareSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Bundled model id (kepler, oscillator2d, kepler_hooke, laurent, flrw,
    /// nbody_blowup) ...
    pub bundle: Option<String>,
    /// ... or an inline Hamiltonian over declared variables ...
    pub variables: Option<Vec<String>>,
    pub hamiltonian: Option<String>,
    #[serde(default)]
    pub guard: Vec<String>,
    #[serde(default)]
    pub guard_min: f64,
    #[serde(default)]
    pub separable: bool,
    /// ... or a reduced-system description emitted by `reduce`.
    pub reduced_file: Option<String>,
    /// FLRW only: matter Hamiltonian over (pm, qm).
    pub matter: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    /// Bundled chart / scaling-function id.
    pub chart: Option<String>,
    /// Inline symmetry components (one expression per phase variable).
    pub symmetry: Option<Vec<String>>,
    /// Inline scaling function.
    pub rho: Option<String>,
    /// Declared degree Λ (overrides the bundled symmetry's degree).
    pub degree: Option<f64>,
    /// Check / reduce the lifted system's degree-one symmetry instead.
    #[serde(default)]
    pub lifted: bool,
    pub inline_chart: Option<InlineChart>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineChart {
    pub id: String,
    pub vars: Vec<String>,
    pub forward: Vec<String>,
    pub inverse: Vec<String>,
    pub angular: Vec<bool>,
    #[serde(default)]
    pub domain: Vec<String>,
    #[serde(default)]
    pub domain_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub events: Vec<EventSection>,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            method: default_method(),
            step: default_step(),
            abs_tol: default_abs_tol(),
            rel_tol: default_rel_tol(),
            max_steps: default_max_steps(),
            events: Vec::new(),
        }
    }
}

fn default_method() -> String {
    "rk45-adaptive".into()
}
fn default_step() -> f64 {
    0.01
}
fn default_abs_tol() -> f64 {
    1e-10
}
fn default_rel_tol() -> f64 {
    1e-9
}
fn default_max_steps() -> usize {
    1_000_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub name: String,
    pub expr: String,
    pub below: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// "original" | "reduced" | "blowup".
    #[serde(default = "default_space")]
    pub space: String,
    pub t_span: Option<[f64; 2]>,
    pub tau_span: Option<[f64; 2]>,
    pub initial: Option<Vec<f64>>,
    pub initial_named: Option<BTreeMap<String, f64>>,
    /// Original-space point mapped through the chart (reduced runs).
    pub initial_upstairs: Option<Vec<f64>>,
    /// Use a bundled reference scenario's initial data and span.
    pub scenario: Option<String>,
}

fn default_space() -> String {
    "original".into()
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<String>,
    #[serde(default)]
    pub tau: bool,
    #[serde(default)]
    pub plot_script: bool,
    /// Extra CSV columns: "energy" or any expression over the state
    /// variables.
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_compare_tol")]
    pub tolerance: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// "trajectories" (dual integration) or "parallelism" (pairwise
    /// reduced-field ratios across charts).
    #[serde(default = "default_compare_mode")]
    pub mode: String,
    /// Number of radial periods to integrate (trajectories mode).
    pub periods: Option<f64>,
}

fn default_compare_tol() -> f64 {
    1e-5
}
fn default_grid() -> usize {
    500
}
fn default_compare_mode() -> String {
    "trajectories".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axes: Vec<AxisSection>,
    #[serde(default)]
    pub report: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    /// "initial" (state slot) or "param" (named parameter).
    pub target: String,
    pub index: Option<usize>,
    pub name: Option<String>,
    pub values: Vec<f64>,
}

/// Reduced-system description emitted by `reduce` and reloadable by `run`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedFile {
    pub reduced_system: ReducedFileBody,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedFileBody {
    pub parent: String,
    pub chart: String,
    pub degree: f64,
    pub variables: Vec<String>,
    pub hamiltonian: String,
    #[serde(default)]
    pub angular: Vec<bool>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

pub fn load(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let cfg: ScenarioConfig = toml::from_str(&text)
        .map_err(|e| anyhow::anyhow!("schema error in {}: {e}", path.display()))?;
    Ok(cfg)
}

pub fn load_reduced_file(path: &Path) -> anyhow::Result<ReducedFileBody> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read reduced-system file {}: {e}", path.display()))?;
    let parsed: ReducedFile = toml::from_str(&text)
        .map_err(|e| anyhow::anyhow!("schema error in {}: {e}", path.display()))?;
    Ok(parsed.reduced_system)
}
