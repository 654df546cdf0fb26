//! Bundled, validated model catalogue: each bundle carries its Hamiltonian,
//! scaling symmetries, scaling functions, adapted charts, closed-form
//! reductions and reference scenarios. Closed forms are asserted against the
//! generic reduction machinery at construction, so the catalogue doubles as
//! a regression oracle.

mod flrw;
mod kepler;
mod lifted_bundles;
mod nbody;
mod oscillator;

pub use flrw::{flrw_friction_rhs, flrw_with_matter};
pub use kepler::cross_reduction_parallelism;
pub use nbody::{
    kepler_blowup_embedding, kepler_blowup_pushforward, BlowupRhs, NBodyBlowup, KEPLER_EMBED_FACTOR,
};

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::herglotz::HerglotzSystem;
use crate::lifted::{LiftedSystem, ReducedLiftedSystem};
use crate::phase::{gradient_fd_residual, SymplecticSystem};
use crate::reduction::{contact_reduce, AdaptedChart, ReducedContactSystem, ReductionConfig};
use crate::scaling::{
    check_scaling_function, check_scaling_symmetry, sample_points, SampleSpec, ScalingFunction,
    ScalingSymmetry, DEFAULT_SEED,
};

/// Where a scenario's initial data lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioSpace {
    Original,
    Reduced { chart: String },
    Blowup,
}

/// Machine-readable reference scenario: initial conditions plus expected
/// diagnostics consumed by the acceptance tests.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub space: ScenarioSpace,
    pub initial: Vec<f64>,
    pub span: (f64, f64),
    pub expected: Vec<(String, f64)>,
    pub notes: String,
}

impl Scenario {
    pub fn expectation(&self, key: &str) -> Option<f64> {
        self.expected
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
    }
}

/// A fully validated model: construction re-derives every closed form with
/// the generic machinery and fails loudly on disagreement.
#[derive(Debug)]
pub struct SystemBundle {
    pub id: String,
    pub doc: String,
    pub system: SymplecticSystem,
    /// Direct scaling symmetries of the full Hamiltonian (empty when only
    /// the lifted system carries one).
    pub symmetries: Vec<ScalingSymmetry>,
    pub scaling_functions: Vec<ScalingFunction>,
    pub charts: Vec<AdaptedChart>,
    /// Reduced systems, one per chart, with closed-form Hamiltonians.
    pub reduced: Vec<ReducedContactSystem>,
    pub herglotz: Option<HerglotzSystem>,
    pub lift: Option<LiftedSystem>,
    pub reduced_lift: Option<ReducedLiftedSystem>,
    pub scenarios: Vec<Scenario>,
    pub sample_spec: SampleSpec,
}

impl SystemBundle {
    pub fn chart(&self, id: &str) -> Result<&AdaptedChart> {
        self.charts
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::UnknownSystem(format!("{}:{id}", self.id)))
    }

    pub fn reduction(&self, chart_id: &str) -> Result<&ReducedContactSystem> {
        self.reduced
            .iter()
            .find(|r| r.provenance.chart_id == chart_id)
            .ok_or_else(|| Error::UnknownSystem(format!("{}:{chart_id}", self.id)))
    }

    pub fn scaling_function(&self, id: &str) -> Result<&ScalingFunction> {
        self.scaling_functions
            .iter()
            .find(|f| f.id == id)
            .ok_or_else(|| Error::UnknownSystem(format!("{}:{id}", self.id)))
    }

    pub fn scenario(&self, name: &str) -> Result<&Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSystem(format!("{}:{name}", self.id)))
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        sample_points(
            &self.sample_spec,
            &self.system.guard,
            &self.system.params.values,
            count,
            seed,
        )
    }
}

/// Parameter map passed to [`instantiate`]; later entries override earlier
/// ones and bundle defaults.
pub type ParamMap<'a> = &'a [(&'a str, f64)];

fn param_or(params: ParamMap, name: &str, default: f64) -> f64 {
    params
        .iter()
        .rev()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .unwrap_or(default)
}

pub fn known_ids() -> &'static [&'static str] {
    &[
        "kepler",
        "oscillator2d",
        "kepler_hooke",
        "laurent",
        "flrw",
        "nbody_blowup",
    ]
}

/// Build and validate a bundle.
pub fn instantiate(id: &str, params: ParamMap) -> Result<SystemBundle> {
    match id {
        "kepler" => kepler::build(params),
        "oscillator2d" => oscillator::build(params),
        "kepler_hooke" => lifted_bundles::build_kepler_hooke(params),
        "laurent" => lifted_bundles::build_laurent(params),
        "flrw" => flrw::build(params),
        "nbody_blowup" => nbody::build(params),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

/// Reference scenarios of a bundle (initial conditions plus the expected
/// diagnostics the acceptance suite checks).
pub fn reference_scenarios(id: &str) -> Result<Vec<Scenario>> {
    Ok(instantiate(id, &[])?.scenarios)
}

// ---------------------------------------------------------------------------
// Shared construction-time validation helpers

/// Gradient providers must agree with central finite differences to 1e-6.
pub(crate) fn validate_gradients(sys: &SymplecticSystem, spec: &SampleSpec) -> Result<()> {
    let samples = sample_points(spec, &sys.guard, &sys.params.values, 100, DEFAULT_SEED)?;
    let res = gradient_fd_residual(&sys.hamiltonian, &sys.params.values, &samples)?;
    if res > 1e-6 {
        return Err(Error::Validation(format!(
            "gradient/finite-difference residual {res:.3e} exceeds 1e-6"
        )));
    }
    Ok(())
}

/// Certify a direct symmetry and every declared scaling function.
pub(crate) fn validate_symmetry(
    sys: &SymplecticSystem,
    d: &ScalingSymmetry,
    scaling_functions: &[ScalingFunction],
    spec: &SampleSpec,
) -> Result<()> {
    let samples = sample_points(spec, &sys.guard, &sys.params.values, 100, DEFAULT_SEED)?;
    let rep = check_scaling_symmetry(sys, d, &samples, 1e-6)?;
    if !rep.verdict {
        return Err(Error::Validation(format!(
            "scaling symmetry failed certification:\n{rep}"
        )));
    }
    for f in scaling_functions {
        let r = check_scaling_function(d, f, &samples, &sys.params.values)?;
        if r > 1e-6 {
            return Err(Error::Validation(format!(
                "scaling function `{}` residual {r:.3e} exceeds 1e-6",
                f.id
            )));
        }
    }
    Ok(())
}

/// Run the generic reduction for a chart, assert the closed form matches it
/// on mapped samples, then install the closed form as the bundled reduced
/// Hamiltonian (nicer expressions for serialization; provably equivalent).
pub(crate) fn build_reduction_with_closed_form(
    sys: &SymplecticSystem,
    d: &ScalingSymmetry,
    rho: &ScalingFunction,
    chart: &AdaptedChart,
    closed_form: Expression,
    reduced_guard: crate::phase::Guard,
    cfg: &ReductionConfig,
) -> Result<ReducedContactSystem> {
    let mut red = contact_reduce(sys, d, rho, chart, reduced_guard.clone(), cfg)?;
    let params = &sys.params.values;
    let guard = sys.guard.clone();
    let samples = sample_points(&cfg.sample_spec, &guard, params, cfg.samples, cfg.seed)?;
    let mut worst: f64 = 0.0;
    for x in &samples {
        if !chart.domain.admissible(x, params) {
            continue;
        }
        let reduced_pt = chart.reduced_point(x, params)?;
        let a = red.contact.h(&reduced_pt)?;
        let b = closed_form.eval(&reduced_pt, params)?;
        worst = worst.max((a - b).abs() / b.abs().max(1.0));
    }
    if worst > 1e-10 {
        return Err(Error::Validation(format!(
            "closed-form reduced Hamiltonian for chart `{}` disagrees with the generic \
             reduction: residual {worst:.3e}",
            chart.id
        )));
    }
    red.contact = crate::phase::ContactSystem::new(
        red.contact.var_names.clone(),
        crate::phase::ScalarField::from_expression(closed_form),
        red.contact.degree,
        red.contact.params.clone(),
        reduced_guard,
    )?;
    Ok(red)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_id_is_rejected() {
        let err = instantiate("three_body_choreography", &[]).unwrap_err();
        assert!(matches!(err, Error::UnknownSystem(_)));
    }

    #[test]
    fn every_known_id_instantiates() {
        for id in known_ids() {
            let bundle = instantiate(id, &[]).unwrap();
            assert_eq!(&bundle.id, id);
            assert!(!bundle.doc.is_empty());
        }
    }

    #[test]
    fn reference_scenarios_are_exposed() {
        let scenarios = reference_scenarios("kepler").unwrap();
        assert!(scenarios.iter().any(|s| s.name == "circular"));
        assert!(scenarios.iter().any(|s| s.name == "torus-connecting"));
    }
}
