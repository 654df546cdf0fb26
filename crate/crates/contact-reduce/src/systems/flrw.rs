//! Flat FLRW cosmology: H = v(-3Π²/8π + H_m(p/v, q)) - k v^(1/3) on the
//! gravitational pair (v, Π) coupled to a matter sector H_m. For k = 0 the
//! field D = v∂v + p∂p is an exact degree-one scaling symmetry and reduction
//! by ρ = v yields H₀ = 3Π²/8π - H_m with η = -dΠ + p dq; the reduced matter
//! momentum equation picks up the expansion friction term (3Π/4π) p. For
//! k ≠ 0 the curvature coupling is lifted (term degrees 1 and 1/3).

use super::{
    build_reduction_with_closed_form, param_or, validate_gradients, validate_symmetry, ParamMap,
    Scenario, ScenarioSpace, SystemBundle,
};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::lifted::{lift, CouplingSpec, LiftTerm, LiftedSystem};
use crate::phase::{Guard, Params, ScalarField, SymplecticSystem, VectorField};
use crate::reduction::{parse_chart, AdaptedChart, ReductionConfig};
use crate::scaling::{SampleBlock, SampleSpec, ScalingFunction, ScalingSymmetry};

/// Upstairs layout: positions (v, q), momenta (Pi, p).
const VARS: [&str; 4] = ["v", "q", "Pi", "p"];

fn vars() -> Vec<String> {
    VARS.iter().map(|s| s.to_string()).collect()
}

/// Substitute the matter Hamiltonian H_m(pm, qm) into the gravity template
/// v(-3Pi^2/8pi + H_m(p/v, q)). `matter` is an expression over (pm, qm).
fn full_hamiltonian(matter: &Expression) -> Result<Expression> {
    let v = vars();
    let pm = Expression::parse_owned("p/v", &v, &[])?;
    let qm = Expression::parse_owned("q", &v, &[])?;
    let hm = matter.compose(&[pm, qm])?;
    let gravity = Expression::parse_owned("-3*v*Pi^2/(8*pi)", &v, &[])?;
    let v_expr = Expression::parse_owned("v", &v, &[])?;
    gravity.added(&v_expr.multiplied(&hm)?)
}

pub fn default_matter() -> Result<Expression> {
    Expression::parse("(pm^2 + qm^2)/2", &["pm", "qm"], &[])
}

/// Flat-case system for an arbitrary matter expression over (pm, qm).
pub fn flrw_with_matter(matter: &Expression) -> Result<SymplecticSystem> {
    if matter.vars() != ["pm", "qm"] {
        return Err(Error::Contract(
            "matter Hamiltonian must be declared over (pm, qm)".into(),
        ));
    }
    let h = full_hamiltonian(matter)?;
    SymplecticSystem::new(
        vars(),
        ScalarField::from_expression(h),
        Params::empty(),
        Guard::expr_above(Expression::parse("v", &VARS, &[])?, 1e-10),
    )
}

pub fn symmetry() -> Result<ScalingSymmetry> {
    Ok(ScalingSymmetry::new(
        VectorField::parse(&["v", "0", "0", "p"], &vars(), &[])?,
        1.0,
    ))
}

fn chart() -> Result<AdaptedChart> {
    parse_chart(
        "v",
        &vars(),
        &["rho", "S", "qb", "pb"],
        &["v", "-Pi", "q", "-p/v"],
        &["rho", "qb", "-S", "-rho*pb"],
        vec![false, false, false],
        Guard::none(),
        &[],
    )
}

pub fn sample_spec() -> SampleSpec {
    SampleSpec {
        blocks: vec![
            SampleBlock::positive(1), // v
            SampleBlock::symmetric(1),
            SampleBlock::symmetric(1),
            SampleBlock::symmetric(1),
        ],
    }
}

/// Hand-coded reduced matter equations with the expansion friction term:
/// for state (q, pb, S) with physical momentum p̃ = -pb and Π = -S,
/// q̇ = ∂H_m/∂p̃ and dp̃/dτ = -∂H_m/∂q + (3Π/4π) p̃; the gravity pair obeys
/// dΠ/dτ = -(p̃ ∂H_m/∂p̃ - H₀). Used as the independent oracle for the
/// reduced right-hand side.
pub fn flrw_friction_rhs(matter: &Expression, state: &[f64]) -> Result<Vec<f64>> {
    let (qb, pb, s) = (state[0], state[1], state[2]);
    let p_phys = -pb;
    let pi = -s;
    let dv = matter.eval_with_grad(&[p_phys, qb], &[])?;
    let dhm_dp = dv.partials[0];
    let dhm_dq = dv.partials[1];
    let q_dot = dhm_dp;
    let p_phys_dot = -dhm_dq + 3.0 * pi / (4.0 * std::f64::consts::PI) * p_phys;
    // H0 = 3S^2/8π - H_m; S' = pb ∂H0/∂pb - H0.
    let h0 = 3.0 * s * s / (8.0 * std::f64::consts::PI) - dv.value;
    let s_dot = pb * dhm_dp - h0;
    Ok(vec![q_dot, -p_phys_dot, s_dot])
}

/// Lifted variant for k ≠ 0: terms a_v·[v(-3Π²/8π + H_m)] (degree 1) and
/// a_k·(-v^(1/3)) (degree 1/3).
pub fn lifted(matter: &Expression, k_curvature: f64) -> Result<LiftedSystem> {
    let base = flrw_with_matter(matter)?;
    let gravity_matter = full_hamiltonian(matter)?;
    let curvature = Expression::parse("-v^(1/3)", &VARS, &[])?;
    lift(
        &base,
        &symmetry()?,
        vec![
            LiftTerm::coupled(gravity_matter, CouplingSpec::new("av", 1.0, 1.0)),
            LiftTerm::coupled(curvature, CouplingSpec::new("ak", 1.0 / 3.0, k_curvature)),
        ],
        1e-6,
        crate::scaling::DEFAULT_SEED,
    )
}

pub fn build(params: ParamMap) -> Result<SystemBundle> {
    let matter = default_matter()?;
    let sys = flrw_with_matter(&matter)?;
    let d = symmetry()?;
    let spec = sample_spec();
    validate_gradients(&sys, &spec)?;
    let rho = ScalingFunction::new("v", Expression::parse("v", &VARS, &[])?);
    validate_symmetry(&sys, &d, std::slice::from_ref(&rho), &spec)?;

    let chart = chart()?;
    let rvars = chart.reduced_vars();
    // H0 = 3S²/8π - H_m(-pb, qb); harmonic matter gives (pb² + qb²)/2.
    let closed = Expression::parse_owned("3*S^2/(8*pi) - (pb^2 + qb^2)/2", &rvars, &[])?;
    let cfg = ReductionConfig::standard(2).with_sample_spec(spec.clone());
    let mut red =
        build_reduction_with_closed_form(&sys, &d, &rho, &chart, closed, Guard::none(), &cfg)?;
    red.provenance.parent = "flrw".into();

    let k_curv = param_or(params, "k", 1.0);
    let lifted_sys = lifted(&matter, k_curv)?;

    let scenarios = vec![Scenario {
        name: "matter-friction".into(),
        space: ScenarioSpace::Reduced { chart: "v".into() },
        initial: vec![0.5, -0.4, -1.0],
        span: (0.0, 5.0),
        expected: vec![],
        notes: "contracting phase (Π = 1): the reduced matter momentum gains \
                the (3Π/4π) p friction term"
            .into(),
    }];

    Ok(SystemBundle {
        id: "flrw".into(),
        doc: "Flat FLRW cosmology H = v(-3Pi^2/8pi + H_m(p/v, q)) with volume v, \
              expansion momentum Pi and a harmonic default matter sector. \
              D = v dv + p dp is a degree-one scaling symmetry; reducing by \
              rho = v gives H0 = 3Pi^2/8pi - H_m and the expansion friction \
              (3Pi/4pi) p in the matter momentum equation. Curvature (k != 0) \
              enters through the lifted bundle with term degrees (1, 1/3)."
            .into(),
        system: sys,
        symmetries: vec![d],
        scaling_functions: vec![rho],
        charts: vec![chart],
        reduced: vec![red],
        herglotz: None,
        lift: Some(lifted_sys),
        reduced_lift: None,
        scenarios,
        sample_spec: spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifted::lifted_scaling_symmetry;
    use crate::phase::contact_vf;
    use crate::scaling::{check_scaling_symmetry, sample_points, DEFAULT_SEED};

    #[test]
    fn bundle_builds_and_reduces_to_the_closed_form() {
        let b = build(&[]).unwrap();
        let red = b.reduction("v").unwrap();
        // H0 at (qb, pb, S) = (0.3, -0.4, 1.0).
        let h0 = red.contact.h(&[0.3, -0.4, 1.0]).unwrap();
        let want = 3.0 / (8.0 * std::f64::consts::PI) - (0.16 + 0.09) / 2.0;
        assert!((h0 - want).abs() < 1e-14);
    }

    #[test]
    fn reduced_rhs_matches_the_hand_coded_friction_form() {
        let b = build(&[]).unwrap();
        let red = b.reduction("v").unwrap();
        let matter = default_matter().unwrap();
        let samples = sample_points(
            &SampleSpec::standard(1),
            &Guard::none(),
            &[],
            100,
            DEFAULT_SEED,
        )
        .unwrap();
        for s2 in &samples {
            let state = [s2[0], s2[1], 0.7 * s2[0] - s2[1]];
            let a = contact_vf(&red.contact, &state).unwrap();
            let bb = flrw_friction_rhs(&matter, &state).unwrap();
            for (x, y) in a.iter().zip(&bb) {
                assert!((x - y).abs() < 1e-10, "{a:?} vs {bb:?}");
            }
        }
    }

    #[test]
    fn curved_case_lifts_to_a_degree_one_symmetry() {
        let matter = default_matter().unwrap();
        let l = lifted(&matter, 1.0).unwrap();
        let d = lifted_scaling_symmetry(&l, 1.0).unwrap();
        // Coefficients: (1-Λ) a: (0, 2/3); Λ b: (1, 1/3). Layout:
        // (v, q, b_av, b_ak, Pi, p, av, ak).
        let x = l.initial_state(&[1.0, 0.2, 0.3, 0.4]).unwrap();
        let v = d.field.eval(&x, &[]).unwrap();
        assert_eq!(v[6], 0.0); // a_v slot
        assert!((v[7] - 2.0 / 3.0).abs() < 1e-15); // a_k slot (a_k = 1)
        let spec = SampleSpec {
            blocks: vec![
                SampleBlock::positive(1),
                SampleBlock::symmetric(1),
                SampleBlock::symmetric(2),
                SampleBlock::symmetric(1),
                SampleBlock::symmetric(1),
                SampleBlock::positive(2),
            ],
        };
        let samples = sample_points(&spec, &l.system.guard, &[], 60, DEFAULT_SEED).unwrap();
        let rep = check_scaling_symmetry(&l.system, &d, &samples, 1e-8).unwrap();
        assert!(rep.verdict, "{rep}");
    }
}
