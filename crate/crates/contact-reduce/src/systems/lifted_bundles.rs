//! Systems without a direct scaling symmetry that gain a degree-one one
//! after lifting their couplings: the combined Kepler-Hooke potential
//! (term degrees -2, -2, 4) and a Laurent-series potential Σ a_j r^j
//! (term degrees 2j).

use super::{param_or, validate_gradients, ParamMap, Scenario, ScenarioSpace, SystemBundle};
use crate::error::Result;
use crate::expr::Expression;
use crate::lifted::{lift, CouplingSpec, LiftTerm, LiftedSystem};
use crate::phase::{Guard, Params, ScalarField, SymplecticSystem, VectorField};
use crate::scaling::{SampleSpec, ScalingSymmetry, DEFAULT_SEED};

const QP: [&str; 4] = ["q1", "q2", "p1", "p2"];

fn qp_vars() -> Vec<String> {
    QP.iter().map(|s| s.to_string()).collect()
}

fn base_symmetry() -> Result<ScalingSymmetry> {
    Ok(ScalingSymmetry::new(
        VectorField::parse(&["2*q1", "2*q2", "-p1", "-p2"], &qp_vars(), &[])?,
        -2.0,
    ))
}

fn r_guard() -> Result<Guard> {
    Ok(Guard::expr_above(
        Expression::parse("q1^2 + q2^2", &QP, &[])?,
        1e-10,
    ))
}

/// H = μ|p|²/2 - k_K/r + k_H r²: no scaling symmetry of any single degree,
/// but each term is D-homogeneous (degrees -2, -2, 4), so the lift carries
/// D̂ = D + 3μ∂μ + 3k_K∂k_K - 3k_H∂k_H - 2b^μ∂ - 2b^{k_K}∂ + 4b^{k_H}∂.
pub fn kepler_hooke_lift(mu: f64, k_kepler: f64, k_hooke: f64) -> Result<LiftedSystem> {
    let base_h = Expression::parse(
        "(p1^2 + p2^2)/2 - 1/sqrt(q1^2 + q2^2) + q1^2 + q2^2",
        &QP,
        &[],
    )?;
    let base = SymplecticSystem::new(
        qp_vars(),
        ScalarField::from_expression(base_h),
        Params::empty(),
        r_guard()?,
    )?;
    lift(
        &base,
        &base_symmetry()?,
        vec![
            LiftTerm::coupled(
                Expression::parse("(p1^2 + p2^2)/2", &QP, &[])?,
                CouplingSpec::new("mu", -2.0, mu),
            ),
            LiftTerm::coupled(
                Expression::parse("-1/sqrt(q1^2 + q2^2)", &QP, &[])?,
                CouplingSpec::new("kK", -2.0, k_kepler),
            ),
            LiftTerm::coupled(
                Expression::parse("q1^2 + q2^2", &QP, &[])?,
                CouplingSpec::new("kH", 4.0, k_hooke),
            ),
        ],
        1e-6,
        DEFAULT_SEED,
    )
}

pub fn build_kepler_hooke(params: ParamMap) -> Result<SystemBundle> {
    let mu = param_or(params, "mu", 1.0);
    let kk = param_or(params, "kK", 1.0);
    let kh = param_or(params, "kH", 1.0);
    let lifted = kepler_hooke_lift(mu, kk, kh)?;
    validate_gradients(&lifted.system, &lifted.sample_spec())?;

    let scenarios = vec![Scenario {
        name: "bounded-orbit".into(),
        space: ScenarioSpace::Original,
        initial: lifted.initial_state(&[1.0, 0.0, 0.0, 1.2])?,
        span: (0.0, 10.0),
        expected: vec![],
        notes: "generic bounded motion in the combined potential".into(),
    }];

    Ok(SystemBundle {
        id: "kepler_hooke".into(),
        doc: "Combined Kepler-Hooke system H = mu |p|^2/2 - kK/r + kH r^2. The \
              base field 2q dq - p dp is not a symmetry of H, but each term is \
              homogeneous (degrees -2, -2, 4); the lifted system on (q, b, p, a) \
              carries an exact degree-one scaling symmetry."
            .into(),
        system: lifted.system.clone(),
        symmetries: vec![],
        scaling_functions: vec![],
        charts: vec![],
        reduced: vec![],
        herglotz: None,
        lift: Some(lifted),
        reduced_lift: None,
        scenarios,
        sample_spec: SampleSpec::standard(2),
    })
}

/// Laurent-series potential: H = μ|p|²/2 + a_{-1} r^{-1} + a_1 r + a_2 r²,
/// with r^j of degree 2j under the base symmetry.
pub fn laurent_lift(mu: f64, coeffs: &[(i32, f64)]) -> Result<LiftedSystem> {
    // The base Hamiltonian only anchors the guard and variable set; the
    // terms carry the dynamics of the lift.
    let base_h = Expression::parse("(p1^2 + p2^2)/2", &QP, &[])?;
    let base = SymplecticSystem::new(
        qp_vars(),
        ScalarField::from_expression(base_h),
        Params::empty(),
        r_guard()?,
    )?;
    let mut terms = vec![LiftTerm::coupled(
        Expression::parse("(p1^2 + p2^2)/2", &QP, &[])?,
        CouplingSpec::new("mu", -2.0, mu),
    )];
    for (j, value) in coeffs {
        let name = if *j < 0 {
            format!("am{}", -j)
        } else {
            format!("a{j}")
        };
        let expr = Expression::parse(&format!("sqrt(q1^2 + q2^2)^({j})"), &QP, &[])?;
        terms.push(LiftTerm::coupled(
            expr,
            CouplingSpec::new(&name, 2.0 * *j as f64, *value),
        ));
    }
    lift(&base, &base_symmetry()?, terms, 1e-6, DEFAULT_SEED)
}

pub fn build_laurent(params: ParamMap) -> Result<SystemBundle> {
    let mu = param_or(params, "mu", 1.0);
    let coeffs = [
        (-1, param_or(params, "am1", 1.0)),
        (1, param_or(params, "a1", 1.0)),
        (2, param_or(params, "a2", 1.0)),
    ];
    let lifted = laurent_lift(mu, &coeffs)?;
    validate_gradients(&lifted.system, &lifted.sample_spec())?;

    Ok(SystemBundle {
        id: "laurent".into(),
        doc: "General central potential as a Laurent series: H = mu |p|^2/2 + \
              sum_j a_j r^j with exponents {-1, 1, 2}. Each term r^j has degree \
              2j under 2q dq - p dp, so the lifted system carries a degree-one \
              scaling symmetry D + 3 mu dmu + sum (1-2j) a_j da_j + ..."
            .into(),
        system: lifted.system.clone(),
        symmetries: vec![],
        scaling_functions: vec![],
        charts: vec![],
        reduced: vec![],
        herglotz: None,
        lift: Some(lifted),
        reduced_lift: None,
        scenarios: vec![],
        sample_spec: SampleSpec::standard(2),
    })
}
