//! 2d harmonic oscillator H = (|p|² + k|q|²)/2 with the degree-one symmetry
//! D = (q∂q + p∂p)/2 obtained from the action S = p·q/2, scaling function
//! ρ = |q|², and the Herglotz counterpart L = 2S² + (k - θ̇²)/2.

use super::{
    build_reduction_with_closed_form, param_or, validate_gradients, validate_symmetry, ParamMap,
    Scenario, ScenarioSpace, SystemBundle,
};
use crate::error::Result;
use crate::expr::Expression;
use crate::herglotz::HerglotzSystem;
use crate::phase::{Guard, Params, ScalarField, SymplecticSystem, VectorField};
use crate::reduction::{parse_chart, AdaptedChart, ReductionConfig};
use crate::scaling::{SampleSpec, ScalingFunction, ScalingSymmetry};

const QP: [&str; 4] = ["q1", "q2", "p1", "p2"];
const K: [&str; 1] = ["k"];

fn qp_vars() -> Vec<String> {
    QP.iter().map(|s| s.to_string()).collect()
}

fn k_params() -> Vec<String> {
    vec!["k".to_string()]
}

pub fn system(k: f64) -> Result<SymplecticSystem> {
    let h = Expression::parse("(p1^2 + p2^2 + k*(q1^2 + q2^2))/2", &QP, &K)?;
    SymplecticSystem::new(
        qp_vars(),
        ScalarField::from_expression(h),
        Params::new(&[("k", k)]),
        Guard::expr_above(Expression::parse("q1^2 + q2^2", &QP, &K)?, 1e-10),
    )
    .map(|s| s.separable())
}

pub fn symmetry() -> Result<ScalingSymmetry> {
    Ok(ScalingSymmetry::new(
        VectorField::parse(&["q1/2", "q2/2", "p1/2", "p2/2"], &qp_vars(), &k_params())?,
        1.0,
    ))
}

pub fn chart() -> Result<AdaptedChart> {
    parse_chart(
        "rho",
        &qp_vars(),
        &["rho", "S", "theta", "pb"],
        &[
            "q1^2 + q2^2",
            "-(q1*p1 + q2*p2)/(2*(q1^2 + q2^2))",
            "atan2(q2, q1)",
            "-(q1*p2 - q2*p1)/(q1^2 + q2^2)",
        ],
        &[
            "sqrt(rho)*cos(theta)",
            "sqrt(rho)*sin(theta)",
            "-2*sqrt(rho)*S*cos(theta) + sqrt(rho)*pb*sin(theta)",
            "-2*sqrt(rho)*S*sin(theta) - sqrt(rho)*pb*cos(theta)",
        ],
        vec![true, false, false],
        Guard::none(),
        &k_params(),
    )
}

pub fn herglotz(k: f64) -> Result<HerglotzSystem> {
    let vars = ["theta", "vtheta", "S"];
    let l = Expression::parse("2*S^2 + (k - vtheta^2)/2", &vars, &K)?;
    Ok(HerglotzSystem::new(
        vars.iter().map(|s| s.to_string()).collect(),
        ScalarField::from_expression(l),
        1.0,
        Params::new(&[("k", k)]),
        Guard::none(),
    )?
    .with_legendre_inverse(vec![Expression::parse(
        "-p_theta",
        &["theta", "p_theta", "S"],
        &K,
    )?]))
}

pub fn build(params: ParamMap) -> Result<SystemBundle> {
    let k = param_or(params, "k", 1.0);
    let sys = system(k)?;
    let d = symmetry()?;
    let spec = SampleSpec::standard(2);
    validate_gradients(&sys, &spec)?;
    let rho = ScalingFunction::new("rho", Expression::parse("q1^2 + q2^2", &QP, &K)?);
    validate_symmetry(&sys, &d, std::slice::from_ref(&rho), &spec)?;

    let chart = chart()?;
    let rvars = chart.reduced_vars();
    let closed = Expression::parse_owned("-2*S^2 - (k + pb^2)/2", &rvars, &k_params())?;
    let mut red = build_reduction_with_closed_form(
        &sys,
        &d,
        &rho,
        &chart,
        closed,
        Guard::none(),
        &ReductionConfig::standard(2),
    )?;
    red.provenance.parent = "oscillator2d".into();

    let tau = std::f64::consts::TAU;
    let scenarios = vec![
        Scenario {
            name: "circular".into(),
            space: ScenarioSpace::Original,
            initial: vec![1.0, 0.0, 0.0, 1.0],
            span: (0.0, tau),
            expected: vec![("loop_action".into(), 0.0)],
            notes: "circular orbit; the loop action vanishes".into(),
        },
        Scenario {
            name: "eccentric".into(),
            space: ScenarioSpace::Original,
            initial: vec![1.0, 0.0, 0.2, 0.8],
            span: (0.0, tau),
            expected: vec![("loop_action".into(), 0.0)],
            notes: "eccentric orbit: S oscillates with zero loop integral".into(),
        },
    ];

    Ok(SystemBundle {
        id: "oscillator2d".into(),
        doc: "2d harmonic oscillator H = (|p|^2 + k|q|^2)/2 with the degree-one \
              scaling symmetry (q dq + p dp)/2 generated through S = p.q/2; \
              reduction by rho = |q|^2 gives the contact Hamiltonian \
              -2S^2 - (k + p^2)/2, the Legendre dual of the Herglotz Lagrangian \
              2S^2 + (k - v^2)/2."
            .into(),
        system: sys,
        symmetries: vec![d],
        scaling_functions: vec![rho],
        charts: vec![chart],
        reduced: vec![red],
        herglotz: Some(herglotz(k)?),
        lift: None,
        reduced_lift: None,
        scenarios,
        sample_spec: spec,
    })
}
