//! Planar Kepler problem H = |p|²/2 - 1/|q| with its degree -2 scaling
//! symmetry D = 2q∂q - p∂p, four scaling functions (ρ = |q|^(1/2),
//! κ = 1/|p|, the angular momentum G and the dilational momentum J = p·q),
//! the four corresponding contact reductions, the -2-Herglotz counterpart
//! and the lifted variant with couplings (μ, k).

use super::{
    build_reduction_with_closed_form, param_or, validate_gradients, validate_symmetry, ParamMap,
    Scenario, ScenarioSpace, SystemBundle,
};
use crate::error::Result;
use crate::expr::Expression;
use crate::herglotz::HerglotzSystem;
use crate::lifted::{lift, CouplingSpec, LiftTerm, LiftedSystem, ReducedCoupling};
use crate::phase::{Guard, Params, ScalarField, SymplecticSystem, VectorField};
use crate::reduction::{parse_chart, AdaptedChart, ReductionConfig};
use crate::scaling::{SampleSpec, ScalingFunction, ScalingSymmetry, DEFAULT_SEED};

pub const QP: [&str; 4] = ["q1", "q2", "p1", "p2"];

pub fn qp_vars() -> Vec<String> {
    QP.iter().map(|s| s.to_string()).collect()
}

pub fn system() -> Result<SymplecticSystem> {
    let h = Expression::parse("(p1^2 + p2^2)/2 - 1/sqrt(q1^2 + q2^2)", &QP, &[])?;
    let guard = Guard::expr_above(Expression::parse("q1^2 + q2^2", &QP, &[])?, 1e-10);
    SymplecticSystem::new(
        qp_vars(),
        ScalarField::from_expression(h),
        Params::empty(),
        guard,
    )
}

pub fn symmetry() -> Result<ScalingSymmetry> {
    Ok(ScalingSymmetry::new(
        VectorField::parse(&["2*q1", "2*q2", "-p1", "-p2"], &qp_vars(), &[])?,
        -2.0,
    ))
}

fn scaling_functions() -> Result<Vec<ScalingFunction>> {
    Ok(vec![
        ScalingFunction::new("rho", Expression::parse("(q1^2 + q2^2)^(1/4)", &QP, &[])?),
        ScalingFunction::new("kappa", Expression::parse("1/sqrt(p1^2 + p2^2)", &QP, &[])?),
        ScalingFunction::new("G", Expression::parse("q1*p2 - q2*p1", &QP, &[])?),
        ScalingFunction::new("J", Expression::parse("q1*p1 + q2*p2", &QP, &[])?),
    ])
}

pub fn rho_chart() -> Result<AdaptedChart> {
    parse_chart(
        "rho",
        &qp_vars(),
        &["rho", "S", "theta", "pb"],
        &[
            "(q1^2 + q2^2)^(1/4)",
            "-2*(q1*p1 + q2*p2)/(q1^2 + q2^2)^(1/4)",
            "atan2(q2, q1)",
            "-(q1*p2 - q2*p1)/(q1^2 + q2^2)^(1/4)",
        ],
        &[
            "rho^2*cos(theta)",
            "rho^2*sin(theta)",
            "(-S/(2*rho))*cos(theta) + (pb/rho)*sin(theta)",
            "(-S/(2*rho))*sin(theta) - (pb/rho)*cos(theta)",
        ],
        vec![true, false, false],
        Guard::none(),
        &[],
    )
}

fn kappa_chart() -> Result<AdaptedChart> {
    parse_chart(
        "kappa",
        &qp_vars(),
        &["kap", "S", "phi", "pb"],
        &[
            "1/sqrt(p1^2 + p2^2)",
            "-(q1*p1 + q2*p2)*sqrt(p1^2 + p2^2)",
            "atan2(p2, p1)",
            "-(q1*p2 - q2*p1)*sqrt(p1^2 + p2^2)",
        ],
        &[
            "-kap^2*(S*cos(phi) + pb*sin(phi))",
            "kap^2*(pb*cos(phi) - S*sin(phi))",
            "cos(phi)/kap",
            "sin(phi)/kap",
        ],
        vec![true, false, false],
        Guard::expr_above(Expression::parse("p1^2 + p2^2", &QP, &[])?, 1e-10),
        &[],
    )
}

fn g_chart() -> Result<AdaptedChart> {
    // Positive-branch domain J > 0, G > 0; the Darboux action slot is the
    // polar angle itself.
    let domain = Guard::expr_above(Expression::parse("q1*p1 + q2*p2", &QP, &[])?, 1e-6)
        .and_expr_above(Expression::parse("q1*p2 - q2*p1", &QP, &[])?, 1e-6);
    parse_chart(
        "G",
        &qp_vars(),
        &["g", "theta", "xi", "eta"],
        &[
            "q1*p2 - q2*p1",
            "atan2(q2, q1)",
            "log((q1*p1 + q2*p2)/(q1^2 + q2^2)^(1/4))",
            "2*(q1*p1 + q2*p2)/(q1*p2 - q2*p1)",
        ],
        &[
            "(g*(eta/2)*exp(-xi))^2*cos(theta)",
            "(g*(eta/2)*exp(-xi))^2*sin(theta)",
            "(exp(2*xi)/(g*eta/2))*cos(theta) - (exp(2*xi)/(g*(eta/2)^2))*sin(theta)",
            "(exp(2*xi)/(g*eta/2))*sin(theta) + (exp(2*xi)/(g*(eta/2)^2))*cos(theta)",
        ],
        vec![false, false, true],
        domain,
        &[],
    )
}

fn j_chart() -> Result<AdaptedChart> {
    let domain = Guard::expr_above(Expression::parse("q1*p1 + q2*p2", &QP, &[])?, 1e-6);
    parse_chart(
        "J",
        &qp_vars(),
        &["j", "Sj", "theta", "pb"],
        &[
            "q1*p1 + q2*p2",
            "2*log((q1^2 + q2^2)^(1/4)/(q1*p1 + q2*p2))",
            "atan2(q2, q1)",
            "-(q1*p2 - q2*p1)/(q1*p1 + q2*p2)",
        ],
        &[
            "(j*exp(Sj/2))^2*cos(theta)",
            "(j*exp(Sj/2))^2*sin(theta)",
            "(cos(theta) + pb*sin(theta))/(j*exp(Sj))",
            "(sin(theta) - pb*cos(theta))/(j*exp(Sj))",
        ],
        vec![true, false, false],
        domain,
        &[],
    )
}

/// Closed-form reduced Hamiltonians per chart, in each chart's Darboux
/// variables (q̄, p̄, S).
pub fn closed_form(chart_id: &str, reduced_vars: &[String]) -> Result<Expression> {
    let text = match chart_id {
        "rho" => "1 - (S^2/4 + pb^2)/2",
        "kappa" => "1/sqrt(S^2 + pb^2) - 1/2",
        "G" => "(2*((eta/2)*exp(-xi))^2 - (eta/2)^2 - 1)/(2*((eta/2)*exp(-xi))^4)",
        "J" => "(2*exp(Sj) - pb^2 - 1)/(2*exp(2*Sj))",
        other => return Err(crate::error::Error::UnknownSystem(format!("chart {other}"))),
    };
    Expression::parse_owned(text, reduced_vars, &[])
}

/// Invariant coordinates (θ, J/ρ, G/ρ) on the quotient, expressed in each
/// chart's reduced variables: the common frame for cross-chart comparisons.
pub fn invariants_from_chart(chart_id: &str, reduced_vars: &[String]) -> Result<Vec<Expression>> {
    let texts: [&str; 3] = match chart_id {
        "rho" => ["theta", "-S/2", "-pb"],
        "kappa" => [
            "phi - atan2(-pb, -S)",
            "-S/(S^2 + pb^2)^(1/4)",
            "-pb/(S^2 + pb^2)^(1/4)",
        ],
        "G" => ["theta", "exp(xi)", "2*exp(xi)/eta"],
        "J" => ["theta", "exp(-Sj/2)", "-pb*exp(-Sj/2)"],
        other => return Err(crate::error::Error::UnknownSystem(format!("chart {other}"))),
    };
    texts
        .iter()
        .map(|t| Expression::parse_owned(t, reduced_vars, &[]))
        .collect()
}

/// The -2-Herglotz counterpart L = S²/8 - (θ')²/2 - 1 dual to the
/// ρ-reduction.
pub fn herglotz() -> Result<HerglotzSystem> {
    let vars = ["theta", "vtheta", "S"];
    let l = Expression::parse("S^2/8 - vtheta^2/2 - 1", &vars, &[])?;
    Ok(HerglotzSystem::new(
        vars.iter().map(|s| s.to_string()).collect(),
        ScalarField::from_expression(l),
        -2.0,
        Params::empty(),
        Guard::none(),
    )?
    .with_legendre_inverse(vec![Expression::parse(
        "-p_theta",
        &["theta", "p_theta", "S"],
        &[],
    )?]))
}

/// Kepler with couplings reinstated: H = μ |p|²/2 - k/|q|, both terms of
/// degree -2 under D.
pub fn lifted(mu: f64, k: f64) -> Result<LiftedSystem> {
    let kinetic = Expression::parse("(p1^2 + p2^2)/2", &QP, &[])?;
    let potential = Expression::parse("-1/sqrt(q1^2 + q2^2)", &QP, &[])?;
    lift(
        &system()?,
        &symmetry()?,
        vec![
            LiftTerm::coupled(kinetic, CouplingSpec::new("mu", -2.0, mu)),
            LiftTerm::coupled(potential, CouplingSpec::new("k", -2.0, k)),
        ],
        1e-6,
        DEFAULT_SEED,
    )
}

/// Chart adapted to the degree-one lifted symmetry
/// D̂ = D + 3(μ∂μ + k∂k) - 2(b∂b), with ρ̂ = |q|^(1/2).
pub fn lifted_chart() -> Result<AdaptedChart> {
    let vars = ["q1", "q2", "b_mu", "b_k", "p1", "p2", "mu", "k"];
    let lifted_vars: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
    let jt = "(-S - 2*pb2*bt_mu - 2*pb3*bt_k)/2";
    let inv_p1 = format!("(({jt})*cos(theta) + pb1*sin(theta))/rho");
    let inv_p2 = format!("(({jt})*sin(theta) - pb1*cos(theta))/rho");
    let inverse: Vec<&str> = vec![
        "rho^2*cos(theta)",
        "rho^2*sin(theta)",
        "bt_mu/rho^2",
        "bt_k/rho^2",
        &inv_p1,
        &inv_p2,
        "-pb2*rho^3",
        "-pb3*rho^3",
    ];
    parse_chart(
        "lifted-rho",
        &lifted_vars,
        &["rho", "S", "theta", "bt_mu", "bt_k", "pb1", "pb2", "pb3"],
        &[
            "(q1^2 + q2^2)^(1/4)",
            "(-2*(q1*p1 + q2*p2) + 2*mu*b_mu + 2*k*b_k)/(q1^2 + q2^2)^(1/4)",
            "atan2(q2, q1)",
            "b_mu*sqrt(q1^2 + q2^2)",
            "b_k*sqrt(q1^2 + q2^2)",
            "-(q1*p2 - q2*p1)/(q1^2 + q2^2)^(1/4)",
            "-mu/(q1^2 + q2^2)^(3/4)",
            "-k/(q1^2 + q2^2)^(3/4)",
        ],
        &inverse,
        vec![true, false, false, false, false, false, false],
        Guard::none(),
        &[],
    )
}

/// Pairwise parallelism of the four reduced fields: pushed into the common
/// invariant coordinates (θ, J/ρ, G/ρ), the field of scaling function ρ̃
/// equals (ρ̃/ρ)^(1-Λ) times the field of ρ at every point. Returns the
/// worst relative residual and the number of pair-point comparisons.
pub fn cross_reduction_parallelism(b: &SystemBundle, count: usize) -> Result<(f64, usize)> {
    let domain = b.chart("G")?.domain.clone();
    let merged = b.system.guard.clone().merge(&domain);
    let samples =
        crate::scaling::sample_points(&SampleSpec::standard(2), &merged, &[], count, DEFAULT_SEED)?;
    let mut worst: f64 = 0.0;
    let mut comparisons = 0usize;
    for x in &samples {
        // Per chart: the reduced field pushed into invariant coordinates,
        // plus the scaling-function value driving the change factor.
        let mut fields: Vec<(f64, Vec<f64>)> = Vec::with_capacity(4);
        for red in &b.reduced {
            let chart = &red.chart;
            let pt = chart.reduced_point(x, &[])?;
            let f = crate::phase::lambda_vf(&red.contact, &pt)?;
            let maps = invariants_from_chart(&chart.id, &chart.reduced_vars())?;
            let pushed: Vec<f64> = maps
                .iter()
                .map(|m| m.directional_derivative(&pt, &[], &f))
                .collect::<Result<_>>()?;
            let sf = b
                .scaling_function(&red.provenance.rho_id)?
                .rho
                .eval(x, &[])?;
            fields.push((sf, pushed));
        }
        for i in 0..fields.len() {
            for j in 0..fields.len() {
                if i == j {
                    continue;
                }
                let (_, vi) = &fields[i];
                let (_, vj) = &fields[j];
                let factor = crate::reduction::scaling_change_factor(
                    b.scaling_function(&b.reduced[i].provenance.rho_id)?,
                    b.scaling_function(&b.reduced[j].provenance.rho_id)?,
                    -2.0,
                    x,
                    &[],
                )?;
                let norm_j = vj.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut res = 0.0f64;
                for (a, bb) in vj.iter().zip(vi) {
                    res = res.max((a - factor * bb).abs());
                }
                worst = worst.max(res / norm_j.max(1e-12));
                comparisons += 1;
            }
        }
    }
    Ok((worst, comparisons))
}

fn scenarios() -> Vec<Scenario> {
    let tau = std::f64::consts::TAU;
    let pi = std::f64::consts::PI;
    vec![
        Scenario {
            name: "circular".into(),
            space: ScenarioSpace::Original,
            initial: vec![1.0, 0.0, 0.0, 1.0],
            span: (0.0, tau),
            expected: vec![
                ("energy".into(), -0.5),
                ("period".into(), tau),
                ("loop_action".into(), 3.0 * pi),
            ],
            notes: "circular orbit at E = -1/2; one period closes to 1e-8".into(),
        },
        Scenario {
            name: "acceptance-ellipse".into(),
            space: ScenarioSpace::Original,
            initial: vec![1.0, 0.2, 0.1, 1.1],
            span: (0.0, 0.0),
            expected: vec![],
            notes: "elliptic orbit used by the reduction-equivalence check; span \
                    is one radial period computed from the energy"
                .into(),
        },
        Scenario {
            name: "homothetic-infall".into(),
            space: ScenarioSpace::Original,
            initial: vec![1.0, 0.0, -0.8, 0.0],
            span: (0.0, 10.0),
            expected: vec![],
            notes: "radial infall (p parallel to q, inward): hits the collision \
                    guard in finite time"
                .into(),
        },
        Scenario {
            name: "reduced-circular".into(),
            space: ScenarioSpace::Reduced {
                chart: "rho".into(),
            },
            initial: vec![0.0, -1.0, 0.0],
            span: (0.0, tau),
            expected: vec![("h0".into(), 0.5)],
            notes: "fixed point of (Jt, Gt) with Gt = 1: theta advances uniformly".into(),
        },
        Scenario {
            name: "torus-connecting".into(),
            space: ScenarioSpace::Reduced {
                chart: "rho".into(),
            },
            initial: vec![0.0, -std::f64::consts::SQRT_2, 0.0],
            // The torus is normally repelling (rate e^{∫Jt dτ}), so the
            // certified horizon stays short of where integrator noise
            // amplifies past the ball radius.
            span: (0.0, 16.0),
            expected: vec![("jt_limit".into(), std::f64::consts::SQRT_2)],
            notes: "collision-torus orbit on H0 = 0 from (Jt, Gt) = (0, sqrt 2); \
                    tends to the homothetic fixed point (sqrt 2, 0)"
                .into(),
        },
    ]
}

pub fn build(params: ParamMap) -> Result<SystemBundle> {
    let sys = system()?;
    let d = symmetry()?;
    let spec = SampleSpec::standard(2);
    validate_gradients(&sys, &spec)?;
    let funcs = scaling_functions()?;
    validate_symmetry(&sys, &d, &funcs, &spec)?;

    let charts = vec![rho_chart()?, kappa_chart()?, g_chart()?, j_chart()?];
    let cfg = ReductionConfig::standard(2);
    let mut reduced = Vec::with_capacity(4);
    for (chart, rho) in charts.iter().zip(&funcs) {
        let rvars = chart.reduced_vars();
        let closed = closed_form(&chart.id, &rvars)?;
        let reduced_guard = match chart.id.as_str() {
            "kappa" => {
                Guard::expr_above(Expression::parse_owned("S^2 + pb^2", &rvars, &[])?, 1e-12)
            }
            "G" => Guard::expr_above(Expression::parse_owned("eta", &rvars, &[])?, 1e-9),
            _ => Guard::none(),
        };
        let mut red =
            build_reduction_with_closed_form(&sys, &d, rho, chart, closed, reduced_guard, &cfg)?;
        red.provenance.parent = "kepler".into();
        reduced.push(red);
    }

    let mu = param_or(params, "mu", 1.0);
    let k = param_or(params, "k", 1.0);
    let lifted_sys = lifted(mu, k)?;
    let chart_hat = lifted_chart()?;
    let rho_hat = ScalingFunction::new(
        "rho",
        Expression::parse_owned("(q1^2 + q2^2)^(1/4)", &lifted_sys.lifted_vars, &[])?,
    );
    let rvars = chart_hat.reduced_vars();
    let pushed = vec![
        ReducedCoupling {
            name: "mu".into(),
            weight: 3.0,
            pushed: Expression::parse_owned("-pb2", &rvars, &[])?,
        },
        ReducedCoupling {
            name: "k".into(),
            weight: 3.0,
            pushed: Expression::parse_owned("-pb3", &rvars, &[])?,
        },
    ];
    let lift_cfg = ReductionConfig::standard(4).with_sample_spec(lifted_sys.sample_spec());
    let reduced_lift = crate::lifted::reduce_lifted(
        &lifted_sys,
        &rho_hat,
        &chart_hat,
        pushed,
        Guard::none(),
        &lift_cfg,
    )?;

    Ok(SystemBundle {
        id: "kepler".into(),
        doc: "Planar Kepler problem H = |p|^2/2 - 1/|q| with the degree -2 scaling \
              symmetry D = 2q dq - p dp; scaling functions rho = |q|^(1/2), \
              kappa = 1/|p|, G = angular momentum, J = dilational momentum; the \
              rho-reduction blows up collision orbits onto the torus H0 = 0 with \
              homothetic fixed points at Jt = ±sqrt 2."
            .into(),
        system: sys,
        symmetries: vec![d],
        scaling_functions: funcs,
        charts,
        reduced,
        herglotz: Some(herglotz()?),
        lift: Some(lifted_sys),
        reduced_lift: Some(reduced_lift),
        scenarios: scenarios(),
        sample_spec: spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::lambda_vf;
    use crate::scaling::sample_points;

    #[test]
    fn bundle_builds_and_validates() {
        let b = build(&[]).unwrap();
        assert_eq!(b.charts.len(), 4);
        assert_eq!(b.reduced.len(), 4);
        assert!(b.reduced_lift.is_some());
    }

    #[test]
    fn all_four_reductions_match_the_tabulated_equations_of_motion() {
        // The tabulated RHS per scaling function, written in each chart's
        // Darboux variables, must agree with the generic Λ-field to 1e-10.
        let b = build(&[]).unwrap();
        let spec = SampleSpec::standard(2);
        // Sample within every chart's domain at once (J > 0, G > 0).
        let domain = b.chart("G").unwrap().domain.clone();
        let merged = b.system.guard.clone().merge(&domain);
        let samples = sample_points(&spec, &merged, &[], 100, DEFAULT_SEED).unwrap();

        for x in &samples {
            for red in &b.reduced {
                let chart = &red.chart;
                let pt = chart.reduced_point(x, &[]).unwrap();
                let v = lambda_vf(&red.contact, &pt).unwrap();
                let rhs = tabulated_rhs(&chart.id, &pt);
                for (a, bb) in v.iter().zip(&rhs) {
                    assert!(
                        (a - bb).abs() < 1e-10 * bb.abs().max(1.0),
                        "chart {}: {v:?} vs {rhs:?}",
                        chart.id
                    );
                }
            }
        }
    }

    /// Hand-transcribed scale-invariant equations of motion, converted to
    /// the Darboux variable rates of each chart.
    fn tabulated_rhs(chart_id: &str, pt: &[f64]) -> Vec<f64> {
        match chart_id {
            "rho" => {
                // (theta, pb, S): Jt = -S/2, Gt = -pb.
                let (_, pb, s) = (pt[0], pt[1], pt[2]);
                let jt = -s / 2.0;
                let gt = -pb;
                let h0 = 1.0 - (jt * jt + gt * gt) / 2.0;
                let jt_dot = gt * gt / 2.0 - h0;
                let gt_dot = -jt * gt / 2.0;
                let theta_dot = gt;
                vec![theta_dot, -gt_dot, -2.0 * jt_dot]
            }
            "kappa" => {
                // (phi, pb, S): J_k = -S, G_k = -pb, R = sqrt(Jk^2 + Gk^2).
                let (_, pb, s) = (pt[0], pt[1], pt[2]);
                let jk = -s;
                let gk = -pb;
                let r = (jk * jk + gk * gk).sqrt();
                let hk = 1.0 / r - 0.5;
                let jk_dot = -2.0 * hk + gk * gk / r.powi(3);
                let gk_dot = -gk * jk / r.powi(3);
                let phi_dot = gk / r.powi(3);
                vec![phi_dot, -gk_dot, -jk_dot]
            }
            "G" => {
                // (xi, eta, theta): J_G = eta/2, rho_G = (eta/2) e^{-xi}.
                let (xi, eta, _) = (pt[0], pt[1], pt[2]);
                let jg = eta / 2.0;
                let rg = jg * (-xi).exp();
                let hg = (2.0 * rg * rg - jg * jg - 1.0) / (2.0 * rg.powi(4));
                let jg_dot = 1.0 / (rg * rg) - 2.0 * hg;
                let rg_dot = jg / (2.0 * rg.powi(3));
                let theta_dot = 1.0 / rg.powi(4);
                // xi = log(J_G/rho_G), eta = 2 J_G.
                let xi_dot = jg_dot / jg - rg_dot / rg;
                let eta_dot = 2.0 * jg_dot;
                vec![xi_dot, eta_dot, theta_dot]
            }
            "J" => {
                // (theta, pb, Sj): G_J = -pb, rho_J = e^{Sj/2}.
                let (_, pb, sj) = (pt[0], pt[1], pt[2]);
                let gj = -pb;
                let rj = (sj / 2.0).exp();
                let hj = (2.0 * rj * rj - gj * gj - 1.0) / (2.0 * rj.powi(4));
                let gj_dot = gj * (2.0 * hj - 1.0 / (rj * rj));
                let rj_dot = rj * hj - gj * gj / (2.0 * rj.powi(3));
                let theta_dot = gj / rj.powi(4);
                vec![theta_dot, -gj_dot, 2.0 * rj_dot / rj]
            }
            other => panic!("unknown chart {other}"),
        }
    }

    #[test]
    fn reduced_field_vanishes_at_the_collision_torus_fixed_points() {
        let b = build(&[]).unwrap();
        let red = b.reduction("rho").unwrap();
        let sqrt2 = std::f64::consts::SQRT_2;
        for jt in [sqrt2, -sqrt2] {
            let pt = [0.7, 0.0, -2.0 * jt]; // arbitrary angle
            let v = lambda_vf(&red.contact, &pt).unwrap();
            for c in v {
                assert!(c.abs() < 1e-12, "field component {c} at Jt = {jt}");
            }
        }
    }

    #[test]
    fn cross_chart_invariant_maps_agree() {
        // All four (theta, Jt, Gt) extractors must agree pointwise when fed
        // the image of one upstairs state.
        let b = build(&[]).unwrap();
        let domain = b.chart("G").unwrap().domain.clone();
        let merged = b.system.guard.clone().merge(&domain);
        let samples =
            sample_points(&SampleSpec::standard(2), &merged, &[], 40, DEFAULT_SEED).unwrap();
        for x in &samples {
            let mut reference: Option<Vec<f64>> = None;
            for red in &b.reduced {
                let chart = &red.chart;
                let pt = chart.reduced_point(x, &[]).unwrap();
                let maps = invariants_from_chart(&chart.id, &chart.reduced_vars()).unwrap();
                let vals: Vec<f64> = maps.iter().map(|m| m.eval(&pt, &[]).unwrap()).collect();
                match &reference {
                    None => reference = Some(vals),
                    Some(r) => {
                        // Angle may differ by 2π between atan2 branches.
                        let dtheta = (vals[0] - r[0]).rem_euclid(std::f64::consts::TAU);
                        let dtheta = dtheta.min(std::f64::consts::TAU - dtheta);
                        assert!(dtheta < 1e-9, "theta branch mismatch {dtheta}");
                        for i in 1..3 {
                            assert!(
                                (vals[i] - r[i]).abs() < 1e-9 * r[i].abs().max(1.0),
                                "invariant {i}: {vals:?} vs {r:?} (chart {})",
                                chart.id
                            );
                        }
                    }
                }
            }
        }
    }
}
