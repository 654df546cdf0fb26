//! Construction of the reduced contact system -H/ρ^Λ from a symplectic
//! system with a scaling symmetry, realized concretely through user-supplied
//! adapted charts; the degree-one normalization -|H₀|^(1/Λ); the
//! scaling-function change law (ρ̃/ρ)^(1-Λ); and the symplectic lift for
//! round-trip testing.

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::integrate::{compare_series, ComparisonReport, ReducedSeries, Trajectory};
use crate::phase::{ContactSystem, Guard, ScalarField, SymplecticSystem};
use crate::scaling::{sample_points, SampleSpec, ScalingFunction, ScalingSymmetry};

/// Chart adapted to a scaling symmetry: forward takes upstairs Darboux
/// coordinates to `(ρ, S, q̄_1.., p̄_1..)` where the symmetry becomes ρ∂_ρ
/// and the Liouville form pulls back to ρ·(dS - p̄·dq̄).
#[derive(Debug, Clone)]
pub struct AdaptedChart {
    pub id: String,
    /// Upstairs degrees of freedom n; the chart has 2n coordinates.
    pub n_dof: usize,
    /// 2n expressions over the upstairs variables, ordered (ρ, S, q̄.., p̄..).
    pub forward: Vec<Expression>,
    /// 2n expressions over the chart variables, inverting `forward`.
    pub inverse: Vec<Expression>,
    pub chart_vars: Vec<String>,
    /// Angular flags for the reduced coordinates (q̄.., p̄.., S layout).
    pub angular: Vec<bool>,
    /// Region of the upstairs space where the chart is valid (used for
    /// validation sampling on top of the system guard).
    pub domain: Guard,
}

impl AdaptedChart {
    pub fn new(
        id: &str,
        forward: Vec<Expression>,
        inverse: Vec<Expression>,
        angular: Vec<bool>,
        domain: Guard,
    ) -> Result<Self> {
        if forward.len() % 2 != 0 || forward.is_empty() {
            return Err(Error::Contract("chart needs 2n forward components".into()));
        }
        let n = forward.len() / 2;
        if inverse.len() != 2 * n {
            return Err(Error::Contract(
                "chart inverse component count mismatch".into(),
            ));
        }
        let chart_vars = inverse[0].vars().to_vec();
        if chart_vars.len() != 2 * n {
            return Err(Error::Contract(
                "chart variable count does not match dimension".into(),
            ));
        }
        if angular.len() != 2 * n - 1 {
            return Err(Error::Contract(
                "angular flags must cover the reduced coordinates".into(),
            ));
        }
        Ok(AdaptedChart {
            id: id.to_string(),
            n_dof: n,
            forward,
            inverse,
            chart_vars,
            angular,
            domain,
        })
    }

    /// Names of the reduced coordinates in (q̄.., p̄.., S) order.
    pub fn reduced_vars(&self) -> Vec<String> {
        let n = self.n_dof;
        let mut out = Vec::with_capacity(2 * n - 1);
        out.extend_from_slice(&self.chart_vars[2..2 * n]);
        out.push(self.chart_vars[1].clone());
        out
    }

    /// Forward map to the chart tuple (ρ, S, q̄.., p̄..).
    pub fn forward_point(&self, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        self.forward.iter().map(|e| e.eval(x, params)).collect()
    }

    /// Project to the reduced contact layout (q̄.., p̄.., S).
    pub fn reduced_point(&self, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let y = self.forward_point(x, params)?;
        Ok(chart_tuple_to_reduced(&y))
    }

    /// d/dt of the reduced coordinates along an upstairs velocity.
    pub fn reduced_velocity(&self, x: &[f64], xdot: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_dof;
        let mut rates = Vec::with_capacity(2 * n);
        for e in &self.forward {
            rates.push(e.directional_derivative(x, params, xdot)?);
        }
        Ok(chart_tuple_to_reduced(&rates))
    }

    /// Inverse from the chart tuple (ρ, S, q̄.., p̄..).
    pub fn inverse_point(&self, y: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        self.inverse.iter().map(|e| e.eval(y, params)).collect()
    }

    /// Upstairs representative of a reduced point on the slice ρ = 1.
    pub fn slice_representative(&self, reduced: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let y = reduced_to_chart_tuple(reduced, 1.0);
        self.inverse_point(&y, params)
    }

    /// Map a reparametrized upstairs trajectory into a reduced-space series
    /// parametrized by τ (states and dstate/dτ).
    pub fn reduced_series(
        &self,
        traj: &Trajectory,
        lambda: f64,
        params: &[f64],
    ) -> Result<ReducedSeries> {
        let rho_expr = &self.forward[0];
        let mut tau = Vec::with_capacity(traj.len());
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(traj.len());
        let mut derivs = Vec::with_capacity(traj.len());
        let two_pi = std::f64::consts::TAU;
        for s in &traj.samples {
            let tv = s.tau.ok_or_else(|| {
                Error::Contract("upstairs trajectory must be reparametrized first".into())
            })?;
            let mut red = self.reduced_point(&s.state, params)?;
            let red_dot = self.reduced_velocity(&s.state, &s.deriv, params)?;
            let rho = rho_expr.eval(&s.state, params)?;
            // Unwrap angular coordinates into a continuous representative;
            // interpolation across a 2π jump would be meaningless.
            if let Some(prev) = states.last() {
                for (i, flag) in self.angular.iter().enumerate() {
                    if *flag {
                        red[i] -= ((red[i] - prev[i]) / two_pi).round() * two_pi;
                    }
                }
            }
            // dt/dτ = ρ^(1-Λ)
            let dt_dtau = rho.powf(1.0 - lambda);
            tau.push(tv);
            states.push(red);
            derivs.push(red_dot.iter().map(|v| v * dt_dtau).collect());
        }
        Ok(ReducedSeries {
            tau,
            states,
            derivs,
        })
    }
}

/// (ρ, S, q̄.., p̄..) -> (q̄.., p̄.., S)
pub fn chart_tuple_to_reduced(y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len() - 1);
    out.extend_from_slice(&y[2..]);
    out.push(y[1]);
    out
}

/// (q̄.., p̄.., S) with a chosen ρ -> (ρ, S, q̄.., p̄..)
pub fn reduced_to_chart_tuple(reduced: &[f64], rho: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(reduced.len() + 1);
    out.push(rho);
    out.push(*reduced.last().unwrap());
    out.extend_from_slice(&reduced[..reduced.len() - 1]);
    out
}

/// Residuals of the chart identities over a validation sample set.
#[derive(Debug, Clone)]
pub struct ChartReport {
    pub rho_mismatch: f64,
    pub inverse_residual: f64,
    pub pushforward_residual: f64,
    pub pullback_residual: f64,
    pub samples: usize,
}

impl ChartReport {
    pub fn ok(&self, cfg: &ReductionConfig) -> bool {
        self.rho_mismatch < cfg.tol_inverse
            && self.inverse_residual < cfg.tol_inverse
            && self.pushforward_residual < cfg.tol_pushforward
            && self.pullback_residual < cfg.tol_pullback
    }
}

#[derive(Debug, Clone)]
pub struct ReductionConfig {
    pub samples: usize,
    pub seed: u64,
    pub sample_spec: SampleSpec,
    pub tol_inverse: f64,
    pub tol_pushforward: f64,
    pub tol_pullback: f64,
    pub tol_consistency: f64,
}

impl ReductionConfig {
    pub fn standard(n_dof: usize) -> Self {
        ReductionConfig {
            samples: 100,
            seed: crate::scaling::DEFAULT_SEED,
            sample_spec: SampleSpec::standard(n_dof),
            tol_inverse: 1e-10,
            tol_pushforward: 1e-8,
            tol_pullback: 1e-8,
            tol_consistency: 1e-8,
        }
    }

    pub fn with_sample_spec(mut self, spec: SampleSpec) -> Self {
        self.sample_spec = spec;
        self
    }
}

/// Validate the chart identities against the symmetry and scaling function.
pub fn validate_chart(
    sys: &SymplecticSystem,
    d: &ScalingSymmetry,
    rho: &ScalingFunction,
    chart: &AdaptedChart,
    cfg: &ReductionConfig,
) -> Result<ChartReport> {
    let params = &sys.params.values;
    let n = chart.n_dof;
    let guard = combined_guard(sys, chart);
    let samples = sample_points(&cfg.sample_spec, &guard, params, cfg.samples, cfg.seed)?;

    let mut rho_mismatch: f64 = 0.0;
    let mut inverse_res: f64 = 0.0;
    let mut pushforward_res: f64 = 0.0;
    let mut pullback_res: f64 = 0.0;

    for x in &samples {
        let y = chart.forward_point(x, params)?;
        let r = rho.rho.eval(x, params)?;
        rho_mismatch = rho_mismatch.max((y[0] - r).abs() / r.abs().max(1.0));

        let back = chart.inverse_point(&y, params)?;
        for (a, b) in back.iter().zip(x) {
            inverse_res = inverse_res.max((a - b).abs() / b.abs().max(1.0));
        }

        // Pushforward of D must be ρ ∂_ρ: J_fwd · D = (ρ, 0, .., 0).
        let dv = d.field.eval(x, params)?;
        for (row, e) in chart.forward.iter().enumerate() {
            let rate = e.directional_derivative(x, params, &dv)?;
            let want = if row == 0 { y[0] } else { 0.0 };
            pushforward_res = pushforward_res.max((rate - want).abs() / y[0].abs().max(1.0));
        }

        // Pullback identity: i_D ω = ρ (dS - p̄·dq̄) as 1-forms upstairs.
        let lam = liouville_form(&dv, n);
        let grad_s = chart.forward[1].eval_with_grad(x, params)?.partials;
        let mut rhs = vec![0.0; 2 * n];
        for (k, slot) in rhs.iter_mut().enumerate() {
            *slot = grad_s[k];
        }
        for j in 0..n - 1 {
            let pb = y[2 + (n - 1) + j];
            let grad_qb = chart.forward[2 + j].eval_with_grad(x, params)?.partials;
            for (k, slot) in rhs.iter_mut().enumerate() {
                *slot -= pb * grad_qb[k];
            }
        }
        for (k, l) in lam.iter().enumerate() {
            let scale = l.abs().max(1.0);
            pullback_res = pullback_res.max((l - y[0] * rhs[k]).abs() / scale);
        }
    }

    Ok(ChartReport {
        rho_mismatch,
        inverse_residual: inverse_res,
        pushforward_residual: pushforward_res,
        pullback_residual: pullback_res,
        samples: samples.len(),
    })
}

fn combined_guard(sys: &SymplecticSystem, chart: &AdaptedChart) -> Guard {
    // Both the system guard and the chart domain must accept a sample.
    let sys_guard = sys.guard.clone();
    let dom = chart.domain.clone();
    Guard::closure(
        std::sync::Arc::new(move |x: &[f64], p: &[f64]| {
            sys_guard.admissible(x, p) && dom.admissible(x, p)
        }),
        "system guard and chart domain",
    )
}

fn liouville_form(d: &[f64], n: usize) -> Vec<f64> {
    let mut lam = vec![0.0; 2 * n];
    for a in 0..n {
        lam[a] = d[n + a];
        lam[n + a] = -d[a];
    }
    lam
}

/// Where a reduced system came from.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub parent: String,
    pub rho_id: String,
    pub chart_id: String,
    pub lambda: f64,
}

/// Contact Hamiltonian system produced by a contact reduction, with its
/// provenance and the chart that realizes the quotient.
#[derive(Debug, Clone)]
pub struct ReducedContactSystem {
    pub contact: ContactSystem,
    pub chart: AdaptedChart,
    pub provenance: Provenance,
}

impl ReducedContactSystem {
    pub fn h0_expression(&self) -> &Expression {
        self.contact
            .hamiltonian
            .expression()
            .expect("reduced systems are expression-backed")
    }
}

/// Contact reduction: H₀(q̄, p̄, S) = -H(inverse(1, S, q̄, p̄)), with the
/// Λ-Hamiltonian field of H₀ generating the reduced dynamics. The chart is
/// validated first and construction is refused on residuals above tolerance.
pub fn contact_reduce(
    sys: &SymplecticSystem,
    d: &ScalingSymmetry,
    rho: &ScalingFunction,
    chart: &AdaptedChart,
    reduced_guard: Guard,
    cfg: &ReductionConfig,
) -> Result<ReducedContactSystem> {
    let report = validate_chart(sys, d, rho, chart, cfg)?;
    if !report.ok(cfg) {
        return Err(Error::Validation(format!(
            "chart `{}` failed validation: rho mismatch {:.3e}, inverse {:.3e}, \
             pushforward {:.3e}, pullback {:.3e}",
            chart.id,
            report.rho_mismatch,
            report.inverse_residual,
            report.pushforward_residual,
            report.pullback_residual
        )));
    }

    let h_expr = sys.hamiltonian.expression().ok_or_else(|| {
        Error::Contract("contact_reduce needs an expression-backed Hamiltonian".into())
    })?;
    let h0 = compose_reduced_hamiltonian(h_expr, chart)?;

    let reduced_vars = chart.reduced_vars();
    let contact = ContactSystem::new(
        reduced_vars,
        ScalarField::from_expression(h0),
        d.degree,
        sys.params.clone(),
        reduced_guard,
    )?;
    let red = ReducedContactSystem {
        contact,
        chart: chart.clone(),
        provenance: Provenance {
            parent: String::new(),
            rho_id: rho.id.clone(),
            chart_id: chart.id.clone(),
            lambda: d.degree,
        },
    };

    // Consistency: H₀ ∘ chart = -H/ρ^Λ on admissible samples.
    let params = &sys.params.values;
    let guard = combined_guard(sys, chart);
    let samples = sample_points(&cfg.sample_spec, &guard, params, cfg.samples, cfg.seed)?;
    let mut worst: f64 = 0.0;
    for x in &samples {
        let reduced = chart.reduced_point(x, params)?;
        let h0v = red.contact.h(&reduced)?;
        let hv = sys.h(x)?;
        let rv = rho.rho.eval(x, params)?;
        let want = -hv / rv.powf(d.degree);
        worst = worst.max((h0v - want).abs() / want.abs().max(1.0));
    }
    if worst > cfg.tol_consistency {
        return Err(Error::Validation(format!(
            "reduced Hamiltonian disagrees with -H/rho^lambda: residual {worst:.3e}"
        )));
    }
    Ok(red)
}

/// Substitute the chart inverse (restricted to the slice ρ = 1) into an
/// upstairs expression, producing an expression over (q̄.., p̄.., S).
pub fn compose_reduced_hamiltonian(
    h_expr: &Expression,
    chart: &AdaptedChart,
) -> Result<Expression> {
    Ok(compose_through_slice(h_expr, chart)?.negated())
}

/// H ∘ inverse(1, S, q̄, p̄) without the sign flip.
pub fn compose_through_slice(expr: &Expression, chart: &AdaptedChart) -> Result<Expression> {
    let n = chart.n_dof;
    let reduced_vars = chart.reduced_vars();
    let params = expr.params().to_vec();

    // Chart variables (ρ, S, q̄.., p̄..) rendered over the reduced set.
    let mut chart_var_exprs = Vec::with_capacity(2 * n);
    chart_var_exprs.push(Expression::constant(1.0, &reduced_vars, &params));
    chart_var_exprs.push(Expression::var(2 * n - 2, &reduced_vars, &params));
    for j in 0..2 * (n - 1) {
        chart_var_exprs.push(Expression::var(j, &reduced_vars, &params));
    }

    let mut upstairs_exprs = Vec::with_capacity(2 * n);
    for inv in &chart.inverse {
        upstairs_exprs.push(inv.compose(&chart_var_exprs)?);
    }
    expr.compose(&upstairs_exprs)
}

/// Degree-one normalization -|H₀|^(1/Λ) on the region |H₀| > ε. The
/// resulting contact field is parallel to the Λ-field of H₀ with pointwise
/// factor [`normalized_factor`].
pub fn normalized_reduction(red: &ReducedContactSystem, epsilon: f64) -> Result<ContactSystem> {
    let lambda = red.contact.degree;
    if lambda == 0.0 {
        return Err(Error::Contract(
            "degree must be nonzero to normalize".into(),
        ));
    }
    let h0 = red.h0_expression();
    let h = h0.absolute().powered(1.0 / lambda).negated();
    let guard = red
        .contact
        .guard
        .clone()
        .and_expr_above(h0.absolute(), epsilon);
    ContactSystem::new(
        red.contact.var_names.clone(),
        ScalarField::from_expression(h),
        1.0,
        red.contact.params.clone(),
        guard,
    )
}

/// Pointwise factor c with X_{-|H₀|^(1/Λ)} = c · X^Λ_{H₀}:
/// c = -sign(H₀) |H₀|^((1-Λ)/Λ) / Λ.
pub fn normalized_factor(h0: f64, lambda: f64) -> f64 {
    -h0.signum() * h0.abs().powf((1.0 - lambda) / lambda) / lambda
}

/// σ^(1-Λ) with σ = ρ̃(x)/ρ(x): the pointwise ratio between the reduced
/// fields induced by two scaling functions.
pub fn scaling_change_factor(
    rho: &ScalingFunction,
    rho_tilde: &ScalingFunction,
    lambda: f64,
    x: &[f64],
    params: &[f64],
) -> Result<f64> {
    let a = rho.rho.eval(x, params)?;
    let b = rho_tilde.rho.eval(x, params)?;
    if a == 0.0 || b == 0.0 {
        return Err(Error::Domain {
            context: "scaling_change_factor".into(),
            message: "scaling function vanishes at the evaluation point".into(),
        });
    }
    Ok((b / a).powf(1.0 - lambda))
}

/// Symplectic lift of a reduced system: on canonical coordinates
/// (Q₀, Q, P₀, P) = (S, q̄, ρ, -ρ p̄) the Hamiltonian
/// H = -P₀^Λ H₀(Q, -P/P₀, Q₀) recovers the parent system through the chart.
pub fn symplectic_lift(red: &ReducedContactSystem) -> Result<SymplecticSystem> {
    let n = red.chart.n_dof;
    let lambda = red.contact.degree;
    let h0 = red.h0_expression();
    let params = h0.params().to_vec();

    // Lift variables: positions (S, q̄..), momenta (rho, P..).
    let mut lift_vars: Vec<String> = Vec::with_capacity(2 * n);
    lift_vars.push(red.chart.chart_vars[1].clone());
    lift_vars.extend_from_slice(&red.chart.chart_vars[2..2 + (n - 1)]);
    lift_vars.push(red.chart.chart_vars[0].clone());
    for j in 0..n - 1 {
        lift_vars.push(format!("P{}", j + 1));
    }

    // H₀'s variables are (q̄.., p̄.., S).
    let mut replacements = Vec::with_capacity(2 * n - 1);
    for j in 0..n - 1 {
        replacements.push(Expression::var(1 + j, &lift_vars, &params));
    }
    let rho_var = Expression::var(n, &lift_vars, &params);
    for j in 0..n - 1 {
        let p_var = Expression::var(n + 1 + j, &lift_vars, &params);
        // p̄_j = -P_j / P₀
        let ratio = p_var.multiplied(&rho_var.powered(-1.0))?.negated();
        replacements.push(ratio);
    }
    replacements.push(Expression::var(0, &lift_vars, &params));

    let h0_sub = h0.compose(&replacements)?;
    let h_lift = rho_var.powered(lambda).multiplied(&h0_sub)?.negated();

    let guard = Guard::expr_above(rho_var, 0.0);
    SymplecticSystem::new(
        lift_vars,
        ScalarField::from_expression(h_lift),
        red.contact.params.clone(),
        guard,
    )
}

/// Map an upstairs point into the lift coordinates (S, q̄.., ρ, P..) with
/// P = -ρ p̄.
pub fn lift_coordinates(chart: &AdaptedChart, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
    let n = chart.n_dof;
    let y = chart.forward_point(x, params)?;
    let mut out = Vec::with_capacity(2 * n);
    out.push(y[1]);
    out.extend_from_slice(&y[2..2 + (n - 1)]);
    out.push(y[0]);
    for j in 0..n - 1 {
        out.push(-y[0] * y[2 + (n - 1) + j]);
    }
    Ok(out)
}

/// Dual-integration comparison: map a reparametrized upstairs trajectory
/// through the chart and compare against a natively integrated reduced
/// trajectory on a common τ grid.
pub fn compare_reduced(
    traj_up: &Trajectory,
    red: &ReducedContactSystem,
    traj_down: &Trajectory,
    n_grid: usize,
) -> Result<ComparisonReport> {
    let params = &red.contact.params.values;
    let up = red
        .chart
        .reduced_series(traj_up, red.contact.degree, params)?;
    let down = ReducedSeries::from_native(traj_down);
    // Initial points must correspond through the chart.
    let x0 = &up.states[0];
    let y0 = &down.states[0];
    for (i, (a, b)) in x0.iter().zip(y0).enumerate() {
        let mut diff = (a - b).abs();
        if red.chart.angular[i] {
            let tau = std::f64::consts::TAU;
            diff = (a - b).rem_euclid(tau).min((b - a).rem_euclid(tau));
        }
        if diff > 1e-10 {
            return Err(Error::Contract(format!(
                "initial points do not correspond through the chart: \
                 coordinate {i} differs by {diff:.3e}"
            )));
        }
    }
    compare_series(
        &up,
        &down,
        &red.chart.reduced_vars(),
        &red.chart.angular,
        n_grid,
    )
}

/// The four planar-Kepler chart variable sets appear across bundles and
/// tests; building one from name strings keeps call sites short.
pub fn parse_chart(
    id: &str,
    upstairs_vars: &[String],
    chart_vars: &[&str],
    forward: &[&str],
    inverse: &[&str],
    angular: Vec<bool>,
    domain: Guard,
    params: &[String],
) -> Result<AdaptedChart> {
    let fwd = forward
        .iter()
        .map(|t| Expression::parse_owned(t, upstairs_vars, params))
        .collect::<Result<Vec<_>>>()?;
    let chart_var_names: Vec<String> = chart_vars.iter().map(|s| s.to_string()).collect();
    let inv = inverse
        .iter()
        .map(|t| Expression::parse_owned(t, &chart_var_names, params))
        .collect::<Result<Vec<_>>>()?;
    AdaptedChart::new(id, fwd, inv, angular, domain)
}
