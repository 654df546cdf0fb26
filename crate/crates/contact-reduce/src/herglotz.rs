//! Herglotz and Λ-Herglotz variational dynamics, the Legendre bridge to
//! contact systems, Lagrangian scale reduction and lifted Lagrangians.
//!
//! State layout for a Herglotz system with n degrees of freedom:
//! (q_1..q_n, v_1..v_n, S) where v = q' in the system's own time.

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::integrate::OdeRhs;
use crate::phase::{ContactSystem, Guard, Params, ScalarField, VectorField};
use crate::scaling::{sample_points, SampleSpec};
use std::sync::Arc;

/// Contact Lagrangian system L(q, q', S) of degree Λ (Λ = 1 is the classic
/// Herglotz case, Ṡ = L; general Λ uses S' = L + (1-Λ)E with the energy
/// E = ∂L/∂q'·q' - L).
#[derive(Debug, Clone)]
pub struct HerglotzSystem {
    pub n_dof: usize,
    pub var_names: Vec<String>,
    pub lagrangian: ScalarField,
    pub degree: f64,
    pub params: Params,
    pub guard: Guard,
    /// Optional closed-form Legendre inverse q'(q, p, S), one expression per
    /// velocity over (q.., p.., S); bundled quadratic systems provide it.
    pub legendre_inverse: Option<Vec<Expression>>,
}

impl HerglotzSystem {
    pub fn new(
        var_names: Vec<String>,
        lagrangian: ScalarField,
        degree: f64,
        params: Params,
        guard: Guard,
    ) -> Result<Self> {
        if var_names.len() % 2 != 1 {
            return Err(Error::Contract(
                "herglotz state must be (q.., v.., S)".into(),
            ));
        }
        if lagrangian.arity() != var_names.len() {
            return Err(Error::Contract(
                "lagrangian arity does not match the variable count".into(),
            ));
        }
        Ok(HerglotzSystem {
            n_dof: var_names.len() / 2,
            var_names,
            lagrangian,
            degree,
            params,
            guard,
            legendre_inverse: None,
        })
    }

    pub fn with_legendre_inverse(mut self, inverse: Vec<Expression>) -> Self {
        self.legendre_inverse = Some(inverse);
        self
    }

    pub fn dim(&self) -> usize {
        2 * self.n_dof + 1
    }

    pub fn lagrangian_value(&self, state: &[f64]) -> Result<f64> {
        self.lagrangian.value(state, &self.params.values)
    }

    /// E = ∂L/∂q'·q' - L.
    pub fn energy(&self, state: &[f64]) -> Result<f64> {
        let n = self.n_dof;
        let dv = self.lagrangian.value_and_grad(state, &self.params.values)?;
        let pv: f64 = (0..n).map(|i| dv.partials[n + i] * state[n + i]).sum();
        Ok(pv - dv.value)
    }
}

/// Ordinary Lagrangian system L(q, q') with state (q.., v..).
#[derive(Debug, Clone)]
pub struct LagrangianSystem {
    pub n_dof: usize,
    pub var_names: Vec<String>,
    pub lagrangian: ScalarField,
    pub params: Params,
    pub guard: Guard,
}

impl LagrangianSystem {
    pub fn new(
        var_names: Vec<String>,
        lagrangian: ScalarField,
        params: Params,
        guard: Guard,
    ) -> Result<Self> {
        if var_names.len() % 2 != 0 {
            return Err(Error::Contract(
                "lagrangian state must be (q.., v..)".into(),
            ));
        }
        if lagrangian.arity() != var_names.len() {
            return Err(Error::Contract(
                "lagrangian arity does not match the variable count".into(),
            ));
        }
        Ok(LagrangianSystem {
            n_dof: var_names.len() / 2,
            var_names,
            lagrangian,
            params,
            guard,
        })
    }

    /// View as a Herglotz system with no S dependence (classic limit): the
    /// extremals satisfy the ordinary Euler-Lagrange equations and S
    /// integrates the action along them.
    pub fn to_herglotz(&self) -> Result<HerglotzSystem> {
        let expr = self
            .lagrangian
            .expression()
            .ok_or_else(|| Error::Contract("expression-backed Lagrangian required".into()))?;
        let mut vars = self.var_names.clone();
        vars.push("S".into());
        let params = expr.params().to_vec();
        let replacements: Vec<Expression> = (0..2 * self.n_dof)
            .map(|i| Expression::var(i, &vars, &params))
            .collect();
        let lifted = expr.compose(&replacements)?;
        let guard = self.guard.compose(&replacements)?;
        HerglotzSystem::new(
            vars,
            ScalarField::from_expression(lifted),
            1.0,
            self.params.clone(),
            guard,
        )
    }
}

fn solve_linear(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let n = b.len();
    let mut pivots: Vec<f64> = Vec::with_capacity(n);
    for col in 0..n {
        let (best, mag) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if mag == 0.0 {
            return Err(Error::Regularity {
                message: "singular velocity Hessian".into(),
                condition: f64::INFINITY,
            });
        }
        m.swap(col, best);
        b.swap(col, best);
        pivots.push(mag);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let cond = pivots.iter().cloned().fold(0.0, f64::max)
        / pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    Ok((x, cond))
}

/// Right-hand side of the classic Herglotz equations (degree 1):
/// d/dt(∂L/∂q') = ∂L/∂S ∂L/∂q' + ∂L/∂q, Ṡ = L, with q'' solved against the
/// velocity Hessian.
pub fn herglotz_rhs(sys: &HerglotzSystem, state: &[f64]) -> Result<Vec<f64>> {
    if sys.degree != 1.0 {
        return Err(Error::Contract(format!(
            "herglotz_rhs requires degree 1, got {}; use lambda_herglotz_rhs",
            sys.degree
        )));
    }
    lambda_herglotz_rhs(sys, state)
}

/// Λ-Herglotz right-hand side: the Euler-Lagrange part is unchanged and the
/// action law becomes S' = L + (1-Λ)E.
pub fn lambda_herglotz_rhs(sys: &HerglotzSystem, state: &[f64]) -> Result<Vec<f64>> {
    sys.guard.check(state, &sys.params.values)?;
    let n = sys.n_dof;
    let params = &sys.params.values;
    let dv = sys.lagrangian.value_and_grad(state, params)?;
    let energy: f64 = (0..n)
        .map(|i| dv.partials[n + i] * state[n + i])
        .sum::<f64>()
        - dv.value;
    let s_dot = dv.value + (1.0 - sys.degree) * energy;

    let hess = sys.lagrangian.hessian(state, params)?;
    let m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| hess[n + i][n + j]).collect())
        .collect();
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let mut acc = dv.partials[2 * n] * dv.partials[n + i] + dv.partials[i];
        for j in 0..n {
            acc -= hess[n + i][j] * state[n + j];
        }
        acc -= hess[n + i][2 * n] * s_dot;
        rhs[i] = acc;
    }
    let (accel, cond) = solve_linear(m, rhs)?;
    if cond > 1e12 {
        return Err(Error::Regularity {
            message: "velocity Hessian is numerically singular".into(),
            condition: cond,
        });
    }
    let mut out = Vec::with_capacity(2 * n + 1);
    out.extend_from_slice(&state[n..2 * n]);
    out.extend(accel);
    out.push(s_dot);
    Ok(out)
}

/// ODE adapter for (λ-)Herglotz systems.
pub struct HerglotzRhs<'a>(pub &'a HerglotzSystem);

impl OdeRhs for HerglotzRhs<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rhs(&self, _t: f64, x: &[f64]) -> Result<Vec<f64>> {
        lambda_herglotz_rhs(self.0, x)
    }
}

/// Contact Hamiltonian H = p·q' - L under p = ∂L/∂q'. Uses the closed-form
/// Legendre inverse when the system provides one (the result is then
/// expression-backed); otherwise inverts by damped Newton with the velocity
/// Hessian and exposes the envelope gradient (-L_q, q', -L_S).
pub fn legendre_to_contact(sys: &HerglotzSystem) -> Result<ContactSystem> {
    let n = sys.n_dof;
    let mut contact_vars: Vec<String> = sys.var_names[..n].to_vec();
    for name in &sys.var_names[..n] {
        contact_vars.push(format!("p_{name}"));
    }
    contact_vars.push(sys.var_names[2 * n].clone());

    if let Some(inv) = &sys.legendre_inverse {
        // H = p·v*(q,p,S) - L(q, v*, S), composed symbolically.
        let l_expr = sys
            .lagrangian
            .expression()
            .ok_or_else(|| Error::Contract("expression-backed Lagrangian required".into()))?;
        let params = l_expr.params().to_vec();
        let mut replacements = Vec::with_capacity(2 * n + 1);
        for i in 0..n {
            replacements.push(Expression::var(i, &contact_vars, &params));
        }
        for e in inv {
            replacements.push(e.clone());
        }
        replacements.push(Expression::var(2 * n, &contact_vars, &params));
        let l_comp = l_expr.compose(&replacements)?;
        let mut pv: Option<Expression> = None;
        for i in 0..n {
            let term = Expression::var(n + i, &contact_vars, &params).multiplied(&inv[i])?;
            pv = Some(match pv {
                None => term,
                Some(e) => e.added(&term)?,
            });
        }
        let h = pv.unwrap().added(&l_comp.negated())?;
        return ContactSystem::new(
            contact_vars,
            ScalarField::from_expression(h),
            sys.degree,
            sys.params.clone(),
            Guard::none(),
        );
    }

    let owned = Arc::new(sys.clone());
    let invert = {
        let sys = owned.clone();
        move |x: &[f64]| -> Result<Vec<f64>> {
            // Damped Newton on F(v) = L_v(q, v, S) - p.
            let n = sys.n_dof;
            let params = &sys.params.values;
            let q = &x[..n];
            let p = &x[n..2 * n];
            let s = x[2 * n];
            let mut v = vec![0.0; n];
            let mut state = vec![0.0; 2 * n + 1];
            state[..n].copy_from_slice(q);
            state[2 * n] = s;
            let f_norm = |state: &[f64]| -> Result<f64> {
                let g = sys.lagrangian.gradient(state, params)?;
                Ok((0..n)
                    .map(|i| (g[n + i] - p[i]).powi(2))
                    .sum::<f64>()
                    .sqrt())
            };
            state[n..2 * n].copy_from_slice(&v);
            let mut fcur = f_norm(&state)?;
            for _ in 0..50 {
                if fcur < 1e-12 {
                    let mut out = v.clone();
                    out.push(fcur);
                    return Ok(out);
                }
                let g = sys.lagrangian.gradient(&state, params)?;
                let hess = sys.lagrangian.hessian(&state, params)?;
                let m: Vec<Vec<f64>> = (0..n)
                    .map(|i| (0..n).map(|j| hess[n + i][n + j]).collect())
                    .collect();
                let rhs: Vec<f64> = (0..n).map(|i| p[i] - g[n + i]).collect();
                let (dv, _cond) = solve_linear(m, rhs)?;
                let mut step = 1.0;
                loop {
                    let mut trial = v.clone();
                    for i in 0..n {
                        trial[i] += step * dv[i];
                    }
                    state[n..2 * n].copy_from_slice(&trial);
                    let fnew = f_norm(&state)?;
                    if fnew < fcur || step < 1e-8 {
                        v = trial;
                        fcur = fnew;
                        break;
                    }
                    step *= 0.5;
                }
            }
            if fcur < 1e-9 {
                let mut out = v.clone();
                out.push(fcur);
                return Ok(out);
            }
            Err(Error::Regularity {
                message: format!("Legendre inversion did not converge (|F| = {fcur:.3e})"),
                condition: f64::NAN,
            })
        }
    };

    let value = {
        let sys = owned.clone();
        let invert = invert.clone();
        Arc::new(move |x: &[f64], params: &[f64]| -> Result<f64> {
            let n = sys.n_dof;
            let v = invert(x)?;
            let mut state = vec![0.0; 2 * n + 1];
            state[..n].copy_from_slice(&x[..n]);
            state[n..2 * n].copy_from_slice(&v[..n]);
            state[2 * n] = x[2 * n];
            let l = sys.lagrangian.value(&state, params)?;
            let pv: f64 = (0..n).map(|i| x[n + i] * v[i]).sum();
            Ok(pv - l)
        })
    };
    let gradient = {
        let sys = owned.clone();
        Arc::new(move |x: &[f64], params: &[f64]| -> Result<Vec<f64>> {
            let n = sys.n_dof;
            let v = invert(x)?;
            let mut state = vec![0.0; 2 * n + 1];
            state[..n].copy_from_slice(&x[..n]);
            state[n..2 * n].copy_from_slice(&v[..n]);
            state[2 * n] = x[2 * n];
            let g = sys.lagrangian.gradient(&state, params)?;
            let mut out = Vec::with_capacity(2 * n + 1);
            for i in 0..n {
                out.push(-g[i]);
            }
            out.extend_from_slice(&v[..n]);
            out.push(-g[2 * n]);
            Ok(out)
        })
    };
    ContactSystem::new(
        contact_vars,
        ScalarField::from_closures(2 * n + 1, "legendre transform", value, gradient),
        sys.degree,
        sys.params.clone(),
        Guard::none(),
    )
}

/// Chart on TQ adapted to a basic scaling symmetry: forward maps (q, q̇) to
/// (ρ, S, q̄.., q̄'..) with S = -i_D λ_L / ρ and q̄' the reduced-time
/// velocities (q̄' = ρ^(1-Λ) dq̄/dt).
#[derive(Debug, Clone)]
pub struct LagrangianChart {
    pub id: String,
    pub n_dof: usize,
    pub forward: Vec<Expression>,
    pub inverse: Vec<Expression>,
    pub chart_vars: Vec<String>,
    pub domain: Guard,
}

impl LagrangianChart {
    pub fn new(
        id: &str,
        forward: Vec<Expression>,
        inverse: Vec<Expression>,
        domain: Guard,
    ) -> Result<Self> {
        let n = forward.len() / 2;
        if forward.len() != 2 * n || inverse.len() != 2 * n {
            return Err(Error::Contract(
                "chart needs 2n forward and inverse maps".into(),
            ));
        }
        let chart_vars = inverse[0].vars().to_vec();
        Ok(LagrangianChart {
            id: id.to_string(),
            n_dof: n,
            forward,
            inverse,
            chart_vars,
            domain,
        })
    }

    pub fn reduced_vars(&self) -> Vec<String> {
        let n = self.n_dof;
        let mut out = Vec::with_capacity(2 * n - 1);
        out.extend_from_slice(&self.chart_vars[2..2 * n]);
        out.push(self.chart_vars[1].clone());
        out
    }

    pub fn forward_point(&self, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        self.forward.iter().map(|e| e.eval(x, params)).collect()
    }

    /// Reduced Herglotz state (q̄.., q̄'.., S).
    pub fn reduced_point(&self, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let y = self.forward_point(x, params)?;
        Ok(crate::reduction::chart_tuple_to_reduced(&y))
    }
}

/// Report of the basicness residuals max|D(L) - ΛL| and max‖L_D λ_L - λ_L‖.
#[derive(Debug, Clone)]
pub struct BasicnessReport {
    pub degree_residual: f64,
    pub lambda_residual: f64,
}

/// Check that D is a basic scaling symmetry of L: D(L) = ΛL and
/// L_D λ_L = λ_L, with λ_L = ∂L/∂q̇·dq the Lagrangian 1-form.
pub fn check_basic_symmetry(
    lag: &LagrangianSystem,
    d: &VectorField,
    lambda: f64,
    samples: &[Vec<f64>],
) -> Result<BasicnessReport> {
    let n = lag.n_dof;
    let params = &lag.params.values;
    let mut degree_res: f64 = 0.0;
    let mut lambda_res: f64 = 0.0;
    for x in samples {
        let dv = d.eval(x, params)?;
        let lv = lag.lagrangian.value_and_grad(x, params)?;
        let dl: f64 = dv.iter().zip(&lv.partials).map(|(a, b)| a * b).sum();
        degree_res = degree_res.max((dl - lambda * lv.value).abs() / lv.value.abs().max(1.0));

        // (L_D λ)_i = Σ_k D^k ∂_k λ_i + Σ_k λ_k ∂_i D^k with λ = (L_v, 0).
        let hess = lag.lagrangian.hessian(x, params)?;
        let jd = d.jacobian(x, params)?;
        for i in 0..2 * n {
            let lam_i = if i < n { lv.partials[n + i] } else { 0.0 };
            let mut acc = 0.0;
            if i < n {
                for k in 0..2 * n {
                    acc += dv[k] * hess[n + i][k];
                }
            }
            for k in 0..n {
                acc += lv.partials[n + k] * jd[k][i];
            }
            lambda_res = lambda_res.max((acc - lam_i).abs() / lam_i.abs().max(1.0));
        }
    }
    Ok(BasicnessReport {
        degree_residual: degree_res,
        lambda_residual: lambda_res,
    })
}

/// Scale-reduce a Lagrangian system: π*L_red = -(L + ρ̇ S)/ρ^Λ on the slice
/// ρ = 1, giving a Λ-Herglotz system in the chart's reduced variables.
/// Refused when D fails the basicness check (residuals above 1e-6) or the
/// chart identities fail.
pub fn lagrangian_scale_reduce(
    lag: &LagrangianSystem,
    d: &VectorField,
    rho: &Expression,
    lambda: f64,
    chart: &LagrangianChart,
    sample_spec: &SampleSpec,
    seed: u64,
) -> Result<HerglotzSystem> {
    let n = lag.n_dof;
    let params_names = lag
        .lagrangian
        .expression()
        .map_or_else(|| lag.params.names.clone(), |e| e.params().to_vec());
    let guard = lag.guard.clone().merge(&chart.domain);
    let samples = sample_points(sample_spec, &guard, &lag.params.values, 60, seed)?;

    let basic = check_basic_symmetry(lag, d, lambda, &samples)?;
    if basic.degree_residual > 1e-6 || basic.lambda_residual > 1e-6 {
        return Err(Error::Validation(format!(
            "not a basic scaling symmetry: degree residual {:.3e}, lambda residual {:.3e}",
            basic.degree_residual, basic.lambda_residual
        )));
    }

    // Chart identities: inverse ∘ forward = id; S-coordinate equals
    // -i_D λ_L / ρ; pushforward of D is ρ ∂_ρ.
    for x in &samples {
        let y = chart.forward_point(x, &lag.params.values)?;
        let back: Vec<f64> = chart
            .inverse
            .iter()
            .map(|e| e.eval(&y, &lag.params.values))
            .collect::<Result<_>>()?;
        for (a, b) in back.iter().zip(x) {
            if (a - b).abs() > 1e-9 * b.abs().max(1.0) {
                return Err(Error::Validation(format!(
                    "chart `{}` inverse/forward mismatch: {a} vs {b}",
                    chart.id
                )));
            }
        }
        let lv = lag.lagrangian.value_and_grad(x, &lag.params.values)?;
        let dv = d.eval(x, &lag.params.values)?;
        let i_d_lambda: f64 = (0..n).map(|a| lv.partials[n + a] * dv[a]).sum();
        let rho_v = rho.eval(x, &lag.params.values)?;
        let want_s = -i_d_lambda / rho_v;
        if (y[1] - want_s).abs() > 1e-8 * want_s.abs().max(1.0) {
            return Err(Error::Validation(format!(
                "chart S-coordinate disagrees with -i_D lambda_L / rho: {} vs {want_s}",
                y[1]
            )));
        }
        for (row, e) in chart.forward.iter().enumerate() {
            let rate = e.directional_derivative(x, &lag.params.values, &dv)?;
            let want = if row == 0 { y[0] } else { 0.0 };
            if (rate - want).abs() > 1e-8 * y[0].abs().max(1.0) {
                return Err(Error::Validation(format!(
                    "chart `{}` is not adapted: pushforward row {row} = {rate}, want {want}",
                    chart.id
                )));
            }
        }
    }

    // ρ̇ = Σ ∂ρ/∂q_a · v_a as an expression on TQ.
    let lag_expr = lag
        .lagrangian
        .expression()
        .ok_or_else(|| Error::Contract("expression-backed Lagrangian required".into()))?;
    let mut rho_dot: Option<Expression> = None;
    for a in 0..n {
        let term =
            rho.diff(a)
                .multiplied(&Expression::var(n + a, &lag.var_names, &params_names))?;
        rho_dot = Some(match rho_dot {
            None => term,
            Some(e) => e.added(&term)?,
        });
    }
    let rho_dot = rho_dot.unwrap();

    // Compose through the slice ρ = 1.
    let reduced_vars = chart.reduced_vars();
    let mut chart_var_exprs = Vec::with_capacity(2 * n);
    chart_var_exprs.push(Expression::constant(1.0, &reduced_vars, &params_names));
    chart_var_exprs.push(Expression::var(2 * n - 2, &reduced_vars, &params_names));
    for j in 0..2 * (n - 1) {
        chart_var_exprs.push(Expression::var(j, &reduced_vars, &params_names));
    }
    let mut upstairs = Vec::with_capacity(2 * n);
    for inv in &chart.inverse {
        upstairs.push(inv.compose(&chart_var_exprs)?);
    }
    let l_red = lag_expr.compose(&upstairs)?;
    let rho_dot_red = rho_dot.compose(&upstairs)?;
    let s_var = Expression::var(2 * n - 2, &reduced_vars, &params_names);
    let reduced = l_red.added(&rho_dot_red.multiplied(&s_var)?)?.negated();

    HerglotzSystem::new(
        reduced_vars,
        ScalarField::from_expression(reduced),
        lambda,
        lag.params.clone(),
        Guard::none(),
    )
}

/// One coupled term of a lifted Lagrangian.
#[derive(Debug, Clone)]
pub struct LagrangianLiftTerm {
    pub name: String,
    pub expr: Expression,
    pub degree: f64,
}

/// Lifted Lagrangian L̂ = T + Σ Ẋ_j (L_j/Ẋ_j)^(1/Λ_j) on Q × R^k. The
/// recovered couplings Λ_j a_j = (Ẋ_j/L_j)^(1-1/Λ_j) are constant along
/// extremals.
pub struct LiftedLagrangian {
    pub system: LagrangianSystem,
    pub terms: Vec<LagrangianLiftTerm>,
    pub n_base: usize,
}

pub fn lift_lagrangian(
    kinetic: &Expression,
    base_vars: &[String],
    terms: Vec<LagrangianLiftTerm>,
    params: Params,
    guard: Guard,
) -> Result<LiftedLagrangian> {
    let n = base_vars.len() / 2;
    let k = terms.len();
    let params_names = kinetic.params().to_vec();

    let mut vars: Vec<String> = Vec::with_capacity(2 * (n + k));
    vars.extend_from_slice(&base_vars[..n]);
    for t in &terms {
        vars.push(t.name.clone());
    }
    for name in &base_vars[n..] {
        vars.push(name.clone());
    }
    for t in &terms {
        vars.push(format!("v_{}", t.name));
    }

    let mut remap = Vec::with_capacity(2 * n);
    for a in 0..n {
        remap.push(Expression::var(a, &vars, &params_names));
    }
    for a in 0..n {
        remap.push(Expression::var(n + k + a, &vars, &params_names));
    }

    let mut lhat = kinetic.compose(&remap)?;
    for (j, t) in terms.iter().enumerate() {
        let xdot = Expression::var(2 * n + k + j, &vars, &params_names);
        let lj = t.expr.compose(&remap)?;
        let ratio = lj.multiplied(&xdot.powered(-1.0))?;
        let piece = xdot.multiplied(&ratio.powered(1.0 / t.degree))?;
        lhat = lhat.added(&piece)?;
    }

    // Ẋ_j = 0 makes the velocity Hessian singular; abs(Ẋ_j) > 0 keeps the
    // lifted fiber off that set.
    let mut guard = guard.compose(&remap)?;
    for j in 0..k {
        let xdot = Expression::var(2 * n + k + j, &vars, &params_names);
        guard = guard.and_expr_above(xdot.absolute(), 0.0);
    }
    let system = LagrangianSystem::new(vars, ScalarField::from_expression(lhat), params, guard)?;
    Ok(LiftedLagrangian {
        system,
        terms,
        n_base: n,
    })
}

impl LiftedLagrangian {
    /// a_j = (Ẋ_j/L_j)^(1-1/Λ_j) / Λ_j at a lifted state (q, X, v, Ẋ).
    pub fn recovered_coupling(&self, j: usize, state: &[f64]) -> Result<f64> {
        let n = self.n_base;
        let k = self.terms.len();
        let t = &self.terms[j];
        let mut base_state = Vec::with_capacity(2 * n);
        base_state.extend_from_slice(&state[..n]);
        base_state.extend_from_slice(&state[n + k..2 * n + k]);
        let lj = t.expr.eval(&base_state, &self.system.params.values)?;
        let xdot = state[2 * n + k + j];
        if lj == 0.0 {
            return Err(Error::Domain {
                context: format!("recovered coupling {}", t.name),
                message: "term vanishes".into(),
            });
        }
        let ratio = xdot / lj;
        let e = 1.0 - 1.0 / t.degree;
        let base = ratio.abs().powf(e);
        // Integer-exponent sign bookkeeping; fractional exponents of a
        // negative ratio would have been a domain error upstream.
        let signed = if ratio < 0.0 && (e.round() - e).abs() < 1e-12 {
            if (e.round() as i64) % 2 == 0 {
                base
            } else {
                -base
            }
        } else if ratio < 0.0 {
            // Odd-root sign case of a negative ratio.
            -base
        } else {
            base
        };
        Ok(signed / t.degree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, IntegratorConfig, ReducedSeries};
    use crate::phase::lambda_vf;
    use crate::scaling::SampleBlock;

    fn oscillator_herglotz(k: f64) -> HerglotzSystem {
        let vars = ["theta", "vtheta", "S"];
        let l = Expression::parse("2*S^2 + (k - vtheta^2)/2", &vars, &["k"]).unwrap();
        HerglotzSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(l),
            1.0,
            Params::new(&[("k", k)]),
            Guard::none(),
        )
        .unwrap()
        .with_legendre_inverse(vec![Expression::parse(
            "-p_theta",
            &["theta", "p_theta", "S"],
            &["k"],
        )
        .unwrap()])
    }

    fn kepler_herglotz() -> HerglotzSystem {
        let vars = ["theta", "vtheta", "S"];
        let l = Expression::parse("S^2/8 - vtheta^2/2 - 1", &vars, &[]).unwrap();
        HerglotzSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(l),
            -2.0,
            Params::empty(),
            Guard::none(),
        )
        .unwrap()
        .with_legendre_inverse(vec![Expression::parse(
            "-p_theta",
            &["theta", "p_theta", "S"],
            &[],
        )
        .unwrap()])
    }

    #[test]
    fn oscillator_herglotz_pointwise_values() {
        let sys = oscillator_herglotz(1.0);
        // At (0, 1, 0): dL/dv = -1, EL gives a = 0, Sdot = L = 0.
        let rhs = herglotz_rhs(&sys, &[0.0, 1.0, 0.0]).unwrap();
        assert!((rhs[0] - 1.0).abs() < 1e-14);
        assert!(rhs[1].abs() < 1e-14);
        assert!(rhs[2].abs() < 1e-14);
        // At S = 1/2 with vtheta^2 = k: Sdot = 2 (1/4) = 1/2.
        let rhs = herglotz_rhs(&sys, &[0.3, 1.0, 0.5]).unwrap();
        assert!((rhs[2] - 0.5).abs() < 1e-14, "{rhs:?}");
    }

    #[test]
    fn classic_limit_conserves_energy() {
        // L independent of S: plain Euler-Lagrange plus Sdot = L, and the
        // energy E is a first integral.
        let vars = ["q", "vq", "S"];
        let l = Expression::parse("vq^2/2 - q^4/4", &vars, &[]).unwrap();
        let sys = HerglotzSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(l),
            1.0,
            Params::empty(),
            Guard::none(),
        )
        .unwrap();
        let traj = integrate(
            &HerglotzRhs(&sys),
            &[1.0, 0.0, 0.0],
            (0.0, 10.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let e = |x: &[f64]| sys.energy(x);
        let drift = crate::integrate::first_integral_drift(&traj, &e).unwrap();
        assert!(drift < 1e-8, "energy drift {drift}");
    }

    #[test]
    fn lambda_variant_energy_and_unit_degree_agreement() {
        let sys = kepler_herglotz();
        // E at vtheta = 1, S = 0: (-1)(1) - L = -1 + 3/2 = 1/2.
        let e = sys.energy(&[0.0, 1.0, 0.0]).unwrap();
        assert!((e - 0.5).abs() < 1e-14);
        // Sdot = L + 3E at that state: -3/2 + 3/2 = 0.
        let rhs = lambda_herglotz_rhs(&sys, &[0.0, 1.0, 0.0]).unwrap();
        assert!(rhs[2].abs() < 1e-14, "{rhs:?}");

        // Degree 1 reduces to herglotz_rhs.
        let mut unit = kepler_herglotz();
        unit.degree = 1.0;
        for state in [[0.1, 0.7, 0.3], [1.0, -0.4, 0.2]] {
            assert_eq!(
                lambda_herglotz_rhs(&unit, &state).unwrap(),
                herglotz_rhs(&unit, &state).unwrap()
            );
        }
    }

    #[test]
    fn oscillator_legendre_transform_closed_form() {
        let sys = oscillator_herglotz(1.0);
        let contact = legendre_to_contact(&sys).unwrap();
        // H = -2S^2 - (k + p^2)/2.
        for (q, p, s) in [(0.0, 1.0, 0.0), (0.7, -0.3, 0.4), (2.0, 0.5, -1.0)] {
            let h = contact.h(&[q, p, s]).unwrap();
            let want = -2.0 * s * s - (1.0 + p * p) / 2.0;
            assert!((h - want).abs() < 1e-13, "{h} vs {want}");
        }
    }

    #[test]
    fn classical_legendre_without_action_dependence() {
        // L = v^2/2 - V(q) maps to H = p^2/2 + V(q); exercised through the
        // Newton fallback (no closed-form inverse attached).
        let vars = ["q", "vq", "S"];
        let l = Expression::parse("vq^2/2 - (q^2/2 + q^4/4)", &vars, &[]).unwrap();
        let sys = HerglotzSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(l),
            1.0,
            Params::empty(),
            Guard::none(),
        )
        .unwrap();
        let contact = legendre_to_contact(&sys).unwrap();
        for (q, p) in [(0.5, 0.3), (1.2, -0.8), (0.0, 2.0)] {
            let h = contact.h(&[q, p, 0.0]).unwrap();
            let want = p * p / 2.0 + q * q / 2.0 + q.powi(4) / 4.0;
            assert!((h - want).abs() < 1e-9, "{h} vs {want}");
            let g = contact.grad_h(&[q, p, 0.0]).unwrap();
            assert!((g[1] - p).abs() < 1e-9);
        }
    }

    #[test]
    fn herglotz_flow_matches_legendre_dual_contact_flow() {
        // Oscillator (degree 1) and reduced Kepler (degree -2): integrate
        // both sides and compare under v = -p.
        for (sys, span) in [(oscillator_herglotz(1.0), 8.0), (kepler_herglotz(), 6.0)] {
            let contact = legendre_to_contact(&sys).unwrap();
            let x0 = [0.2, 0.9, 0.1]; // (theta, vtheta, S)
            let c0 = [0.2, -0.9, 0.1]; // (theta, p, S)
            let cfg = IntegratorConfig::default();
            let lag = integrate(&HerglotzRhs(&sys), &x0, (0.0, span), &cfg).unwrap();
            let con = integrate(
                &crate::integrate::ContactRhs(&contact),
                &c0,
                (0.0, span),
                &cfg,
            )
            .unwrap();
            // Map the Lagrangian trajectory into contact variables.
            let mapped = ReducedSeries {
                tau: lag.samples.iter().map(|s| s.t).collect(),
                states: lag
                    .samples
                    .iter()
                    .map(|s| vec![s.state[0], -s.state[1], s.state[2]])
                    .collect(),
                derivs: lag
                    .samples
                    .iter()
                    .map(|s| vec![s.deriv[0], -s.deriv[1], s.deriv[2]])
                    .collect(),
            };
            let native = ReducedSeries::from_native(&con);
            let names: Vec<String> = ["theta", "p", "S"].iter().map(|s| s.to_string()).collect();
            let rep = crate::integrate::compare_series(
                &mapped,
                &native,
                &names,
                &[false, false, false],
                400,
            )
            .unwrap();
            assert!(
                rep.sup_deviation < 1e-6,
                "Legendre duality broke: {:?}",
                rep.per_coordinate
            );
        }
    }

    #[test]
    fn kepler_lambda_herglotz_matches_reduced_contact_kepler() {
        // The dual of the -2-Herglotz system is H = 1 - p^2/2 - S^2/8,
        // which is the rho-reduction of Kepler in its Darboux chart.
        let sys = kepler_herglotz();
        let contact = legendre_to_contact(&sys).unwrap();
        let closed =
            Expression::parse("1 - p_theta^2/2 - S^2/8", &["theta", "p_theta", "S"], &[]).unwrap();
        for s in [[0.3, -0.9, 0.5], [1.2, 0.4, -2.0]] {
            let a = contact.h(&s).unwrap();
            let b = closed.eval(&s, &[]).unwrap();
            assert!((a - b).abs() < 1e-13);
            let va = lambda_vf(&contact, &s).unwrap();
            assert_eq!(contact.degree, -2.0);
            assert_eq!(va.len(), 3);
        }
    }

    fn oscillator_lagrangian() -> LagrangianSystem {
        let vars = ["q1", "q2", "v1", "v2"];
        let l = Expression::parse("(v1^2 + v2^2 - k*(q1^2 + q2^2))/2", &vars, &["k"]).unwrap();
        LagrangianSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(l),
            Params::new(&[("k", 1.0)]),
            Guard::expr_above(
                Expression::parse("q1^2 + q2^2", &vars, &["k"]).unwrap(),
                1e-8,
            ),
        )
        .unwrap()
    }

    fn oscillator_lagrangian_chart() -> LagrangianChart {
        let vars: Vec<String> = ["q1", "q2", "v1", "v2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cvars = ["rho", "S", "theta", "vtheta"];
        let fwd = [
            "q1^2 + q2^2",
            "-(q1*v1 + q2*v2)/(2*(q1^2 + q2^2))",
            "atan2(q2, q1)",
            "(q1*v2 - q2*v1)/(q1^2 + q2^2)",
        ]
        .iter()
        .map(|t| Expression::parse_owned(t, &vars, &["k".to_string()]).unwrap())
        .collect();
        let cvars_owned: Vec<String> = cvars.iter().map(|s| s.to_string()).collect();
        let inv = [
            "sqrt(rho)*cos(theta)",
            "sqrt(rho)*sin(theta)",
            "-2*sqrt(rho)*S*cos(theta) - sqrt(rho)*vtheta*sin(theta)",
            "-2*sqrt(rho)*S*sin(theta) + sqrt(rho)*vtheta*cos(theta)",
        ]
        .iter()
        .map(|t| Expression::parse_owned(t, &cvars_owned, &["k".to_string()]).unwrap())
        .collect();
        LagrangianChart::new("osc-rho", fwd, inv, Guard::none()).unwrap()
    }

    #[test]
    fn oscillator_scale_reduction_recovers_the_herglotz_closed_form() {
        let lag = oscillator_lagrangian();
        let vars: Vec<String> = lag.var_names.clone();
        let d = VectorField::parse(&["q1/2", "q2/2", "v1/2", "v2/2"], &vars, &["k".to_string()])
            .unwrap();
        let rho = Expression::parse("q1^2 + q2^2", &["q1", "q2", "v1", "v2"], &["k"]).unwrap();
        let spec = SampleSpec::standard(2);
        let red = lagrangian_scale_reduce(
            &lag,
            &d,
            &rho,
            1.0,
            &oscillator_lagrangian_chart(),
            &spec,
            crate::scaling::DEFAULT_SEED,
        )
        .unwrap();
        let closed = Expression::parse(
            "2*S^2 + (k - vtheta^2)/2",
            &["theta", "vtheta", "S"],
            &["k"],
        )
        .unwrap();
        for s in [[0.3, 0.8, 0.2], [1.0, -0.4, -0.6], [2.0, 1.5, 0.0]] {
            let a = red.lagrangian_value(&s).unwrap();
            let b = closed.eval(&s, &[1.0]).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b} at {s:?}");
        }
    }

    #[test]
    fn kepler_scale_reduction_recovers_the_minus_two_herglotz_form() {
        let vars = ["q1", "q2", "v1", "v2"];
        let l = Expression::parse("(v1^2 + v2^2)/2 + 1/sqrt(q1^2 + q2^2)", &vars, &[]).unwrap();
        let lag = LagrangianSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(l),
            Params::empty(),
            Guard::expr_above(Expression::parse("q1^2 + q2^2", &vars, &[]).unwrap(), 1e-8),
        )
        .unwrap();
        let vars_owned: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        let d = VectorField::parse(&["2*q1", "2*q2", "-v1", "-v2"], &vars_owned, &[]).unwrap();
        let rho = Expression::parse("(q1^2 + q2^2)^(1/4)", &vars, &[]).unwrap();

        let cvars: Vec<String> = ["rho", "S", "theta", "vtheta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let fwd = [
            "(q1^2 + q2^2)^(1/4)",
            "-2*(q1*v1 + q2*v2)/(q1^2 + q2^2)^(1/4)",
            "atan2(q2, q1)",
            "(q1*v2 - q2*v1)/(q1^2 + q2^2)^(1/4)",
        ]
        .iter()
        .map(|t| Expression::parse_owned(t, &vars_owned, &[]).unwrap())
        .collect();
        let inv = [
            "rho^2*cos(theta)",
            "rho^2*sin(theta)",
            "(-S/(2*rho))*cos(theta) - (vtheta/rho)*sin(theta)",
            "(-S/(2*rho))*sin(theta) + (vtheta/rho)*cos(theta)",
        ]
        .iter()
        .map(|t| Expression::parse_owned(t, &cvars, &[]).unwrap())
        .collect();
        let chart = LagrangianChart::new("kep-rho", fwd, inv, Guard::none()).unwrap();

        let red = lagrangian_scale_reduce(
            &lag,
            &d,
            &rho,
            -2.0,
            &chart,
            &SampleSpec::standard(2),
            crate::scaling::DEFAULT_SEED,
        )
        .unwrap();
        let closed =
            Expression::parse("S^2/8 - vtheta^2/2 - 1", &["theta", "vtheta", "S"], &[]).unwrap();
        for s in [[0.3, 0.8, 0.2], [1.0, -0.4, -0.6], [2.0, 1.5, 4.0]] {
            let a = red.lagrangian_value(&s).unwrap();
            let b = closed.eval(&s, &[]).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b} at {s:?}");
        }
    }

    #[test]
    fn trivial_fiber_sanity_case() {
        // With rho ≡ 1 (so ρ̇ ≡ 0) and Λ = 1 the reduction is -L composed
        // with an identity chart.
        let vars = ["q", "vq"];
        let l = Expression::parse("vq^2/2 - q^2/2", &vars, &[]).unwrap();
        let rho = Expression::parse("q*0 + 1", &vars, &[]).unwrap();
        let mut rho_dot: Option<Expression> = None;
        for a in 0..1 {
            let term = rho
                .diff(a)
                .multiplied(&Expression::var(1, &["q".into(), "vq".into()], &[]))
                .unwrap();
            rho_dot = Some(term);
        }
        let rd = rho_dot.unwrap().eval(&[0.7, 1.3], &[]).unwrap();
        assert_eq!(rd, 0.0);
        let lv = l.eval(&[0.7, 1.3], &[]).unwrap();
        // -(L + 0·S)/1 = -L.
        assert!((-(lv) - -(1.3f64 * 1.3 / 2.0 - 0.7 * 0.7 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn kepler_hooke_lift_matches_the_closed_form_and_conserves_couplings() {
        // Base: L = vrho^2/(8 rho) + rho vtheta^2/2 - kH rho/2 (+ kK/sqrt(rho)
        // lifted through X). The lift replaces the Kepler piece by
        // Xdot^3 rho / kK^2.
        let base_vars: Vec<String> = ["rho", "theta", "vrho", "vtheta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let kinetic = Expression::parse_owned(
            "vrho^2/(8*rho) + rho*vtheta^2/2 - kH*rho/2",
            &base_vars,
            &["kH".to_string(), "kK".to_string()],
        )
        .unwrap();
        let kepler_term = Expression::parse_owned(
            "kK/sqrt(rho)",
            &base_vars,
            &["kH".to_string(), "kK".to_string()],
        )
        .unwrap();
        let lifted = lift_lagrangian(
            &kinetic,
            &base_vars,
            vec![LagrangianLiftTerm {
                name: "X".into(),
                expr: kepler_term,
                degree: -0.5,
            }],
            Params::new(&[("kH", 1.0), ("kK", 1.0)]),
            Guard::expr_above(
                Expression::parse_owned("rho", &base_vars, &["kH".to_string(), "kK".to_string()])
                    .unwrap(),
                1e-8,
            ),
        )
        .unwrap();

        // Closed form: Lhat = vrho^2/(8 rho) + rho vtheta^2/2 - kH rho/2
        //              + vX^3 rho / kK^2.
        let closed = Expression::parse(
            "vrho^2/(8*rho) + rho*vtheta^2/2 - kH*rho/2 + v_X^3*rho/kK^2",
            &["rho", "theta", "X", "vrho", "vtheta", "v_X"],
            &["kH", "kK"],
        )
        .unwrap();
        for s in [
            [1.0, 0.3, 0.0, 0.2, 0.8, -0.7],
            [2.0, -0.4, 1.0, 0.1, 0.5, -1.2],
        ] {
            let a = lifted.system.lagrangian.value(&s, &[1.0, 1.0]).unwrap();
            let b = closed.eval(&s, &[1.0, 1.0]).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }

        // Integrate an extremal with the coupling-recovering initial
        // velocity vX0 = kK (-1/2)^(1/3) / sqrt(rho0); a2 should be 1 and
        // stay there.
        let herg = lifted.system.to_herglotz().unwrap();
        let rho0: f64 = 1.0;
        let vx0 = -1.0 / 2.0f64.powf(1.0 / 3.0) / rho0.sqrt();
        let x0 = [rho0, 0.0, 0.0, 0.1, 0.9, vx0, 0.0];
        let traj = integrate(
            &HerglotzRhs(&herg),
            &x0,
            (0.0, 5.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let a0 = lifted.recovered_coupling(0, &x0[..6]).unwrap();
        assert!((a0 - 1.0).abs() < 1e-12, "a2(0) = {a0}");
        for s in &traj.samples {
            let a = lifted.recovered_coupling(0, &s.state[..6]).unwrap();
            assert!((a - 1.0).abs() < 1e-6, "coupling drifted to {a}");
        }

        // The projected (rho, theta) motion matches the direct system
        // L = kinetic + kK/sqrt(rho).
        let direct_l = Expression::parse_owned(
            "vrho^2/(8*rho) + rho*vtheta^2/2 - kH*rho/2 + kK/sqrt(rho)",
            &base_vars,
            &["kH".to_string(), "kK".to_string()],
        )
        .unwrap();
        let direct = LagrangianSystem::new(
            base_vars.clone(),
            ScalarField::from_expression(direct_l),
            Params::new(&[("kH", 1.0), ("kK", 1.0)]),
            Guard::expr_above(
                Expression::parse_owned("rho", &base_vars, &["kH".to_string(), "kK".to_string()])
                    .unwrap(),
                1e-8,
            ),
        )
        .unwrap()
        .to_herglotz()
        .unwrap();
        let dtraj = integrate(
            &HerglotzRhs(&direct),
            &[1.0, 0.0, 0.1, 0.9, 0.0],
            (0.0, 5.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        // Compare at common times via interpolation.
        for frac in [0.25, 0.5, 0.75, 1.0] {
            let t = 5.0 * frac;
            let sa = traj.state_at(t).unwrap();
            let sb = dtraj.state_at(t).unwrap();
            assert!((sa[0] - sb[0]).abs() < 1e-6, "rho mismatch at t={t}");
            assert!((sa[1] - sb[1]).abs() < 1e-6, "theta mismatch at t={t}");
        }
    }

    #[test]
    fn single_unit_degree_term_lift_is_additive() {
        let base_vars: Vec<String> = ["q", "vq"].iter().map(|s| s.to_string()).collect();
        let kinetic = Expression::parse_owned("vq^2/2", &base_vars, &[]).unwrap();
        let term = Expression::parse_owned("-q^2/2", &base_vars, &[]).unwrap();
        let lifted = lift_lagrangian(
            &kinetic,
            &base_vars,
            vec![LagrangianLiftTerm {
                name: "X".into(),
                expr: term,
                degree: 1.0,
            }],
            Params::empty(),
            Guard::none(),
        )
        .unwrap();
        // Lhat = vq^2/2 + vX (L1/vX)^1 = vq^2/2 + L1: X decouples.
        let s = [0.7, 0.0, 1.1, 0.5];
        let v = lifted.system.lagrangian.value(&s, &[]).unwrap();
        assert!((v - (1.1f64 * 1.1 / 2.0 - 0.7 * 0.7 / 2.0)).abs() < 1e-14);
    }

    #[test]
    fn singular_hessian_reports_regularity_error() {
        let vars = ["q", "vq", "S"];
        // L linear in vq: velocity Hessian identically zero.
        let l = Expression::parse("vq + q^2 + 0*S", &vars, &[]).unwrap();
        let sys = HerglotzSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(l),
            1.0,
            Params::empty(),
            Guard::none(),
        )
        .unwrap();
        let err = herglotz_rhs(&sys, &[1.0, 0.5, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Regularity { .. }), "{err:?}");
    }

    #[test]
    fn sample_block_shapes_cover_lagrangian_state() {
        let spec = SampleSpec {
            blocks: vec![SampleBlock::symmetric(2), SampleBlock::symmetric(2)],
        };
        assert_eq!(spec.dim(), 4);
    }
}
