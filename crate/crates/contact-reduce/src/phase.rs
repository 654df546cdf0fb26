//! Phase-space state types and the symplectic / contact / Λ-Hamiltonian
//! vector fields in Darboux coordinates.
//!
//! Sign conventions, fixed once for the whole crate:
//! `i_{X_H} ω = -dH` with `ω = dp ∧ dq`, contact form `η = dS - p·dq`,
//! `i_{X_H} η = -H`. With these, trajectories satisfy
//! `q̇ = ∂H/∂p`, `ṗ = -∂H/∂q` upstairs and
//! `q̇ = ∂H/∂p`, `ṗ = -∂H/∂q - p ∂H/∂S`, `Ṡ = p·∂H/∂p - Λ H` downstairs.

use crate::error::{Error, Result};
use crate::expr::{DualValue, Expression};
use std::sync::{Arc, OnceLock};

/// Point on a 2n-dimensional symplectic phase space, layout
/// `(q_1..q_n, p_1..p_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint(pub Vec<f64>);

impl PhasePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() % 2 != 0 {
            return Err(Error::Contract(format!(
                "phase point length {} is odd",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("phase point coordinates".into()));
        }
        Ok(PhasePoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn n_dof(&self) -> usize {
        self.0.len() / 2
    }
}

/// Point on a (2n+1)-dimensional contact manifold, layout
/// `(q_1..q_n, p_1..p_n, S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPoint(pub Vec<f64>);

impl ContactPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() % 2 == 0 {
            return Err(Error::Contract(format!(
                "contact point length {} is even",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("contact point coordinates".into()));
        }
        Ok(ContactPoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Number of (q, p) pairs.
    pub fn n_pairs(&self) -> usize {
        self.0.len() / 2
    }

    pub fn action(&self) -> f64 {
        *self.0.last().unwrap()
    }
}

/// Named real parameters shared by every field of a system.
#[derive(Debug, Clone, Default)]
pub struct Params {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl Params {
    pub fn new(pairs: &[(&str, f64)]) -> Self {
        Params {
            names: pairs.iter().map(|(n, _)| n.to_string()).collect(),
            values: pairs.iter().map(|(_, v)| *v).collect(),
        }
    }

    pub fn empty() -> Self {
        Params::default()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match self.names.iter().position(|n| n == name) {
            Some(i) => {
                self.values[i] = value;
                Ok(())
            }
            None => Err(Error::MissingParam(name.into())),
        }
    }
}

type ValueFn = dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync;

/// Scalar field on a coordinate chart: expression-backed (exact derivatives)
/// or closure-backed (analytic derivatives supplied by the caller).
#[derive(Clone)]
pub enum ScalarField {
    Expr {
        expr: Expression,
        /// Symbolic gradient, materialized on first use.
        grad: Arc<OnceLock<Vec<Expression>>>,
    },
    Closure {
        arity: usize,
        label: String,
        value: Arc<ValueFn>,
        gradient: Arc<GradFn>,
    },
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarField::Expr { expr, .. } => write!(f, "ScalarField::Expr({})", expr.to_text()),
            ScalarField::Closure { label, .. } => write!(f, "ScalarField::Closure({label})"),
        }
    }
}

impl ScalarField {
    pub fn from_expression(expr: Expression) -> Self {
        ScalarField::Expr {
            expr,
            grad: Arc::new(OnceLock::new()),
        }
    }

    pub fn from_closures(
        arity: usize,
        label: &str,
        value: Arc<ValueFn>,
        gradient: Arc<GradFn>,
    ) -> Self {
        ScalarField::Closure {
            arity,
            label: label.to_string(),
            value,
            gradient,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            ScalarField::Expr { expr, .. } => expr.n_vars(),
            ScalarField::Closure { arity, .. } => *arity,
        }
    }

    pub fn expression(&self) -> Option<&Expression> {
        match self {
            ScalarField::Expr { expr, .. } => Some(expr),
            ScalarField::Closure { .. } => None,
        }
    }

    pub fn value(&self, x: &[f64], params: &[f64]) -> Result<f64> {
        match self {
            ScalarField::Expr { expr, .. } => expr.eval(x, params),
            ScalarField::Closure { value, .. } => value(x, params),
        }
    }

    pub fn value_and_grad(&self, x: &[f64], params: &[f64]) -> Result<DualValue> {
        match self {
            ScalarField::Expr { expr, .. } => expr.eval_with_grad(x, params),
            ScalarField::Closure {
                value, gradient, ..
            } => Ok(DualValue {
                value: value(x, params)?,
                partials: gradient(x, params)?,
            }),
        }
    }

    pub fn gradient(&self, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_grad(x, params)?.partials)
    }

    /// Symbolic gradient components (expression-backed fields only).
    pub fn gradient_expressions(&self) -> Result<&[Expression]> {
        match self {
            ScalarField::Expr { expr, grad } => {
                let g = grad.get_or_init(|| (0..expr.n_vars()).map(|i| expr.diff(i)).collect());
                Ok(g)
            }
            ScalarField::Closure { label, .. } => Err(Error::Contract(format!(
                "`{label}` is closure-backed; symbolic gradient unavailable"
            ))),
        }
    }

    /// Hessian: exact for expression-backed fields (dual pass over symbolic
    /// partials); single central differencing of the analytic gradient for
    /// closure-backed fields.
    pub fn hessian(&self, x: &[f64], params: &[f64]) -> Result<Vec<Vec<f64>>> {
        match self {
            ScalarField::Expr { .. } => {
                let grads = self.gradient_expressions()?;
                grads
                    .iter()
                    .map(|g| Ok(g.eval_with_grad(x, params)?.partials))
                    .collect()
            }
            ScalarField::Closure { gradient, .. } => {
                let n = x.len();
                let mut rows = vec![vec![0.0; n]; n];
                let mut xp = x.to_vec();
                for j in 0..n {
                    let h = 1e-7 * x[j].abs().max(1.0);
                    xp[j] = x[j] + h;
                    let gp = gradient(&xp, params)?;
                    xp[j] = x[j] - h;
                    let gm = gradient(&xp, params)?;
                    xp[j] = x[j];
                    for i in 0..n {
                        rows[i][j] = (gp[i] - gm[i]) / (2.0 * h);
                    }
                }
                Ok(rows)
            }
        }
    }
}

type VecFn = dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync;
type JacFn = dyn Fn(&[f64], &[f64]) -> Result<Vec<Vec<f64>>> + Send + Sync;

/// Vector field on a coordinate chart. Expression-backed fields get exact
/// Jacobians from one dual pass per component.
#[derive(Clone)]
pub enum VectorField {
    Expr(Vec<Expression>),
    Closure {
        dim: usize,
        label: String,
        value: Arc<VecFn>,
        jacobian: Option<Arc<JacFn>>,
    },
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VectorField::Expr(comps) => write!(f, "VectorField::Expr(dim {})", comps.len()),
            VectorField::Closure { label, .. } => write!(f, "VectorField::Closure({label})"),
        }
    }
}

impl VectorField {
    pub fn from_expressions(components: Vec<Expression>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Contract("vector field needs components".into()));
        }
        let arity = components[0].n_vars();
        if components.len() != arity {
            return Err(Error::Contract(format!(
                "vector field has {} components over {} variables",
                components.len(),
                arity
            )));
        }
        Ok(VectorField::Expr(components))
    }

    /// Parse one component expression per phase variable.
    pub fn parse(texts: &[&str], vars: &[String], params: &[String]) -> Result<Self> {
        let comps = texts
            .iter()
            .map(|t| Expression::parse_owned(t, vars, params))
            .collect::<Result<Vec<_>>>()?;
        VectorField::from_expressions(comps)
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorField::Expr(c) => c.len(),
            VectorField::Closure { dim, .. } => *dim,
        }
    }

    pub fn components(&self) -> Option<&[Expression]> {
        match self {
            VectorField::Expr(c) => Some(c),
            VectorField::Closure { .. } => None,
        }
    }

    pub fn eval(&self, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        match self {
            VectorField::Expr(comps) => comps.iter().map(|c| c.eval(x, params)).collect(),
            VectorField::Closure { value, .. } => value(x, params),
        }
    }

    /// Jacobian rows ∂(component_i)/∂x_j.
    pub fn jacobian(&self, x: &[f64], params: &[f64]) -> Result<Vec<Vec<f64>>> {
        match self {
            VectorField::Expr(comps) => comps
                .iter()
                .map(|c| Ok(c.eval_with_grad(x, params)?.partials))
                .collect(),
            VectorField::Closure {
                jacobian, label, ..
            } => match jacobian {
                Some(j) => j(x, params),
                None => Err(Error::Contract(format!(
                    "`{label}` has no Jacobian provider"
                ))),
            },
        }
    }
}

/// Hamiltonian vector field of an expression-backed scalar field as an
/// expression-backed vector field: `X_H = (∂H/∂p, -∂H/∂q)`. Its dual-number
/// Jacobian is then exact, which Lie-bracket residuals rely on.
pub fn hamiltonian_vector_field(field: &ScalarField, n_dof: usize) -> Result<VectorField> {
    let grads = field.gradient_expressions()?;
    if grads.len() != 2 * n_dof {
        return Err(Error::Contract(format!(
            "expected {} gradient components, found {}",
            2 * n_dof,
            grads.len()
        )));
    }
    let mut comps = Vec::with_capacity(2 * n_dof);
    for a in 0..n_dof {
        comps.push(grads[n_dof + a].clone());
    }
    for a in 0..n_dof {
        comps.push(grads[a].negated());
    }
    VectorField::from_expressions(comps)
}

type PredFn = dyn Fn(&[f64], &[f64]) -> bool + Send + Sync;

/// Admissibility predicate: every condition expression must stay strictly
/// above its floor. Evaluation at an inadmissible point is a reported domain
/// error, never a silent NaN.
#[derive(Clone, Default)]
pub struct Guard {
    conditions: Vec<GuardCond>,
}

#[derive(Clone)]
enum GuardCond {
    ExprAbove { expr: Expression, min: f64 },
    Closure { pred: Arc<PredFn>, label: String },
}

impl std::fmt::Debug for Guard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Guard({} conditions)", self.conditions.len())
    }
}

impl Guard {
    pub fn none() -> Self {
        Guard::default()
    }

    pub fn expr_above(expr: Expression, min: f64) -> Self {
        Guard {
            conditions: vec![GuardCond::ExprAbove { expr, min }],
        }
    }

    pub fn and_expr_above(mut self, expr: Expression, min: f64) -> Self {
        self.conditions.push(GuardCond::ExprAbove { expr, min });
        self
    }

    pub fn closure(pred: Arc<PredFn>, label: &str) -> Self {
        Guard {
            conditions: vec![GuardCond::Closure {
                pred,
                label: label.to_string(),
            }],
        }
    }

    pub fn admissible(&self, x: &[f64], params: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.conditions.iter().all(|c| match c {
            GuardCond::ExprAbove { expr, min } => match expr.eval(x, params) {
                Ok(v) => v > *min,
                Err(_) => false,
            },
            GuardCond::Closure { pred, .. } => pred(x, params),
        })
    }

    /// Re-express every expression-backed condition over a new variable set
    /// (closure conditions cannot be composed).
    pub fn compose(&self, replacements: &[Expression]) -> Result<Guard> {
        let mut out = Vec::with_capacity(self.conditions.len());
        for c in &self.conditions {
            match c {
                GuardCond::ExprAbove { expr, min } => out.push(GuardCond::ExprAbove {
                    expr: expr.compose(replacements)?,
                    min: *min,
                }),
                GuardCond::Closure { label, .. } => {
                    return Err(Error::Contract(format!(
                        "closure guard `{label}` cannot be re-expressed"
                    )));
                }
            }
        }
        Ok(Guard { conditions: out })
    }

    pub fn merge(mut self, other: &Guard) -> Guard {
        self.conditions.extend(other.conditions.iter().cloned());
        self
    }

    pub fn check(&self, x: &[f64], params: &[f64]) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Guard("non-finite coordinates".into()));
        }
        for c in &self.conditions {
            match c {
                GuardCond::ExprAbove { expr, min } => {
                    let v = expr.eval(x, params).map_err(|e| {
                        Error::Guard(format!("guard expression failed to evaluate: {e}"))
                    })?;
                    if v <= *min {
                        return Err(Error::Guard(format!(
                            "`{}` = {v:.6e} is not above {min:.1e}",
                            expr.to_text()
                        )));
                    }
                }
                GuardCond::Closure { pred, label } => {
                    if !pred(x, params) {
                        return Err(Error::Guard(label.clone()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Symplectic Hamiltonian system in Darboux coordinates.
#[derive(Debug, Clone)]
pub struct SymplecticSystem {
    pub n_dof: usize,
    pub var_names: Vec<String>,
    pub hamiltonian: ScalarField,
    pub params: Params,
    pub guard: Guard,
    /// True when H = T(p) + V(q); unlocks the Störmer–Verlet driver.
    pub separable: bool,
}

impl SymplecticSystem {
    pub fn new(
        var_names: Vec<String>,
        hamiltonian: ScalarField,
        params: Params,
        guard: Guard,
    ) -> Result<Self> {
        if var_names.len() % 2 != 0 {
            return Err(Error::Contract("odd number of phase variables".into()));
        }
        if hamiltonian.arity() != var_names.len() {
            return Err(Error::Contract(format!(
                "hamiltonian arity {} does not match {} variables",
                hamiltonian.arity(),
                var_names.len()
            )));
        }
        Ok(SymplecticSystem {
            n_dof: var_names.len() / 2,
            var_names,
            hamiltonian,
            params,
            guard,
            separable: false,
        })
    }

    pub fn separable(mut self) -> Self {
        self.separable = true;
        self
    }

    pub fn dim(&self) -> usize {
        2 * self.n_dof
    }

    pub fn h(&self, x: &[f64]) -> Result<f64> {
        self.hamiltonian.value(x, &self.params.values)
    }

    pub fn grad_h(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.hamiltonian.gradient(x, &self.params.values)
    }

    pub fn admissible(&self, x: &[f64]) -> bool {
        self.guard.admissible(x, &self.params.values)
    }

    pub fn check_admissible(&self, x: &[f64]) -> Result<()> {
        self.guard.check(x, &self.params.values)
    }
}

/// Contact Hamiltonian system of declared degree Λ (Λ = 1 is the ordinary
/// contact case).
#[derive(Debug, Clone)]
pub struct ContactSystem {
    /// Number of (q, p) pairs; the state also carries S.
    pub n_pairs: usize,
    pub var_names: Vec<String>,
    pub hamiltonian: ScalarField,
    pub degree: f64,
    pub params: Params,
    pub guard: Guard,
}

impl ContactSystem {
    pub fn new(
        var_names: Vec<String>,
        hamiltonian: ScalarField,
        degree: f64,
        params: Params,
        guard: Guard,
    ) -> Result<Self> {
        if var_names.len() % 2 != 1 {
            return Err(Error::Contract(
                "contact systems need an odd number of variables (q.., p.., S)".into(),
            ));
        }
        if hamiltonian.arity() != var_names.len() {
            return Err(Error::Contract(format!(
                "contact hamiltonian arity {} does not match {} variables",
                hamiltonian.arity(),
                var_names.len()
            )));
        }
        if !degree.is_finite() {
            return Err(Error::Contract("degree must be finite".into()));
        }
        Ok(ContactSystem {
            n_pairs: var_names.len() / 2,
            var_names,
            hamiltonian,
            degree,
            params,
            guard,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.n_pairs + 1
    }

    pub fn h(&self, x: &[f64]) -> Result<f64> {
        self.hamiltonian.value(x, &self.params.values)
    }

    pub fn grad_h(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.hamiltonian.gradient(x, &self.params.values)
    }

    pub fn admissible(&self, x: &[f64]) -> bool {
        self.guard.admissible(x, &self.params.values)
    }

    pub fn check_admissible(&self, x: &[f64]) -> Result<()> {
        self.guard.check(x, &self.params.values)
    }
}

fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

/// Symplectic Hamiltonian vector field `(∂H/∂p, -∂H/∂q)` at `x`.
pub fn symplectic_vf(sys: &SymplecticSystem, x: &[f64]) -> Result<Vec<f64>> {
    sys.check_admissible(x)?;
    let g = sys.grad_h(x)?;
    ensure_finite(&g, "hamiltonian gradient")?;
    let n = sys.n_dof;
    let mut out = Vec::with_capacity(2 * n);
    out.extend_from_slice(&g[n..2 * n]);
    out.extend(g[0..n].iter().map(|v| -v));
    Ok(out)
}

/// Contact Hamiltonian vector field; requires degree 1 (use [`lambda_vf`]
/// for general degree).
pub fn contact_vf(sys: &ContactSystem, x: &[f64]) -> Result<Vec<f64>> {
    if sys.degree != 1.0 {
        return Err(Error::Contract(format!(
            "contact_vf requires degree 1, got {}; use lambda_vf",
            sys.degree
        )));
    }
    lambda_vf(sys, x)
}

/// Λ-Hamiltonian vector field of a contact Hamiltonian:
/// `(∂H/∂p, -∂H/∂q - p ∂H/∂S, p·∂H/∂p - Λ H)`.
pub fn lambda_vf(sys: &ContactSystem, x: &[f64]) -> Result<Vec<f64>> {
    sys.check_admissible(x)?;
    let dv = sys.hamiltonian.value_and_grad(x, &sys.params.values)?;
    ensure_finite(&dv.partials, "contact hamiltonian gradient")?;
    let n = sys.n_pairs;
    let h_s = dv.partials[2 * n];
    let mut out = Vec::with_capacity(2 * n + 1);
    let mut p_dot_hp = 0.0;
    for a in 0..n {
        out.push(dv.partials[n + a]);
        p_dot_hp += x[n + a] * dv.partials[n + a];
    }
    for a in 0..n {
        out.push(-dv.partials[a] - x[n + a] * h_s);
    }
    out.push(p_dot_hp - sys.degree * dv.value);
    ensure_finite(&out, "lambda vector field")?;
    Ok(out)
}

/// Max relative disagreement between the provided gradient and central
/// finite differences of the scalar value (step `1e-6·max(1, |x_i|)`).
pub fn gradient_fd_residual(
    field: &ScalarField,
    params: &[f64],
    samples: &[Vec<f64>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in samples {
        let grad = field.gradient(x, params)?;
        let mut xp = x.clone();
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = field.value(&xp, params)?;
            xp[i] = x[i] - h;
            let fm = field.value(&xp, params)?;
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1.0);
            worst = worst.max((grad[i] - fd).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;

    fn kepler() -> SymplecticSystem {
        let vars = ["q1", "q2", "p1", "p2"];
        let h = Expression::parse("(p1^2 + p2^2)/2 - 1/sqrt(q1^2 + q2^2)", &vars, &[]).unwrap();
        let guard = Guard::expr_above(Expression::parse("q1^2 + q2^2", &vars, &[]).unwrap(), 0.0);
        SymplecticSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(h),
            Params::empty(),
            guard,
        )
        .unwrap()
    }

    #[test]
    fn free_particle_flow() {
        let vars = ["q1", "p1"];
        let h = Expression::parse("p1", &vars, &[]).unwrap();
        let sys = SymplecticSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(h),
            Params::empty(),
            Guard::none(),
        )
        .unwrap();
        let v = symplectic_vf(&sys, &[0.3, 0.7]).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
    }

    #[test]
    fn kepler_field_at_circular_point() {
        let sys = kepler();
        let v = symplectic_vf(&sys, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let expect = [0.0, 1.0, -1.0, 0.0];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{v:?}");
        }
    }

    #[test]
    fn oscillator_field() {
        let vars = ["q1", "q2", "p1", "p2"];
        let h = Expression::parse("(p1^2 + p2^2 + k*(q1^2 + q2^2))/2", &vars, &["k"]).unwrap();
        let sys = SymplecticSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(h),
            Params::new(&[("k", 1.0)]),
            Guard::none(),
        )
        .unwrap();
        let v = symplectic_vf(&sys, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn guard_violation_is_a_domain_error() {
        let sys = kepler();
        let err = symplectic_vf(&sys, &[0.0, 0.0, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Guard(_)), "{err:?}");
    }

    fn contact_osc() -> ContactSystem {
        let vars = ["q", "p", "S"];
        let h = Expression::parse("(p^2 + q^2)/2", &vars, &[]).unwrap();
        ContactSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(h),
            1.0,
            Params::empty(),
            Guard::none(),
        )
        .unwrap()
    }

    #[test]
    fn contact_field_matches_hand_substitution() {
        let sys = contact_osc();
        // H = (p^2+q^2)/2 at (1, 0, 0): qdot = 0, pdot = -1, Sdot = -1/2.
        let v = contact_vf(&sys, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, -1.0, -0.5]);
    }

    #[test]
    fn s_dependent_contact_field() {
        let vars = ["q", "p", "S"];
        let h = Expression::parse("S", &vars, &[]).unwrap();
        let sys = ContactSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(h),
            1.0,
            Params::empty(),
            Guard::none(),
        )
        .unwrap();
        let v = contact_vf(&sys, &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(v, vec![0.0, -1.0, -1.0]);
    }

    #[test]
    fn contact_vf_rejects_nonunit_degree() {
        let mut sys = contact_osc();
        sys.degree = -2.0;
        let err = contact_vf(&sys, &[1.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn s_independent_contact_hamiltonian_projects_to_symplectic_flow() {
        let sys = contact_osc();
        let v = contact_vf(&sys, &[0.4, -0.3, 2.0]).unwrap();
        // (q, p) block equals the symplectic field of the same H.
        assert!((v[0] - (-0.3)).abs() < 1e-15);
        assert!((v[1] - (-0.4)).abs() < 1e-15);
        // Sdot = p H_p - H
        let expect = -0.3 * -0.3 - (0.09 + 0.16) / 2.0;
        assert!((v[2] - expect).abs() < 1e-15);
    }

    #[test]
    fn lambda_field_reduced_kepler_points() {
        // Reduced Kepler H0 = 1 - (S^2/4 + pb^2)/2 in chart (theta, pb, S)
        // with Jt = -S/2, Gt = -pb, degree -2.
        let vars = ["theta", "pb", "S"];
        let h = Expression::parse("1 - (S^2/4 + pb^2)/2", &vars, &[]).unwrap();
        let sys = ContactSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(h),
            -2.0,
            Params::empty(),
            Guard::none(),
        )
        .unwrap();
        // (Jt, Gt) = (0, 1): theta' = 1, Jt' = 0, Gt' = 0.
        let v = lambda_vf(&sys, &[0.0, -1.0, 0.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!(v[1].abs() < 1e-15);
        assert!(v[2].abs() < 1e-15);
        // Collision-torus fixed point (Jt, Gt) = (sqrt(2), 0).
        let v = lambda_vf(&sys, &[0.0, 0.0, -2.0 * 2.0f64.sqrt()]).unwrap();
        for c in v {
            assert!(c.abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_vf_with_unit_degree_equals_contact_vf() {
        let sys = contact_osc();
        for x in [[0.3, 0.4, 0.1], [1.0, -0.2, 0.0], [-0.5, 0.9, 2.0]] {
            assert_eq!(lambda_vf(&sys, &x).unwrap(), contact_vf(&sys, &x).unwrap());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sys = kepler();
        let samples = vec![
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.7, -0.4, 0.3, 0.9],
            vec![2.5, 1.0, -0.1, 0.2],
        ];
        let r = gradient_fd_residual(&sys.hamiltonian, &[], &samples).unwrap();
        assert!(r < 1e-6, "residual {r}");
    }
}
