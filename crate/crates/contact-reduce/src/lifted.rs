//! Lifted systems: coupling constants promoted to dynamical variables with
//! conjugate momenta, the synthesized degree-one scaling symmetry
//! D̂ = D + Σ(1-Λᵢ)aᵢ∂aᵢ + ΣΛᵢbᵢ∂bᵢ, and reduction of the lifted system
//! with the dissipated-coupling law on the reduced side.
//!
//! Lifted coordinates are ordered (q.., b.., p.., a..): the couplings a are
//! momenta conjugate to the auxiliary positions b, so ω̂ = ω + da∧db is the
//! standard Darboux form and every upstairs operation applies unchanged.

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::phase::{Guard, ScalarField, SymplecticSystem, VectorField};
use crate::reduction::{contact_reduce, AdaptedChart, ReducedContactSystem, ReductionConfig};
use crate::scaling::{sample_points, SampleSpec, ScalingFunction, ScalingSymmetry};

/// One coupling: its name (also the lifted variable name), the degree Λᵢ of
/// its term under the base symmetry, and initial data for (aᵢ, bᵢ).
#[derive(Debug, Clone)]
pub struct CouplingSpec {
    pub name: String,
    pub degree: f64,
    pub initial: f64,
    pub momentum_initial: f64,
}

impl CouplingSpec {
    pub fn new(name: &str, degree: f64, initial: f64) -> Self {
        CouplingSpec {
            name: name.to_string(),
            degree,
            initial,
            momentum_initial: 0.0,
        }
    }
}

/// A Hamiltonian term, optionally multiplied by a lifted coupling. Plain
/// terms ride along unchanged (the empty lift is the base system).
#[derive(Debug, Clone)]
pub struct LiftTerm {
    pub expr: Expression,
    pub coupling: Option<CouplingSpec>,
}

impl LiftTerm {
    pub fn coupled(expr: Expression, coupling: CouplingSpec) -> Self {
        LiftTerm {
            expr,
            coupling: Some(coupling),
        }
    }
    pub fn plain(expr: Expression) -> Self {
        LiftTerm {
            expr,
            coupling: None,
        }
    }
}

/// The assembled lifted system H = Σ aᵢ Hᵢ on M × R^{2k}.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    pub base_vars: Vec<String>,
    pub n_base: usize,
    pub terms: Vec<LiftTerm>,
    pub base_symmetry: ScalingSymmetry,
    pub system: SymplecticSystem,
    pub lifted_vars: Vec<String>,
    /// Homogeneity residuals max|D(Hᵢ) - Λᵢ Hᵢ| recorded at construction.
    pub term_residuals: Vec<f64>,
}

impl LiftedSystem {
    pub fn couplings(&self) -> impl Iterator<Item = &CouplingSpec> {
        self.terms.iter().filter_map(|t| t.coupling.as_ref())
    }

    pub fn n_couplings(&self) -> usize {
        self.couplings().count()
    }

    /// Index of aᵢ in the lifted coordinates.
    pub fn a_index(&self, i: usize) -> usize {
        2 * self.n_base + self.n_couplings() + i
    }

    /// Index of bᵢ in the lifted coordinates.
    pub fn b_index(&self, i: usize) -> usize {
        self.n_base + i
    }

    /// Extend a base phase point with the declared coupling initial data.
    pub fn initial_state(&self, base_point: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_base;
        let k = self.n_couplings();
        if base_point.len() != 2 * n {
            return Err(Error::Contract(
                "base point does not match base dimension".into(),
            ));
        }
        let mut out = Vec::with_capacity(2 * (n + k));
        out.extend_from_slice(&base_point[..n]);
        out.extend(self.couplings().map(|c| c.momentum_initial));
        out.extend_from_slice(&base_point[n..]);
        out.extend(self.couplings().map(|c| c.initial));
        Ok(out)
    }

    /// Sample blocks matching the lifted layout: base q, b, base p, a.
    pub fn sample_spec(&self) -> SampleSpec {
        let n = self.n_base;
        let k = self.n_couplings();
        let mut blocks = vec![crate::scaling::SampleBlock::symmetric(n)];
        if k > 0 {
            blocks.push(crate::scaling::SampleBlock::symmetric(k));
        }
        blocks.push(crate::scaling::SampleBlock::symmetric(n));
        if k > 0 {
            blocks.push(crate::scaling::SampleBlock::positive(k));
        }
        SampleSpec { blocks }
    }
}

/// Identity re-expression of base phase variables inside the lifted set.
fn base_to_lifted(lifted_vars: &[String], params: &[String], n: usize, k: usize) -> Vec<Expression> {
    let mut out = Vec::with_capacity(2 * n);
    for a in 0..n {
        out.push(Expression::var(a, lifted_vars, params));
    }
    for a in 0..n {
        out.push(Expression::var(n + k + a, lifted_vars, params));
    }
    out
}

/// Build the lifted system, verifying each coupled term's homogeneity
/// L_D Hᵢ = Λᵢ Hᵢ at seeded sample points (refused above tolerance).
pub fn lift(
    base: &SymplecticSystem,
    d_base: &ScalingSymmetry,
    terms: Vec<LiftTerm>,
    homogeneity_tol: f64,
    seed: u64,
) -> Result<LiftedSystem> {
    let n = base.n_dof;
    let params_names = base
        .hamiltonian
        .expression()
        .map_or_else(|| base.params.names.clone(), |e| e.params().to_vec());
    let samples = sample_points(
        &SampleSpec::standard(n),
        &base.guard,
        &base.params.values,
        50,
        seed,
    )?;
    let mut residuals = Vec::with_capacity(terms.len());
    for t in &terms {
        let mut worst: f64 = 0.0;
        if let Some(c) = &t.coupling {
            for x in &samples {
                let dv = d_base.field.eval(x, &base.params.values)?;
                let dh = t.expr.directional_derivative(x, &base.params.values, &dv)?;
                let hv = t.expr.eval(x, &base.params.values)?;
                worst = worst.max((dh - c.degree * hv).abs() / hv.abs().max(1.0));
            }
            if worst > homogeneity_tol {
                return Err(Error::Validation(format!(
                    "term `{}` is not D-homogeneous of degree {}: residual {worst:.3e}",
                    t.expr.to_text(),
                    c.degree
                )));
            }
        }
        residuals.push(worst);
    }

    let k = terms.iter().filter(|t| t.coupling.is_some()).count();
    let mut lifted_vars: Vec<String> = Vec::with_capacity(2 * (n + k));
    lifted_vars.extend_from_slice(&base.var_names[..n]);
    for t in &terms {
        if let Some(c) = &t.coupling {
            lifted_vars.push(format!("b_{}", c.name));
        }
    }
    lifted_vars.extend_from_slice(&base.var_names[n..]);
    for t in &terms {
        if let Some(c) = &t.coupling {
            lifted_vars.push(c.name.clone());
        }
    }

    let remap = base_to_lifted(&lifted_vars, &params_names, n, k);
    let mut hamiltonian: Option<Expression> = None;
    let mut coupling_idx = 0usize;
    for t in &terms {
        let term_lifted = t.expr.compose(&remap)?;
        let piece = match &t.coupling {
            Some(_) => {
                let a_var = Expression::var(2 * n + k + coupling_idx, &lifted_vars, &params_names);
                coupling_idx += 1;
                a_var.multiplied(&term_lifted)?
            }
            None => term_lifted,
        };
        hamiltonian = Some(match hamiltonian {
            None => piece,
            Some(h) => h.added(&piece)?,
        });
    }
    let hamiltonian =
        hamiltonian.ok_or_else(|| Error::Contract("lift needs at least one term".into()))?;

    // Couplings may not cross zero at runtime; the base guard carries over.
    let mut guard = base.guard.compose(&remap)?;
    for i in 0..k {
        guard = guard.and_expr_above(
            Expression::var(2 * n + k + i, &lifted_vars, &params_names),
            0.0,
        );
    }

    let system = SymplecticSystem::new(
        lifted_vars.clone(),
        ScalarField::from_expression(hamiltonian),
        base.params.clone(),
        guard,
    )?;

    Ok(LiftedSystem {
        base_vars: base.var_names.clone(),
        n_base: n,
        terms,
        base_symmetry: d_base.clone(),
        system,
        lifted_vars,
        term_residuals: residuals,
    })
}

/// The lifted Hamiltonian vector field (plain Hamilton equations on the
/// lifted space): the a-block is identically zero and ḃᵢ = Hᵢ.
pub fn lifted_vf(l: &LiftedSystem, x: &[f64]) -> Result<Vec<f64>> {
    crate::phase::symplectic_vf(&l.system, x)
}

/// Scaling symmetry of the lifted system with the requested degree:
/// D̂ = D + Σ(Λ̂-Λᵢ)aᵢ∂aᵢ + Σ(1-Λ̂+Λᵢ)bᵢ∂bᵢ (degree one for Λ̂ = 1).
pub fn lifted_scaling_symmetry(l: &LiftedSystem, target_degree: f64) -> Result<ScalingSymmetry> {
    let n = l.n_base;
    let k = l.n_couplings();
    let params = l
        .system
        .hamiltonian
        .expression()
        .map_or_else(|| l.system.params.names.clone(), |e| e.params().to_vec());
    let remap = base_to_lifted(&l.lifted_vars, &params, n, k);
    let base_comps = l
        .base_symmetry
        .field
        .components()
        .ok_or_else(|| Error::Contract("base symmetry must be expression-backed".into()))?;

    let mut comps: Vec<Expression> = Vec::with_capacity(2 * (n + k));
    for a in 0..n {
        comps.push(base_comps[a].compose(&remap)?);
    }
    for (i, c) in l.couplings().enumerate() {
        let b_var = Expression::var(n + i, &l.lifted_vars, &params);
        let coeff = Expression::constant(1.0 - target_degree + c.degree, &l.lifted_vars, &params);
        comps.push(coeff.multiplied(&b_var)?);
    }
    for a in 0..n {
        comps.push(base_comps[n + a].compose(&remap)?);
    }
    for (i, c) in l.couplings().enumerate() {
        let a_var = Expression::var(2 * n + k + i, &l.lifted_vars, &params);
        let coeff = Expression::constant(target_degree - c.degree, &l.lifted_vars, &params);
        comps.push(coeff.multiplied(&a_var)?);
    }
    Ok(ScalingSymmetry::new(
        VectorField::from_expressions(comps)?,
        target_degree,
    ))
}

/// The |a|^(1-Λ) variant: Ĥ = Σ |aᵢ|^(1-Λᵢ) Hᵢ carries the degree-one
/// symmetry D̂ = D + Σ aᵢ∂aᵢ. Couplings are then degree-one functions and
/// dissipate downstairs at exactly the Reeb rate.
pub fn normalized_lift(l: &LiftedSystem) -> Result<(SymplecticSystem, ScalingSymmetry)> {
    let n = l.n_base;
    let k = l.n_couplings();
    let params = l
        .system
        .hamiltonian
        .expression()
        .map_or_else(|| l.system.params.names.clone(), |e| e.params().to_vec());
    let remap = base_to_lifted(&l.lifted_vars, &params, n, k);

    let mut hamiltonian: Option<Expression> = None;
    let mut idx = 0usize;
    for t in &l.terms {
        let term_lifted = t.expr.compose(&remap)?;
        let piece = match &t.coupling {
            Some(c) => {
                let a_var = Expression::var(2 * n + k + idx, &l.lifted_vars, &params);
                idx += 1;
                a_var
                    .absolute()
                    .powered(1.0 - c.degree)
                    .multiplied(&term_lifted)?
            }
            None => term_lifted,
        };
        hamiltonian = Some(match hamiltonian {
            None => piece,
            Some(h) => h.added(&piece)?,
        });
    }
    let hamiltonian = hamiltonian.unwrap();

    let sys = SymplecticSystem::new(
        l.lifted_vars.clone(),
        ScalarField::from_expression(hamiltonian),
        l.system.params.clone(),
        l.system.guard.clone(),
    )?;

    let base_comps = l.base_symmetry.field.components().unwrap();
    let mut comps: Vec<Expression> = Vec::with_capacity(2 * (n + k));
    for a in 0..n {
        comps.push(base_comps[a].compose(&remap)?);
    }
    for _ in 0..k {
        comps.push(Expression::constant(0.0, &l.lifted_vars, &params));
    }
    for a in 0..n {
        comps.push(base_comps[n + a].compose(&remap)?);
    }
    for i in 0..k {
        comps.push(Expression::var(2 * n + k + i, &l.lifted_vars, &params));
    }
    let d_hat = ScalingSymmetry::new(VectorField::from_expressions(comps)?, 1.0);
    Ok((sys, d_hat))
}

/// A coupling pushed to the reduced space: `pushed` evaluates
/// c̄ᵢ = aᵢ/ρ̂^(1-Λᵢ) in the reduced coordinates; `weight` is 1-Λᵢ.
#[derive(Debug, Clone)]
pub struct ReducedCoupling {
    pub name: String,
    pub weight: f64,
    pub pushed: Expression,
}

/// Reduced lifted system: a degree-one contact system whose state carries
/// the pushed-forward couplings.
#[derive(Debug, Clone)]
pub struct ReducedLiftedSystem {
    pub red: ReducedContactSystem,
    pub couplings: Vec<ReducedCoupling>,
}

impl ReducedLiftedSystem {
    /// Degree-one-normalized coupling values ā = c̄^(1/weight); weight-zero
    /// couplings are already invariant and returned as-is.
    pub fn coupling_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let params = &self.red.contact.params.values;
        self.couplings
            .iter()
            .map(|c| {
                let v = c.pushed.eval(x, params)?;
                if c.weight == 0.0 {
                    Ok(v)
                } else {
                    if v <= 0.0 {
                        return Err(Error::Domain {
                            context: format!("coupling `{}`", c.name),
                            message: "pushed coupling must stay positive".into(),
                        });
                    }
                    Ok(v.powf(1.0 / c.weight))
                }
            })
            .collect()
    }

    /// Residuals |dā/dτ + R(H) ā| of the dissipated-coupling law along the
    /// reduced flow (|dc̄/dτ| for weight-zero couplings, which are conserved).
    pub fn dissipated_residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let contact = &self.red.contact;
        let params = &contact.params.values;
        let flow = crate::phase::lambda_vf(contact, x)?;
        let dv = contact.hamiltonian.value_and_grad(x, params)?;
        let reeb_h = dv.partials[2 * contact.n_pairs];
        self.couplings
            .iter()
            .map(|c| {
                let v = c.pushed.eval(x, params)?;
                let vdot = c.pushed.directional_derivative(x, params, &flow)?;
                if c.weight == 0.0 {
                    return Ok(vdot.abs());
                }
                if v <= 0.0 {
                    return Err(Error::Domain {
                        context: format!("coupling `{}`", c.name),
                        message: "pushed coupling must stay positive".into(),
                    });
                }
                let a_bar = v.powf(1.0 / c.weight);
                let a_dot = a_bar / v * vdot / c.weight;
                Ok((a_dot + reeb_h * a_bar).abs())
            })
            .collect()
    }
}

/// Reduce a lifted system by its degree-one symmetry through an adapted
/// chart. The pushed-coupling expressions are validated against
/// aᵢ/ρ̂^(1-Λᵢ) on samples.
pub fn reduce_lifted(
    l: &LiftedSystem,
    rho_hat: &ScalingFunction,
    chart_hat: &AdaptedChart,
    couplings: Vec<ReducedCoupling>,
    reduced_guard: Guard,
    cfg: &ReductionConfig,
) -> Result<ReducedLiftedSystem> {
    if couplings.len() != l.n_couplings() {
        return Err(Error::Contract(format!(
            "{} pushed couplings supplied for {} lifted couplings",
            couplings.len(),
            l.n_couplings()
        )));
    }
    let d_hat = lifted_scaling_symmetry(l, 1.0)?;
    let red = contact_reduce(&l.system, &d_hat, rho_hat, chart_hat, reduced_guard, cfg)?;

    // Pushed couplings must equal a_i / ρ̂^(1-Λ_i) through the chart.
    let params = &l.system.params.values;
    let samples = sample_points(
        &cfg.sample_spec,
        &l.system.guard,
        params,
        cfg.samples.min(50),
        cfg.seed,
    )?;
    for (i, (rc, spec)) in couplings.iter().zip(l.couplings()).enumerate() {
        if (rc.weight - (1.0 - spec.degree)).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "coupling `{}` weight {} does not match 1 - degree = {}",
                rc.name,
                rc.weight,
                1.0 - spec.degree
            )));
        }
        for x in &samples {
            let reduced = chart_hat.reduced_point(x, params)?;
            let got = rc.pushed.eval(&reduced, params)?;
            let rho = rho_hat.rho.eval(x, params)?;
            let want = x[l.a_index(i)] / rho.powf(rc.weight);
            if (got - want).abs() > 1e-8 * want.abs().max(1.0) {
                return Err(Error::Validation(format!(
                    "pushed coupling `{}` disagrees with a/rho^w: {got} vs {want}",
                    rc.name
                )));
            }
        }
    }
    Ok(ReducedLiftedSystem { red, couplings })
}
