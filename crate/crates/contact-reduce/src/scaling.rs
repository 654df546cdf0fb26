//! Scaling symmetries and scaling functions: numerical verification of the
//! defining conditions (L_D ω = ω, L_D H = ΛH, [D, X_H] = (Λ-1) X_H,
//! i_{X_H} i_D ω = ΛH), the local action construction Ṡ = p·q̇ - H, and the
//! loop-action obstruction to exact degree-one corrections.

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::integrate::{first_return, integrate, ClosureRhs, IntegratorConfig, Trajectory};
use crate::phase::{hamiltonian_vector_field, symplectic_vf, Guard, SymplecticSystem, VectorField};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// Vector field with a declared scaling degree Λ.
#[derive(Debug, Clone)]
pub struct ScalingSymmetry {
    pub field: VectorField,
    pub degree: f64,
}

impl ScalingSymmetry {
    pub fn new(field: VectorField, degree: f64) -> Self {
        ScalingSymmetry { field, degree }
    }
}

/// Scalar field ρ with D(ρ) = ρ on the working region.
#[derive(Debug, Clone)]
pub struct ScalingFunction {
    pub id: String,
    pub rho: Expression,
}

impl ScalingFunction {
    pub fn new(id: &str, rho: Expression) -> Self {
        ScalingFunction {
            id: id.to_string(),
            rho,
        }
    }
}

/// Residuals of the four defining conditions, max over the sample set.
#[derive(Debug, Clone)]
pub struct SymmetryReport {
    pub liouville_residual: f64,
    pub degree_residual: f64,
    pub commutator_residual: f64,
    pub condition_lh_residual: f64,
    pub samples: usize,
    pub skipped: usize,
    pub tolerance: f64,
    pub verdict: bool,
}

impl SymmetryReport {
    pub fn max_residual(&self) -> f64 {
        self.liouville_residual
            .max(self.degree_residual)
            .max(self.commutator_residual)
            .max(self.condition_lh_residual)
    }
}

impl fmt::Display for SymmetryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "liouville_residual = {:.6e}", self.liouville_residual)?;
        writeln!(f, "degree_residual = {:.6e}", self.degree_residual)?;
        writeln!(f, "commutator_residual = {:.6e}", self.commutator_residual)?;
        writeln!(
            f,
            "condition_lh_residual = {:.6e}",
            self.condition_lh_residual
        )?;
        writeln!(f, "samples = {}", self.samples)?;
        writeln!(f, "skipped = {}", self.skipped)?;
        writeln!(f, "tolerance = {:.1e}", self.tolerance)?;
        write!(
            f,
            "verdict = {}",
            if self.verdict { "pass" } else { "fail" }
        )
    }
}

/// Per-sample least-squares factors f with [Y, X] ≈ f X, plus the worst
/// orthogonal remainder relative to |X|.
#[derive(Debug, Clone)]
pub struct SimilarityReport {
    pub f_estimates: Vec<f64>,
    pub residual: f64,
    pub skipped: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lie bracket [Y, X] = J_X·Y - J_Y·X from exact component Jacobians.
pub fn lie_bracket(
    y_field: &VectorField,
    x_field: &VectorField,
    x: &[f64],
    params: &[f64],
) -> Result<Vec<f64>> {
    let yv = y_field.eval(x, params)?;
    let xv = x_field.eval(x, params)?;
    let jx = x_field.jacobian(x, params)?;
    let jy = y_field.jacobian(x, params)?;
    let n = xv.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = dot(&jx[i], &yv) - dot(&jy[i], &xv);
    }
    Ok(out)
}

/// Check whether Y is a dynamical similarity of X: [Y, X] = f X for some
/// function f. Samples where X vanishes are skipped and flagged.
pub fn check_dynamical_similarity(
    x_field: &VectorField,
    y_field: &VectorField,
    samples: &[Vec<f64>],
    params: &[f64],
) -> Result<SimilarityReport> {
    let mut f_estimates = Vec::with_capacity(samples.len());
    let mut residual: f64 = 0.0;
    let mut skipped = 0usize;
    for x in samples {
        let xv = x_field.eval(x, params)?;
        let nx = norm(&xv);
        if nx < 1e-12 {
            skipped += 1;
            continue;
        }
        let b = lie_bracket(y_field, x_field, x, params)?;
        let f = dot(&b, &xv) / (nx * nx);
        let rem: Vec<f64> = b.iter().zip(&xv).map(|(bi, xi)| bi - f * xi).collect();
        residual = residual.max(norm(&rem) / nx);
        f_estimates.push(f);
    }
    if f_estimates.is_empty() {
        return Err(Error::Contract(
            "dynamical-similarity check: X vanished at every sample".into(),
        ));
    }
    Ok(SimilarityReport {
        f_estimates,
        residual,
        skipped,
    })
}

/// Entry (i, j) of the constant Darboux matrix Ω with layout (q.., p..):
/// Ω[q_a][p_a] = -1, Ω[p_a][q_a] = +1.
fn omega_entry(i: usize, j: usize, n: usize) -> f64 {
    if i < n && j == i + n {
        -1.0
    } else if i >= n && j == i - n {
        1.0
    } else {
        0.0
    }
}

/// λ_j = (i_D ω)_j = Σ_k D^k Ω_{kj}.
fn liouville_one_form(d: &[f64], n: usize) -> Vec<f64> {
    let mut lam = vec![0.0; 2 * n];
    for a in 0..n {
        lam[a] = d[n + a]; // Ω[p_a][q_a] = +1
        lam[n + a] = -d[a]; // Ω[q_a][p_a] = -1
    }
    lam
}

/// Verify the four conditions defining a scaling symmetry of degree Λ.
pub fn check_scaling_symmetry(
    sys: &SymplecticSystem,
    d: &ScalingSymmetry,
    samples: &[Vec<f64>],
    tolerance: f64,
) -> Result<SymmetryReport> {
    let n = sys.n_dof;
    let params = &sys.params.values;
    if d.field.dim() != 2 * n {
        return Err(Error::Contract(format!(
            "symmetry dimension {} does not match phase space dimension {}",
            d.field.dim(),
            2 * n
        )));
    }
    let xh = hamiltonian_vector_field(&sys.hamiltonian, n)?;

    let mut liouville: f64 = 0.0;
    let mut degree: f64 = 0.0;
    let mut commutator: f64 = 0.0;
    let mut condition_lh: f64 = 0.0;
    let mut skipped = 0usize;

    for x in samples {
        let dv = d.field.eval(x, params)?;
        let jd = d.field.jacobian(x, params)?;
        // (L_D ω)_ij - Ω_ij = Ω_kj ∂_i D^k + Ω_ik ∂_j D^k - Ω_ij
        for i in 0..2 * n {
            for j in (i + 1)..2 * n {
                let t1 = if j < n { jd[n + j][i] } else { -jd[j - n][i] };
                let t2 = if i < n { -jd[n + i][j] } else { jd[i - n][j] };
                liouville = liouville.max((t1 + t2 - omega_entry(i, j, n)).abs());
            }
        }

        let hdv = sys.hamiltonian.value_and_grad(x, params)?;
        degree = degree.max((dot(&hdv.partials, &dv) - d.degree * hdv.value).abs());

        let xhv = xh.eval(x, params)?;
        let nx = norm(&xhv);
        if nx < 1e-12 {
            skipped += 1;
            continue;
        }
        let b = lie_bracket(&d.field, &xh, x, params)?;
        let want: Vec<f64> = xhv.iter().map(|v| (d.degree - 1.0) * v).collect();
        let diff: Vec<f64> = b.iter().zip(&want).map(|(a, w)| a - w).collect();
        commutator = commutator.max(norm(&diff) / nx.max(1.0));

        let lam = liouville_one_form(&dv, n);
        condition_lh = condition_lh.max((dot(&lam, &xhv) - d.degree * hdv.value).abs());
    }

    let verdict = liouville < tolerance
        && degree < tolerance
        && commutator < tolerance
        && condition_lh < tolerance;
    Ok(SymmetryReport {
        liouville_residual: liouville,
        degree_residual: degree,
        commutator_residual: commutator,
        condition_lh_residual: condition_lh,
        samples: samples.len(),
        skipped,
        tolerance,
        verdict,
    })
}

/// Max |D(ρ) - ρ| over the samples.
pub fn check_scaling_function(
    d: &ScalingSymmetry,
    rho: &ScalingFunction,
    samples: &[Vec<f64>],
    params: &[f64],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in samples {
        let dv = d.field.eval(x, params)?;
        let drho = rho.rho.directional_derivative(x, params, &dv)?;
        let r = rho.rho.eval(x, params)?;
        worst = worst.max((drho - r).abs());
    }
    Ok(worst)
}

/// Integrate the system together with the action: Ṡ = p·∂H/∂p - H, S(0) = 0.
/// The returned trajectory's state is (q.., p.., S).
pub fn local_action_solution(
    sys: &SymplecticSystem,
    x0: &[f64],
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = sys.n_dof;
    if x0.len() != 2 * n {
        return Err(Error::Contract(
            "initial point does not match phase dimension".into(),
        ));
    }
    let rhs = ClosureRhs {
        dim: 2 * n + 1,
        f: |_t: f64, z: &[f64]| -> Result<Vec<f64>> {
            let x = &z[..2 * n];
            let mut v = symplectic_vf(sys, x)?;
            let h = sys.h(x)?;
            let g = sys.grad_h(x)?;
            let lagrangian = (0..n).map(|a| x[n + a] * g[n + a]).sum::<f64>() - h;
            v.push(lagrangian);
            Ok(v)
        },
    };
    let mut z0 = x0.to_vec();
    z0.push(0.0);
    integrate(&rhs, &z0, (0.0, t_max), cfg)
}

/// ∮ L dt over one loop of a periodic trajectory produced by
/// [`local_action_solution`]: the action increment at the first return of
/// the phase-space point to its start, within the 1e-6 closure tolerance.
/// A non-closed trajectory is a contract error reporting the closure gap.
pub fn loop_action(traj: &Trajectory) -> Result<f64> {
    let dim = traj.first().state.len();
    let phase_coords: Vec<usize> = (0..dim - 1).collect();
    let (t_ret, _gap) = first_return(traj, &phase_coords, 1e-6)?;
    let s_end = traj.state_at(t_ret)?[dim - 1];
    let s_start = traj.first().state[dim - 1];
    Ok(s_end - s_start)
}

// ---------------------------------------------------------------------------
// Seeded sampling

/// One coordinate block: directions uniform on the sphere, radii log-uniform
/// in [r_min, r_max]; `positive` blocks draw each component log-uniformly
/// instead (couplings, volumes).
#[derive(Debug, Clone)]
pub struct SampleBlock {
    pub dim: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub positive: bool,
}

impl SampleBlock {
    pub fn symmetric(dim: usize) -> Self {
        SampleBlock {
            dim,
            r_min: 0.1,
            r_max: 10.0,
            positive: false,
        }
    }
    pub fn positive(dim: usize) -> Self {
        SampleBlock {
            dim,
            r_min: 0.1,
            r_max: 10.0,
            positive: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub blocks: Vec<SampleBlock>,
}

impl SampleSpec {
    /// Standard phase-space sampling: one q block and one p block.
    pub fn standard(n_dof: usize) -> Self {
        SampleSpec {
            blocks: vec![SampleBlock::symmetric(n_dof), SampleBlock::symmetric(n_dof)],
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }
}

/// Default seed for reproducible reports.
pub const DEFAULT_SEED: u64 = 42;

/// Draw `count` guard-admissible points, rejection-sampling against the
/// guard. Deterministic for a fixed seed.
pub fn sample_points(
    spec: &SampleSpec,
    guard: &Guard,
    params: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let max_attempts = count * 1000;
    while out.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Validation(format!(
                "sampling failed: only {} of {count} points accepted after {attempts} draws",
                out.len()
            )));
        }
        let mut x = Vec::with_capacity(spec.dim());
        for b in &spec.blocks {
            let lo = b.r_min.ln();
            let hi = b.r_max.ln();
            if b.positive {
                for _ in 0..b.dim {
                    x.push((lo + (hi - lo) * rng.random::<f64>()).exp());
                }
            } else {
                let r = (lo + (hi - lo) * rng.random::<f64>()).exp();
                let mut dir: Vec<f64> = (0..b.dim).map(|_| gaussian(&mut rng)).collect();
                let nrm = norm(&dir);
                if nrm < 1e-12 {
                    continue;
                }
                dir.iter_mut().for_each(|v| *v *= r / nrm);
                x.extend(dir);
            }
        }
        if guard.admissible(&x, params) {
            out.push(x);
        }
    }
    Ok(out)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
