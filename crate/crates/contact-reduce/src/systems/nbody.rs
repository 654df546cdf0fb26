//! n-body problem with unit masses and homogeneous degree -1 potential
//! U(q) = Σ_{i<j} 1/|q_i - q_j|, and its blown-up scale reduction: with
//! s = q/‖q‖, y = ‖q‖^(1/2) p and ν = s·y, the scale-invariant equations
//! are s' = y - νs, y' = ν y/2 + ∇U(s), with the collision manifold the
//! invariant level H = U(s) - ‖y‖²/2 = 0.

use super::{ParamMap, Scenario, ScenarioSpace, SystemBundle};
use crate::error::{Error, Result};
use crate::integrate::OdeRhs;
use crate::phase::{Guard, Params, ScalarField, SymplecticSystem};
use crate::scaling::{SampleBlock, SampleSpec};
use std::sync::Arc;

/// Blown-up n-body dynamics in (s, y) variables, state length 2nd.
#[derive(Debug, Clone, Copy)]
pub struct NBodyBlowup {
    pub n: usize,
    pub d: usize,
}

impl NBodyBlowup {
    pub fn dim(&self) -> usize {
        2 * self.n * self.d
    }

    fn nd(&self) -> usize {
        self.n * self.d
    }

    pub fn potential(&self, s: &[f64]) -> Result<f64> {
        let d = self.d;
        let mut u = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let mut r2 = 0.0;
                for a in 0..d {
                    let diff = s[i * d + a] - s[j * d + a];
                    r2 += diff * diff;
                }
                if r2 == 0.0 {
                    return Err(Error::Domain {
                        context: "n-body potential".into(),
                        message: format!("bodies {i} and {j} coincide"),
                    });
                }
                u += 1.0 / r2.sqrt();
            }
        }
        Ok(u)
    }

    pub fn grad_potential(&self, s: &[f64]) -> Result<Vec<f64>> {
        let d = self.d;
        let mut g = vec![0.0; self.nd()];
        for i in 0..self.n {
            for j in i + 1..self.n {
                let mut r2 = 0.0;
                for a in 0..d {
                    let diff = s[i * d + a] - s[j * d + a];
                    r2 += diff * diff;
                }
                if r2 == 0.0 {
                    return Err(Error::Domain {
                        context: "n-body potential gradient".into(),
                        message: format!("bodies {i} and {j} coincide"),
                    });
                }
                let inv_r3 = r2.powf(-1.5);
                for a in 0..d {
                    let diff = s[i * d + a] - s[j * d + a];
                    g[i * d + a] -= diff * inv_r3;
                    g[j * d + a] += diff * inv_r3;
                }
            }
        }
        Ok(g)
    }

    /// Contact Hamiltonian on the blow-up: H = U(s) - ‖y‖²/2.
    pub fn hamiltonian(&self, state: &[f64]) -> Result<f64> {
        let nd = self.nd();
        let y2: f64 = state[nd..].iter().map(|v| v * v).sum();
        Ok(self.potential(&state[..nd])? - y2 / 2.0)
    }

    pub fn nu(&self, state: &[f64]) -> f64 {
        let nd = self.nd();
        (0..nd).map(|i| state[i] * state[nd + i]).sum()
    }

    /// Blow-up field: s' = y - νs, y' = νy/2 + ∇U(s).
    pub fn field(&self, state: &[f64]) -> Result<Vec<f64>> {
        let nd = self.nd();
        let s = &state[..nd];
        let y = &state[nd..];
        let nu = self.nu(state);
        let gu = self.grad_potential(s)?;
        let mut out = Vec::with_capacity(2 * nd);
        for i in 0..nd {
            out.push(y[i] - nu * s[i]);
        }
        for i in 0..nd {
            out.push(0.5 * nu * y[i] + gu[i]);
        }
        Ok(out)
    }

    /// Upstairs system H = ‖p‖²/2 - U(q) with the collision-set guard.
    pub fn upstairs(&self) -> Result<SymplecticSystem> {
        let me = *self;
        let nd = self.nd();
        let mut names = Vec::with_capacity(2 * nd);
        for i in 0..self.n {
            for a in 0..self.d {
                names.push(format!("q{}_{a}", i + 1));
            }
        }
        for i in 0..self.n {
            for a in 0..self.d {
                names.push(format!("p{}_{a}", i + 1));
            }
        }
        let value = Arc::new(move |x: &[f64], _p: &[f64]| -> Result<f64> {
            let ke: f64 = x[nd..].iter().map(|v| v * v).sum::<f64>() / 2.0;
            Ok(ke - me.potential(&x[..nd])?)
        });
        let gradient = Arc::new(move |x: &[f64], _p: &[f64]| -> Result<Vec<f64>> {
            let mut g = me.grad_potential(&x[..nd])?;
            for v in g.iter_mut() {
                *v = -*v;
            }
            g.extend_from_slice(&x[nd..]);
            Ok(g)
        });
        let guard_me = *self;
        let guard = Guard::closure(
            Arc::new(move |x: &[f64], _p: &[f64]| {
                guard_me.potential(&x[..guard_me.nd()]).is_ok()
                    && x[..guard_me.nd()].iter().map(|v| v * v).sum::<f64>() > 1e-12
            }),
            "separated bodies",
        );
        SymplecticSystem::new(
            names,
            ScalarField::from_closures(2 * nd, "n-body Hamiltonian", value, gradient),
            Params::empty(),
            guard,
        )
    }
}

/// ODE adapter for the blow-up field.
pub struct BlowupRhs(pub NBodyBlowup);

impl OdeRhs for BlowupRhs {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rhs(&self, _t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.0.field(x)
    }
}

/// Velocity scale of the two-body ↔ Kepler identification.
pub const KEPLER_EMBED_FACTOR: f64 = 0.840_896_415_253_714_6; // 2^(-1/4)

/// Center-of-mass embedding of the Kepler blow-up torus coordinates
/// (θ, J̃, G̃) into the two-body blow-up phase space (n = 2, d = 2):
/// s = (σ, -σ)/√2, y = c (ỹ, -ỹ)/√2 with σ = e^{iθ}, ỹ = J̃σ + G̃ iσ and
/// c = 2^(-1/4). The two-body field then equals c times the pushforward of
/// the Kepler blow-up field (one constant time rescale).
pub fn kepler_blowup_embedding(theta: f64, jt: f64, gt: f64) -> Vec<f64> {
    let c = KEPLER_EMBED_FACTOR;
    let sigma = [theta.cos(), theta.sin()];
    let isigma = [-theta.sin(), theta.cos()];
    let ytil = [
        jt * sigma[0] + gt * isigma[0],
        jt * sigma[1] + gt * isigma[1],
    ];
    let r2 = std::f64::consts::SQRT_2;
    vec![
        sigma[0] / r2,
        sigma[1] / r2,
        -sigma[0] / r2,
        -sigma[1] / r2,
        c * ytil[0] / r2,
        c * ytil[1] / r2,
        -c * ytil[0] / r2,
        -c * ytil[1] / r2,
    ]
}

/// Pushforward of the Kepler blow-up field (θ', J̃', G̃') through the
/// embedding, including the c factor: what the two-body field must equal.
pub fn kepler_blowup_pushforward(theta: f64, jt: f64, gt: f64) -> Vec<f64> {
    let c = KEPLER_EMBED_FACTOR;
    // Kepler blow-up rates (ρ-reduction in invariant coordinates).
    let h0 = 1.0 - (jt * jt + gt * gt) / 2.0;
    let theta_dot = gt;
    let jt_dot = gt * gt / 2.0 - h0;
    let gt_dot = -jt * gt / 2.0;

    let sigma = [theta.cos(), theta.sin()];
    let isigma = [-theta.sin(), theta.cos()];
    // dσ/dτ = θ' iσ; dỹ/dτ = (J̃' - G̃ θ')σ + (J̃ θ' + G̃')iσ.
    let sdot = [theta_dot * isigma[0], theta_dot * isigma[1]];
    let ya = jt_dot - gt * theta_dot;
    let yb = jt * theta_dot + gt_dot;
    let ydot = [
        ya * sigma[0] + yb * isigma[0],
        ya * sigma[1] + yb * isigma[1],
    ];
    let r2 = std::f64::consts::SQRT_2;
    vec![
        c * sdot[0] / r2,
        c * sdot[1] / r2,
        -c * sdot[0] / r2,
        -c * sdot[1] / r2,
        c * c * ydot[0] / r2,
        c * c * ydot[1] / r2,
        -c * c * ydot[0] / r2,
        -c * c * ydot[1] / r2,
    ]
}

pub fn build(params: ParamMap) -> Result<SystemBundle> {
    let n = super::param_or(params, "n", 2.0);
    let d = super::param_or(params, "d", 2.0);
    if n < 2.0 || d < 1.0 || n.fract() != 0.0 || d.fract() != 0.0 {
        return Err(Error::Contract(format!(
            "nbody_blowup needs integer n >= 2, d >= 1 (got n = {n}, d = {d})"
        )));
    }
    let blowup = NBodyBlowup {
        n: n as usize,
        d: d as usize,
    };
    let sys = blowup.upstairs()?;
    let nd = blowup.n * blowup.d;
    let spec = SampleSpec {
        blocks: vec![SampleBlock::symmetric(nd), SampleBlock::symmetric(nd)],
    };
    super::validate_gradients(&sys, &spec)?;

    // Collision-manifold scenario: unit-sphere configuration with ‖y‖² = 2U.
    let mut s0 = vec![0.0; 2 * nd];
    let emb = if blowup.n == 2 && blowup.d == 2 {
        kepler_blowup_embedding(0.0, 0.0, 2.0f64.sqrt())
    } else {
        // Spread bodies on a circle in the first two coordinates.
        let mut v = vec![0.0; 2 * nd];
        for i in 0..blowup.n {
            let ang = std::f64::consts::TAU * i as f64 / blowup.n as f64;
            v[i * blowup.d] = ang.cos() / (blowup.n as f64).sqrt();
            if blowup.d > 1 {
                v[i * blowup.d + 1] = ang.sin() / (blowup.n as f64).sqrt();
            }
        }
        let u = blowup.potential(&v[..nd])?;
        let yscale = (2.0 * u).sqrt() / (nd as f64).sqrt();
        for i in 0..nd {
            v[nd + i] = yscale * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        v
    };
    s0.copy_from_slice(&emb);

    let scenarios = vec![Scenario {
        name: "collision-manifold".into(),
        space: ScenarioSpace::Blowup,
        initial: s0,
        span: (0.0, 6.0),
        expected: vec![("hamiltonian".into(), 0.0)],
        notes: "starts on H = U(s) - |y|^2/2 = 0; the level is invariant under \
                the blow-up flow"
            .into(),
    }];

    let mut blocks = vec![SampleBlock::symmetric(nd)];
    blocks.push(SampleBlock::symmetric(nd));
    Ok(SystemBundle {
        id: "nbody_blowup".into(),
        doc: format!(
            "{}-body problem in {} dimensions with unit masses and the \
             homogeneous degree -1 potential U = sum 1/|qi - qj|; carries the \
             degree -2 scaling symmetry 2q dq - p dp and the blown-up reduction \
             s' = y - (s.y)s, y' = (s.y)y/2 + grad U(s) on the unit sphere |s| = 1, \
             with collision manifold U(s) - |y|^2/2 = 0.",
            blowup.n, blowup.d
        ),
        system: sys,
        symmetries: vec![],
        scaling_functions: vec![],
        charts: vec![],
        reduced: vec![],
        herglotz: None,
        lift: None,
        reduced_lift: None,
        scenarios,
        sample_spec: SampleSpec { blocks },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, IntegratorConfig};

    #[test]
    fn sphere_constraint_is_preserved() {
        let b = NBodyBlowup { n: 3, d: 2 };
        // Equilateral configuration on the unit sphere of R^6.
        let mut state = vec![0.0; 12];
        for i in 0..3 {
            let ang = std::f64::consts::TAU * i as f64 / 3.0;
            state[2 * i] = ang.cos() / 3.0f64.sqrt();
            state[2 * i + 1] = ang.sin() / 3.0f64.sqrt();
        }
        state[6] = 0.2;
        state[9] = -0.1;
        state[11] = 0.3;
        let traj = integrate(
            &BlowupRhs(b),
            &state,
            (0.0, 3.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        for s in &traj.samples {
            let norm2: f64 = s.state[..6].iter().map(|v| v * v).sum();
            assert!((norm2 - 1.0).abs() < 1e-8, "|s|^2 drifted to {norm2}");
        }
    }

    #[test]
    fn two_body_field_matches_the_kepler_pushforward() {
        let b = NBodyBlowup { n: 2, d: 2 };
        let mut worst: f64 = 0.0;
        for (theta, jt, gt) in [
            (0.0, 0.0, 2.0f64.sqrt()),
            (0.3, 0.5, 1.0),
            (-1.2, -0.8, 0.6),
            (2.0, 1.2, -0.4),
        ] {
            let x = kepler_blowup_embedding(theta, jt, gt);
            let got = b.field(&x).unwrap();
            let want = kepler_blowup_pushforward(theta, jt, gt);
            for (a, w) in got.iter().zip(&want) {
                worst = worst.max((a - w).abs());
            }
        }
        assert!(worst < 1e-8, "identification residual {worst}");
    }

    #[test]
    fn collinear_fixed_points_match_the_collision_torus() {
        let b = NBodyBlowup { n: 2, d: 2 };
        let sqrt2 = std::f64::consts::SQRT_2;
        for jt in [sqrt2, -sqrt2] {
            let x = kepler_blowup_embedding(0.7, jt, 0.0);
            let v = b.field(&x).unwrap();
            for c in &v {
                assert!(c.abs() < 1e-12, "field {v:?} at Jt = {jt}");
            }
            let h = b.hamiltonian(&x).unwrap();
            assert!(h.abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_is_preserved_on_the_collision_manifold() {
        let b = NBodyBlowup { n: 2, d: 2 };
        let x0 = kepler_blowup_embedding(0.0, 0.0, 2.0f64.sqrt());
        assert!(b.hamiltonian(&x0).unwrap().abs() < 1e-12);
        let mut cfg = IntegratorConfig::default();
        cfg.abs_tol = 1e-12;
        cfg.rel_tol = 1e-12;
        let traj = integrate(&BlowupRhs(b), &x0, (0.0, 6.0), &cfg).unwrap();
        for s in &traj.samples {
            let h = b.hamiltonian(&s.state).unwrap();
            assert!(h.abs() < 1e-7, "H drifted to {h}");
        }
    }

    #[test]
    fn upstairs_gradient_matches_finite_differences() {
        let b = NBodyBlowup { n: 2, d: 2 };
        let sys = b.upstairs().unwrap();
        let samples = vec![
            vec![1.0, 0.0, -1.0, 0.2, 0.1, 0.5, -0.2, -0.4],
            vec![0.5, 0.8, -0.3, -0.9, 0.0, 0.3, 0.2, -0.1],
        ];
        let r = crate::phase::gradient_fd_residual(&sys.hamiltonian, &[], &samples).unwrap();
        assert!(r < 1e-6, "residual {r}");
    }
}
