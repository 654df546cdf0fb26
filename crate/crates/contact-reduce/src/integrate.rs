//! ODE drivers (embedded Dormand–Prince 5(4), fixed-step RK4,
//! Störmer–Verlet), event detection, the ρ^(1-Λ) time reparametrization and
//! the trajectory-comparison harness.

use crate::error::{Error, Result};
use crate::phase::{symplectic_vf, ContactSystem, SymplecticSystem};
use std::sync::Arc;

/// Right-hand side of an autonomous first-order system.
pub trait OdeRhs {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64]) -> Result<Vec<f64>>;
}

/// Hamilton's equations of a symplectic system.
pub struct SymplecticRhs<'a>(pub &'a SymplecticSystem);

impl OdeRhs for SymplecticRhs<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rhs(&self, _t: f64, x: &[f64]) -> Result<Vec<f64>> {
        symplectic_vf(self.0, x)
    }
}

/// Λ-Hamiltonian flow of a contact system (the ordinary contact flow when
/// the degree is one).
pub struct ContactRhs<'a>(pub &'a ContactSystem);

impl OdeRhs for ContactRhs<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rhs(&self, _t: f64, x: &[f64]) -> Result<Vec<f64>> {
        crate::phase::lambda_vf(self.0, x)
    }
}

/// Closure-backed RHS.
pub struct ClosureRhs<F: Fn(f64, &[f64]) -> Result<Vec<f64>>> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64]) -> Result<Vec<f64>>> OdeRhs for ClosureRhs<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        (self.f)(t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
    StormerVerlet,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "rk4-fixed" => Ok(Method::Rk4Fixed),
            "rk45-adaptive" => Ok(Method::Rk45Adaptive),
            "stormer-verlet" => Ok(Method::StormerVerlet),
            other => Err(Error::Contract(format!("unknown method `{other}`"))),
        }
    }
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rk4Fixed => "rk4-fixed",
            Method::Rk45Adaptive => "rk45-adaptive",
            Method::StormerVerlet => "stormer-verlet",
        }
    }
}

type EventFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;

/// Stops the integration when `field` drops below `threshold`; the crossing
/// time is refined by bisection to 1e-10 in t.
#[derive(Clone)]
pub struct EventSpec {
    pub name: String,
    pub field: Arc<EventFn>,
    pub threshold: f64,
}

impl std::fmt::Debug for EventSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EventSpec({} < {:.3e})", self.name, self.threshold)
    }
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step size for the fixed-step drivers; the number of steps is the
    /// nearest integer to span/step so the span end is hit exactly.
    pub step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    pub events: Vec<EventSpec>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk45Adaptive,
            step: 0.01,
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_steps: 1_000_000,
            events: Vec::new(),
        }
    }
}

impl IntegratorConfig {
    pub fn with_method(mut self, m: Method) -> Self {
        self.method = m;
        self
    }
    pub fn with_step(mut self, h: f64) -> Self {
        self.step = h;
        self
    }
    pub fn with_event(mut self, e: EventSpec) -> Self {
        self.events.push(e);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    SpanEnd,
    Event { name: String, t: f64 },
    MaxSteps,
    Failure(String),
}

impl StopReason {
    pub fn label(&self) -> String {
        match self {
            StopReason::SpanEnd => "span-end".into(),
            StopReason::Event { name, .. } => format!("event:{name}"),
            StopReason::MaxSteps => "max-steps".into(),
            StopReason::Failure(m) => format!("failure:{m}"),
        }
    }
}

/// One stored integration sample. `deriv` is the RHS at the sample, kept for
/// cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub tau: Option<f64>,
    pub state: Vec<f64>,
    pub deriv: Vec<f64>,
}

/// Time-stamped state samples with optional reparametrized time and
/// diagnostics columns.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stop: StopReason,
    pub method: Method,
    pub system_id: String,
    pub diagnostics: Vec<(String, Vec<f64>)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().unwrap()
    }

    pub fn t_span(&self) -> (f64, f64) {
        (self.first().t, self.last().t)
    }

    /// Cubic Hermite state interpolation at time `t`.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let ts: Vec<f64> = self.samples.iter().map(|s| s.t).collect();
        let idx = locate(&ts, t)?;
        let (a, b) = (&self.samples[idx], &self.samples[idx + 1]);
        Ok(hermite(a.t, &a.state, &a.deriv, b.t, &b.state, &b.deriv, t))
    }

    /// Attach a named per-sample diagnostic column.
    pub fn push_diagnostic(
        &mut self,
        name: &str,
        f: impl Fn(&Sample) -> Result<f64>,
    ) -> Result<()> {
        let col: Result<Vec<f64>> = self.samples.iter().map(&f).collect();
        self.diagnostics.push((name.to_string(), col?));
        Ok(())
    }
}

fn locate(ts: &[f64], t: f64) -> Result<usize> {
    if ts.len() < 2 {
        return Err(Error::Contract(
            "trajectory has fewer than two samples".into(),
        ));
    }
    let (t0, t1) = (ts[0], *ts.last().unwrap());
    let eps = 1e-12 * (t1 - t0).abs().max(1.0);
    if t < t0 - eps || t > t1 + eps {
        return Err(Error::Contract(format!(
            "time {t} outside trajectory span [{t0}, {t1}]"
        )));
    }
    let t = t.clamp(t0, t1);
    let mut lo = 0usize;
    let mut hi = ts.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ts[mid] <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.min(ts.len() - 2))
}

/// Cubic Hermite on [t0, t1] with endpoint values and derivatives.
pub fn hermite(
    t0: f64,
    x0: &[f64],
    f0: &[f64],
    t1: f64,
    x1: &[f64],
    f1: &[f64],
    t: f64,
) -> Vec<f64> {
    let h = t1 - t0;
    if h == 0.0 {
        return x0.to_vec();
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    x0.iter()
        .zip(x1)
        .zip(f0.iter().zip(f1))
        .map(|((a, b), (da, db))| h00 * a + h10 * h * da + h01 * b + h11 * h * db)
        .collect()
}

// ---------------------------------------------------------------------------
// Drivers

/// Integrate over `span = (t0, t1)`, `t1 >= t0`. A zero-length span returns a
/// single-sample trajectory.
pub fn integrate(
    rhs: &dyn OdeRhs,
    x0: &[f64],
    span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if x0.len() != rhs.dim() {
        return Err(Error::Contract(format!(
            "state length {} does not match system dimension {}",
            x0.len(),
            rhs.dim()
        )));
    }
    if span.1 < span.0 {
        return Err(Error::Contract("span end precedes span start".into()));
    }
    // Errors at the initial point (guard violations included) surface now.
    let f0 = rhs.rhs(span.0, x0)?;
    for e in &cfg.events {
        if (e.field)(x0)? < e.threshold {
            return Err(Error::Contract(format!(
                "event `{}` already triggered at the initial point",
                e.name
            )));
        }
    }
    if span.1 == span.0 {
        return Ok(Trajectory {
            samples: vec![Sample {
                t: span.0,
                tau: None,
                state: x0.to_vec(),
                deriv: f0,
            }],
            stop: StopReason::SpanEnd,
            method: cfg.method,
            system_id: String::new(),
            diagnostics: Vec::new(),
        });
    }
    match cfg.method {
        Method::Rk45Adaptive => rk45(rhs, x0, f0, span, cfg),
        Method::Rk4Fixed => rk4_fixed(rhs, x0, f0, span, cfg),
        Method::StormerVerlet => Err(Error::Contract(
            "stormer-verlet runs through integrate_symplectic on separable systems".into(),
        )),
    }
}

/// Integrate a symplectic system; dispatches Störmer–Verlet when requested
/// (separable systems only).
pub fn integrate_symplectic(
    sys: &SymplecticSystem,
    x0: &[f64],
    span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if cfg.method == Method::StormerVerlet {
        if !sys.separable {
            return Err(Error::Contract(
                "stormer-verlet is only accepted for systems flagged separable".into(),
            ));
        }
        return stormer_verlet(sys, x0, span, cfg);
    }
    integrate(&SymplecticRhs(sys), x0, span, cfg)
}

struct EventTracker<'a> {
    specs: &'a [EventSpec],
    values: Vec<f64>,
}

impl<'a> EventTracker<'a> {
    fn new(specs: &'a [EventSpec], x0: &[f64]) -> Result<Self> {
        let values = specs
            .iter()
            .map(|e| (e.field)(x0))
            .collect::<Result<Vec<f64>>>()?;
        Ok(EventTracker { specs, values })
    }

    /// Returns (event index, refined t, refined state) when a crossing
    /// happened inside the step.
    fn check(
        &mut self,
        t0: f64,
        x0: &[f64],
        f0: &[f64],
        t1: f64,
        x1: &[f64],
        f1: &[f64],
    ) -> Result<Option<(usize, f64, Vec<f64>)>> {
        for (i, e) in self.specs.iter().enumerate() {
            let v1 = (e.field)(x1)?;
            if v1 < e.threshold && self.values[i] >= e.threshold {
                // Bisect the Hermite interpolant to 1e-10 in t.
                let mut lo = t0;
                let mut hi = t1;
                while hi - lo > 1e-10 {
                    let mid = 0.5 * (lo + hi);
                    let xm = hermite(t0, x0, f0, t1, x1, f1, mid);
                    if (e.field)(&xm)? < e.threshold {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let tstar = 0.5 * (lo + hi);
                let xstar = hermite(t0, x0, f0, t1, x1, f1, tstar);
                return Ok(Some((i, tstar, xstar)));
            }
            self.values[i] = v1;
        }
        Ok(None)
    }
}

fn finish(samples: Vec<Sample>, stop: StopReason, method: Method) -> Result<Trajectory> {
    Ok(Trajectory {
        samples,
        stop,
        method,
        system_id: String::new(),
        diagnostics: Vec::new(),
    })
}

// Dormand–Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn rk45(
    rhs: &dyn OdeRhs,
    x0: &[f64],
    f0: Vec<f64>,
    span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = x0.len();
    let (t0, t_end) = span;
    let mut tracker = EventTracker::new(&cfg.events, x0)?;

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut f = f0;
    let mut samples = vec![Sample {
        t,
        tau: None,
        state: x.clone(),
        deriv: f.clone(),
    }];

    // Initial step heuristic.
    let sc = |xi: f64| cfg.abs_tol + cfg.rel_tol * xi.abs();
    let d0: f64 = x.iter().map(|v| (v / sc(*v)).powi(2)).sum::<f64>().sqrt();
    let d1: f64 = x
        .iter()
        .zip(&f)
        .map(|(v, w)| (w / sc(*v)).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut h = if d0 > 1e-10 && d1 > 1e-10 {
        (0.01 * d0 / d1).min(t_end - t0)
    } else {
        ((t_end - t0) * 1e-6).max(1e-10)
    };

    let mut rejected = false;
    let mut k = vec![vec![0.0f64; n]; 7];
    let mut steps = 0usize;

    while t < t_end {
        if steps >= cfg.max_steps {
            return finish(samples, StopReason::MaxSteps, cfg.method);
        }
        steps += 1;
        h = h.min(t_end - t);
        if h <= f64::EPSILON * t.abs().max(1.0) {
            return finish(
                samples,
                StopReason::Failure("step size underflow".into()),
                cfg.method,
            );
        }

        k[0].copy_from_slice(&f);
        let mut failed = false;
        let mut xs = vec![0.0f64; n];
        for stage in 1..7 {
            for (i, slot) in xs.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    let a = DP_A[stage][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                *slot = x[i] + h * acc;
            }
            match rhs.rhs(t + DP_C[stage] * h, &xs) {
                Ok(v) => k[stage].copy_from_slice(&v),
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            // A stage left the admissible region; retreat.
            h *= 0.5;
            if h < 1e-14 {
                return finish(
                    samples,
                    StopReason::Failure("repeated stage rejections".into()),
                    cfg.method,
                );
            }
            continue;
        }
        // FSAL: the last stage is evaluated at the 5th-order solution.
        let x_new = xs.clone();
        let f_new = k[6].clone();

        let mut err2 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += DP_E[j] * kj[i];
            }
            let scale = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(x_new[i].abs());
            err2 += (h * e / scale).powi(2);
        }
        let err = (err2 / n as f64).sqrt();

        if err <= 1.0 {
            let t_new = t + h;
            if let Some((idx, tstar, xstar)) = tracker.check(t, &x, &f, t_new, &x_new, &f_new)? {
                let fstar = rhs.rhs(tstar, &xstar).unwrap_or_else(|_| vec![f64::NAN; n]);
                samples.push(Sample {
                    t: tstar,
                    tau: None,
                    state: xstar,
                    deriv: fstar,
                });
                return finish(
                    samples,
                    StopReason::Event {
                        name: cfg.events[idx].name.clone(),
                        t: tstar,
                    },
                    cfg.method,
                );
            }
            t = t_new;
            x = x_new;
            f = f_new;
            samples.push(Sample {
                t,
                tau: None,
                state: x.clone(),
                deriv: f.clone(),
            });
            let fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, if rejected { 1.0 } else { 10.0 })
            };
            h *= fac;
            rejected = false;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            rejected = true;
        }
    }
    finish(samples, StopReason::SpanEnd, cfg.method)
}

fn rk4_fixed(
    rhs: &dyn OdeRhs,
    x0: &[f64],
    f0: Vec<f64>,
    span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = x0.len();
    let (t0, t_end) = span;
    if cfg.step <= 0.0 {
        return Err(Error::Contract("fixed step must be positive".into()));
    }
    let steps = (((t_end - t0) / cfg.step).round() as usize).max(1);
    if steps > cfg.max_steps {
        return Err(Error::Contract(format!(
            "{steps} fixed steps exceed max_steps {}",
            cfg.max_steps
        )));
    }
    let h = (t_end - t0) / steps as f64;
    let mut tracker = EventTracker::new(&cfg.events, x0)?;

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut f = f0;
    let mut samples = vec![Sample {
        t,
        tau: None,
        state: x.clone(),
        deriv: f.clone(),
    }];
    for step in 1..=steps {
        let k1 = f.clone();
        let x2: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
        let k2 = rhs.rhs(t + 0.5 * h, &x2)?;
        let x3: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
        let k3 = rhs.rhs(t + 0.5 * h, &x3)?;
        let x4: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
        let k4 = rhs.rhs(t + h, &x4)?;
        let x_new: Vec<f64> = (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let t_new = t0 + step as f64 * h;
        let f_new = rhs.rhs(t_new, &x_new)?;
        if let Some((idx, tstar, xstar)) = tracker.check(t, &x, &f, t_new, &x_new, &f_new)? {
            let fstar = rhs.rhs(tstar, &xstar)?;
            samples.push(Sample {
                t: tstar,
                tau: None,
                state: xstar,
                deriv: fstar,
            });
            return finish(
                samples,
                StopReason::Event {
                    name: cfg.events[idx].name.clone(),
                    t: tstar,
                },
                cfg.method,
            );
        }
        t = t_new;
        x = x_new;
        f = f_new;
        samples.push(Sample {
            t,
            tau: None,
            state: x.clone(),
            deriv: f.clone(),
        });
    }
    finish(samples, StopReason::SpanEnd, cfg.method)
}

fn stormer_verlet(
    sys: &SymplecticSystem,
    x0: &[f64],
    span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = sys.n_dof;
    let (t0, t_end) = span;
    sys.check_admissible(x0)?;
    if cfg.step <= 0.0 {
        return Err(Error::Contract("fixed step must be positive".into()));
    }
    let steps = (((t_end - t0) / cfg.step).round() as usize).max(1);
    if steps > cfg.max_steps {
        return Err(Error::Contract(format!(
            "{steps} fixed steps exceed max_steps {}",
            cfg.max_steps
        )));
    }
    let h = (t_end - t0) / steps as f64;

    let vf = |x: &[f64]| symplectic_vf(sys, x);
    let mut x = x0.to_vec();
    let mut samples = vec![Sample {
        t: t0,
        tau: None,
        state: x.clone(),
        deriv: vf(&x)?,
    }];
    for step in 1..=steps {
        // Kick-drift-kick; separability makes the half kicks explicit.
        let g = sys.grad_h(&x)?;
        for i in 0..n {
            x[n + i] -= 0.5 * h * g[i];
        }
        let g = sys.grad_h(&x)?;
        for i in 0..n {
            x[i] += h * g[n + i];
        }
        let g = sys.grad_h(&x)?;
        for i in 0..n {
            x[n + i] -= 0.5 * h * g[i];
        }
        samples.push(Sample {
            t: t0 + step as f64 * h,
            tau: None,
            state: x.clone(),
            deriv: vf(&x)?,
        });
    }
    finish(samples, StopReason::SpanEnd, Method::StormerVerlet)
}

// ---------------------------------------------------------------------------
// Reparametrization and comparison

const GAUSS5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Fill the τ column with τ(t) = ∫ ρ(x(t))^(Λ-1) dt, τ(0) = 0, accumulated
/// with 5-point Gauss–Legendre quadrature on the Hermite interpolant.
/// Errors if ρ changes sign along the trajectory.
pub fn reparametrize(
    traj: &Trajectory,
    rho: &dyn Fn(&[f64]) -> Result<f64>,
    lambda: f64,
) -> Result<Trajectory> {
    let mut out = traj.clone();
    let rho0 = rho(&traj.samples[0].state)?;
    if rho0 == 0.0 {
        return Err(Error::Domain {
            context: "reparametrize".into(),
            message: "scaling function vanishes at the initial point".into(),
        });
    }
    let sign = rho0.signum();
    let signed_pow = |r: f64| -> Result<f64> {
        if r == 0.0 || r.signum() != sign {
            return Err(Error::Domain {
                context: "reparametrize".into(),
                message: "scaling function changes sign along the trajectory".into(),
            });
        }
        if sign > 0.0 {
            Ok(r.powf(lambda - 1.0))
        } else {
            let e = lambda - 1.0;
            if e.fract() != 0.0 {
                return Err(Error::Domain {
                    context: "reparametrize".into(),
                    message: "negative scaling function with non-integer exponent".into(),
                });
            }
            Ok(r.powf(e))
        }
    };
    let mut tau = 0.0;
    out.samples[0].tau = Some(0.0);
    for i in 1..traj.samples.len() {
        let a = &traj.samples[i - 1];
        let b = &traj.samples[i];
        let half = 0.5 * (b.t - a.t);
        let mid = 0.5 * (b.t + a.t);
        let mut acc = 0.0;
        for (node, w) in GAUSS5_NODES.iter().zip(GAUSS5_WEIGHTS) {
            let t = mid + half * node;
            let xs = hermite(a.t, &a.state, &a.deriv, b.t, &b.state, &b.deriv, t);
            acc += w * signed_pow(rho(&xs)?)?;
        }
        tau += half * acc;
        out.samples[i].tau = Some(tau);
    }
    // Monotone whenever the integrand is positive.
    let mut prev = f64::NEG_INFINITY;
    for s in &out.samples {
        let v = s.tau.unwrap();
        if v <= prev {
            return Err(Error::Numerical(
                "reparametrized time failed to increase strictly".into(),
            ));
        }
        prev = v;
    }
    Ok(out)
}

/// A reduced-space curve sampled against its own parameter (τ), with
/// derivatives taken with respect to that parameter.
#[derive(Debug, Clone)]
pub struct ReducedSeries {
    pub tau: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
}

impl ReducedSeries {
    /// Treats the trajectory's own time as the curve parameter; used for
    /// natively integrated reduced flows.
    pub fn from_native(traj: &Trajectory) -> Self {
        ReducedSeries {
            tau: traj.samples.iter().map(|s| s.t).collect(),
            states: traj.samples.iter().map(|s| s.state.clone()).collect(),
            derivs: traj.samples.iter().map(|s| s.deriv.clone()).collect(),
        }
    }

    pub fn eval(&self, tau: f64) -> Result<Vec<f64>> {
        let idx = locate(&self.tau, tau)?;
        Ok(hermite(
            self.tau[idx],
            &self.states[idx],
            &self.derivs[idx],
            self.tau[idx + 1],
            &self.states[idx + 1],
            &self.derivs[idx + 1],
            tau,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub sup_deviation: f64,
    pub per_coordinate: Vec<(String, f64)>,
    pub tau_overlap: (f64, f64),
    pub n_grid: usize,
}

/// Resample two reduced-space curves onto a common τ grid (cubic Hermite)
/// and report the sup-norm deviation. Angular coordinates are aligned by a
/// constant 2π branch offset fixed at the start of the overlap.
pub fn compare_series(
    a: &ReducedSeries,
    b: &ReducedSeries,
    names: &[String],
    angular: &[bool],
    n_grid: usize,
) -> Result<ComparisonReport> {
    let dim = names.len();
    if a.states[0].len() != dim || b.states[0].len() != dim {
        return Err(Error::Contract(
            "series dimensions do not match names".into(),
        ));
    }
    let lo = a.tau[0].max(b.tau[0]);
    let hi = a.tau.last().unwrap().min(*b.tau.last().unwrap());
    if hi <= lo {
        return Err(Error::Contract(format!(
            "reparametrized ranges do not overlap: [{:.4}, {:.4}] vs [{:.4}, {:.4}]",
            a.tau[0],
            a.tau.last().unwrap(),
            b.tau[0],
            b.tau.last().unwrap()
        )));
    }
    let two_pi = std::f64::consts::TAU;
    let xa0 = a.eval(lo)?;
    let xb0 = b.eval(lo)?;
    let mut offsets = vec![0.0; dim];
    for i in 0..dim {
        if angular.get(i).copied().unwrap_or(false) {
            offsets[i] = ((xb0[i] - xa0[i]) / two_pi).round() * two_pi;
        }
    }
    let mut per: Vec<f64> = vec![0.0; dim];
    for g in 0..n_grid {
        let tau = lo + (hi - lo) * g as f64 / (n_grid - 1) as f64;
        let xa = a.eval(tau)?;
        let xb = b.eval(tau)?;
        for i in 0..dim {
            per[i] = per[i].max((xb[i] - xa[i] - offsets[i]).abs());
        }
    }
    let sup = per.iter().cloned().fold(0.0, f64::max);
    Ok(ComparisonReport {
        sup_deviation: sup,
        per_coordinate: names.iter().cloned().zip(per).collect(),
        tau_overlap: (lo, hi),
        n_grid,
    })
}

/// Max absolute drift of a scalar along a trajectory, relative to its value
/// at the first sample.
pub fn first_integral_drift(traj: &Trajectory, f: &dyn Fn(&[f64]) -> Result<f64>) -> Result<f64> {
    let f0 = f(&traj.samples[0].state)?;
    let mut worst: f64 = 0.0;
    for s in &traj.samples {
        worst = worst.max((f(&s.state)? - f0).abs());
    }
    Ok(worst)
}

/// Locate the first return of the trajectory to its initial state: the
/// trajectory must first depart (gap above half its running maximum), after
/// which the first local minimum of the gap with a refined value below
/// `closure_tol` wins. Returns (t_return, gap).
pub fn first_return(traj: &Trajectory, coords: &[usize], closure_tol: f64) -> Result<(f64, f64)> {
    let x0: Vec<f64> = coords.iter().map(|&i| traj.samples[0].state[i]).collect();
    let gap_at = |state: &[f64]| -> f64 {
        coords
            .iter()
            .zip(&x0)
            .map(|(&i, r)| (state[i] - r).abs())
            .fold(0.0, f64::max)
    };
    let gaps: Vec<f64> = traj.samples.iter().map(|s| gap_at(&s.state)).collect();
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    if max_gap < 10.0 * closure_tol {
        return Err(Error::Contract(
            "trajectory never departs from its initial point".into(),
        ));
    }
    let departure = match gaps.iter().position(|g| *g > 0.5 * max_gap) {
        Some(i) => i,
        None => {
            return Err(Error::Contract("no departure index found".into()));
        }
    };
    let mut best_seen = f64::INFINITY;
    for j in departure + 1..traj.samples.len() - 1 {
        if gaps[j] <= gaps[j - 1] && gaps[j] <= gaps[j + 1] {
            // Refine around the sample-level local minimum.
            let mut lo = traj.samples[j - 1].t;
            let mut hi = traj.samples[j + 1].t;
            let phi = 0.5 * (3.0 - 5.0f64.sqrt());
            for _ in 0..200 {
                if hi - lo < 1e-12 {
                    break;
                }
                let m1 = lo + phi * (hi - lo);
                let m2 = hi - phi * (hi - lo);
                if gap_at(&traj.state_at(m1)?) < gap_at(&traj.state_at(m2)?) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let t_star = 0.5 * (lo + hi);
            let gap = gap_at(&traj.state_at(t_star)?);
            if gap < closure_tol {
                return Ok((t_star, gap));
            }
            best_seen = best_seen.min(gap);
        }
    }
    Err(Error::Contract(format!(
        "trajectory does not close: best return gap {best_seen:.3e} exceeds {closure_tol:.1e}"
    )))
}

/// Locate the best return of the trajectory to its initial state after
/// `t_min`, refining on the Hermite interpolant. Returns (t_return, closure
/// gap in the max norm over the listed coordinates).
pub fn nearest_return(traj: &Trajectory, coords: &[usize], t_min: f64) -> Result<(f64, f64)> {
    let x0: Vec<f64> = coords.iter().map(|&i| traj.samples[0].state[i]).collect();
    let gap_at = |state: &[f64]| -> f64 {
        coords
            .iter()
            .zip(&x0)
            .map(|(&i, r)| (state[i] - r).abs())
            .fold(0.0, f64::max)
    };
    let mut best = (traj.last().t, f64::INFINITY);
    for s in traj.samples.iter().filter(|s| s.t > t_min) {
        let g = gap_at(&s.state);
        if g < best.1 {
            best = (s.t, g);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Contract(
            "no samples beyond the minimum return time".into(),
        ));
    }
    let (t0, t1) = traj.t_span();
    let mut lo = (best.0 - 0.05 * (t1 - t0)).max(t0.max(t_min));
    let mut hi = (best.0 + 0.05 * (t1 - t0)).min(t1);
    let phi = 0.5 * (3.0 - 5.0f64.sqrt());
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        let m1 = lo + phi * (hi - lo);
        let m2 = hi - phi * (hi - lo);
        let g1 = gap_at(&traj.state_at(m1)?);
        let g2 = gap_at(&traj.state_at(m2)?);
        if g1 < g2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t_star = 0.5 * (lo + hi);
    let gap = gap_at(&traj.state_at(t_star)?);
    Ok((t_star, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::phase::{Guard, Params, ScalarField};

    fn kepler() -> SymplecticSystem {
        let vars = ["q1", "q2", "p1", "p2"];
        let h = Expression::parse("(p1^2 + p2^2)/2 - 1/sqrt(q1^2 + q2^2)", &vars, &[]).unwrap();
        let guard = Guard::expr_above(Expression::parse("q1^2 + q2^2", &vars, &[]).unwrap(), 1e-12);
        SymplecticSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(h),
            Params::empty(),
            guard,
        )
        .unwrap()
    }

    #[test]
    fn kepler_circular_orbit_closes_to_1e8() {
        let sys = kepler();
        let x0 = [1.0, 0.0, 0.0, 1.0];
        let cfg = IntegratorConfig::default();
        let traj = integrate_symplectic(&sys, &x0, (0.0, std::f64::consts::TAU), &cfg).unwrap();
        assert_eq!(traj.stop, StopReason::SpanEnd);
        let end = &traj.last().state;
        for (a, b) in end.iter().zip(x0) {
            assert!((a - b).abs() < 1e-8, "closure error {end:?}");
        }
    }

    #[test]
    fn energy_is_conserved_along_kepler_orbit() {
        let sys = kepler();
        let traj = integrate_symplectic(
            &sys,
            &[1.0, 0.2, 0.1, 1.1],
            (0.0, 20.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let h = |x: &[f64]| sys.h(x);
        let drift = first_integral_drift(&traj, &h).unwrap();
        assert!(drift < 1e-8, "energy drift {drift}");
        let angular = |x: &[f64]| Ok(x[0] * x[3] - x[1] * x[2]);
        let drift = first_integral_drift(&traj, &angular).unwrap();
        assert!(drift < 1e-8, "angular momentum drift {drift}");
    }

    #[test]
    fn homothetic_infall_stops_on_collision_event() {
        let sys = kepler();
        let rho = Expression::parse("(q1^2 + q2^2)^(1/4)", &["q1", "q2", "p1", "p2"], &[]).unwrap();
        let ev = EventSpec {
            name: "collision".into(),
            field: Arc::new(move |x: &[f64]| rho.eval(x, &[])),
            threshold: 0.05,
        };
        let cfg = IntegratorConfig::default().with_event(ev);
        let traj = integrate_symplectic(&sys, &[1.0, 0.0, -0.8, 0.0], (0.0, 10.0), &cfg).unwrap();
        match &traj.stop {
            StopReason::Event { name, t } => {
                assert_eq!(name, "collision");
                assert!(*t > 0.0 && *t < 10.0);
                let s = &traj.last().state;
                let r = (s[0] * s[0] + s[1] * s[1]).sqrt().sqrt();
                assert!((r - 0.05).abs() < 1e-6, "event localization r = {r}");
            }
            other => panic!("expected event stop, got {other:?}"),
        }
    }

    #[test]
    fn zero_span_yields_single_sample() {
        let sys = kepler();
        let traj = integrate_symplectic(
            &sys,
            &[1.0, 0.0, 0.0, 1.0],
            (0.0, 0.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn fixed_step_row_count_and_closure() {
        let sys = kepler();
        let cfg = IntegratorConfig::default()
            .with_method(Method::Rk4Fixed)
            .with_step(0.01);
        let traj = integrate_symplectic(
            &sys,
            &[1.0, 0.0, 0.0, 1.0],
            (0.0, std::f64::consts::TAU),
            &cfg,
        )
        .unwrap();
        // round(2π/0.01) = 628 steps -> 629 samples, landing exactly on 2π.
        assert_eq!(traj.len(), 629);
        let end = &traj.last().state;
        for (a, b) in end.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn verlet_requires_separable_flag() {
        let sys = kepler(); // not flagged separable
        let cfg = IntegratorConfig::default().with_method(Method::StormerVerlet);
        let err = integrate_symplectic(&sys, &[1.0, 0.0, 0.0, 1.0], (0.0, 1.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn verlet_energy_drift_bounded_over_1000_periods() {
        let vars = ["q1", "q2", "p1", "p2"];
        let h = Expression::parse("(p1^2 + p2^2 + q1^2 + q2^2)/2", &vars, &[]).unwrap();
        let sys = SymplecticSystem::new(
            vars.iter().map(|s| s.to_string()).collect(),
            ScalarField::from_expression(h),
            Params::empty(),
            Guard::none(),
        )
        .unwrap()
        .separable();
        let cfg = IntegratorConfig::default()
            .with_method(Method::StormerVerlet)
            .with_step(0.05);
        let t_end = 1000.0 * std::f64::consts::TAU;
        let traj = integrate_symplectic(&sys, &[1.0, 0.0, 0.0, 0.3], (0.0, t_end), &cfg).unwrap();
        let hf = |x: &[f64]| sys.h(x);
        let drift = first_integral_drift(&traj, &hf).unwrap();
        assert!(drift < 1e-3, "drift {drift}");
        // No secular growth: the second half is no worse than the first.
        let mid = traj.len() / 2;
        let h0 = sys.h(&traj.samples[0].state).unwrap();
        let max_dev = |ss: &[Sample]| {
            ss.iter()
                .map(|s| (sys.h(&s.state).unwrap() - h0).abs())
                .fold(0.0, f64::max)
        };
        let first_half = max_dev(&traj.samples[..mid]);
        let second_half = max_dev(&traj.samples[mid..]);
        assert!(second_half < 1.5 * first_half.max(1e-9));
    }

    #[test]
    fn reparametrize_identity_and_constant_cases() {
        let sys = kepler();
        let traj = integrate_symplectic(
            &sys,
            &[1.0, 0.0, 0.0, 1.0],
            (0.0, 2.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        // Λ = 1: τ = t exactly (integrand ρ^0 = 1).
        let anyrho = |_: &[f64]| Ok(3.7);
        let out = reparametrize(&traj, &anyrho, 1.0).unwrap();
        for s in &out.samples {
            assert!((s.tau.unwrap() - s.t).abs() < 1e-12);
        }
        // ρ ≡ 2, Λ = -2: τ = t · 2^(-3) = t/8.
        let rho2 = |_: &[f64]| Ok(2.0);
        let out = reparametrize(&traj, &rho2, -2.0).unwrap();
        for s in &out.samples {
            assert!((s.tau.unwrap() - s.t / 8.0).abs() < 1e-12);
        }
        // Kepler circular orbit has ρ = 1: τ = t up to the accuracy of the
        // Hermite interpolant feeding the quadrature.
        let rho = |x: &[f64]| Ok((x[0] * x[0] + x[1] * x[1]).sqrt().sqrt());
        let out = reparametrize(&traj, &rho, -2.0).unwrap();
        for s in &out.samples {
            assert!((s.tau.unwrap() - s.t).abs() < 1e-6);
        }
    }

    #[test]
    fn comparison_of_identical_series_is_zero() {
        let sys = kepler();
        let traj = integrate_symplectic(
            &sys,
            &[1.0, 0.2, 0.1, 1.1],
            (0.0, 5.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let s = ReducedSeries::from_native(&traj);
        let names: Vec<String> = ["q1", "q2", "p1", "p2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rep = compare_series(&s, &s, &names, &[false; 4], 200).unwrap();
        assert_eq!(rep.sup_deviation, 0.0);
    }

    #[test]
    fn perturbed_initial_data_is_detected() {
        let sys = kepler();
        let cfg = IntegratorConfig::default();
        let t1 = integrate_symplectic(&sys, &[1.0, 0.2, 0.1, 1.1], (0.0, 5.0), &cfg).unwrap();
        let t2 =
            integrate_symplectic(&sys, &[1.0, 0.2, 0.1, 1.1 + 1e-3], (0.0, 5.0), &cfg).unwrap();
        let names: Vec<String> = ["q1", "q2", "p1", "p2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rep = compare_series(
            &ReducedSeries::from_native(&t1),
            &ReducedSeries::from_native(&t2),
            &names,
            &[false; 4],
            400,
        )
        .unwrap();
        assert!(rep.sup_deviation > 5e-4, "deviation {}", rep.sup_deviation);
    }

    #[test]
    fn nearest_return_finds_kepler_period() {
        let sys = kepler();
        let traj = integrate_symplectic(
            &sys,
            &[1.0, 0.0, 0.0, 1.0],
            (0.0, 7.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let (t, gap) = nearest_return(&traj, &[0, 1, 2, 3], 3.0).unwrap();
        assert!((t - std::f64::consts::TAU).abs() < 1e-6, "t = {t}");
        // Closure gap within the 1e-6 loop-closure contract.
        assert!(gap < 1e-6, "gap {gap}");
    }
}
