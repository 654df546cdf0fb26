//! Contact reduction of symplectic Hamiltonian systems by scaling symmetries.
//!
//! The crate turns a symplectic system `(M, ω, H)` with a scaling symmetry
//! `D` (L_D ω = ω, L_D H = Λ H) into the equivalent contact system
//! `H₀ = -H/ρ^Λ` on the quotient by `D`, certifies the defining conditions
//! numerically, lifts coupling constants to dynamical variables to obtain
//! degree-one symmetries, and checks trajectory-level equivalence between
//! original and reduced dynamics.
//!
//! Module map:
//! - [`expr`]: expression parsing and exact differentiation (dual numbers +
//!   symbolic partials).
//! - [`phase`]: phase-space state types and symplectic / contact /
//!   Λ-Hamiltonian vector fields in Darboux coordinates.
//! - [`integrate`]: ODE drivers, the ρ^(1-Λ) time reparametrization, event
//!   detection, and the trajectory-comparison harness.
//! - [`scaling`]: scaling symmetries and scaling functions, residual checks,
//!   the local action construction and the loop-action obstruction.
//! - [`reduction`]: adapted charts, reduced contact systems, normalization,
//!   scaling-function change factors, symplectic lifts.
//! - [`lifted`]: coupling lifts, lifted degree-one symmetries, reduction of
//!   lifted systems and the dissipated-coupling law.
//! - [`herglotz`]: Herglotz and Λ-Herglotz variational dynamics, Legendre
//!   bridging, Lagrangian scale reduction, lifted Lagrangians.
//! - [`systems`]: the validated model catalogue (Kepler, oscillator,
//!   Kepler–Hooke, Laurent, FLRW, n-body blow-up).

pub mod error;
pub mod expr;
pub mod herglotz;
pub mod integrate;
pub mod lifted;
pub mod phase;
pub mod reduction;
pub mod scaling;
pub mod systems;

pub use error::{Error, Result};
