//! Exact and Monte Carlo invariant integration over Stiefel manifolds.
//!
//! The Stiefel manifold `St^(β)(n,m)` is the coset `U^(β)(n)/U^(β)(m)` of the
//! orthogonal (β=1), unitary (β=2) or unitary-symplectic (β=4) group, realized
//! as the n×(n−m) matrices over ℝ/ℂ/ℍ with orthonormal columns. Haar integrals
//! of polynomials over these manifolds can be written as terminating series of
//! invariant constant-coefficient differential operators applied at the origin
//! (Pizzetti-type formulas). This crate implements:
//!
//! * exact multivariate polynomial and differential-operator arithmetic over
//!   Gaussian rationals ([`algebra`], [`diffop`]),
//! * the Clifford J-matrix sets encoding the ℝ/ℂ/ℍ structure ([`clifford`]),
//! * four exact integration engines — classical sphere, codimension-2,
//!   the SO(2) special case, the general Clifford functional — and the
//!   column-peeling recursion for arbitrary codimension ([`pizzetti`]),
//! * Haar samplers, reproducible parallel Monte Carlo, closed-form sphere
//!   moments and low-dimensional quadrature as independent oracles ([`haar`]),
//! * floating-point evaluation of the moment-generating kernel functions
//!   `Ψ̂^(β)_{n,m}(Λ)` via renormalized Bessel series, a determinant formula
//!   for β=2 and Pfaffian formulas for β=4 ([`kernels`]),
//! * the SO(4)/[SO(2)×SO(2)] Itzykson–Zuber series with its Schur-term and
//!   eigenvalue-Laplacian machinery, plus Sekiguchi-operator identities
//!   ([`iz`]).
//!
//! Everything exact is rational arithmetic end to end; floats appear only in
//! Monte Carlo estimates and kernel evaluation. All values are immutable and
//! the engines are pure functions, so everything can be shared across threads.

pub mod algebra;
pub mod clifford;
pub mod diffop;
pub mod haar;
pub mod iz;
pub mod kernels;
pub mod pizzetti;

pub mod cli;

pub use algebra::{CoordLayout, GaussRational, Monomial, Polynomial, Rational};
pub use pizzetti::{MomentValue, StiefelSpec};
