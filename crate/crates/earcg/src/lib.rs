//! Energy-adaptive Riemannian solvers for plane-wave quantum energy minimization.
//!
//! This crate minimizes Kohn-Sham-type energy functionals over products of
//! complex Stiefel manifolds — one orthonormal `p`-frame per momentum block —
//! using Riemannian conjugate-gradient iterations whose search directions are
//! preconditioned by a metric built from the shifted Hamiltonian of the
//! current iterate.
//!
//! The layers, bottom to top:
//!
//! * [`matcore`] — small dense Hermitian kernels (eigensolves, Lyapunov and
//!   Sylvester equations, rank-revealing QR).
//! * [`stiefel`] — frames, tangent vectors, the polar retraction and its
//!   differentiated vector transport.
//! * [`model`] — the spectral discretization: plane-wave bases, densities,
//!   Hamiltonian application, dense assembly for small problems, and the
//!   built-in reference models.
//! * [`eametric`] — the energy-adaptive metric: shifted Hamiltonian solves via
//!   a preconditioned block Krylov method, the metric gradient, and dense
//!   oracles for validating both.
//! * [`solvers`] — the conjugate-gradient / gradient-descent / L²-metric /
//!   self-consistent-field drivers with a shared secant line search and a
//!   common trace format.

pub mod eametric;
pub mod matcore;
pub mod model;
mod parallel;
pub mod solvers;
pub mod stiefel;

/// Complex scalar used throughout: double-precision `a + bi`.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix (column-major).
pub type CMatrix = nalgebra::DMatrix<C64>;
