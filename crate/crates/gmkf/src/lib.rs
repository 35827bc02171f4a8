//! Batch and recursive state estimation for polynomial dynamical systems
//! under arbitrary (non-Gaussian) noise.
//!
//! The estimator lifts the state into a vector of monomials, expresses
//! measurement and dynamics residuals as affine conditions on that lifted
//! state weighted by noise moments, and solves the resulting polynomial
//! least-squares problem through a semidefinite (moment) relaxation. When the
//! relaxation is tight the dual solution factors the objective into an
//! explicit sum-of-squares belief, which is what makes a recursive filter —
//! update, predict, marginalize — possible at lift order `r`. At `r = 1` the
//! filter reduces to the classical Kalman filter; classical baselines
//! (KF/EKF/UKF/invariant EKF) and Monte-Carlo studies are included.
//!
//! Module map:
//! - [`poly`]: sparse polynomials and the graded monomial basis
//! - [`momrelax`]: moment/localizing matrices and relaxation assembly
//! - [`sdp`]: dense primal-dual interior-point solver for the relaxations
//! - [`noisemom`]: noise models and moment computation (analytic + sampled)
//! - [`bpue`]: affine moment conditions, best polynomial unbiased estimator,
//!   and sum-of-squares beliefs
//! - [`filter`]: the recursive moment-relaxation filter
//! - [`se2`]: minimal SE(2) group operations
//! - [`baselines`]: KF / EKF / UKF / invariant EKF
//! - [`sim`]: simulation scenarios, Monte-Carlo harness, metrics
//! - [`verify`]: self-check suites wired to the `verify` CLI subcommand

pub mod bpue;
pub mod cli;
pub mod filter;
pub mod momrelax;
pub mod noisemom;
pub mod poly;
pub mod sdp;
pub mod se2;
