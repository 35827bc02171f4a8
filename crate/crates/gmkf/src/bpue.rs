//! Batch estimation for polynomial systems: lift residual polynomials into
//! affine moment conditions `b - A*phi_r(x) = v`, minimize the weighted
//! least-squares objective over the feasible set through the moment
//! relaxation, and factor rank-one solutions into sum-of-squares beliefs.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::momrelax::{constraint_set, BasisMatrices, ConstraintKind, RelaxError, SdpProblem};
use crate::noisemom::{invert_spd, NoiseError, NoiseModel, NoiseMoments};
use crate::poly::{basis_size, enumerate_basis, lift_phi, phi_eval, PolyError, PolyVector, Polynomial};
use crate::sdp::{extract_rank1, solve, Rank1Extraction, SdpError, SdpSolution, SolveOptions};

/// Eigenvalues of the dual lower-right block smaller than this fraction of
/// the largest one are clamped up before inversion when extracting `sigma`;
/// clamped beliefs are flagged as degraded.
pub const SIGMA_EIG_FLOOR_RATIO: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BpueError {
    #[error("lifted condition row {row} contains a monomial of degree {degree} > r = {r}; raise the order or re-model")]
    NonAffine { row: usize, degree: u32, r: u32 },
    #[error("noise moments cover dimension {noise_dim} at order {noise_r}; conditions have {rows} residual entries at order {r}")]
    NoiseMismatch {
        noise_dim: usize,
        noise_r: u32,
        rows: usize,
        r: u32,
    },
    #[error("data tail of length {data} exceeds the {n_vars} condition variables")]
    DataTooLong { data: usize, n_vars: usize },
    #[error("{cols} columns do not equal s(r,n)-1 at r = {r} for any state dimension")]
    BasisMismatch { cols: usize, r: u32 },
    #[error("cannot stack conditions with different column counts ({left} vs {right})")]
    StackMismatch { left: usize, right: usize },
    #[error("no conditions to stack")]
    EmptyStack,
    #[error("shape mismatch: A is {rows}x{cols}, b has {b_len} entries, V is {v_rows}x{v_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        b_len: usize,
        v_rows: usize,
        v_cols: usize,
    },
    #[error("weight matrix V is numerically singular")]
    SingularWeight,
    #[error("A'V^-1 A is rank deficient; the least-squares problem has no unique minimizer")]
    RankDeficient,
    #[error("constraint polynomial {index} has {got} variables, the state has {expected}")]
    ConstraintVars {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("system {part} expects {expected} variables/entries, got {got}")]
    SystemShape {
        part: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("solution is not rank one; no belief was extracted")]
    NotRankOne,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// Stacked affine moment conditions `b - A*phi_r(x) = v` where `v` is the
/// centered lifted noise, so `E[v] = 0` and `V = Cov[v]`.
///
/// Columns of `a` index the non-constant state monomials in graded-lex
/// order; rows index lifted residual entries (plus any prior rows).
#[derive(Clone, Debug)]
pub struct AffineCondition {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Covariance of the centered lifted residual.
    pub v: DMatrix<f64>,
    /// Cached inverse of `v`.
    pub vinv: DMatrix<f64>,
}

impl AffineCondition {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, v: DMatrix<f64>) -> Result<Self, BpueError> {
        check_shapes(&a, &b, &v)?;
        let vinv = invert_spd(&v).ok_or(BpueError::SingularWeight)?;
        Ok(AffineCondition { a, b, v, vinv })
    }

    /// A prior belief as one more condition block: identity on the lifted
    /// state, centered at the prior monomial vector, weighted by the prior
    /// covariance. This is how a posterior from one step enters the next
    /// solve.
    pub fn from_belief(belief: &SosBelief) -> AffineCondition {
        let dim = belief.phi_xhat.len();
        AffineCondition {
            a: DMatrix::identity(dim, dim),
            b: belief.phi_xhat.clone(),
            v: belief.sigma.clone(),
            vinv: belief.sigma_inv.clone(),
        }
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }
}

fn check_shapes(a: &DMatrix<f64>, b: &DVector<f64>, v: &DMatrix<f64>) -> Result<(), BpueError> {
    if a.nrows() != b.len() || v.nrows() != a.nrows() || v.ncols() != a.nrows() {
        return Err(BpueError::ShapeMismatch {
            rows: a.nrows(),
            cols: a.ncols(),
            b_len: b.len(),
            v_rows: v.nrows(),
            v_cols: v.ncols(),
        });
    }
    Ok(())
}

/// Lift residual polynomials into an affine condition.
///
/// `cond_polys` are residuals in the variables `(x, d)` with the state
/// first and the data tail last; `data` gives numeric values for the tail.
/// After substitution every entry must equal the matching lifted noise
/// entry at the true state, so the lifted system reads
/// `b - A*phi_r(x) = phi_r(noise) - E[phi_r(noise)]`.
///
/// Fails with [`BpueError::NonAffine`] when a lifted entry contains a state
/// monomial of degree above `r`, i.e. the condition is not affine in the
/// order-`r` monomial vector.
pub fn build_affine(
    cond_polys: &PolyVector,
    data: &[f64],
    noise: &NoiseMoments,
    r: u32,
) -> Result<AffineCondition, BpueError> {
    let n_total = cond_polys.n_vars();
    if data.len() > n_total {
        return Err(BpueError::DataTooLong {
            data: data.len(),
            n_vars: n_total,
        });
    }
    let n_state = n_total - data.len();
    let resid = if data.is_empty() {
        cond_polys.clone()
    } else {
        cond_polys.substitute_range(n_state, data)?
    };
    if noise.dim != resid.len() || noise.r != r {
        return Err(BpueError::NoiseMismatch {
            noise_dim: noise.dim,
            noise_r: noise.r,
            rows: resid.len(),
            r,
        });
    }
    let lifted = lift_phi(r, &resid)?;
    let rows = lifted.len();
    debug_assert_eq!(rows, noise.mean_phi.len());
    let cols = basis_size(r, n_state)? - 1;
    let col_of: HashMap<_, _> = enumerate_basis(r, n_state)
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(i, e)| (e, i - 1))
        .collect();

    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    for (i, p) in lifted.entries().iter().enumerate() {
        for (alpha, c) in p.terms() {
            if alpha.is_constant() {
                b[i] += c;
            } else if let Some(&j) = col_of.get(alpha) {
                a[(i, j)] -= c;
            } else {
                return Err(BpueError::NonAffine {
                    row: i,
                    degree: alpha.degree(),
                    r,
                });
            }
        }
        b[i] -= noise.mean_phi[i];
    }
    let vinv = noise.inverse()?;
    Ok(AffineCondition {
        a,
        b,
        v: noise.cov.clone(),
        vinv,
    })
}

/// Vertically stack conditions over a shared state basis; the weight
/// matrix becomes block diagonal (independent noise blocks).
pub fn stack(conditions: &[AffineCondition]) -> Result<AffineCondition, BpueError> {
    let first = conditions.first().ok_or(BpueError::EmptyStack)?;
    let cols = first.cols();
    let mut total = 0;
    for c in conditions {
        if c.cols() != cols {
            return Err(BpueError::StackMismatch {
                left: cols,
                right: c.cols(),
            });
        }
        total += c.rows();
    }
    let mut a = DMatrix::zeros(total, cols);
    let mut b = DVector::zeros(total);
    let mut v = DMatrix::zeros(total, total);
    let mut vinv = DMatrix::zeros(total, total);
    let mut row = 0;
    for c in conditions {
        let rc = c.rows();
        a.view_mut((row, 0), (rc, cols)).copy_from(&c.a);
        b.rows_mut(row, rc).copy_from(&c.b);
        v.view_mut((row, row), (rc, rc)).copy_from(&c.v);
        vinv.view_mut((row, row), (rc, rc)).copy_from(&c.vinv);
        row += rc;
    }
    Ok(AffineCondition { a, b, v, vinv })
}

/// A polynomial state-space model: dynamics residual, measurement residual,
/// equality constraints on the state, and the two noise models.
///
/// Variable conventions follow the affine lifting (state first, data tail
/// last): `f` lives over `(x_{k+1}, x_k, u_k)` with the next state in the
/// leading block, and `h` lives over `(x_k, y_k)`. At the true states the
/// residuals equal the corresponding noise draws.
#[derive(Clone, Debug)]
pub struct PolySystem {
    pub n_state: usize,
    pub n_meas: usize,
    pub n_ctrl: usize,
    /// Dynamics residual over `(x_{k+1}, x_k, u_k)`; equals `w_k` at truth.
    pub f: PolyVector,
    /// Measurement residual over `(x_k, y_k)`; equals `v_k` at truth.
    pub h: PolyVector,
    /// Equality constraints `g_j(x) = 0` defining the feasible set of one
    /// state copy.
    pub k_constraints: Vec<Polynomial>,
    pub process_noise: NoiseModel,
    pub meas_noise: NoiseModel,
}

impl PolySystem {
    pub fn new(
        n_state: usize,
        n_meas: usize,
        n_ctrl: usize,
        f: PolyVector,
        h: PolyVector,
        k_constraints: Vec<Polynomial>,
        process_noise: NoiseModel,
        meas_noise: NoiseModel,
    ) -> Result<Self, BpueError> {
        let shape = |part, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(BpueError::SystemShape {
                    part,
                    expected,
                    got,
                })
            }
        };
        shape("f variables (x_{k+1}, x_k, u_k)", 2 * n_state + n_ctrl, f.n_vars())?;
        shape("h variables (x_k, y_k)", n_state + n_meas, h.n_vars())?;
        shape("f entries vs process noise", process_noise.dim, f.len())?;
        shape("h entries vs measurement noise", meas_noise.dim, h.len())?;
        for (index, g) in k_constraints.iter().enumerate() {
            if g.n_vars() != n_state {
                return Err(BpueError::ConstraintVars {
                    index,
                    expected: n_state,
                    got: g.n_vars(),
                });
            }
        }
        Ok(PolySystem {
            n_state,
            n_meas,
            n_ctrl,
            f,
            h,
            k_constraints,
            process_noise,
            meas_noise,
        })
    }
}

/// Belief over the lifted state: the quadratic `(phi_r(x) - phi_xhat)` in
/// the `sigma_inv` metric, offset by `rho`.
#[derive(Clone, Debug)]
pub struct SosBelief {
    pub r: u32,
    /// State estimate (the degree-one slice of the recovered monomials).
    pub xhat: DVector<f64>,
    /// Lifted-space estimate. From a solve this is the dual-predicted center
    /// `-Z_Q^-1 z_0q` (equal to `phi_r(xhat)` up to the duality gap), which
    /// keeps the factorization identity exact; priors set `phi_r(xhat)`.
    pub phi_xhat: DVector<f64>,
    /// Belief covariance in the lifted monomial space.
    pub sigma: DMatrix<f64>,
    /// Cached inverse of `sigma` (the floored dual block).
    pub sigma_inv: DMatrix<f64>,
    /// Optimal objective offset.
    pub rho: f64,
    /// True when the eigenvalue floor clamped part of the dual block.
    pub degraded: bool,
}

impl SosBelief {
    /// Belief centered at `xhat` with a given lifted-space covariance and
    /// zero offset; the usual way to seed a filter prior.
    pub fn from_prior(xhat: &DVector<f64>, sigma: &DMatrix<f64>, r: u32) -> Result<Self, BpueError> {
        let dim = basis_size(r, xhat.len())? - 1;
        if sigma.nrows() != dim || sigma.ncols() != dim {
            return Err(BpueError::ShapeMismatch {
                rows: dim,
                cols: dim,
                b_len: dim,
                v_rows: sigma.nrows(),
                v_cols: sigma.ncols(),
            });
        }
        let sigma_inv = invert_spd(sigma).ok_or(BpueError::SingularWeight)?;
        Ok(SosBelief {
            r,
            xhat: xhat.clone(),
            phi_xhat: phi_eval(r, xhat.as_slice()),
            sigma: sigma.clone(),
            sigma_inv,
            rho: 0.0,
            degraded: false,
        })
    }

    /// Evaluate the belief polynomial at `x`; zero at `x = xhat`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let d = phi_eval(self.r, x) - &self.phi_xhat;
        (&self.sigma_inv * &d).dot(&d)
    }

    pub fn n_state(&self) -> usize {
        self.xhat.len()
    }
}

/// Everything produced by one batch solve: the assembled relaxation, the
/// solver output, the rank-one extraction, and (when rank one) the belief.
#[derive(Clone, Debug)]
pub struct BpueSolve {
    pub n_state: usize,
    pub r: u32,
    pub problem: SdpProblem,
    pub solution: SdpSolution,
    pub extraction: Rank1Extraction,
    pub belief: Option<SosBelief>,
}

/// Minimize `||A*phi_r(x) - b||^2` in the `V^-1` metric over
/// `{x : g_j(x) = 0}` through the order-`r` moment relaxation.
///
/// A non-rank-one solution is not an error: the extraction reports
/// `is_rank1 = false` and `belief` is `None`.
pub fn solve_bpue(
    cond: &AffineCondition,
    constraints: &[Polynomial],
    r: u32,
) -> Result<BpueSolve, BpueError> {
    solve_bpue_with(cond, constraints, r, &SolveOptions::default())
}

pub fn solve_bpue_with(
    cond: &AffineCondition,
    constraints: &[Polynomial],
    r: u32,
    opts: &SolveOptions,
) -> Result<BpueSolve, BpueError> {
    let n_state = state_dim_for(r, cond.cols()).ok_or(BpueError::BasisMismatch {
        cols: cond.cols(),
        r,
    })?;
    for (index, g) in constraints.iter().enumerate() {
        if g.n_vars() != n_state {
            return Err(BpueError::ConstraintVars {
                index,
                expected: n_state,
                got: g.n_vars(),
            });
        }
    }
    let bm = BasisMatrices::build(r, n_state);
    let cost = bpue_cost(cond, bm.s());
    let cons = constraint_set(&bm, constraints)?;
    let problem = SdpProblem::new(cost, cons);
    let solution = solve(&problem, opts)?;
    let extraction = extract_rank1(&solution.x);
    let mut belief = belief_from_solution(r, n_state, &solution, &extraction);
    if let Some(b) = belief.as_mut() {
        if let Some(xr) = refine_estimate(cond, constraints, r, &b.xhat) {
            b.xhat = xr;
        }
    }
    Ok(BpueSolve {
        n_state,
        r,
        problem,
        solution,
        extraction,
        belief,
    })
}

/// Cost matrix of the lifted least squares over `[1; phi_r(x)]`:
/// `[ b'V^-1 b, -(A'V^-1 b)' ; -A'V^-1 b, A'V^-1 A ]`.
fn bpue_cost(cond: &AffineCondition, s: usize) -> DMatrix<f64> {
    debug_assert_eq!(cond.cols() + 1, s);
    let w = &cond.vinv * &cond.b;
    let atw = cond.a.transpose() * &w;
    let gram = cond.a.transpose() * &cond.vinv * &cond.a;
    let mut c = DMatrix::zeros(s, s);
    c[(0, 0)] = cond.b.dot(&w);
    for j in 0..s - 1 {
        c[(0, j + 1)] = -atw[j];
        c[(j + 1, 0)] = -atw[j];
    }
    c.view_mut((1, 1), (s - 1, s - 1)).copy_from(&gram);
    let ct = c.transpose();
    (c + ct) * 0.5
}

/// Invert `cols = s(r, n) - 1` for the state dimension; `None` when no
/// dimension matches.
fn state_dim_for(r: u32, cols: usize) -> Option<usize> {
    let mut n = 1;
    loop {
        match basis_size(r, n) {
            Ok(s) if s - 1 == cols => return Some(n),
            Ok(s) if s - 1 > cols => return None,
            Ok(_) => n += 1,
            Err(_) => return None,
        }
    }
}

fn belief_from_solution(
    r: u32,
    n_state: usize,
    sol: &SdpSolution,
    extraction: &Rank1Extraction,
) -> Option<SosBelief> {
    if !extraction.is_rank1 {
        return None;
    }
    let s = sol.dual_matrix.nrows();
    let mut yq = sol.dual_matrix.view((1, 1), (s - 1, s - 1)).into_owned();
    let yqt = yq.transpose();
    yq = (yq + yqt) * 0.5;

    // Completing the square turns the dual matrix itself into the belief:
    //   v(x)' Z v(x) = (phi - phi_hat)' Z_Q (phi - phi_hat)
    //                  + z_00 + z_0q . phi_hat
    // with phi_hat = -Z_Q^-1 z_0q, so the factorization identity holds
    // exactly at any duality gap; the leftover constant folds into rho
    // together with the normalization multiplier (the dual objective). The
    // estimate is the degree-one slice of the dual-predicted center, which
    // tracks the optimum linearly in the gap where the eigenvector of the
    // primal matrix only tracks it like its square root.
    //
    // The center must satisfy `Z_Q phi_hat = -z_0q` to working precision or
    // the leftover linear term shows up as a factorization defect, so it is
    // computed by a backward-stable solve plus iterative refinement rather
    // than through the (conditioning-limited) eigendecomposition inverse.
    let z0q = DVector::from_fn(s - 1, |i, _| sol.dual_matrix[(i + 1, 0)]);
    let (sigma, sigma_inv, phi_xhat, degraded) = match yq.clone().cholesky() {
        Some(chol) => {
            let mut phi_xhat = chol.solve(&(-&z0q));
            for _ in 0..3 {
                let e = &z0q + &yq * &phi_xhat;
                if e.norm() <= f64::EPSILON * yq.norm() * (1.0 + phi_xhat.norm()) {
                    break;
                }
                phi_xhat -= chol.solve(&e);
            }
            (chol.inverse(), yq, phi_xhat, false)
        }
        None => {
            // not positive definite at working precision: clamp the spectrum
            // and accept the conditioning-limited center
            let eig = yq.symmetric_eigen();
            let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
            let floor = (SIGMA_EIG_FLOOR_RATIO * lmax).max(f64::MIN_POSITIVE);
            let vals = eig.eigenvalues.map(|v| v.max(floor));
            let u = &eig.eigenvectors;
            let sigma_inv = u * DMatrix::from_diagonal(&vals) * u.transpose();
            let sigma = u * DMatrix::from_diagonal(&vals.map(f64::recip)) * u.transpose();
            let phi_xhat = -(&sigma * &z0q);
            (sigma, sigma_inv, phi_xhat, true)
        }
    };
    let z00 = sol.dual_matrix[(0, 0)];
    let rho = sol.dual_obj + z00 + z0q.dot(&phi_xhat);
    let xhat = DVector::from_fn(n_state, |i, _| phi_xhat[i]);
    Some(SosBelief {
        r,
        xhat,
        phi_xhat,
        sigma,
        sigma_inv,
        rho,
        degraded,
    })
}

/// Partial derivatives of the monomial basis (constant dropped): row `l`,
/// column `k` holds the derivative of basis monomial `l` in variable `k`.
fn phi_jacobian(r: u32, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let basis = enumerate_basis(r, n);
    let mut jac = DMatrix::zeros(basis.len() - 1, n);
    for (row, e) in basis.iter().skip(1).enumerate() {
        for k in 0..n {
            let a = e.0[k];
            if a == 0 {
                continue;
            }
            let mut d = a as f64;
            for (j, &aj) in e.0.iter().enumerate() {
                let pw = if j == k { aj - 1 } else { aj };
                d *= x[j].powi(pw as i32);
            }
            jac[(row, k)] = d;
        }
    }
    jac
}

fn poly_grad(p: &Polynomial, x: &[f64]) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    for (e, c) in p.terms() {
        for k in 0..n {
            let a = e.0[k];
            if a == 0 {
                continue;
            }
            let mut d = c * a as f64;
            for (j, &aj) in e.0.iter().enumerate() {
                let pw = if j == k { aj - 1 } else { aj };
                d *= x[j].powi(pw as i32);
            }
            g[k] += d;
        }
    }
    g
}

/// Local Gauss-Newton polish of an extracted estimate on the original
/// problem `min ||A phi_r(x) - b||^2` in the `V^-1` metric subject to
/// `g_j(x) = 0`. The relaxation solution locates the basin; a few SQP steps
/// then converge far past the solver's duality-gap-limited accuracy and land
/// exactly on the constraint set. Returns `None` when the KKT system is
/// singular or the iterate tries to leave the basin, in which case the
/// caller keeps the unpolished estimate.
fn refine_estimate(
    cond: &AffineCondition,
    constraints: &[Polynomial],
    r: u32,
    x0: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = x0.len();
    let p = constraints.len();
    let mut x = x0.clone();
    let trust = 0.05 * (1.0 + x0.norm());
    for _ in 0..8 {
        let xs = x.as_slice();
        let phi = phi_eval(r, xs);
        let jac = &cond.a * phi_jacobian(r, xs);
        let resid = &cond.a * &phi - &cond.b;
        let grad = jac.transpose() * (&cond.vinv * &resid);
        let h = jac.transpose() * &cond.vinv * &jac;
        let mut kkt = DMatrix::zeros(n + p, n + p);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&(-&grad));
        for (j, g) in constraints.iter().enumerate() {
            let gg = poly_grad(g, xs);
            for k in 0..n {
                kkt[(n + j, k)] = gg[k];
                kkt[(k, n + j)] = gg[k];
            }
            rhs[n + j] = -g.eval(xs).ok()?;
        }
        let step_full = kkt.full_piv_lu().solve(&rhs)?;
        let step = step_full.rows(0, n).into_owned();
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        x += &step;
        if (&x - x0).norm() > trust {
            return None;
        }
        if step.norm() <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
    }
    Some(x)
}

/// Closed-form solution of the unconstrained order-one problem:
/// `xhat = Sigma A'V^-1 b`, `Sigma = (A'V^-1 A)^-1`, and the offset
/// `rho = b'V^-1 b - b'V^-1 A Sigma A'V^-1 b`, so that
/// `||A x - b||^2_{V^-1} = ||x - xhat||^2_{Sigma^-1} + rho` identically.
pub fn factorize_blue(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    v: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, f64), BpueError> {
    check_shapes(a, b, v)?;
    let vinv = invert_spd(v).ok_or(BpueError::SingularWeight)?;
    factorize_blue_weighted(a, b, &vinv)
}

pub(crate) fn factorize_blue_weighted(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    vinv: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, f64), BpueError> {
    let w = vinv * b;
    let atw = a.transpose() * &w;
    let mut info = a.transpose() * vinv * a;
    let info_t = info.transpose();
    info = (info + info_t) * 0.5;
    let chol = info.cholesky().ok_or(BpueError::RankDeficient)?;
    let sigma = chol.inverse();
    let xhat = &sigma * &atw;
    let rho = b.dot(&w) - atw.dot(&xhat);
    Ok((xhat, sigma, rho))
}

/// Largest absolute defect of the factorization identity
/// `||A phi_r(x) - b||^2_{V^-1} + sum_j h_j(x) g_j(x) - sigma(x) - rho`
/// over the given test points, with the multipliers `h_j` rebuilt from the
/// localizing duals. With constraints present the identity only holds on
/// the constraint set, so callers must supply feasible points.
///
/// `constraints` must be the list passed to [`solve_bpue`].
pub fn belief_residual(
    cond: &AffineCondition,
    constraints: &[Polynomial],
    bpue: &BpueSolve,
    points: &[DVector<f64>],
) -> Result<f64, BpueError> {
    let belief = bpue.belief.as_ref().ok_or(BpueError::NotRankOne)?;
    let mult = bpue.solution.multipliers(&bpue.problem);
    let mut worst = 0.0f64;
    for x in points {
        if x.len() != bpue.n_state {
            return Err(PolyError::PointMismatch {
                expected: bpue.n_state,
                got: x.len(),
            }
            .into());
        }
        let xs = x.as_slice();
        let phi = phi_eval(bpue.r, xs);
        let d = &cond.a * &phi - &cond.b;
        let fit = (&cond.vinv * &d).dot(&d);
        let mut hterm = 0.0;
        for &(idx, lam) in &mult.localizing {
            if let ConstraintKind::Localizing { constraint, mu } = &bpue.problem.constraints[idx].kind {
                hterm += lam * constraints[*constraint].eval(xs)? * mu.eval(xs);
            }
        }
        let defect = fit + hterm - belief.evaluate(xs) - belief.rho;
        worst = worst.max(defect.abs());
    }
    Ok(worst)
}
