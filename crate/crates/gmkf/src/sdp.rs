//! Dense primal-dual interior-point solver for the equality-constrained SDPs
//! produced by the relaxation assembly.
//!
//! The method is infeasible-start path following with Nesterov-Todd scaling
//! and a Mehrotra predictor-corrector step. The Newton system is reduced to a
//! dense Schur complement over the constraint multipliers and factored by
//! Cholesky; matrices here are small (dimension <= ~50, a few hundred
//! constraints), so dense factorizations are the right tool.
//!
//! Conventions: primal `min <C, X> s.t. <A_i, X> = b_i, X >= 0`; dual slack
//! `Z = C - sum_i y_i A_i >= 0`. For relaxations assembled by
//! [`crate::momrelax`], the multipliers map back by constraint kind through
//! [`SdpSolution::multipliers`]: `rho` for the normalization row and the
//! moment/localizing multipliers with the sign flipped, so that the dual
//! matrix rebuilds as `C + sum lam G + sum mu Bperp - rho * e1 e1^T`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::momrelax::{ConstraintKind, SdpProblem};

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("constraint matrices are linearly dependent after deduplication (pivot {pivot} at row {row})")]
    DependentConstraints { row: usize, pivot: f64 },
    #[error("problem has no constraints; the primal is unbounded below or trivial")]
    NoConstraints,
    #[error("cost matrix is {rows}x{cols}, expected square of constraint dimension {dim}")]
    DimensionMismatch { rows: usize, cols: usize, dim: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// All relative residuals at or below tolerance.
    Optimal,
    /// Iteration limit reached; best iterate returned.
    MaxIter,
    /// A factorization failed beyond repair; best iterate returned.
    NumericalFailure,
    /// Iterates diverged in a way consistent with an infeasible primal.
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Stop when max(primal, dual, gap) relative residual falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Verify constraint linear independence (Gram Cholesky) before solving.
    pub check_constraints: bool,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            max_iter: 200,
            check_constraints: true,
            verbose: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: DMatrix<f64>,
    /// Equality multipliers, one per constraint, in problem order.
    pub y: DVector<f64>,
    /// Dual slack matrix (PSD at optimality).
    pub dual_matrix: DMatrix<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub rel_primal_res: f64,
    pub rel_dual_res: f64,
    pub rel_gap: f64,
    /// Complementarity `<X, Z> / s` at the returned iterate.
    pub mu: f64,
    pub iters: usize,
}

/// Dual multipliers mapped back by constraint kind; values follow the
/// optimality-system convention `Z = C + sum lam G + sum mu Bperp - rho E00`.
#[derive(Clone, Debug)]
pub struct Multipliers {
    /// Multiplier of the normalization row; equals the dual objective.
    pub rho: f64,
    /// `(constraint index, mu_i)` for each moment constraint.
    pub moment: Vec<(usize, f64)>,
    /// `(constraint index, lambda_j)` for each localizing constraint.
    pub localizing: Vec<(usize, f64)>,
}

impl SdpSolution {
    pub fn multipliers(&self, prob: &SdpProblem) -> Multipliers {
        let mut rho = 0.0;
        let mut moment = Vec::new();
        let mut localizing = Vec::new();
        for (i, con) in prob.constraints.iter().enumerate() {
            match con.kind {
                ConstraintKind::Normalization => rho = self.y[i],
                ConstraintKind::Moment { .. } => moment.push((i, -self.y[i])),
                ConstraintKind::Localizing { .. } => localizing.push((i, -self.y[i])),
            }
        }
        Multipliers {
            rho,
            moment,
            localizing,
        }
    }
}

/// Rebuild the dual matrix from mapped multipliers:
/// `C + sum lam G + sum mu Bperp - rho E00`.
pub fn rebuild_dual(prob: &SdpProblem, m: &Multipliers) -> DMatrix<f64> {
    let mut out = prob.cost.clone();
    out[(0, 0)] -= m.rho;
    for &(i, mu) in &m.moment {
        prob.constraints[i].mat.add_scaled_to(&mut out, mu);
    }
    for &(i, lam) in &m.localizing {
        prob.constraints[i].mat.add_scaled_to(&mut out, lam);
    }
    out
}

/// Minimum centrality margin kept by the step line search: the smallest
/// eigenvalue of the scaled product `X Z` is held above this fraction of its
/// mean, so iterates cannot drift onto the cone boundary ahead of
/// convergence. The margin also caps the eigenvalue spread of the scaling
/// point, which the Schur complement conditioning depends on quadratically.
const NEIGHBORHOOD_GAMMA: f64 = 1e-3;

pub fn solve(prob: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
    // Normalize the cost to unit scale before iterating. The step equations
    // are solved in absolute floating-point arithmetic, so a large cost norm
    // raises the noise floor of the computed directions by the same factor
    // and stops the complementarity descent early; solving the scaled problem
    // and unscaling the dual side afterwards recovers those digits.
    let c_scale = prob.cost.amax();
    if !(c_scale.is_finite() && c_scale > 1.0) {
        return solve_core(prob, opts);
    }
    let mut scaled = prob.clone();
    scaled.cost /= c_scale;
    let mut sol = solve_core(&scaled, opts)?;
    sol.y *= c_scale;
    sol.dual_matrix *= c_scale;
    sol.primal_obj *= c_scale;
    sol.dual_obj *= c_scale;
    sol.mu *= c_scale;
    Ok(sol)
}

fn solve_core(prob: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
    let s = prob.dim;
    let m = prob.constraints.len();
    if m == 0 {
        return Err(SdpError::NoConstraints);
    }
    if prob.cost.nrows() != s || prob.cost.ncols() != s {
        return Err(SdpError::DimensionMismatch {
            rows: prob.cost.nrows(),
            cols: prob.cost.ncols(),
            dim: s,
        });
    }
    if opts.check_constraints {
        check_independence(prob)?;
    }

    let b = DVector::from_iterator(m, prob.constraints.iter().map(|c| c.rhs));
    let c_norm = prob.cost.norm();
    let b_norm = b.norm();

    // Gram matrix of the constraint set: used to project search directions
    // back onto the affine manifold. Unlike the Schur complement it carries
    // no scaling-point factors, so it stays well conditioned all the way to
    // the boundary.
    let gram_chol = {
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = prob.constraints[i]
                    .mat
                    .inner_sparse(&prob.constraints[j].mat);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        gram.cholesky()
    };

    // start on a comfortable multiple of the identity
    let mut x = DMatrix::<f64>::identity(s, s);
    let mut z = DMatrix::<f64>::identity(s, s) * (1.0f64).max(c_norm / (s as f64).sqrt());
    let mut y = DVector::<f64>::zeros(m);

    let mut best: Option<(f64, SdpSolution)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut iters = 0;
    let mut stall = 0usize;
    let mut reg_level = 0usize;
    // residual-to-complementarity ratio bound of the path-following
    // neighborhood; fixed from the initial iterate below
    let mut kappa = f64::INFINITY;

    // preallocated buffers
    let mut t_buf = DMatrix::<f64>::zeros(s, s);

    for iter in 0..opts.max_iter {
        iters = iter;

        // residuals
        let ax = apply_constraints(prob, &x);
        let r_p = &b - &ax;
        let mut r_d = prob.cost.clone();
        for (i, con) in prob.constraints.iter().enumerate() {
            con.mat.add_scaled_to(&mut r_d, -y[i]);
        }
        r_d -= &z;
        let primal_obj = prob.cost.dot(&x);
        let dual_obj = b.dot(&y);
        let mu = x.dot(&z) / s as f64;

        let rel_p = r_p.norm() / (1.0 + b_norm);
        let rel_d = r_d.norm() / (1.0 + c_norm);
        let rel_gap =
            (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs() + dual_obj.abs());
        let merit = rel_p.max(rel_d).max(rel_gap);

        if opts.verbose {
            eprintln!(
                "iter {iter:3}  mu {mu:9.2e}  rp {rel_p:9.2e}  rd {rel_d:9.2e}  gap {rel_gap:9.2e}  pobj {primal_obj:14.6e}"
            );
        }

        let snapshot = |st: SolveStatus| SdpSolution {
            status: st,
            x: x.clone(),
            y: y.clone(),
            dual_matrix: z.clone(),
            primal_obj,
            dual_obj,
            rel_primal_res: rel_p,
            rel_dual_res: rel_d,
            rel_gap,
            mu,
            iters: iter,
        };

        if best.as_ref().map_or(true, |(bm, _)| merit < 0.999 * *bm) {
            best = Some((merit, snapshot(SolveStatus::MaxIter)));
            stall = 0;
        } else {
            stall += 1;
        }

        if merit <= opts.tol {
            status = SolveStatus::Optimal;
            best = Some((merit, snapshot(SolveStatus::Optimal)));
            break;
        }

        // no measurable progress for a long stretch: the iterate has hit the
        // numerical floor of this instance, so stop and return the best one
        if stall > 15 {
            break;
        }

        // complementarity scaled like the relative residuals, so the
        // neighborhood bound below compares like with like
        let obj_scale = 1.0 + primal_obj.abs() + dual_obj.abs();
        let rel_mu = mu * s as f64 / obj_scale;
        if !kappa.is_finite() {
            kappa = (4.0 * (rel_p + rel_d) / rel_mu.max(1e-300)).max(25.0);
        }

        // divergence heuristic: complementarity collapsed but the primal
        // residual refuses to follow
        if mu < 1e-13 && rel_p > 1e4 * opts.tol.max(1e-12) && x.norm() > 1e10 {
            status = SolveStatus::Infeasible;
            break;
        }

        // Nesterov-Todd scaling point
        let Some(scaling) = NtScaling::compute(&x, &z) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // Schur complement M[i][j] = <A_i, W A_j W>
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            prob.constraints[j].mat.waw_into(&scaling.w, &mut t_buf);
            for i in 0..=j {
                let v = prob.constraints[i].mat.inner(&t_buf);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        // Jacobi scaling evens out the row scales that the wide spread of NT
        // eigenvalues induces, which keeps the factorization accurate longer
        let dscale = DVector::from_iterator(
            m,
            (0..m).map(|i| schur[(i, i)].max(1e-300).sqrt().recip()),
        );
        let mut schur_sc = schur.clone();
        for i in 0..m {
            for j in 0..m {
                schur_sc[(i, j)] *= dscale[i] * dscale[j];
            }
        }
        let Some((chol, reg_used)) = factor_with_regularization(schur_sc.clone(), reg_level)
        else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        reg_level = reg_used;
        // the Schur system turns ill-conditioned near the boundary; refine
        // against the unscaled matrix to recover the lost digits
        let solve_schur = |rhs: &DVector<f64>| -> DVector<f64> {
            let mut sol = dscale.component_mul(&chol.solve(&rhs.component_mul(&dscale)));
            for _ in 0..2 {
                let resid = rhs - &schur * &sol;
                sol += dscale.component_mul(&chol.solve(&resid.component_mul(&dscale)));
            }
            sol
        };

        // common rhs piece A(W r_d W)
        let wrdw = &scaling.w * &r_d * &scaling.w;
        let a_wrdw = apply_constraints_dense(prob, &wrdw);

        // predictor (affine direction, sigma = 0): G_rhs = -X
        let rhs_aff = &r_p + &ax + &a_wrdw;
        let dy_aff = solve_schur(&rhs_aff);
        let dz_aff = delta_z(prob, &r_d, &dy_aff);
        let mut dx_aff = -&x - &scaling.w * &dz_aff * &scaling.w;
        symmetrize(&mut dx_aff);

        let ap_aff = max_step(&x, &dx_aff).min(1.0);
        let ad_aff = max_step(&z, &dz_aff).min(1.0);
        let mu_aff = ((&x + &dx_aff * ap_aff).dot(&(&z + &dz_aff * ad_aff)) / s as f64).max(0.0);
        let mut sigma = ((mu_aff / mu).powi(3)).clamp(1e-10, 1.0);
        // keep centering up while feasibility lags, so complementarity never
        // runs ahead of the residuals
        if rel_p > 10.0 * rel_mu {
            sigma = sigma.max(0.5);
        }

        // direction builder: given a centering weight and an optional
        // second-order correction in the scaled space, assemble a Newton
        // direction from the shared Schur factorization
        let build_direction = |sig: f64, corr: Option<&DMatrix<f64>>| {
            let mut rhs_c = DMatrix::<f64>::zeros(s, s);
            for i in 0..s {
                for j in 0..s {
                    let c = corr.map_or(0.0, |m| 0.5 * (m[(i, j)] + m[(j, i)]));
                    let base = if i == j {
                        sig * mu - scaling.d[i] * scaling.d[i]
                    } else {
                        0.0
                    };
                    rhs_c[(i, j)] = 2.0 * (base - c) / (scaling.d[i] + scaling.d[j]);
                }
            }
            let g_rhs = &scaling.r * &rhs_c * scaling.r.transpose();
            let a_grhs = apply_constraints_dense(prob, &g_rhs);

            let rhs = &r_p - &a_grhs + &a_wrdw;
            let dy = solve_schur(&rhs);
            let dz = delta_z(prob, &r_d, &dy);
            let mut dx = &g_rhs - &scaling.w * &dz * &scaling.w;
            symmetrize(&mut dx);

            // the Schur solve loses digits near the boundary and that error
            // lands in the primal row A(dx) = r_p; project it out so primal
            // feasibility is immune to the Schur conditioning
            if let Some(gc) = &gram_chol {
                let defect = &r_p - &apply_constraints(prob, &dx);
                let delta = gc.solve(&defect);
                for (i, con) in prob.constraints.iter().enumerate() {
                    con.mat.add_scaled_to(&mut dx, delta[i]);
                }
            }
            (dx, dy, dz)
        };

        // trial step: boundary fraction and factorizability guard, then a
        // path-following line search that keeps (i) residuals within a fixed
        // multiple of complementarity, (ii) a minimum centrality margin, and
        // (iii) complementarity from growing — all evaluated on the actually
        // computed direction, so numerical direction error is caught as well
        let d_mat = DMatrix::from_diagonal(&scaling.d);
        let try_step = |dx: &DMatrix<f64>, dz: &DMatrix<f64>, sig: f64| -> (f64, f64) {
            let eta = 0.99;
            let mut ap = (eta * max_step(&x, dx)).min(1.0);
            let mut ad = (eta * max_step(&z, dz)).min(1.0);
            for _ in 0..12 {
                if (&x + dx * ap).cholesky().is_some() {
                    break;
                }
                ap *= 0.5;
            }
            for _ in 0..12 {
                if (&z + dz * ad).cholesky().is_some() {
                    break;
                }
                ad *= 0.5;
            }

            let a_dx = apply_constraints(prob, dx);
            let dxt_c = &scaling.r_inv * dx * scaling.r_inv.transpose();
            let dzt_c = scaling.r.transpose() * dz * &scaling.r;
            // never demand more centrality than the current point has: after
            // roundoff pushes an iterate below the target margin, requiring
            // the full margin would reject every step, including the
            // centering ones that restore it
            let cur_ratio = scaling.d.iter().fold(f64::INFINITY, |m, &v| m.min(v * v)) / mu;
            let gamma_eff = NEIGHBORHOOD_GAMMA.min(0.9 * cur_ratio);
            for _ in 0..60 {
                // eigenvalues of the trial product via the similarity
                // transform L' z L (x = L L'): real and positive exactly when
                // both factors are positive definite, unlike the symmetrized
                // product, which can dip negative for non-commuting factors
                let xt_n = &d_mat + &dxt_c * ap;
                let zt_n = &d_mat + &dzt_c * ad;
                let ok = xt_n.cholesky().is_some_and(|ch| {
                    let l = ch.l();
                    let prod = l.transpose() * &zt_n * &l;
                    let mu_next = (prod.trace() / s as f64).max(0.0);
                    let rel_mu_next = mu_next * s as f64 / obj_scale;
                    let rp_next = (&r_p - &a_dx * ap).norm() / (1.0 + b_norm);
                    let rd_next = (1.0 - ad) * rel_d;
                    let eigs = prod.symmetric_eigenvalues();
                    let lam_min = eigs.min();
                    let slack = 64.0 * f64::EPSILON * eigs.max().abs().max(lam_min.abs());
                    let resid_ok =
                        rp_next + rd_next <= kappa * rel_mu_next.max(0.5 * opts.tol / kappa);
                    let central_ok = lam_min + slack >= gamma_eff * mu_next;
                    let growth_ok = mu_next <= mu * (1.01 - 0.5 * ap.min(ad) * (1.0 - sig));
                    resid_ok && central_ok && growth_ok
                });
                if ok {
                    break;
                }
                if ap.max(ad) < 1e-8 {
                    break;
                }
                ap *= 0.7;
                ad *= 0.7;
            }
            (ap, ad)
        };

        // corrector in the scaled space
        let dxt = &scaling.r_inv * &dx_aff * scaling.r_inv.transpose();
        let dzt = scaling.r.transpose() * &dz_aff * &scaling.r;
        let cross = &dxt * &dzt;
        let (mut dx, mut dy, mut dz) = build_direction(sigma, Some(&cross));
        let (mut ap, mut ad) = try_step(&dx, &dz, sigma);
        let mut sig_used = sigma;

        // Mehrotra's correction can point far off-center when the affine step
        // is blocked; if the guarded step collapsed, fall back to a pure
        // centering direction at the current complementarity level, and
        // failing that to the plain affine direction (bypassing a corrector
        // the line search keeps rejecting)
        if ap.min(ad) < 1e-4 {
            let (cx, cy, cz) = build_direction(1.0, None);
            let (cap, cad) = try_step(&cx, &cz, 1.0);
            if cap.min(cad) > ap.min(ad) {
                dx = cx;
                dy = cy;
                dz = cz;
                ap = cap;
                ad = cad;
                sig_used = 1.0;
            }
            if ap.min(ad) < 1e-4 {
                let (ax_, ay, az) = build_direction(0.0, None);
                let (aap, aad) = try_step(&ax_, &az, 0.0);
                if aap.min(aad) > ap.min(ad) {
                    dx = ax_;
                    dy = ay;
                    dz = az;
                    ap = aap;
                    ad = aad;
                    sig_used = 0.0;
                }
            }
        }

        if opts.verbose {
            eprintln!(
                "      ap_aff {ap_aff:9.2e}  ad_aff {ad_aff:9.2e}  mu_aff/mu {:9.2e}  sigma {sig_used:9.2e}  ap {ap:9.2e}  ad {ad:9.2e}",
                mu_aff / mu
            );
        }

        x += &dx * ap;
        y += &dy * ad;
        z += &dz * ad;
        symmetrize(&mut x);
        symmetrize(&mut z);
    }

    let (_, mut sol) = best.expect("at least one iterate recorded");
    if status != SolveStatus::MaxIter {
        sol.status = status;
    } else {
        sol.status = SolveStatus::MaxIter;
    }
    if sol.status == SolveStatus::Optimal {
        sol.iters = iters;
    }
    Ok(sol)
}

/// `<A_i, X>` for all constraints.
fn apply_constraints(prob: &SdpProblem, x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        prob.constraints.len(),
        prob.constraints.iter().map(|c| c.mat.inner(x)),
    )
}

fn apply_constraints_dense(prob: &SdpProblem, n: &DMatrix<f64>) -> DVector<f64> {
    apply_constraints(prob, n)
}

/// `dz = r_d - sum_i dy_i A_i`.
fn delta_z(prob: &SdpProblem, r_d: &DMatrix<f64>, dy: &DVector<f64>) -> DMatrix<f64> {
    let mut dz = r_d.clone();
    for (i, con) in prob.constraints.iter().enumerate() {
        con.mat.add_scaled_to(&mut dz, -dy[i]);
    }
    dz
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

struct NtScaling {
    /// Scaling point `W = R R^T` with `W Z W = X`.
    w: DMatrix<f64>,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    /// NT eigenvalues: scaled `X` and `Z` are both `diag(d)`.
    d: DVector<f64>,
}

impl NtScaling {
    fn compute(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Self> {
        let lx = chol_with_jitter(x)?.l();
        let lz = chol_with_jitter(z)?.l();
        let prod = lz.transpose() * &lx;
        let svd = prod.svd(true, true);
        let u = svd.u.as_ref()?;
        let vt = svd.v_t.as_ref()?;
        let d = svd.singular_values.clone();
        if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return None;
        }
        let d_isqrt = DMatrix::from_diagonal(&d.map(|v| 1.0 / v.sqrt()));
        let r = &lx * vt.transpose() * &d_isqrt;
        let r_inv = &d_isqrt * u.transpose() * lz.transpose();
        let w = &r * r.transpose();
        Some(NtScaling { w, r, r_inv, d })
    }
}

/// Cholesky of an iterate that may have gone marginally indefinite through
/// roundoff; escalate a tiny diagonal shift instead of aborting the solve.
fn chol_with_jitter(m: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch);
    }
    let n = m.nrows();
    let base = m.trace().abs().max(1e-300) / n as f64;
    let mut shifted = m.clone();
    let mut added = 0.0f64;
    for attempt in 0..4 {
        let tau = base * 1e-13 * 100f64.powi(attempt);
        for i in 0..n {
            shifted[(i, i)] += tau - added;
        }
        added = tau;
        if let Some(ch) = shifted.clone().cholesky() {
            return Some(ch);
        }
    }
    None
}

/// Largest step `alpha` with `S + alpha * dS` staying positive definite
/// (infinite when `dS` is PSD in the metric of `S`).
fn max_step(s_mat: &DMatrix<f64>, ds: &DMatrix<f64>) -> f64 {
    let Some(chol) = s_mat.clone().cholesky() else {
        return 0.0;
    };
    let l = chol.l();
    // B = L^-1 dS L^-T
    let Some(y1) = l.solve_lower_triangular(ds) else {
        return 0.0;
    };
    let Some(y2) = l.solve_lower_triangular(&y1.transpose()) else {
        return 0.0;
    };
    let mut b = y2.transpose();
    symmetrize(&mut b);
    let eig = b.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= -1e-14 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

/// Cholesky with escalating diagonal regularization; the Schur matrix can be
/// poorly conditioned near convergence when the optimal face is degenerate.
/// `start` lets the caller resume at the shift level that last succeeded so
/// late iterations do not re-run failed factorizations.
fn factor_with_regularization(
    mut m: DMatrix<f64>,
    start: usize,
) -> Option<(nalgebra::Cholesky<f64, nalgebra::Dyn>, usize)> {
    let n = m.nrows();
    let base = m.trace().abs().max(1e-300) / n as f64;
    let mut reg = 0.0f64;
    for attempt in start..8 {
        if attempt > 0 {
            let add = base * 1e-14 * 100f64.powi(attempt as i32 - 1);
            for i in 0..n {
                m[(i, i)] += add - reg;
            }
            reg = add;
        }
        if let Some(ch) = m.clone().cholesky() {
            return Some((ch, attempt));
        }
    }
    None
}

/// Gram-matrix Cholesky with a relative pivot tolerance; fails when the
/// constraint matrices are (numerically) linearly dependent.
fn check_independence(prob: &SdpProblem) -> Result<(), SdpError> {
    let m = prob.constraints.len();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = prob.constraints[i]
                .mat
                .inner_sparse(&prob.constraints[j].mat);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let max_diag = (0..m).map(|i| gram[(i, i)]).fold(0.0f64, f64::max);
    let tol = 1e-12 * max_diag.max(1e-300);
    // in-place lower Cholesky with pivot check
    for k in 0..m {
        let mut d = gram[(k, k)];
        for p in 0..k {
            d -= gram[(k, p)] * gram[(k, p)];
        }
        if d <= tol {
            return Err(SdpError::DependentConstraints { row: k, pivot: d });
        }
        let dk = d.sqrt();
        gram[(k, k)] = dk;
        for i in (k + 1)..m {
            let mut v = gram[(i, k)];
            for p in 0..k {
                v -= gram[(i, p)] * gram[(k, p)];
            }
            gram[(i, k)] = v / dk;
        }
    }
    Ok(())
}

/// Rank-1 extraction from a PSD solution matrix.
#[derive(Clone, Debug)]
pub struct Rank1Extraction {
    /// Leading factor scaled so `v[0] = 1`; entries beyond 0 estimate the
    /// monomial vector `phi_r(xhat)`.
    pub v: DVector<f64>,
    /// Second-to-first singular value ratio of the solution matrix.
    pub ratio: f64,
    /// `ratio < 1e-6`.
    pub is_rank1: bool,
}

/// Ratio threshold declaring a solution matrix numerically rank one.
pub const RANK1_RATIO_TOL: f64 = 1e-6;

pub fn extract_rank1(x: &DMatrix<f64>) -> Rank1Extraction {
    let mut xs = x.clone();
    symmetrize(&mut xs);
    let eig = xs.symmetric_eigen();
    // index of largest eigenvalue
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap()
    });
    let i1 = order[0];
    let lam1 = eig.eigenvalues[i1].max(0.0);
    let ratio = if order.len() > 1 {
        eig.eigenvalues[order[1]].abs() / eig.eigenvalues[i1].abs().max(1e-300)
    } else {
        0.0
    };
    let mut v: DVector<f64> = eig.eigenvectors.column(i1).into_owned() * lam1.sqrt();
    if v[0] < 0.0 {
        v = -v;
    }
    if v[0].abs() > 1e-12 {
        let v0 = v[0];
        v /= v0;
    }
    Rank1Extraction {
        v,
        ratio,
        is_rank1: ratio < RANK1_RATIO_TOL,
    }
}

/// First-order optimality report for a relaxation solution.
#[derive(Clone, Debug)]
pub struct OptimalityReport {
    /// `||Z - (C + sum lam G + sum mu Bperp - rho E00)||_F / (1 + ||C||_F)`.
    pub stationarity: f64,
    /// `max_i |<A_i, X> - b_i|`.
    pub primal_feasibility: f64,
    /// `<X, Z> / s`.
    pub complementarity: f64,
    /// Smallest eigenvalues of X and Z (PSD check).
    pub min_eig_x: f64,
    pub min_eig_z: f64,
    pub rank1_ratio_x: f64,
    pub is_rank1_x: bool,
    /// Whether Z has rank exactly s-1 (top s-1 spectrum well separated
    /// from the smallest value).
    pub rank_z_is_s_minus_1: bool,
    pub pass: bool,
}

pub fn check_optimality(prob: &SdpProblem, sol: &SdpSolution, tol: f64) -> OptimalityReport {
    let mult = sol.multipliers(prob);
    let rebuilt = rebuild_dual(prob, &mult);
    let stationarity = (&rebuilt - &sol.dual_matrix).norm() / (1.0 + prob.cost.norm());
    let ax = apply_constraints(prob, &sol.x);
    let primal_feasibility = prob
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| (ax[i] - c.rhs).abs())
        .fold(0.0f64, f64::max);
    let complementarity = sol.x.dot(&sol.dual_matrix) / prob.dim as f64;

    let ex = sol.x.clone().symmetric_eigenvalues();
    let ez = sol.dual_matrix.clone().symmetric_eigenvalues();
    let min_eig_x = ex.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_eig_z = ez.iter().cloned().fold(f64::INFINITY, f64::min);

    let extraction = extract_rank1(&sol.x);
    let mut zs: Vec<f64> = ez.iter().map(|v| v.abs()).collect();
    zs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let rank_z_is_s_minus_1 = if zs.len() < 2 {
        false
    } else {
        let top = zs[0];
        let second_smallest = zs[zs.len() - 2];
        let smallest = zs[zs.len() - 1];
        second_smallest >= RANK1_RATIO_TOL * top && smallest < RANK1_RATIO_TOL * top
    };

    let scale = 1.0 + sol.primal_obj.abs();
    let pass = stationarity <= tol
        && primal_feasibility <= tol * scale
        && complementarity.abs() <= tol * scale
        && min_eig_x >= -tol * scale
        && min_eig_z >= -tol * scale
        && extraction.is_rank1
        && rank_z_is_s_minus_1;
    OptimalityReport {
        stationarity,
        primal_feasibility,
        complementarity,
        min_eig_x,
        min_eig_z,
        rank1_ratio_x: extraction.ratio,
        is_rank1_x: extraction.is_rank1,
        rank_z_is_s_minus_1,
        pass,
    }
}
