//! Classical comparison filters: the linear Kalman filter (information and
//! covariance forms), an extended Kalman filter over user-supplied models
//! and Jacobians, an unscented Kalman filter, and an invariant EKF on SE(2)
//! with the body-frame landmark observation.
//!
//! All steps follow the same loop order as the lifted filter — absorb the
//! measurement at time `k`, then propagate to `k+1` — so traces line up
//! step for step. Covariances are re-symmetrized after every operation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::se2;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("state covariance is not positive definite (jitter escalation exhausted)")]
    CovarianceNotPd,
    #[error("dimension mismatch: {what} is {got}, expected {expected}")]
    Dim {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Mean and covariance of a Gaussian state belief.
#[derive(Clone, Debug)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        GaussianBelief { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// SE(2) pose estimate with covariance in the Lie algebra, twist ordering
/// `(v1, v2, omega)`.
#[derive(Clone, Debug)]
pub struct LieBelief {
    pub pose: Matrix3<f64>,
    pub cov: Matrix3<f64>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn sym3(m: &mut Matrix3<f64>) {
    let t = m.transpose();
    *m = (*m + t) * 0.5;
}

// ---------------------------------------------------------------------------
// Linear Kalman filter
// ---------------------------------------------------------------------------

/// Covariance-form measurement update with gain `K = P Hᵀ (H P Hᵀ + R)⁻¹`.
pub fn kf_update_covariance(
    belief: &GaussianBelief,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<GaussianBelief, BaselineError> {
    let n = belief.dim();
    check_dim("measurement", h.nrows(), y.len())?;
    check_dim("measurement matrix columns", n, h.ncols())?;
    let s = h * &belief.cov * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(BaselineError::SingularInnovation)?;
    let k = &belief.cov * h.transpose() * s_inv;
    let mean = &belief.mean + &k * (y - h * &belief.mean);
    let mut cov = (DMatrix::identity(n, n) - &k * h) * &belief.cov;
    symmetrize(&mut cov);
    Ok(GaussianBelief { mean, cov })
}

/// Information-form measurement update with gain
/// `K = (Hᵀ R⁻¹ H + P⁻¹)⁻¹ Hᵀ R⁻¹`; algebraically identical to the
/// covariance form by the matrix inversion lemma.
pub fn kf_update_information(
    belief: &GaussianBelief,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<GaussianBelief, BaselineError> {
    let n = belief.dim();
    check_dim("measurement", h.nrows(), y.len())?;
    check_dim("measurement matrix columns", n, h.ncols())?;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or(BaselineError::SingularInnovation)?;
    let p_inv = belief
        .cov
        .clone()
        .try_inverse()
        .ok_or(BaselineError::CovarianceNotPd)?;
    let info = h.transpose() * &r_inv * h + p_inv;
    let mut cov = info.try_inverse().ok_or(BaselineError::SingularInnovation)?;
    let k = &cov * h.transpose() * &r_inv;
    let mean = &belief.mean + &k * (y - h * &belief.mean);
    symmetrize(&mut cov);
    Ok(GaussianBelief { mean, cov })
}

/// Time propagation `x ← F x + G u`, `P ← F P Fᵀ + Q`.
pub fn kf_predict(
    belief: &GaussianBelief,
    f: &DMatrix<f64>,
    g: Option<&DMatrix<f64>>,
    u: &DVector<f64>,
    q: &DMatrix<f64>,
) -> GaussianBelief {
    let mut mean = f * &belief.mean;
    if let Some(g) = g {
        mean += g * u;
    }
    let mut cov = f * &belief.cov * f.transpose() + q;
    symmetrize(&mut cov);
    GaussianBelief { mean, cov }
}

/// One Kalman filter step in update-then-predict order: absorb `y_k`, then
/// propagate through `x_{k+1} = F x_k + G u_k + w_k`.
#[allow(clippy::too_many_arguments)]
pub fn kf_step(
    belief: &GaussianBelief,
    f: &DMatrix<f64>,
    g: Option<&DMatrix<f64>>,
    u: &DVector<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<GaussianBelief, BaselineError> {
    let posterior = kf_update_covariance(belief, h, y, r)?;
    Ok(kf_predict(&posterior, f, g, u, q))
}

// ---------------------------------------------------------------------------
// Extended Kalman filter
// ---------------------------------------------------------------------------

/// One EKF step in update-then-predict order. `h`/`h_jac` map the state to
/// the predicted measurement and its Jacobian; `f`/`f_jac` propagate the
/// posterior under the control.
#[allow(clippy::too_many_arguments)]
pub fn ekf_step(
    belief: &GaussianBelief,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    f_jac: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    h: impl Fn(&DVector<f64>) -> DVector<f64>,
    h_jac: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    y: &DVector<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<GaussianBelief, BaselineError> {
    // update
    let hx = h(&belief.mean);
    let hj = h_jac(&belief.mean);
    check_dim("measurement", hx.len(), y.len())?;
    let s = &hj * &belief.cov * hj.transpose() + r;
    let s_inv = s.try_inverse().ok_or(BaselineError::SingularInnovation)?;
    let k = &belief.cov * hj.transpose() * s_inv;
    let mean = &belief.mean + &k * (y - hx);
    let n = mean.len();
    let mut cov = (DMatrix::identity(n, n) - &k * &hj) * &belief.cov;
    symmetrize(&mut cov);

    // predict
    let fj = f_jac(&mean);
    let next = f(&mean);
    let mut cov = &fj * cov * fj.transpose() + q;
    symmetrize(&mut cov);
    Ok(GaussianBelief { mean: next, cov })
}

// ---------------------------------------------------------------------------
// Unscented Kalman filter
// ---------------------------------------------------------------------------

/// Unscented transform tuning; the defaults are the standard
/// `alpha = 1e-3`, `beta = 2`, `kappa = 0`.
#[derive(Clone, Copy, Debug)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// The `2n + 1` sigma points of a belief together with the mean and
/// covariance weights. A covariance that fails Cholesky gets escalating
/// diagonal jitter before giving up.
pub fn sigma_points(
    belief: &GaussianBelief,
    params: &UkfParams,
) -> Result<(Vec<DVector<f64>>, Vec<f64>, Vec<f64>), BaselineError> {
    let n = belief.dim();
    let nf = n as f64;
    let lambda = params.alpha * params.alpha * (nf + params.kappa) - nf;
    let scale = nf + lambda;

    let mut jitter = 0.0;
    let base = belief.cov.trace().max(1.0) / n as f64;
    let chol = loop {
        let mut c = belief.cov.clone() * scale;
        if jitter > 0.0 {
            for i in 0..n {
                c[(i, i)] += jitter * scale;
            }
        }
        match c.cholesky() {
            Some(ch) => break ch,
            None => {
                jitter = if jitter == 0.0 { base * 1e-12 } else { jitter * 10.0 };
                if jitter > base * 1e-3 {
                    return Err(BaselineError::CovarianceNotPd);
                }
            }
        }
    };
    let l = chol.l();

    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(belief.mean.clone());
    for i in 0..n {
        let col = l.column(i).into_owned();
        points.push(&belief.mean + &col);
        points.push(&belief.mean - &col);
    }
    let mut w_mean = vec![1.0 / (2.0 * scale); 2 * n + 1];
    let mut w_cov = w_mean.clone();
    w_mean[0] = lambda / scale;
    w_cov[0] = lambda / scale + 1.0 - params.alpha * params.alpha + params.beta;
    Ok((points, w_mean, w_cov))
}

/// Push a belief through a nonlinear map by the unscented transform,
/// returning the transformed mean, covariance (without additive noise), and
/// the cross-covariance between input and output.
pub fn unscented_transform(
    belief: &GaussianBelief,
    params: &UkfParams,
    map: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>), BaselineError> {
    let (points, w_mean, w_cov) = sigma_points(belief, params)?;
    let images: Vec<DVector<f64>> = points.iter().map(&map).collect();
    let m = images[0].len();
    let mut mean = DVector::zeros(m);
    for (w, img) in w_mean.iter().zip(&images) {
        mean += img * *w;
    }
    let n = belief.dim();
    let mut cov = DMatrix::zeros(m, m);
    let mut cross = DMatrix::zeros(n, m);
    for ((w, img), pt) in w_cov.iter().zip(&images).zip(&points) {
        let dy = img - &mean;
        let dx = pt - &belief.mean;
        cov += &dy * dy.transpose() * *w;
        cross += dx * dy.transpose() * *w;
    }
    symmetrize(&mut cov);
    Ok((mean, cov, cross))
}

/// One UKF step in update-then-predict order with additive process and
/// measurement noise.
#[allow(clippy::too_many_arguments)]
pub fn ukf_step(
    belief: &GaussianBelief,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    h: impl Fn(&DVector<f64>) -> DVector<f64>,
    y: &DVector<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    params: &UkfParams,
) -> Result<GaussianBelief, BaselineError> {
    // update
    let (y_pred, mut s, cross) = unscented_transform(belief, params, &h)?;
    check_dim("measurement", y_pred.len(), y.len())?;
    s += r;
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or(BaselineError::SingularInnovation)?;
    let k = cross * s_inv;
    let mean = &belief.mean + &k * (y - &y_pred);
    let mut cov = &belief.cov - &k * s * k.transpose();
    symmetrize(&mut cov);
    let posterior = GaussianBelief { mean, cov };

    // predict
    let (next_mean, mut next_cov, _) = unscented_transform(&posterior, params, &f)?;
    next_cov += q;
    symmetrize(&mut next_cov);
    Ok(GaussianBelief {
        mean: next_mean,
        cov: next_cov,
    })
}

// ---------------------------------------------------------------------------
// Invariant EKF on SE(2)
// ---------------------------------------------------------------------------

/// Propagate the invariant belief through `X_{k+1} = X_k U exp(w)` with
/// `w ~ N(0, Q_alg)` in the Lie algebra. The body-frame error obeys
/// `e_{k+1} = Ad_{U⁻¹} e_k + w`, so with zero noise the covariance is
/// transported by the adjoint alone.
pub fn inekf_propagate(
    belief: &LieBelief,
    u: &Matrix3<f64>,
    q_alg: &Matrix3<f64>,
) -> LieBelief {
    let ad = se2::adjoint(&se2::inverse(u));
    let mut cov = ad * belief.cov * ad.transpose() + q_alg;
    sym3(&mut cov);
    LieBelief {
        pose: belief.pose * u,
        cov,
    }
}

/// Measurement update for the body-frame landmark observation
/// `y = Rᵀ(p_L − p) + v`. In the body-frame error coordinates the model is
/// linear with `H = −[I₂, J ŷ]`, where `ŷ` is the predicted observation and
/// `J` the planar rotation generator.
pub fn inekf_update(
    belief: &LieBelief,
    y: &Vector2<f64>,
    r: &DMatrix<f64>,
    landmark: &Vector2<f64>,
) -> Result<LieBelief, BaselineError> {
    let y_pred2 = se2::inverse(&belief.pose)
        * Vector3::new(landmark[0], landmark[1], 1.0);
    let y_pred = Vector2::new(y_pred2[0], y_pred2[1]);
    // H e = -(e_t + e_theta * J * y_pred)
    let j_y = Vector2::new(-y_pred[1], y_pred[0]);
    let mut h = DMatrix::zeros(2, 3);
    h[(0, 0)] = -1.0;
    h[(1, 1)] = -1.0;
    h[(0, 2)] = -j_y[0];
    h[(1, 2)] = -j_y[1];

    let cov = DMatrix::from_fn(3, 3, |i, j| belief.cov[(i, j)]);
    let s = &h * &cov * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(BaselineError::SingularInnovation)?;
    let k = &cov * h.transpose() * s_inv;
    let innov = DVector::from_column_slice(&[y[0] - y_pred[0], y[1] - y_pred[1]]);
    let e = &k * innov;
    let mut cov = (DMatrix::identity(3, 3) - &k * &h) * &cov;
    symmetrize(&mut cov);

    let pose = belief.pose * se2::exp(&Vector3::new(e[0], e[1], e[2]));
    let mut cov3 = Matrix3::from_fn(|i, j| cov[(i, j)]);
    sym3(&mut cov3);
    Ok(LieBelief { pose, cov: cov3 })
}

/// One invariant-EKF step in update-then-predict order.
pub fn inekf_step(
    belief: &LieBelief,
    u: &Matrix3<f64>,
    y: &Vector2<f64>,
    q_alg: &Matrix3<f64>,
    r: &DMatrix<f64>,
    landmark: &Vector2<f64>,
) -> Result<LieBelief, BaselineError> {
    let posterior = inekf_update(belief, y, r, landmark)?;
    Ok(inekf_propagate(&posterior, u, q_alg))
}

// ---------------------------------------------------------------------------
// SE(2) models in heading coordinates for the EKF/UKF
// ---------------------------------------------------------------------------

/// `(x, y, theta)` coordinates of a pose.
pub fn heading_state(pose: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[pose[(0, 2)], pose[(1, 2)], se2::heading(pose)])
}

/// Pose composition `X ∘ U` expressed on `(x, y, theta)` states.
pub fn se2_dynamics(state: &DVector<f64>, u: &Matrix3<f64>) -> DVector<f64> {
    let x = se2::pose(state[0], state[1], state[2]);
    let next = x * u;
    DVector::from_column_slice(&[
        next[(0, 2)],
        next[(1, 2)],
        se2::wrap_angle(state[2] + se2::heading(u)),
    ])
}

/// Jacobian of [`se2_dynamics`] with respect to the state.
pub fn se2_dynamics_jacobian(state: &DVector<f64>, u: &Matrix3<f64>) -> DMatrix<f64> {
    let (s, c) = state[2].sin_cos();
    let t = se2::position(u);
    // d(p + R(theta) t)/dtheta = dR/dtheta * t
    let dx = -s * t[0] - c * t[1];
    let dy = c * t[0] - s * t[1];
    DMatrix::from_row_slice(3, 3, &[1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0])
}

/// Process covariance on `(x, y, theta)` for Lie-algebra noise entering as
/// `X_{k+1} = X_k U exp(w)`: the translational part of `w` acts in the body
/// frame of the propagated pose, so it is rotated into world coordinates.
pub fn se2_process_cov(theta_next: f64, q_alg: &Matrix3<f64>) -> DMatrix<f64> {
    let r = se2::rot(theta_next);
    let mut jac = Matrix3::identity();
    jac.fixed_view_mut::<2, 2>(0, 0).copy_from(&r);
    let q = jac * q_alg * jac.transpose();
    DMatrix::from_fn(3, 3, |i, j| q[(i, j)])
}

/// Body-frame landmark observation `Rᵀ(p_L − p)` on `(x, y, theta)` states.
pub fn se2_measurement(state: &DVector<f64>, landmark: &Vector2<f64>) -> DVector<f64> {
    let r = se2::rot(state[2]);
    let d = landmark - Vector2::new(state[0], state[1]);
    let y = r.transpose() * d;
    DVector::from_column_slice(&[y[0], y[1]])
}

/// Jacobian of [`se2_measurement`] with respect to the state.
pub fn se2_measurement_jacobian(state: &DVector<f64>, landmark: &Vector2<f64>) -> DMatrix<f64> {
    let (s, c) = state[2].sin_cos();
    let d = landmark - Vector2::new(state[0], state[1]);
    // dRᵀ/dtheta = Rᵀ J with J = [[0, 1], [-1, 0]]
    let dth = (
        -s * d[0] + c * d[1],
        -c * d[0] - s * d[1],
    );
    DMatrix::from_row_slice(2, 3, &[-c, -s, dth.0, s, -c, dth.1])
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), BaselineError> {
    if expected != got {
        return Err(BaselineError::Dim {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn scalar_update_matches_the_closed_form() {
        let prior = GaussianBelief::new(DVector::zeros(1), DMatrix::identity(1, 1));
        let h = DMatrix::identity(1, 1);
        let r = DMatrix::identity(1, 1);
        let y = DVector::from_column_slice(&[1.0]);
        let post = kf_update_covariance(&prior, &h, &y, &r).unwrap();
        assert_relative_eq!(post.mean[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-14);

        // full step with trivial dynamics and Q = 0 leaves the posterior
        let stepped = kf_step(
            &prior,
            &DMatrix::identity(1, 1),
            None,
            &DVector::zeros(0),
            &DMatrix::zeros(1, 1),
            &h,
            &y,
            &r,
        )
        .unwrap();
        assert_relative_eq!(stepped.mean[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(stepped.cov[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn huge_measurement_noise_keeps_the_prior() {
        let prior = GaussianBelief::new(
            DVector::from_column_slice(&[0.3, -0.8]),
            DMatrix::identity(2, 2) * 2.0,
        );
        let post = kf_update_covariance(
            &prior,
            &DMatrix::identity(2, 2),
            &DVector::from_column_slice(&[100.0, -50.0]),
            &(DMatrix::identity(2, 2) * 1e14),
        )
        .unwrap();
        assert_abs_diff_eq!(post.mean[0], 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(post.mean[1], -0.8, epsilon = 1e-9);
        assert_abs_diff_eq!(post.cov[(0, 0)], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn information_and_covariance_updates_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 3;
            let prior = GaussianBelief::new(
                DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
                random_spd(n, &mut rng),
            );
            let h = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
            let r = random_spd(2, &mut rng);
            let y = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let a = kf_update_covariance(&prior, &h, &y, &r).unwrap();
            let b = kf_update_information(&prior, &h, &y, &r).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(a.mean[i], b.mean[i], epsilon = 1e-9);
                for j in 0..n {
                    assert_abs_diff_eq!(a.cov[(i, j)], b.cov[(i, j)], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn singular_innovation_is_reported() {
        let prior = GaussianBelief::new(DVector::zeros(1), DMatrix::zeros(1, 1));
        let err = kf_update_covariance(
            &prior,
            &DMatrix::identity(1, 1),
            &DVector::zeros(1),
            &DMatrix::zeros(1, 1),
        );
        assert!(matches!(err, Err(BaselineError::SingularInnovation)));
    }

    #[test]
    fn ekf_reduces_to_the_kalman_filter_on_a_linear_system() {
        let f_mat = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.8]);
        let h_mat = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]);
        let q = DMatrix::identity(2, 2) * 0.1;
        let r = DMatrix::identity(2, 2) * 0.5;
        let prior = GaussianBelief::new(
            DVector::from_column_slice(&[0.4, -0.6]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]),
        );
        let y = DVector::from_column_slice(&[0.7, -0.1]);

        let kf = kf_step(&prior, &f_mat, None, &DVector::zeros(0), &q, &h_mat, &y, &r).unwrap();
        let f_cl = f_mat.clone();
        let h_cl = h_mat.clone();
        let fj = f_mat.clone();
        let hj = h_mat.clone();
        let ekf = ekf_step(
            &prior,
            move |x| &f_cl * x,
            move |_| fj.clone(),
            move |x| &h_cl * x,
            move |_| hj.clone(),
            &y,
            &q,
            &r,
        )
        .unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(kf.mean[i], ekf.mean[i], epsilon = 1e-12);
            for j in 0..2 {
                assert_abs_diff_eq!(kf.cov[(i, j)], ekf.cov[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn se2_jacobians_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = se2::pose(0.5, -0.2, 0.3);
        let landmark = Vector2::new(2.0, -1.5);
        let h = 1e-6;
        for _ in 0..20 {
            let state = DVector::from_column_slice(&[
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
            ]);
            let fj = se2_dynamics_jacobian(&state, &u);
            let hj = se2_measurement_jacobian(&state, &landmark);
            for col in 0..3 {
                let mut hi = state.clone();
                let mut lo = state.clone();
                hi[col] += h;
                lo[col] -= h;
                let df = (se2_dynamics(&hi, &u) - se2_dynamics(&lo, &u)) / (2.0 * h);
                let dh =
                    (se2_measurement(&hi, &landmark) - se2_measurement(&lo, &landmark)) / (2.0 * h);
                for row in 0..3 {
                    assert_abs_diff_eq!(fj[(row, col)], df[row], epsilon = 1e-6);
                }
                for row in 0..2 {
                    assert_abs_diff_eq!(hj[(row, col)], dh[row], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn ukf_matches_the_kalman_filter_on_a_linear_gaussian_system() {
        let f_mat = DMatrix::from_row_slice(2, 2, &[0.95, 0.1, 0.0, 0.9]);
        let h_mat = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let q = DMatrix::identity(2, 2) * 0.2;
        let r = DMatrix::identity(1, 1) * 0.7;
        let mut kf = GaussianBelief::new(
            DVector::from_column_slice(&[0.2, -0.4]),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]),
        );
        let mut ukf = kf.clone();
        let params = UkfParams::default();
        for k in 0..10 {
            let y = DVector::from_column_slice(&[(k as f64 * 0.7).sin()]);
            kf = kf_step(&kf, &f_mat, None, &DVector::zeros(0), &q, &h_mat, &y, &r).unwrap();
            let f_cl = f_mat.clone();
            let h_cl = h_mat.clone();
            ukf = ukf_step(
                &ukf,
                move |x| &f_cl * x,
                move |x| &h_cl * x,
                &y,
                &q,
                &r,
                &params,
            )
            .unwrap();
            for i in 0..2 {
                assert_abs_diff_eq!(kf.mean[i], ukf.mean[i], epsilon = 1e-8);
                for j in 0..2 {
                    assert_abs_diff_eq!(kf.cov[(i, j)], ukf.cov[(i, j)], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn three_state_belief_gets_seven_sigma_points() {
        let belief = GaussianBelief::new(DVector::zeros(3), DMatrix::identity(3, 3));
        let (pts, wm, wc) = sigma_points(&belief, &UkfParams::default()).unwrap();
        assert_eq!(pts.len(), 7);
        assert_eq!(wm.len(), 7);
        assert_eq!(wc.len(), 7);
        assert_abs_diff_eq!(wm.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unscented_transform_is_exact_on_a_quadratic() {
        // for y = x^2, E[y] = mu^2 + sigma^2 exactly
        let mu = 0.7;
        let var = 0.3;
        let belief = GaussianBelief::new(
            DVector::from_column_slice(&[mu]),
            DMatrix::from_row_slice(1, 1, &[var]),
        );
        let (mean, _, _) = unscented_transform(&belief, &UkfParams::default(), |x| {
            DVector::from_column_slice(&[x[0] * x[0]])
        })
        .unwrap();
        assert_relative_eq!(mean[0], mu * mu + var, epsilon = 1e-9);
    }

    #[test]
    fn sigma_points_recover_jitter_on_a_semidefinite_covariance() {
        let mut cov = DMatrix::identity(2, 2);
        cov[(1, 1)] = 0.0; // rank deficient
        let belief = GaussianBelief::new(DVector::zeros(2), cov);
        let out = sigma_points(&belief, &UkfParams::default());
        assert!(out.is_ok());
    }

    #[test]
    fn inekf_with_exact_data_tracks_the_ground_truth() {
        let u = se2::pose(0.5, 0.0, 0.2);
        let landmark = Vector2::new(3.0, 1.0);
        let q = Matrix3::identity() * 0.01;
        let r = DMatrix::identity(2, 2) * 0.01;
        let mut truth = se2::pose(0.0, 0.0, 0.0);
        let mut belief = LieBelief {
            pose: truth,
            cov: Matrix3::identity() * 0.1,
        };
        for _ in 0..25 {
            let d = se2::inverse(&truth) * Vector3::new(landmark[0], landmark[1], 1.0);
            let y = Vector2::new(d[0], d[1]);
            belief = inekf_step(&belief, &u, &y, &q, &r, &landmark).unwrap();
            truth *= u;
            assert_relative_eq!(belief.pose, truth, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_process_noise_transports_covariance_by_the_adjoint() {
        let u = se2::pose(0.4, -0.1, 0.6);
        let cov = Matrix3::new(0.5, 0.1, 0.0, 0.1, 0.7, 0.2, 0.0, 0.2, 0.3);
        let belief = LieBelief {
            pose: se2::pose(1.0, 2.0, 0.5),
            cov,
        };
        let next = inekf_propagate(&belief, &u, &Matrix3::zeros());
        let ad = se2::adjoint(&se2::inverse(&u));
        let expected = ad * cov * ad.transpose();
        assert_relative_eq!(next.cov, expected, epsilon = 1e-13);
        assert_relative_eq!(next.pose, belief.pose * u, epsilon = 1e-13);
    }

    #[test]
    fn inekf_update_reduces_uncertainty_and_stays_spd() {
        let landmark = Vector2::new(1.0, 1.0);
        let belief = LieBelief {
            pose: se2::pose(0.2, -0.3, 0.4),
            cov: Matrix3::identity() * 0.5,
        };
        let d = se2::inverse(&belief.pose) * Vector3::new(landmark[0], landmark[1], 1.0);
        let y = Vector2::new(d[0] + 0.05, d[1] - 0.02);
        let post = inekf_update(&belief, &y, &DMatrix::identity(2, 2), &landmark).unwrap();
        assert!(post.cov.cholesky().is_some());
        assert!(post.cov.trace() <= belief.cov.trace() + 1e-12);
        let r = post.pose.fixed_view::<2, 2>(0, 0);
        assert_relative_eq!(
            (r.transpose() * r).into_owned(),
            nalgebra::Matrix2::identity(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn heading_state_roundtrips_the_pose() {
        let p = se2::pose(1.2, -0.7, 2.3);
        let s = heading_state(&p);
        assert_relative_eq!(s[0], 1.2);
        assert_relative_eq!(s[1], -0.7);
        assert_relative_eq!(s[2], 2.3, epsilon = 1e-14);
    }
}
