//! Planar rigid-body transforms and their Lie-group operations.
//!
//! Poses are homogeneous 3x3 matrices `[[R, p], [0, 1]]`. Twists are ordered
//! `(v1, v2, omega)` — translation first, rotation last. The lifted filters
//! work with the polynomial-friendly vectorization `(x, y, c, s)` where
//! `(c, s)` is the first column of the rotation block, subject to the circle
//! constraint `c^2 + s^2 = 1`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

/// Rotation matrix for a heading angle.
pub fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Homogeneous pose from position and heading.
pub fn pose(x: f64, y: f64, theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, x, s, c, y, 0.0, 0.0, 1.0)
}

/// Heading angle recovered from the rotation block, in `(-pi, pi]`.
pub fn heading(m: &Matrix3<f64>) -> f64 {
    m[(1, 0)].atan2(m[(0, 0)])
}

/// Position block of a pose.
pub fn position(m: &Matrix3<f64>) -> Vector2<f64> {
    Vector2::new(m[(0, 2)], m[(1, 2)])
}

/// The `(x, y, c, s)` state vector of a pose.
pub fn vectorize(m: &Matrix3<f64>) -> [f64; 4] {
    [m[(0, 2)], m[(1, 2)], m[(0, 0)], m[(1, 0)]]
}

/// Pose from an `(x, y, c, s)` state vector. The rotation block is built
/// from `(c, s)` as given; callers own any renormalization policy.
pub fn from_vector(v: &[f64]) -> Matrix3<f64> {
    Matrix3::new(v[2], -v[3], v[0], v[3], v[2], v[1], 0.0, 0.0, 1.0)
}

/// Inverse pose `[[R^T, -R^T p], [0, 1]]`.
pub fn inverse(m: &Matrix3<f64>) -> Matrix3<f64> {
    let r = m.fixed_view::<2, 2>(0, 0);
    let p = position(m);
    let rt = r.transpose();
    let np = -rt * p;
    Matrix3::new(
        rt[(0, 0)],
        rt[(0, 1)],
        np[0],
        rt[(1, 0)],
        rt[(1, 1)],
        np[1],
        0.0,
        0.0,
        1.0,
    )
}

/// Exponential map from a twist `(v1, v2, omega)`.
pub fn exp(xi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = xi[2];
    let (a, b) = sinc_pair(theta);
    let (s, c) = theta.sin_cos();
    let px = a * xi[0] - b * xi[1];
    let py = b * xi[0] + a * xi[1];
    Matrix3::new(c, -s, px, s, c, py, 0.0, 0.0, 1.0)
}

/// Logarithm map; the rotation component lands in `(-pi, pi]`.
pub fn log(m: &Matrix3<f64>) -> Vector3<f64> {
    let theta = heading(m);
    let (a, b) = sinc_pair(theta);
    let det = a * a + b * b;
    let p = position(m);
    // invert V = [[a, -b], [b, a]]
    let v1 = (a * p[0] + b * p[1]) / det;
    let v2 = (-b * p[0] + a * p[1]) / det;
    Vector3::new(v1, v2, theta)
}

/// `sin(theta)/theta` and `(1 - cos(theta))/theta` with series fallbacks
/// near zero.
fn sinc_pair(theta: f64) -> (f64, f64) {
    if theta.abs() < 1e-5 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - t2 * theta / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta)
    }
}

/// Adjoint matrix satisfying `X exp(xi) X^{-1} = exp(adjoint(X) xi)`.
pub fn adjoint(m: &Matrix3<f64>) -> Matrix3<f64> {
    let p = position(m);
    Matrix3::new(
        m[(0, 0)],
        m[(0, 1)],
        p[1],
        m[(1, 0)],
        m[(1, 1)],
        -p[0],
        0.0,
        0.0,
        1.0,
    )
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * std::f64::consts::PI);
    if w > std::f64::consts::PI {
        w - 2.0 * std::f64::consts::PI
    } else {
        w
    }
}
