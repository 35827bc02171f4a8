//! Extended-noise statistics: the mean and covariance of the lifted noise
//! vector `phi_r(w)`.
//!
//! Estimation over a lifted state needs the moments of the lifted noise, not
//! just its covariance. This module computes `E[phi_r(w)]` and
//! `Q_r = Cov[phi_r(w)]` analytically for zero-mean Gaussians (Isserlis
//! pairings, orders up to `r = 3`) and by seeded sampling for everything
//! else, including the built-in binary, trigonometric, and multiplicative
//! SE(2) models used by the simulation studies.

use crate::poly::{basis_size, enumerate_basis, phi_eval, Exponent, PolyError};
use crate::se2;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;
use thiserror::Error;

/// Condition number above which a sampled covariance is flagged
/// non-invertible.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Default sampling budget when no explicit count is given.
pub const DEFAULT_SAMPLES: u64 = 1_000_000;

/// Minimum admissible sampling budget.
pub const MIN_SAMPLES: u64 = 10_000;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("sample budget {got} is below the minimum {min}")]
    TooFewSamples { got: u64, min: u64 },
    #[error("covariance must be square and of the model dimension: got {rows}x{cols} for dim {dim}")]
    CovarianceShape { rows: usize, cols: usize, dim: usize },
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("covariance is not invertible even after jitter escalation (condition {condition:.3e})")]
    NotInvertible { condition: f64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

type DrawFn = Arc<dyn Fn(&mut ChaCha8Rng) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Gaussian { sqrt_cov: DMatrix<f64>, cov: DMatrix<f64> },
    Binary { scale: f64, sqrt_jitter: DMatrix<f64> },
    Trig { scale: f64, sqrt_jitter: DMatrix<f64> },
    Se2Multiplicative { sqrt_alg: DMatrix<f64> },
    Sampler { draw: DrawFn },
}

/// A noise distribution the estimator stack can draw from and take lifted
/// moments of.
#[derive(Clone)]
pub struct NoiseModel {
    pub dim: usize,
    pub seed: u64,
    kind: Kind,
}

impl std::fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            Kind::Gaussian { .. } => "gaussian",
            Kind::Binary { .. } => "binary",
            Kind::Trig { .. } => "trig",
            Kind::Se2Multiplicative { .. } => "se2-multiplicative",
            Kind::Sampler { .. } => "sampler",
        };
        f.debug_struct("NoiseModel")
            .field("dim", &self.dim)
            .field("seed", &self.seed)
            .field("kind", &kind)
            .finish()
    }
}

impl NoiseModel {
    /// Zero-mean Gaussian with the given covariance (PSD; a symmetric
    /// square root handles semidefinite inputs).
    pub fn gaussian(cov: DMatrix<f64>, seed: u64) -> Result<Self, NoiseError> {
        let dim = cov.nrows();
        check_shape(&cov, dim)?;
        Ok(NoiseModel {
            dim,
            seed,
            kind: Kind::Gaussian {
                sqrt_cov: psd_sqrt(&cov),
                cov,
            },
        })
    }

    /// Four-mode planar noise `s * [q1 - 1/2; q2 - 1/2] + eps` with
    /// `q_i ~ Bernoulli(1/2)` and Gaussian jitter `eps`.
    pub fn binary(scale: f64, jitter: DMatrix<f64>, seed: u64) -> Result<Self, NoiseError> {
        if !(scale > 0.0) {
            return Err(NoiseError::NonPositiveScale(scale));
        }
        check_shape(&jitter, 2)?;
        Ok(NoiseModel {
            dim: 2,
            seed,
            kind: Kind::Binary {
                scale,
                sqrt_jitter: psd_sqrt(&jitter),
            },
        })
    }

    /// Multi-modal planar noise `s * [cos(q pi); sin(q)] + eps` with
    /// `q ~ Uniform(-pi, pi)` and Gaussian jitter `eps`.
    pub fn trig(scale: f64, jitter: DMatrix<f64>, seed: u64) -> Result<Self, NoiseError> {
        if !(scale > 0.0) {
            return Err(NoiseError::NonPositiveScale(scale));
        }
        check_shape(&jitter, 2)?;
        Ok(NoiseModel {
            dim: 2,
            seed,
            kind: Kind::Trig {
                scale,
                sqrt_jitter: psd_sqrt(&jitter),
            },
        })
    }

    /// Multiplicative SE(2) noise: `W = Exp(xi)` with `xi ~ N(0, alg_cov)`
    /// in the Lie algebra, reported as the residual entries
    /// `(W_13, W_23, W_11 - 1, W_21)` matching the `(x, y, c, s)` state
    /// layout.
    pub fn se2_multiplicative(alg_cov: DMatrix<f64>, seed: u64) -> Result<Self, NoiseError> {
        check_shape(&alg_cov, 3)?;
        Ok(NoiseModel {
            dim: 4,
            seed,
            kind: Kind::Se2Multiplicative {
                sqrt_alg: psd_sqrt(&alg_cov),
            },
        })
    }

    /// User-supplied seeded generator.
    pub fn from_sampler<F>(dim: usize, seed: u64, draw: F) -> Self
    where
        F: Fn(&mut ChaCha8Rng) -> DVector<f64> + Send + Sync + 'static,
    {
        NoiseModel {
            dim,
            seed,
            kind: Kind::Sampler {
                draw: Arc::new(draw),
            },
        }
    }

    /// One draw from the model.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match &self.kind {
            Kind::Gaussian { sqrt_cov, .. } => sqrt_cov * standard_normal(self.dim, rng),
            Kind::Binary { scale, sqrt_jitter } => {
                let q1 = if rng.gen_bool(0.5) { 0.5 } else { -0.5 };
                let q2 = if rng.gen_bool(0.5) { 0.5 } else { -0.5 };
                DVector::from_column_slice(&[scale * q1, scale * q2])
                    + sqrt_jitter * standard_normal(2, rng)
            }
            Kind::Trig { scale, sqrt_jitter } => {
                let q = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                DVector::from_column_slice(&[
                    scale * (q * std::f64::consts::PI).cos(),
                    scale * q.sin(),
                ]) + sqrt_jitter * standard_normal(2, rng)
            }
            Kind::Se2Multiplicative { sqrt_alg } => {
                let xi = sqrt_alg * standard_normal(3, rng);
                let w = se2::exp(&Vector3::new(xi[0], xi[1], xi[2]));
                DVector::from_column_slice(&[
                    w[(0, 2)],
                    w[(1, 2)],
                    w[(0, 0)] - 1.0,
                    w[(1, 0)],
                ])
            }
            Kind::Sampler { draw } => draw(rng),
        }
    }

    /// Lifted moments of this model at order `r`: analytic for Gaussians
    /// with `r <= 3`, sampled otherwise with the default budget and the
    /// model's own seed.
    pub fn moments(&self, r: u32) -> Result<NoiseMoments, NoiseError> {
        match &self.kind {
            Kind::Gaussian { cov, .. } if r <= 3 => gaussian_moments(cov, r),
            _ => sample_moments(self, r, DEFAULT_SAMPLES, self.seed),
        }
    }
}

fn check_shape(cov: &DMatrix<f64>, dim: usize) -> Result<(), NoiseError> {
    if cov.nrows() != dim || cov.ncols() != dim {
        return Err(NoiseError::CovarianceShape {
            rows: cov.nrows(),
            cols: cov.ncols(),
            dim,
        });
    }
    Ok(())
}

fn standard_normal(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Symmetric PSD square root via the eigendecomposition, clamping tiny
/// negative eigenvalues to zero so semidefinite inputs (including zero
/// jitter) are accepted.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Moments of the lifted noise vector: `mean_phi = E[phi_r(w)]` and
/// `cov = Cov[phi_r(w)]`, with PSD-projection and conditioning bookkeeping.
#[derive(Debug, Clone)]
pub struct NoiseMoments {
    pub r: u32,
    pub dim: usize,
    /// `E[phi_r(w)]`, length `s(r, dim) - 1`.
    pub mean_phi: DVector<f64>,
    /// `Q_r = Cov[phi_r(w)]`, symmetric PSD.
    pub cov: DMatrix<f64>,
    /// Draws used; `None` when the moments are analytic.
    pub sample_count: Option<u64>,
    /// Magnitude of the eigenvalue clipping applied to restore PSD-ness.
    pub psd_projection: f64,
    /// Condition number of `cov` after projection (`inf` when singular).
    pub condition: f64,
    /// Whether `cov` is safely invertible (`condition <= 1e12`).
    pub invertible: bool,
}

impl NoiseMoments {
    /// Inverse of `cov` by Cholesky, escalating a diagonal jitter of
    /// `1e-12 * trace/dim` up to three times for marginally singular
    /// matrices. Covariances already flagged non-invertible are refused.
    pub fn inverse(&self) -> Result<DMatrix<f64>, NoiseError> {
        if !self.invertible {
            return Err(NoiseError::NotInvertible {
                condition: self.condition,
            });
        }
        invert_spd(&self.cov).ok_or(NoiseError::NotInvertible {
            condition: self.condition,
        })
    }
}

/// Cholesky inverse with up to three jitter escalations; `None` when the
/// matrix stays numerically singular.
pub(crate) fn invert_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let tau = 1e-12 * m.trace().abs().max(1e-300) / n as f64;
    let mut shifted = m.clone();
    let mut added = 0.0;
    for attempt in 0..4 {
        if attempt > 0 {
            let add = tau * 10f64.powi(attempt - 1);
            for i in 0..n {
                shifted[(i, i)] += add - added;
            }
            added = add;
        }
        if let Some(ch) = shifted.clone().cholesky() {
            return Some(ch.inverse());
        }
    }
    None
}

/// Exact lifted moments of a zero-mean Gaussian via Isserlis pairings
/// (monomial moments up to degree `2r`, so `r <= 3`); larger orders fall
/// back to sampling with the default budget.
pub fn gaussian_moments(cov: &DMatrix<f64>, r: u32) -> Result<NoiseMoments, NoiseError> {
    let dim = cov.nrows();
    check_shape(cov, dim)?;
    if r > 3 {
        let model = NoiseModel::gaussian(cov.clone(), 0)?;
        return sample_moments(&model, r, DEFAULT_SAMPLES, 0);
    }
    let basis = enumerate_basis(r, dim);
    let lifted: Vec<&Exponent> = basis.iter().skip(1).collect();
    let p = lifted.len();
    let mean_phi =
        DVector::from_iterator(p, lifted.iter().map(|a| isserlis_moment(cov, a)));
    let mut q = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let joint = isserlis_moment(cov, &lifted[i].add(lifted[j]));
            let v = joint - mean_phi[i] * mean_phi[j];
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    Ok(finish_moments(r, dim, mean_phi, q, None))
}

/// Zero-mean Gaussian moment `E[w^alpha]` as a sum over perfect pairings.
fn isserlis_moment(cov: &DMatrix<f64>, alpha: &Exponent) -> f64 {
    let mut idx = Vec::with_capacity(alpha.degree() as usize);
    for (i, &p) in alpha.0.iter().enumerate() {
        for _ in 0..p {
            idx.push(i);
        }
    }
    if idx.len() % 2 == 1 {
        return 0.0;
    }
    pairing_sum(&idx, cov)
}

fn pairing_sum(idx: &[usize], cov: &DMatrix<f64>) -> f64 {
    if idx.is_empty() {
        return 1.0;
    }
    let mut total = 0.0;
    let rest: Vec<usize> = idx[1..].to_vec();
    for k in 0..rest.len() {
        let mut remaining = rest.clone();
        let partner = remaining.remove(k);
        total += cov[(idx[0], partner)] * pairing_sum(&remaining, cov);
    }
    total
}

/// Empirical lifted moments from `n_samples` seeded draws; deterministic
/// per `(model construction, seed)`.
pub fn sample_moments(
    model: &NoiseModel,
    r: u32,
    n_samples: u64,
    seed: u64,
) -> Result<NoiseMoments, NoiseError> {
    if n_samples < MIN_SAMPLES {
        return Err(NoiseError::TooFewSamples {
            got: n_samples,
            min: MIN_SAMPLES,
        });
    }
    let p = basis_size(r, model.dim)? - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = DVector::<f64>::zeros(p);
    let mut raw = DMatrix::<f64>::zeros(p, p);
    let mut buf = vec![0.0f64; model.dim];
    for _ in 0..n_samples {
        let w = model.draw(&mut rng);
        buf.copy_from_slice(w.as_slice());
        let phi = phi_eval(r, &buf);
        mean += &phi;
        raw.syger(1.0, &phi, &phi, 1.0);
    }
    // syger only writes the lower triangle; mirror before mixing with the
    // full outer product of the mean.
    for i in 0..p {
        for j in i + 1..p {
            raw[(i, j)] = raw[(j, i)];
        }
    }
    let n = n_samples as f64;
    mean /= n;
    raw /= n;
    let q = raw - &mean * mean.transpose();
    Ok(finish_moments(r, model.dim, mean, q, Some(n_samples)))
}

/// Symmetrize, project to PSD, and fill in the conditioning fields.
fn finish_moments(
    r: u32,
    dim: usize,
    mean_phi: DVector<f64>,
    q: DMatrix<f64>,
    sample_count: Option<u64>,
) -> NoiseMoments {
    let sym = (&q + q.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clipped = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max((-l).max(0.0)));
    let floored = eig.eigenvalues.map(|l| l.max(0.0));
    let cov =
        &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    let lmax = floored.iter().cloned().fold(0.0f64, f64::max);
    let lmin = floored.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if lmin > 0.0 {
        lmax / lmin
    } else if lmax == 0.0 {
        f64::INFINITY
    } else {
        f64::INFINITY
    };
    NoiseMoments {
        r,
        dim,
        mean_phi,
        cov: (&cov + cov.transpose()) * 0.5,
        sample_count,
        psd_projection: clipped,
        condition,
        invertible: condition <= CONDITION_LIMIT,
    }
}
