//! Nearest rank-deficient Hankel approximation for detection under noise.
//!
//! A noisy difference Hankel matrix never loses rank exactly. Once its
//! smallest singular value drops below an acceptance threshold, the matrix
//! is replaced by the closest rank-deficient Hankel matrix: a unit-norm
//! Hankel direction `D` with `D v = v` is built from the smallest singular
//! vector `v`, and subtracting `σ·D` (signed by the matching eigenvalue)
//! zeroes out that direction while moving the matrix by exactly `σ` in
//! spectral norm. The consensus value then follows from the usual
//! final-value formula with `v` as the kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mintime::{final_value, hankel_of_differences, normalize_kernel, smallest_singular_pair};

/// Circulant matrix of size `2m − 1` whose rows are successive circular
/// right-shifts of `[v; 0]`.
pub fn build_cx(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = v.nrows();
    if m == 0 || v.amax() == 0.0 {
        return Err(Error::ZeroVector);
    }
    let n = 2 * m - 1;
    Ok(DMatrix::from_fn(n, n, |i, t| {
        let idx = (t + n - i) % n;
        if idx < m {
            v[idx]
        } else {
            0.0
        }
    }))
}

/// Unit-spectral-norm Hankel direction fixing `v`: solves
/// `hvec(D) = C_v⁺ C_vᵀ e₁` and reshapes the antidiagonal vector into a
/// square Hankel matrix.
pub fn hankel_direction(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let c_x = build_cx(v)?;
    let rhs = c_x.transpose().column(0).into_owned();
    let pinv = c_x
        .clone()
        .pseudo_inverse(1e-13 * c_x.amax().max(1.0))
        .map_err(|_| Error::NumericalFailure {
            context: "pseudoinverse of the circulant failed",
        })?;
    let hvec = pinv * rhs;
    hankel_of_differences(hvec.as_slice())
}

/// A rank-deficient Hankel approximation of a noisy Hankel matrix.
#[derive(Debug, Clone)]
pub struct RobustApproximation {
    /// The approximating rank-deficient Hankel matrix.
    pub gamma_hat: DMatrix<f64>,
    /// Hankel perturbation direction with `d_mat · v_min = v_min` and unit
    /// spectral norm.
    pub d_mat: DMatrix<f64>,
    /// Smallest singular value of the input.
    pub sigma_min: f64,
    /// Corresponding right singular vector.
    pub v_min: DVector<f64>,
    /// Acceptance threshold the input passed.
    pub rho: f64,
}

/// Outcome of one acceptance attempt.
#[derive(Debug, Clone)]
pub enum RobustOutcome {
    /// Smallest singular value still above `rho`; grow the matrix and retry.
    NotYetAcceptable { sigma_min: f64 },
    Accepted(Box<RobustApproximation>),
}

/// Attempts the rank-deficient approximation of a square Hankel matrix.
///
/// Below the threshold, builds the perturbation direction and verifies its
/// contract (`D` Hankel by construction, `D v = v`, `‖D‖₂ ≤ 1`, and the
/// perturbed matrix annihilates `v`); any violation beyond tolerance is an
/// error rather than a silent bad approximation.
pub fn nearest_defective_hankel(gamma: &DMatrix<f64>, rho: f64) -> Result<RobustOutcome> {
    let (sigma_min, v_min, _sigma_max) =
        smallest_singular_pair(gamma).ok_or(Error::NumericalFailure {
            context: "singular value decomposition failed",
        })?;
    if sigma_min > rho {
        return Ok(RobustOutcome::NotYetAcceptable { sigma_min });
    }
    let d_mat = hankel_direction(&v_min)?;

    // A Hankel matrix is symmetric, so v is an eigenvector and the signed
    // eigenvalue (not the singular value) is what must be subtracted for
    // the perturbed matrix to annihilate v.
    let lambda = (v_min.transpose() * gamma * &v_min)[(0, 0)];
    let gamma_hat = gamma - &d_mat * lambda;

    let fix_residual = (&d_mat * &v_min - &v_min).amax();
    if fix_residual > 1e-8 {
        return Err(Error::PropertyViolation {
            context: format!("direction does not fix the kernel vector (residual {fix_residual:e})"),
        });
    }
    let d_norm = spectral_norm(&d_mat);
    if d_norm > 1.0 + 1e-8 {
        return Err(Error::PropertyViolation {
            context: format!("direction spectral norm {d_norm} exceeds one"),
        });
    }
    let annihilation = (&gamma_hat * &v_min).amax();
    let scale = spectral_norm(&gamma_hat).max(1.0);
    if annihilation > 1e-8 * scale {
        return Err(Error::PropertyViolation {
            context: format!("perturbed matrix does not annihilate the kernel (residual {annihilation:e})"),
        });
    }
    Ok(RobustOutcome::Accepted(Box::new(RobustApproximation {
        gamma_hat,
        d_mat,
        sigma_min,
        v_min,
        rho,
    })))
}

/// Consensus value from the original observed history and the accepted
/// approximation's kernel.
pub fn robust_final_value(history: &[f64], approx: &RobustApproximation) -> Result<f64> {
    let beta = normalize_kernel(&approx.v_min)?;
    final_value(history, &beta)
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Rank-loss detector tolerant of observation noise.
///
/// Mirrors the exact detector's growth schedule but accepts via
/// [`nearest_defective_hankel`] with a size-dependent threshold
/// `ρ(k) = ρ_base · √(k+1)` and computes the limit from the accepted
/// approximation.
#[derive(Debug, Clone)]
pub struct RobustDetector {
    history: Vec<f64>,
    diffs: Vec<f64>,
    rho_base: f64,
    status: crate::mintime::DetectorStatus,
}

impl RobustDetector {
    /// `rho_base` is the size-1 acceptance threshold; scenarios derive it
    /// from the expected per-entry noise level (ten times the standard
    /// deviation of a difference of two noisy samples is a workable
    /// default).
    pub fn new(rho_base: f64) -> Self {
        RobustDetector {
            history: Vec::new(),
            diffs: Vec::new(),
            rho_base,
            status: crate::mintime::DetectorStatus::Collecting,
        }
    }

    /// Default base threshold for a given observation-noise standard
    /// deviation.
    pub fn rho_base_for_noise(noise_std: f64) -> f64 {
        10.0 * std::f64::consts::SQRT_2 * noise_std
    }

    pub fn status(&self) -> &crate::mintime::DetectorStatus {
        &self.status
    }

    pub fn observation_count(&self) -> usize {
        self.history.len()
    }

    pub fn push_observation(&mut self, y: f64) -> Result<&crate::mintime::DetectorStatus> {
        if self.status.is_detected() {
            return Ok(&self.status);
        }
        if let Some(&last) = self.history.last() {
            self.diffs.push(y - last);
        }
        self.history.push(y);
        if self.diffs.is_empty() || self.diffs.len() % 2 == 0 {
            return Ok(&self.status);
        }
        let gamma = hankel_of_differences(&self.diffs)?;
        let rho = self.rho_base * (gamma.nrows() as f64).sqrt();
        match nearest_defective_hankel(&gamma, rho)? {
            RobustOutcome::NotYetAcceptable { .. } => {}
            RobustOutcome::Accepted(approx) => {
                let phi = robust_final_value(&self.history, &approx)?;
                let beta = normalize_kernel(&approx.v_min)?;
                self.status = crate::mintime::DetectorStatus::Detected {
                    beta,
                    phi,
                    detected_at: self.history.len() - 1,
                };
            }
        }
        Ok(&self.status)
    }
}
