//! Process dynamics, per-node sensing models and the information terms fed
//! to the consensus filters.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Discrete-time process `x(k+1) = A x(k) + B w(k)` with `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q_cov: DMatrix<f64>,
    noise_sqrt: DMatrix<f64>,
}

/// Per-node sensing `z = H x + v` with `v ~ N(0, R)`, `R` positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    h: DMatrix<f64>,
    r_cov: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    noise_sqrt: DMatrix<f64>,
}

/// Continuous-time drift `ẋ = F x + G w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q_cov: DMatrix<f64>,
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Small negative eigenvalues (within `-1e-9` of the matrix scale) are
/// clamped to zero; anything below that fails.
fn psd_sqrt(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-9 * scale {
            return Err(Error::SingularCovariance { context });
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidScenario(format!("{what} must be square")));
    }
    let skew = (m - m.transpose()).amax();
    if skew > 1e-9 * m.amax().max(1.0) {
        return Err(Error::InvalidScenario(format!("{what} is not symmetric")));
    }
    Ok(())
}

impl ProcessModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q_cov: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() || q_cov.nrows() != b.ncols() {
            return Err(Error::InvalidScenario(
                "process matrices have inconsistent dimensions".into(),
            ));
        }
        check_symmetric(&q_cov, "process noise covariance")?;
        let noise_sqrt = psd_sqrt(&q_cov, "process noise covariance")?;
        Ok(ProcessModel {
            a,
            b,
            q_cov,
            noise_sqrt,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q_cov(&self) -> &DMatrix<f64> {
        &self.q_cov
    }
}

impl SensorModel {
    /// Builds a sensor from its measurement matrix and noise covariance.
    pub fn new(h: DMatrix<f64>, r_cov: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&r_cov, "measurement noise covariance")?;
        if r_cov.nrows() != h.nrows() {
            return Err(Error::InvalidScenario(
                "measurement noise covariance does not match H".into(),
            ));
        }
        let chol = nalgebra::Cholesky::new(r_cov.clone()).ok_or(Error::SingularCovariance {
            context: "measurement noise covariance",
        })?;
        let r_inv = chol.inverse();
        Self::from_parts(h, r_cov, r_inv)
    }

    /// Builds a sensor directly from the inverse noise covariance.
    pub fn from_information(h: DMatrix<f64>, r_inv: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&r_inv, "inverse noise covariance")?;
        let chol = nalgebra::Cholesky::new(r_inv.clone()).ok_or(Error::SingularCovariance {
            context: "inverse noise covariance",
        })?;
        let r_cov = chol.inverse();
        Self::from_parts(h, r_cov, r_inv)
    }

    fn from_parts(h: DMatrix<f64>, r_cov: DMatrix<f64>, r_inv: DMatrix<f64>) -> Result<Self> {
        let residual = (&r_inv * &r_cov - DMatrix::identity(r_cov.nrows(), r_cov.ncols())).amax();
        if residual > 1e-10 * r_inv.amax().max(1.0) {
            return Err(Error::SingularCovariance {
                context: "noise covariance inverse check",
            });
        }
        let noise_sqrt = psd_sqrt(&r_cov, "measurement noise covariance")?;
        Ok(SensorModel {
            h,
            r_cov,
            r_inv,
            noise_sqrt,
        })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r_cov(&self) -> &DMatrix<f64> {
        &self.r_cov
    }

    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }
}

impl ContinuousModel {
    pub fn new(f: DMatrix<f64>, g: DMatrix<f64>, q_cov: DMatrix<f64>) -> Result<Self> {
        if !f.is_square() || g.nrows() != f.nrows() || q_cov.nrows() != g.ncols() {
            return Err(Error::InvalidScenario(
                "continuous model has inconsistent dimensions".into(),
            ));
        }
        check_symmetric(&q_cov, "white-noise intensity")?;
        Ok(ContinuousModel { f, g, q_cov })
    }
}

/// Zero-order-hold discretization via the augmented matrix exponential.
///
/// `A = exp(F·dt)` and `B = (∫₀^dt exp(Fτ) dτ)·G`, read off the top blocks
/// of `exp([[F, G], [0, 0]]·dt)`. The noise intensity carries through
/// unchanged.
pub fn discretize(cm: &ContinuousModel, dt: f64) -> Result<ProcessModel> {
    if !(dt > 0.0) {
        return Err(Error::InvalidScenario(format!(
            "sampling time must be positive, got {dt}"
        )));
    }
    let m = cm.f.nrows();
    let q = cm.g.ncols();
    let mut aug = DMatrix::zeros(m + q, m + q);
    aug.view_mut((0, 0), (m, m)).copy_from(&cm.f);
    aug.view_mut((0, m), (m, q)).copy_from(&cm.g);
    let expm = (aug * dt).exp();
    let a = expm.view((0, 0), (m, m)).into_owned();
    let b = expm.view((0, m), (m, q)).into_owned();
    ProcessModel::new(a, b, cm.q_cov.clone())
}

/// Advances the process one step: `A x + B w` with `w ~ N(0, Q)` drawn from
/// `rng`.
pub fn step_process(pm: &ProcessModel, x: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let w = gaussian_vector(&pm.noise_sqrt, rng);
    &pm.a * x + &pm.b * w
}

/// Produces one measurement: `H x + v` with `v ~ N(0, R)` drawn from `rng`.
pub fn measure(sm: &SensorModel, x: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let v = gaussian_vector(&sm.noise_sqrt, rng);
    &sm.h * x + v
}

/// The node's information summands: `(HᵀR⁻¹H, HᵀR⁻¹z)`.
pub fn information_terms(sm: &SensorModel, z: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let ht_rinv = sm.h.transpose() * &sm.r_inv;
    let u_mat = &ht_rinv * &sm.h;
    let u_vec = ht_rinv * z;
    (u_mat, u_vec)
}

fn gaussian_vector(sqrt_cov: &DMatrix<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let dim = sqrt_cov.nrows();
    let xi = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
    sqrt_cov * xi
}

/// Independent noise streams used by a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseStream {
    /// Process noise w(k).
    Process,
    /// Node measurement noise v_i(k).
    Measurement,
    /// Additive noise on values observed by detectors.
    Detector,
}

impl NoiseStream {
    fn tag(self) -> u64 {
        match self {
            NoiseStream::Process => 1,
            NoiseStream::Measurement => 2,
            NoiseStream::Detector => 3,
        }
    }
}

/// RNG keyed by `(run_seed, stream, node, step)`.
///
/// Each draw site reconstructs its generator from the key, so results do not
/// depend on the order in which nodes are processed.
pub fn keyed_rng(run_seed: u64, stream: NoiseStream, node: u64, step: u64) -> ChaCha8Rng {
    let mut state = run_seed ^ 0x9e37_79b9_7f4a_7c15;
    for word in [stream.tag(), node.wrapping_add(1), step.wrapping_add(1)] {
        state ^= word;
        state = splitmix64(state);
    }
    ChaCha8Rng::seed_from_u64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
