//! The centralized Kalman filter (ground truth) and the per-node
//! information-form update driven by consensus estimates.
//!
//! Both filters run in information form: the posterior gain matrix is
//! `M = (P⁻¹ + S)⁻¹` where `S` is the (averaged, scaled) inverse measurement
//! covariance. With the scalings `P_i = n·P_c`, `M_i = n·M_c`, `Q_i = n·Q`,
//! a node fed the exact network averages reproduces the centralized estimate
//! step for step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sysmodel::{information_terms, ProcessModel, SensorModel};

/// Centralized filter state.
#[derive(Debug, Clone, PartialEq)]
pub struct CkfState {
    pub x_prior: DVector<f64>,
    pub p_prior: DMatrix<f64>,
    pub x_post: DVector<f64>,
    pub m_post: DMatrix<f64>,
}

/// One node's local filter state.
///
/// `p_kf` and `m_kf` carry the n-fold scaling relative to the centralized
/// covariance; `q_scaled` is the correspondingly scaled process noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DkfNodeState {
    pub x_prior: DVector<f64>,
    pub p_kf: DMatrix<f64>,
    pub x_post: DVector<f64>,
    pub m_kf: DMatrix<f64>,
    pub q_scaled: DMatrix<f64>,
}

impl CkfState {
    pub fn new(x0: DVector<f64>, p0: DMatrix<f64>) -> Self {
        CkfState {
            x_post: x0.clone(),
            m_post: p0.clone(),
            x_prior: x0,
            p_prior: p0,
        }
    }
}

impl DkfNodeState {
    pub fn new(x0: DVector<f64>, p0: DMatrix<f64>, q_scaled: DMatrix<f64>) -> Self {
        DkfNodeState {
            x_post: x0.clone(),
            m_kf: p0.clone(),
            x_prior: x0,
            p_kf: p0,
            q_scaled,
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn spd_inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|c| c.inverse())
        .ok_or(Error::SingularCovariance { context })
}

/// One centralized update-and-predict cycle on the stacked measurement.
///
/// The measurement update inverts `P_c⁻¹ + H_cᵀR_c⁻¹H_c` built from the
/// literally stacked `H_c` and block-diagonal `R_c⁻¹`.
pub fn ckf_step(
    st: &CkfState,
    models: &[SensorModel],
    pm: &ProcessModel,
    z_all: &[DVector<f64>],
) -> Result<CkfState> {
    if models.is_empty() || models.len() != z_all.len() {
        return Err(Error::InvalidScenario(
            "sensor models and measurements must pair up".into(),
        ));
    }
    let m = st.x_prior.nrows();
    let p_total: usize = models.iter().map(|s| s.measurement_dim()).sum();

    let mut h_c = DMatrix::zeros(p_total, m);
    let mut r_c_inv = DMatrix::zeros(p_total, p_total);
    let mut z_c = DVector::zeros(p_total);
    let mut row = 0;
    for (sm, z) in models.iter().zip(z_all) {
        let p = sm.measurement_dim();
        h_c.view_mut((row, 0), (p, m)).copy_from(sm.h());
        r_c_inv.view_mut((row, row), (p, p)).copy_from(sm.r_inv());
        z_c.rows_mut(row, p).copy_from(z);
        row += p;
    }

    let ht_rinv = h_c.transpose() * &r_c_inv;
    let info = &ht_rinv * &h_c;
    let p_inv = spd_inverse(&st.p_prior, "centralized prior covariance")?;
    let m_post = symmetrize(&spd_inverse(
        &(&p_inv + &info),
        "centralized posterior information",
    )?);
    let innovation = &ht_rinv * &z_c - &info * &st.x_prior;
    let x_post = &st.x_prior + &m_post * innovation;

    let p_prior = symmetrize(
        &(pm.a() * &m_post * pm.a().transpose() + pm.b() * pm.q_cov() * pm.b().transpose()),
    );
    let x_prior = pm.a() * &x_post;
    Ok(CkfState {
        x_prior,
        p_prior,
        x_post,
        m_post,
    })
}

/// One local update-and-predict cycle from consensus inputs `(g, s)`.
///
/// `x̂ = x̄ + M(g − S x̄)` with `M = (P⁻¹ + S)⁻¹`, then the usual prediction
/// with the node-scaled process noise.
pub fn dkf_local_update(
    st: &DkfNodeState,
    g: &DVector<f64>,
    s: &DMatrix<f64>,
    pm: &ProcessModel,
) -> Result<DkfNodeState> {
    let p_inv = spd_inverse(&st.p_kf, "node prior covariance")?;
    let m_kf = symmetrize(&spd_inverse(&(&p_inv + s), "node posterior information")?);
    let x_post = &st.x_prior + &m_kf * (g - s * &st.x_prior);
    let p_kf = symmetrize(
        &(pm.a() * &m_kf * pm.a().transpose() + pm.b() * &st.q_scaled * pm.b().transpose()),
    );
    let x_prior = pm.a() * &x_post;
    Ok(DkfNodeState {
        x_prior,
        p_kf,
        x_post,
        m_kf,
        q_scaled: st.q_scaled.clone(),
    })
}

/// Network averages of the per-node information terms:
/// `s_c = (1/n) Σ HᵀR⁻¹H` and `g_c = (1/n) Σ HᵀR⁻¹z`.
///
/// This is the oracle every consensus output is tested against.
pub fn exact_averages(
    models: &[SensorModel],
    z_all: &[DVector<f64>],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if models.is_empty() || models.len() != z_all.len() {
        return Err(Error::InvalidScenario(
            "sensor models and measurements must pair up".into(),
        ));
    }
    let m = models[0].state_dim();
    let mut s_c = DMatrix::zeros(m, m);
    let mut g_c = DVector::zeros(m);
    for (sm, z) in models.iter().zip(z_all) {
        let (u_mat, u_vec) = information_terms(sm, z);
        s_c += u_mat;
        g_c += u_vec;
    }
    let inv_n = 1.0 / models.len() as f64;
    Ok((s_c * inv_n, g_c * inv_n))
}

/// Average of the constant matrix terms alone, `(1/n) Σ HᵀR⁻¹H`.
pub fn exact_average_information(models: &[SensorModel]) -> DMatrix<f64> {
    let m = models[0].state_dim();
    let mut s_c = DMatrix::zeros(m, m);
    for sm in models {
        let (u_mat, _) = information_terms(sm, &DVector::zeros(sm.measurement_dim()));
        s_c += u_mat;
    }
    s_c / models.len() as f64
}
