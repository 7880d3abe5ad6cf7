//! UE positioning from V2U TDoA: measurement synthesis with anchor position
//! and clock errors, the iterative least-squares estimator, and the
//! closed-form error covariance that propagates UAV uncertainty.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::channel::{g2u_budget, ChannelError, LinkVariances, UeLinkVariances};
use crate::linalg::{spd_inverse, symmetrize};
use crate::scenario::{Position3, Scenario};
use crate::selfloc::{unit_projection, UavStateVector};
use crate::sync::SyncError;

/// Smallest accepted eigenvalue ratio of the 2x2 normal matrix.
const RANK_RATIO: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum UePosError {
    #[error("rank-deficient TDoA geometry (anchors collinear as seen from the UE)")]
    RankDeficient,
    #[error("UE coincides with anchor {0}")]
    CoincidentPoint(usize),
    #[error("ILS diverged after {iterations} iterations")]
    Diverged { iterations: usize },
    #[error("TDoA positioning needs at least {needed} anchors, got {got}")]
    InsufficientAnchors { needed: usize, got: usize },
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("input dimensions do not match the scenario")]
    DimensionMismatch,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// V2U TDoA vector of the non-reference UAVs (list order) against `V_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UeTdoaSet {
    pub values: DVector<f64>,
    /// `sigma^2_{V_1->U} 1 1^T + diag(sigma^2_{V_n->U})`.
    pub noise_cov: DMatrix<f64>,
    /// `sigma^2_{G_1->V_1} 1 1^T + diag(sigma^2_{G_1->V_n})`.
    pub sync_noise_cov: DMatrix<f64>,
}

/// Intermediate matrices of the closed-form covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct UeComponents {
    /// `(N-1) x 2` TDoA Jacobian at the true anchors.
    pub h: DMatrix<f64>,
    /// `2 x (N-1)` gain `P H^T Q^-1`.
    pub s: DMatrix<f64>,
    /// `(N-1) x 2N` map from UAV position error to TDoA error.
    pub k: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UePosReport {
    pub ideal_cov: Matrix2<f64>,
    pub full_cov: Matrix2<f64>,
    pub rmse: f64,
    pub components: UeComponents,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlsResult {
    pub estimate: Vector2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Reference-plus-diagonal TDoA covariance over anchors `others` against
/// `reference`, from per-anchor ToA variances.
fn tdoa_cov(var: &DVector<f64>, reference: usize, others: &[usize]) -> DMatrix<f64> {
    let k = others.len();
    let mut q = DMatrix::from_element(k, k, var[reference]);
    for (j, &n) in others.iter().enumerate() {
        q[(j, j)] += var[n];
    }
    q
}

/// `k^u_a` for a UE against every anchor, rejecting coincident points.
fn projections(u: &Position3, anchors: &[Position3]) -> Result<Vec<Vector2<f64>>, UePosError> {
    anchors
        .iter()
        .enumerate()
        .map(|(n, a)| {
            if u.distance(a) == 0.0 {
                Err(UePosError::CoincidentPoint(n))
            } else {
                Ok(unit_projection(u, a))
            }
        })
        .collect()
}

fn tdoa_jacobian(
    u: &Position3,
    anchors: &[Position3],
    reference: usize,
    others: &[usize],
) -> Result<DMatrix<f64>, UePosError> {
    let k = projections(u, anchors)?;
    let mut h = DMatrix::zeros(others.len(), 2);
    for (row, &n) in others.iter().enumerate() {
        let d = k[n] - k[reference];
        h[(row, 0)] = d.x;
        h[(row, 1)] = d.y;
    }
    Ok(h)
}

fn tdoa_values(
    u: &Position3,
    anchors: &[Position3],
    reference: usize,
    others: &[usize],
) -> DVector<f64> {
    let r = u.distance(&anchors[reference]);
    DVector::from_iterator(
        others.len(),
        others.iter().map(|&n| u.distance(&anchors[n]) - r),
    )
}

/// `(H^T W H)^-1` with a rank check on the 2x2 normal matrix.
fn normal_inverse(h: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Matrix2<f64>, UePosError> {
    let mut n = h.transpose() * w * h;
    symmetrize(&mut n);
    let n = Matrix2::new(n[(0, 0)], n[(0, 1)], n[(1, 0)], n[(1, 1)]);
    let eig = n.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= RANK_RATIO * hi {
        return Err(UePosError::RankDeficient);
    }
    n.try_inverse().ok_or(UePosError::RankDeficient)
}

fn uav_positions(s: &Scenario) -> Vec<Position3> {
    s.uavs.iter().map(|u| u.position).collect()
}

/// Synthesizes the V2U TDoA set at `ue_xy`: true range differences, minus
/// the synchronization error difference, plus V2U ToA noise drawn per UAV in
/// list order and scaled by `noise_scale`.
pub fn sample_v2u_tdoa<R: Rng + ?Sized>(
    s: &Scenario,
    links: &LinkVariances,
    ue_xy: Vector2<f64>,
    sync: &[SyncError],
    noise_scale: f64,
    rng: &mut R,
) -> Result<UeTdoaSet, UePosError> {
    let n_count = s.num_uavs();
    if n_count < 3 {
        return Err(UePosError::InsufficientAnchors {
            needed: 3,
            got: n_count,
        });
    }
    if sync.len() != n_count {
        return Err(UePosError::DimensionMismatch);
    }
    let ue = s.target.ue_at(ue_xy);
    let ul = UeLinkVariances::at(s, links, ue_xy)?;
    let r = s.reference_uav();
    let others = s.non_reference_uavs();
    let anchors = uav_positions(s);
    let truth = tdoa_values(&ue, &anchors, r, &others);
    let toa_noise: Vec<f64> = (0..n_count)
        .map(|n| {
            let z: f64 = StandardNormal.sample(rng);
            z * noise_scale * ul.v2u[n].sqrt()
        })
        .collect();
    let values = DVector::from_iterator(
        others.len(),
        others.iter().enumerate().map(|(j, &n)| {
            truth[j] - (sync[n].total - sync[r].total) + (toa_noise[n] - toa_noise[r])
        }),
    );
    Ok(UeTdoaSet {
        values,
        noise_cov: tdoa_cov(&ul.v2u, r, &others),
        sync_noise_cov: tdoa_cov(&ul.sync, r, &others),
    })
}

/// Weighted Gauss-Newton on the TDoA equations with the estimated anchors.
pub fn ils_estimate(
    d: &UeTdoaSet,
    v_hat: &UavStateVector,
    s: &Scenario,
    init: Vector2<f64>,
) -> Result<IlsResult, UePosError> {
    const MAX_ITERATIONS: usize = 50;
    const STEP_TOLERANCE: f64 = 1e-6;
    const DIVERGENCE_WINDOW: usize = 5;

    let others = s.non_reference_uavs();
    if v_hat.0.len() != 2 * s.num_uavs() || d.values.len() != others.len() {
        return Err(UePosError::DimensionMismatch);
    }
    let r = s.reference_uav();
    let anchors = v_hat.positions(s);
    let w = spd_inverse(&d.noise_cov).ok_or(UePosError::NotPositiveDefinite)?;
    let mut u = init;
    let mut last_step = f64::INFINITY;
    let mut growing = 0;

    for iteration in 1..=MAX_ITERATIONS {
        let ue = s.target.ue_at(u);
        let h = tdoa_jacobian(&ue, &anchors, r, &others)?;
        let resid = &d.values - tdoa_values(&ue, &anchors, r, &others);
        let p = normal_inverse(&h, &w)?;
        let g = h.transpose() * &w * resid;
        let step = p * Vector2::new(g[0], g[1]);
        u += step;
        let norm = step.norm();
        if !norm.is_finite() {
            return Err(UePosError::Diverged {
                iterations: iteration,
            });
        }
        if norm < STEP_TOLERANCE {
            return Ok(IlsResult {
                estimate: u,
                iterations: iteration,
                converged: true,
            });
        }
        growing = if norm > last_step { growing + 1 } else { 0 };
        if growing >= DIVERGENCE_WINDOW {
            return Err(UePosError::Diverged {
                iterations: iteration,
            });
        }
        last_step = norm;
    }
    Ok(IlsResult {
        estimate: u,
        iterations: MAX_ITERATIONS,
        converged: false,
    })
}

/// V2U TDoA Jacobian at the true UAV positions, `(N-1) x 2`.
pub fn ue_jacobian(u: Vector2<f64>, s: &Scenario) -> Result<DMatrix<f64>, UePosError> {
    tdoa_jacobian(
        &s.target.ue_at(u),
        &uav_positions(s),
        s.reference_uav(),
        &s.non_reference_uavs(),
    )
}

/// Closed-form UE error covariance at `u_star`. With
/// `use_anchor_uncertainty` off the result is the ideal-anchor covariance.
pub fn theoretical_rmse(
    u_star: Vector2<f64>,
    s: &Scenario,
    links: &LinkVariances,
    q_dv: &DMatrix<f64>,
    use_anchor_uncertainty: bool,
) -> Result<UePosReport, UePosError> {
    let n_count = s.num_uavs();
    if n_count < 3 {
        return Err(UePosError::InsufficientAnchors {
            needed: 3,
            got: n_count,
        });
    }
    if q_dv.shape() != (2 * n_count, 2 * n_count) {
        return Err(UePosError::DimensionMismatch);
    }
    let r = s.reference_uav();
    let others = s.non_reference_uavs();
    let ue = s.target.ue_at(u_star);
    let anchors = uav_positions(s);
    let ul = UeLinkVariances::at(s, links, u_star)?;

    let h = tdoa_jacobian(&ue, &anchors, r, &others)?;
    let q = tdoa_cov(&ul.v2u, r, &others);
    let w = spd_inverse(&q).ok_or(UePosError::NotPositiveDefinite)?;
    let p = normal_inverse(&h, &w)?;
    let p_dyn = DMatrix::from_column_slice(2, 2, p.as_slice());
    let gain = &p_dyn * h.transpose() * &w;

    let ku = projections(&ue, &anchors)?;
    let g1 = &s.grs[s.reference_grs()].position;
    let sync_k: Vec<Vector2<f64>> = anchors.iter().map(|a| unit_projection(a, g1)).collect();
    let mut k = DMatrix::zeros(others.len(), 2 * n_count);
    let ref_term = ku[r] - sync_k[r];
    for (row, &n) in others.iter().enumerate() {
        let own = ku[n] - sync_k[n];
        k[(row, 2 * n)] = own.x;
        k[(row, 2 * n + 1)] = own.y;
        k[(row, 2 * r)] = -ref_term.x;
        k[(row, 2 * r + 1)] = -ref_term.y;
    }

    let full = if use_anchor_uncertainty {
        let q_sync = tdoa_cov(&ul.sync, r, &others);
        let inner = &k * q_dv * k.transpose() + q_sync;
        let mut extra = &gain * inner * gain.transpose();
        symmetrize(&mut extra);
        p + Matrix2::new(extra[(0, 0)], extra[(0, 1)], extra[(1, 0)], extra[(1, 1)])
    } else {
        p
    };

    Ok(UePosReport {
        ideal_cov: p,
        full_cov: full,
        rmse: full.trace().sqrt(),
        components: UeComponents { h, s: gain, k },
    })
}

/// GNSS-synchronized TDoA from the GRSs to the UE with exact anchor
/// positions, under jamming at the UE.
pub fn conventional_baseline_rmse(u_star: Vector2<f64>, s: &Scenario) -> Result<f64, UePosError> {
    let m_count = s.num_grs();
    if m_count < 3 {
        return Err(UePosError::InsufficientAnchors {
            needed: 3,
            got: m_count,
        });
    }
    let ue = s.target.ue_at(u_star);
    let anchors: Vec<Position3> = s.grs.iter().map(|g| g.position).collect();
    let var = DVector::from_iterator(
        m_count,
        (0..m_count)
            .map(|m| g2u_budget(s, m, &ue).map(|b| b.toa_var))
            .collect::<Result<Vec<_>, _>>()?,
    );
    let r = s.reference_grs();
    let others = s.non_reference_grs();
    let h = tdoa_jacobian(&ue, &anchors, r, &others)?;
    let w = spd_inverse(&tdoa_cov(&var, r, &others)).ok_or(UePosError::NotPositiveDefinite)?;
    Ok(normal_inverse(&h, &w)?.trace().sqrt())
}
