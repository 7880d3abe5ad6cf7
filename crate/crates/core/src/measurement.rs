//! Noisy G2V TDoA and V2V DR-TWR measurement synthesis, plus the covariance
//! matrices of both error vectors.
//!
//! Orderings are fixed:
//! - G2V TDoA: outer UAV `n` in list order, inner GRS `m` over the
//!   non-reference stations in list order (`d_{G_m,G_1 -> V_n}`).
//! - V2V DR-TWR: outer initiator `n` in list order, inner responder `i`
//!   ascending over every other UAV (`r_{V_n -> V_i}`).
//!
//! Samplers take the model link variances plus a `noise_scale` that multiplies
//! every ToA standard deviation; covariance fields always come from the model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use thiserror::Error;

use crate::channel::{LinkVariances, SPEED_OF_LIGHT};
use crate::linalg::block_diag;
use crate::scenario::{Position3, Scenario};

/// Default responder wait (s) between request reception and first response.
pub const DEFAULT_RESPONSE_DELAY_S: f64 = 1e-3;
/// Default bound (ppm) for per-UAV clock drifts drawn uniformly.
pub const DEFAULT_MAX_DRIFT_PPM: f64 = 10.0;
/// Largest clock drift accepted by [`DrTwrParams::new`] (ppm, exclusive).
pub const MAX_DRIFT_PPM: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum MeasurementError {
    #[error("GRS index {m} is the TDoA reference")]
    ReferenceIndex { m: usize },
    #[error("index out of range: {what} {index} (count {count})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        count: usize,
    },
    #[error("invalid DR-TWR parameters: {0}")]
    InvalidParams(&'static str),
}

/// One DR-TWR exchange: responder wait and the two clock drifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrTwrParams {
    /// Responder wait `tau_D` (s), measured on the responder clock.
    pub response_delay: f64,
    /// Initiator clock drift (ppm).
    pub drift_initiator: f64,
    /// Responder clock drift (ppm).
    pub drift_responder: f64,
}

impl DrTwrParams {
    pub fn new(
        response_delay: f64,
        drift_initiator: f64,
        drift_responder: f64,
    ) -> Result<Self, MeasurementError> {
        if !(response_delay > 0.0) {
            return Err(MeasurementError::InvalidParams(
                "response delay must be positive",
            ));
        }
        if !(drift_initiator.abs() < MAX_DRIFT_PPM && drift_responder.abs() < MAX_DRIFT_PPM) {
            return Err(MeasurementError::InvalidParams(
                "clock drift must be below 100 ppm",
            ));
        }
        Ok(Self {
            response_delay,
            drift_initiator,
            drift_responder,
        })
    }

    pub fn ideal() -> Self {
        Self {
            response_delay: DEFAULT_RESPONSE_DELAY_S,
            drift_initiator: 0.0,
            drift_responder: 0.0,
        }
    }
}

/// Local clocks of all UAVs for one positioning epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct UavClocks {
    pub response_delay: f64,
    pub drift_ppm: Vec<f64>,
}

impl UavClocks {
    pub fn ideal(n: usize) -> Self {
        Self {
            response_delay: DEFAULT_RESPONSE_DELAY_S,
            drift_ppm: vec![0.0; n],
        }
    }

    /// Drifts drawn uniformly in `[-max_ppm, max_ppm]`, one per UAV.
    pub fn random<R: Rng + ?Sized>(n: usize, max_ppm: f64, rng: &mut R) -> Self {
        let drift_ppm = if max_ppm > 0.0 {
            let u = Uniform::new_inclusive(-max_ppm, max_ppm).expect("finite bound");
            (0..n).map(|_| u.sample(rng)).collect()
        } else {
            vec![0.0; n]
        };
        Self {
            response_delay: DEFAULT_RESPONSE_DELAY_S,
            drift_ppm,
        }
    }

    pub fn pair(&self, initiator: usize, responder: usize) -> DrTwrParams {
        DrTwrParams {
            response_delay: self.response_delay,
            drift_initiator: self.drift_ppm[initiator],
            drift_responder: self.drift_ppm[responder],
        }
    }
}

/// Result of one simulated DR-TWR exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrTwrOutcome {
    /// Request-to-first-response interval on the initiator clock (s).
    pub tau1_hat: f64,
    /// First-to-second-response interval on the initiator clock (s).
    pub tau2_hat: f64,
    /// `c (tau1_hat - tau2_hat) / 2` (m).
    pub range: f64,
}

/// An interval kept as an unevaluated sum `hi + lo`, so that the large common
/// responder delay cancels exactly when two intervals are subtracted.
#[derive(Debug, Clone, Copy)]
struct SplitInterval {
    hi: f64,
    lo: f64,
}

impl SplitInterval {
    fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn add(self, x: f64) -> Self {
        // Knuth two-sum
        let s = self.hi + x;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (x - bb);
        Self {
            hi: s,
            lo: self.lo + err,
        }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }

    fn minus(self, other: Self) -> f64 {
        (self.hi - other.hi) + (self.lo - other.lo)
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Simulates request, wait, two responses.
///
/// `toa_sigmas = (sigma_{n->i}, sigma_{i->n})` are ToA standard deviations (m)
/// of the request at the responder and of each response at the initiator.
/// Three independent Gaussian ToA errors are drawn in the order request,
/// response 1, response 2.
pub fn drtwr_exchange<R: Rng + ?Sized>(
    true_range: f64,
    params: &DrTwrParams,
    toa_sigmas: (f64, f64),
    rng: &mut R,
) -> DrTwrOutcome {
    let e_req = gaussian(rng, toa_sigmas.0);
    let e_resp1 = gaussian(rng, toa_sigmas.1);
    let e_resp2 = gaussian(rng, toa_sigmas.1);

    let delta_n = params.drift_initiator * 1e-6;
    let delta_i = params.drift_responder * 1e-6;
    let clock_ratio = (1.0 + delta_i) / (1.0 + delta_n);
    let tof = true_range / SPEED_OF_LIGHT;
    let wait = params.response_delay * clock_ratio;

    let tau1 = SplitInterval::new(wait)
        .add(2.0 * tof * (1.0 + delta_n))
        .add(e_req / SPEED_OF_LIGHT * clock_ratio)
        .add(e_resp1 / SPEED_OF_LIGHT);
    let tau2 = SplitInterval::new(wait)
        .add(e_resp2 / SPEED_OF_LIGHT)
        .add(-e_resp1 / SPEED_OF_LIGHT);

    DrTwrOutcome {
        tau1_hat: tau1.value(),
        tau2_hat: tau2.value(),
        range: SPEED_OF_LIGHT * tau1.minus(tau2) / 2.0,
    }
}

/// `(n, m)` labels of the G2V TDoA vector.
pub fn g2v_labels(s: &Scenario) -> Vec<(usize, usize)> {
    let others = s.non_reference_grs();
    (0..s.num_uavs())
        .flat_map(|n| others.iter().map(move |&m| (n, m)))
        .collect()
}

/// `(n, i)` labels of the V2V DR-TWR vector.
pub fn v2v_labels(s: &Scenario) -> Vec<(usize, usize)> {
    let n_count = s.num_uavs();
    (0..n_count)
        .flat_map(|n| (0..n_count).filter(move |&i| i != n).map(move |i| (n, i)))
        .collect()
}

/// `||v_n - g_m|| - ||v_n - g_1||` for the scenario's true UAV positions.
pub fn true_tdoa_g2v(s: &Scenario, m: usize, n: usize) -> Result<f64, MeasurementError> {
    if m >= s.num_grs() {
        return Err(MeasurementError::IndexOutOfRange {
            what: "GRS",
            index: m,
            count: s.num_grs(),
        });
    }
    if n >= s.num_uavs() {
        return Err(MeasurementError::IndexOutOfRange {
            what: "UAV",
            index: n,
            count: s.num_uavs(),
        });
    }
    if m == s.reference_grs() {
        return Err(MeasurementError::ReferenceIndex { m });
    }
    let v = &s.uavs[n].position;
    let r = s.reference_grs();
    Ok(v.distance(&s.grs[m].position) - v.distance(&s.grs[r].position))
}

/// Noise-free G2V TDoA vector for arbitrary UAV positions.
pub fn predict_g2v(s: &Scenario, uavs: &[Position3]) -> DVector<f64> {
    let r = &s.grs[s.reference_grs()].position;
    let labels = g2v_labels(s);
    DVector::from_iterator(
        labels.len(),
        labels
            .iter()
            .map(|&(n, m)| uavs[n].distance(&s.grs[m].position) - uavs[n].distance(r)),
    )
}

/// Noise-free V2V range vector for arbitrary UAV positions.
pub fn predict_v2v(s: &Scenario, uavs: &[Position3]) -> DVector<f64> {
    let labels = v2v_labels(s);
    DVector::from_iterator(
        labels.len(),
        labels.iter().map(|&(n, i)| uavs[n].distance(&uavs[i])),
    )
}

pub fn true_uav_positions(s: &Scenario) -> Vec<Position3> {
    s.uavs.iter().map(|u| u.position).collect()
}

/// G2V TDoA vector with per-link Gaussian ToA errors; every TDoA of UAV `n`
/// shares the reference link's error.
pub fn sample_g2v_set<R: Rng + ?Sized>(
    s: &Scenario,
    links: &LinkVariances,
    noise_scale: f64,
    rng: &mut R,
) -> DVector<f64> {
    let r = s.reference_grs();
    let others = s.non_reference_grs();
    let mut out = Vec::with_capacity(s.num_uavs() * others.len());
    for (n, uav) in s.uavs.iter().enumerate() {
        let measured: Vec<f64> = (0..s.num_grs())
            .map(|m| {
                uav.position.distance(&s.grs[m].position)
                    + gaussian(rng, noise_scale * links.g2v(m, n).sqrt())
            })
            .collect();
        out.extend(others.iter().map(|&m| measured[m] - measured[r]));
    }
    DVector::from_vec(out)
}

/// One DR-TWR exchange per ordered UAV pair.
pub fn sample_v2v_set<R: Rng + ?Sized>(
    s: &Scenario,
    links: &LinkVariances,
    clocks: &UavClocks,
    noise_scale: f64,
    rng: &mut R,
) -> DVector<f64> {
    let labels = v2v_labels(s);
    DVector::from_iterator(
        labels.len(),
        labels.iter().map(|&(n, i)| {
            let range = s.uavs[n].position.distance(&s.uavs[i].position);
            let sigmas = (
                noise_scale * links.v2v(n, i).sqrt(),
                noise_scale * links.v2v(i, n).sqrt(),
            );
            drtwr_exchange(range, &clocks.pair(n, i), sigmas, rng).range
        }),
    )
}

/// Block-diagonal TDoA covariance: block `n` is `sigma^2_{G_1->V_n} 1 1^T +
/// diag(sigma^2_{G_m->V_n})` over the non-reference stations.
pub fn cov_g2v(s: &Scenario, links: &LinkVariances) -> DMatrix<f64> {
    let r = s.reference_grs();
    let others = s.non_reference_grs();
    let k = others.len();
    let blocks: Vec<DMatrix<f64>> = (0..s.num_uavs())
        .map(|n| {
            let mut b = DMatrix::from_element(k, k, links.g2v(r, n));
            for (j, &m) in others.iter().enumerate() {
                b[(j, j)] += links.g2v(m, n);
            }
            b
        })
        .collect();
    block_diag(&blocks)
}

/// Diagonal DR-TWR covariance: `sigma^2_{n->i} / 4 + 5 sigma^2_{i->n} / 4`.
pub fn cov_v2v(s: &Scenario, links: &LinkVariances) -> DMatrix<f64> {
    let diag: Vec<f64> = v2v_labels(s)
        .iter()
        .map(|&(n, i)| 0.25 * links.v2v(n, i) + 1.25 * links.v2v(i, n))
        .collect();
    DMatrix::from_diagonal(&DVector::from_vec(diag))
}

/// Everything the UAVs report to `G_1` in one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub tdoa_g2v: DVector<f64>,
    pub range_v2v: DVector<f64>,
    pub cov_g2v: DMatrix<f64>,
    pub cov_v2v: DMatrix<f64>,
}

impl MeasurementSet {
    /// Draws the G2V set first and the V2V set second from `rng`.
    pub fn sample<R: Rng + ?Sized>(
        s: &Scenario,
        links: &LinkVariances,
        clocks: &UavClocks,
        noise_scale: f64,
        rng: &mut R,
    ) -> Self {
        let tdoa_g2v = sample_g2v_set(s, links, noise_scale, rng);
        let range_v2v = sample_v2v_set(s, links, clocks, noise_scale, rng);
        Self {
            tdoa_g2v,
            range_v2v,
            cov_g2v: cov_g2v(s, links),
            cov_v2v: cov_v2v(s, links),
        }
    }

    /// Exact measurements with model covariances.
    pub fn noiseless(s: &Scenario, links: &LinkVariances) -> Self {
        let truth = true_uav_positions(s);
        Self {
            tdoa_g2v: predict_g2v(s, &truth),
            range_v2v: predict_v2v(s, &truth),
            cov_g2v: cov_g2v(s, links),
            cov_v2v: cov_v2v(s, links),
        }
    }
}
