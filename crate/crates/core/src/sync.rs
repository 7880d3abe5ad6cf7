//! Broadcast clock synchronization from `G_1`. Each UAV's synchronization
//! error (in meters) splits into a part caused by its own position error and
//! the ToA noise of the broadcast.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::LinkVariances;
use crate::scenario::Scenario;
use crate::selfloc::UavStateVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncError {
    pub total: f64,
    pub position_part: f64,
    pub noise_part: f64,
}

/// Position-induced part only, for every UAV.
pub fn position_parts(v_hat: &UavStateVector, s: &Scenario) -> Vec<f64> {
    let g1 = &s.grs[s.reference_grs()].position;
    v_hat
        .positions(s)
        .iter()
        .zip(&s.uavs)
        .map(|(est, uav)| est.distance(g1) - uav.position.distance(g1))
        .collect()
}

/// Draws one synchronization event. Noise is drawn in UAV order with standard
/// deviation `noise_scale * sigma_{G_1 -> V_n}`.
pub fn sync_errors<R: Rng + ?Sized>(
    v_hat: &UavStateVector,
    s: &Scenario,
    links: &LinkVariances,
    noise_scale: f64,
    rng: &mut R,
) -> Vec<SyncError> {
    position_parts(v_hat, s)
        .into_iter()
        .enumerate()
        .map(|(n, position_part)| {
            let z: f64 = StandardNormal.sample(rng);
            let noise_part = z * noise_scale * links.sync(n).sqrt();
            SyncError {
                total: position_part + noise_part,
                position_part,
                noise_part,
            }
        })
        .collect()
}
