//! Average path loss, SINR under jamming and the minimum ToA variance of
//! every link class.
//!
//! Powers cross this module's boundary in dBm and are converted to linear
//! milliwatts internally. Distances are full 3-D. There is no fading: the only
//! random quantity downstream is the ToA error whose variance is computed
//! here.

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::scenario::{LinkCondition, Position3, RadioParams, Scenario};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("zero distance between transmitter and receiver")]
    ZeroDistance,
    #[error("path loss exponent {0} is below 2")]
    InvalidExponent(f64),
    #[error("unsupported link: {kind:?} under {condition}")]
    UnsupportedLink {
        kind: LinkKind,
        condition: LinkCondition,
    },
    #[error("invalid link budget input: {0}")]
    InvalidInput(&'static str),
}

/// Link classes of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    /// GRS to UAV (ground-to-air, LoS).
    G2V,
    /// UAV to UAV (air-to-air, free space).
    V2V,
    /// Jammer to UAV (ground-to-air, LoS or NLoS).
    J2V,
    /// UAV to UE (ground-to-air, LoS).
    V2U,
    /// Jammer to UE (ground-to-ground, LoS).
    J2U,
    /// GRS to UE (ground-to-ground, LoS), conventional baseline only.
    G2U,
}

/// Path-loss, SINR and ToA variance of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Linear average path loss.
    pub path_loss: f64,
    /// Linear SINR.
    pub sinr: f64,
    /// Minimum ToA variance (m^2).
    pub toa_var: f64,
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// `beta0 * d^ple` with `d` the 3-D distance.
pub fn path_loss(
    tx: &Position3,
    rx: &Position3,
    ple: f64,
    beta0: f64,
) -> Result<f64, ChannelError> {
    if !(ple >= 2.0) {
        return Err(ChannelError::InvalidExponent(ple));
    }
    let d = tx.distance(rx);
    if !(d > 0.0) {
        return Err(ChannelError::ZeroDistance);
    }
    Ok(beta0 * d.powf(ple))
}

/// Path-loss exponent for a link class.
pub fn link_ple(
    kind: LinkKind,
    condition: LinkCondition,
    radio: &RadioParams,
) -> Result<f64, ChannelError> {
    use LinkCondition::*;
    use LinkKind::*;
    match (kind, condition) {
        (G2V, Los) | (V2U, Los) => Ok(radio.ple_g2a_los),
        (V2V, Los) => Ok(2.0),
        (J2V, Los) => Ok(radio.ple_g2a_los),
        (J2V, Nlos) => Ok(radio.ple_g2a_nlos),
        (J2U, Los) | (G2U, Los) => Ok(radio.ple_g2g_los),
        _ => Err(ChannelError::UnsupportedLink { kind, condition }),
    }
}

/// Received signal over noise plus received jamming, all in linear mW.
///
/// `p_jam = -inf` switches the jammer off.
pub fn sinr(
    p_tx: f64,
    pl_signal: f64,
    p_jam: f64,
    pl_jam: f64,
    p_noise: f64,
) -> Result<f64, ChannelError> {
    if !(pl_signal > 0.0 && pl_jam > 0.0) {
        return Err(ChannelError::InvalidInput("path losses must be positive"));
    }
    let signal = dbm_to_mw(p_tx) / pl_signal;
    let interference = dbm_to_mw(p_noise) + dbm_to_mw(p_jam) / pl_jam;
    Ok(signal / interference)
}

/// `c^2 / (B^2 * SINR)` in m^2.
pub fn toa_variance(sinr: f64, bandwidth: f64) -> Result<f64, ChannelError> {
    if !(sinr > 0.0 && bandwidth > 0.0) {
        return Err(ChannelError::InvalidInput(
            "SINR and bandwidth must be positive",
        ));
    }
    Ok(SPEED_OF_LIGHT * SPEED_OF_LIGHT / (bandwidth * bandwidth * sinr))
}

/// Link budget for a transmitter/receiver pair with a jammer at `jammer`.
#[allow(clippy::too_many_arguments)]
fn budget(
    radio: &RadioParams,
    tx: &Position3,
    p_tx: f64,
    signal_ple: f64,
    rx: &Position3,
    jammer: &Position3,
    p_jam: f64,
    jam_ple: f64,
) -> Result<LinkBudget, ChannelError> {
    let pl = path_loss(tx, rx, signal_ple, radio.beta0)?;
    let pl_jam = path_loss(jammer, rx, jam_ple, radio.beta0)?;
    let s = sinr(p_tx, pl, p_jam, pl_jam, radio.noise_power)?;
    Ok(LinkBudget {
        path_loss: pl,
        sinr: s,
        toa_var: toa_variance(s, radio.bandwidth)?,
    })
}

fn j2v_ple(s: &Scenario, n: usize) -> Result<f64, ChannelError> {
    link_ple(LinkKind::J2V, s.uavs[n].j2v_condition, &s.radio)
}

/// GRS `m` to UAV `n`.
pub fn g2v_budget(s: &Scenario, m: usize, n: usize) -> Result<LinkBudget, ChannelError> {
    let g = &s.grs[m];
    let v = &s.uavs[n];
    budget(
        &s.radio,
        &g.position,
        g.tx_power,
        link_ple(LinkKind::G2V, LinkCondition::Los, &s.radio)?,
        &v.position,
        &s.jammer.position,
        s.jammer.tx_power_ism,
        j2v_ple(s, n)?,
    )
}

/// UAV `tx` to UAV `rx`; jamming is evaluated at the receiver.
pub fn v2v_budget(s: &Scenario, tx: usize, rx: usize) -> Result<LinkBudget, ChannelError> {
    let t = &s.uavs[tx];
    budget(
        &s.radio,
        &t.position,
        t.tx_power,
        link_ple(LinkKind::V2V, LinkCondition::Los, &s.radio)?,
        &s.uavs[rx].position,
        &s.jammer.position,
        s.jammer.tx_power_ism,
        j2v_ple(s, rx)?,
    )
}

/// UAV `n` to a UE at `ue`, jammed over the ground-to-ground J2U link.
pub fn v2u_budget(s: &Scenario, n: usize, ue: &Position3) -> Result<LinkBudget, ChannelError> {
    let v = &s.uavs[n];
    budget(
        &s.radio,
        &v.position,
        v.tx_power,
        link_ple(LinkKind::V2U, LinkCondition::Los, &s.radio)?,
        ue,
        &s.jammer.position,
        s.jammer.tx_power_ism,
        link_ple(LinkKind::J2U, LinkCondition::Los, &s.radio)?,
    )
}

/// GRS `m` to a UE at `ue` (conventional terrestrial baseline).
pub fn g2u_budget(s: &Scenario, m: usize, ue: &Position3) -> Result<LinkBudget, ChannelError> {
    let g = &s.grs[m];
    budget(
        &s.radio,
        &g.position,
        g.tx_power,
        link_ple(LinkKind::G2U, LinkCondition::Los, &s.radio)?,
        ue,
        &s.jammer.position,
        s.jammer.tx_power_ism,
        link_ple(LinkKind::J2U, LinkCondition::Los, &s.radio)?,
    )
}

/// ToA variances (m^2) of every G2V and V2V link in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkVariances {
    /// `g2v[(n, m)]`: GRS `m` received at UAV `n`. N x M.
    pub g2v: DMatrix<f64>,
    /// `v2v[(rx, tx)]`: UAV `tx` received at UAV `rx`. N x N, zero diagonal.
    pub v2v: DMatrix<f64>,
    /// Index of `G_1`, the synchronization source.
    pub reference_grs: usize,
}

impl LinkVariances {
    pub fn from_scenario(s: &Scenario) -> Result<Self, ChannelError> {
        let (m_count, n_count) = (s.num_grs(), s.num_uavs());
        let mut g2v = DMatrix::zeros(n_count, m_count);
        let mut v2v = DMatrix::zeros(n_count, n_count);
        for n in 0..n_count {
            for m in 0..m_count {
                g2v[(n, m)] = g2v_budget(s, m, n)?.toa_var;
            }
            for tx in 0..n_count {
                if tx != n {
                    v2v[(n, tx)] = v2v_budget(s, tx, n)?.toa_var;
                }
            }
        }
        Ok(Self {
            g2v,
            v2v,
            reference_grs: s.reference_grs(),
        })
    }

    /// sigma^2 of GRS `m` at UAV `n`.
    pub fn g2v(&self, m: usize, n: usize) -> f64 {
        self.g2v[(n, m)]
    }

    /// sigma^2 of UAV `tx` at UAV `rx`.
    pub fn v2v(&self, tx: usize, rx: usize) -> f64 {
        self.v2v[(rx, tx)]
    }

    /// sigma^2 of the `G_1` synchronization broadcast at UAV `n`.
    pub fn sync(&self, n: usize) -> f64 {
        self.g2v[(n, self.reference_grs)]
    }

    /// Every variance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            g2v: &self.g2v * factor,
            v2v: &self.v2v * factor,
            reference_grs: self.reference_grs,
        }
    }
}

/// ToA variances seen by a UE at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct UeLinkVariances {
    /// sigma^2 of UAV `n` at the UE.
    pub v2u: DVector<f64>,
    /// sigma^2 of the `G_1` broadcast at UAV `n`.
    pub sync: DVector<f64>,
}

impl UeLinkVariances {
    pub fn at(
        s: &Scenario,
        links: &LinkVariances,
        ue_xy: Vector2<f64>,
    ) -> Result<Self, ChannelError> {
        let ue = s.target.ue_at(ue_xy);
        let n_count = s.num_uavs();
        let mut v2u = DVector::zeros(n_count);
        for n in 0..n_count {
            v2u[n] = v2u_budget(s, n, &ue)?.toa_var;
        }
        let sync = DVector::from_iterator(n_count, (0..n_count).map(|n| links.sync(n)));
        Ok(Self { v2u, sync })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::canonical_scenario;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn unit_distance_gives_beta0() {
        let r = RadioParams::canonical();
        let a = Position3::new(0.0, 0.0, 0.0);
        let b = Position3::new(0.0, 0.0, 1.0);
        for ple in [2.0, 2.2, 3.2] {
            assert_eq!(path_loss(&a, &b, ple, r.beta0).unwrap(), r.beta0);
        }
        assert!(rel(r.beta0, 1.01e4) < 0.005);
    }

    #[test]
    fn doubling_distance_quadruples_free_space_loss() {
        let a = Position3::new(0.0, 0.0, 0.0);
        let b = Position3::new(300.0, 400.0, 0.0);
        let c = Position3::new(600.0, 800.0, 0.0);
        let l1 = path_loss(&a, &b, 2.0, 7.0).unwrap();
        let l2 = path_loss(&a, &c, 2.0, 7.0).unwrap();
        assert!(rel(l2 / l1, 4.0) < 1e-14);
    }

    #[test]
    fn path_loss_errors() {
        let a = Position3::new(1.0, 2.0, 3.0);
        assert_eq!(path_loss(&a, &a, 2.0, 1e4), Err(ChannelError::ZeroDistance));
        let b = Position3::new(1.0, 2.0, 4.0);
        assert!(matches!(
            path_loss(&a, &b, 1.5, 1e4),
            Err(ChannelError::InvalidExponent(_))
        ));
    }

    #[test]
    fn jammer_to_uav2_loss() {
        // 10 log10(beta0 (950^2 + 95^2)), computed by hand: 99.6497 dB
        let s = canonical_scenario();
        let pl = path_loss(&s.jammer.position, &s.uavs[1].position, 2.0, s.radio.beta0).unwrap();
        assert!((mw_to_dbm(pl) - 99.649_693_899_7).abs() < 1e-6);
    }

    #[test]
    fn exponents() {
        let r = RadioParams::canonical();
        use LinkCondition::*;
        assert_eq!(link_ple(LinkKind::J2V, Nlos, &r).unwrap(), 3.2);
        assert_eq!(link_ple(LinkKind::J2V, Los, &r).unwrap(), 2.0);
        assert_eq!(link_ple(LinkKind::G2U, Los, &r).unwrap(), 2.2);
        assert_eq!(link_ple(LinkKind::J2U, Los, &r).unwrap(), 2.2);
        assert_eq!(link_ple(LinkKind::V2V, Los, &r).unwrap(), 2.0);
        assert_eq!(link_ple(LinkKind::V2U, Los, &r).unwrap(), 2.0);
        for kind in [
            LinkKind::G2V,
            LinkKind::V2V,
            LinkKind::V2U,
            LinkKind::J2U,
            LinkKind::G2U,
        ] {
            assert!(link_ple(kind, Nlos, &r).is_err());
        }
    }

    #[test]
    fn sinr_limits() {
        // jammer off: plain SNR
        let snr = sinr(30.0, 1e9, f64::NEG_INFINITY, 1e9, -95.0).unwrap();
        assert!(rel(snr, (1e3 / 1e9) / 10f64.powf(-9.5)) < 1e-12);
        // equal received signal and jam, negligible noise
        let s = sinr(20.0, 1e8, 20.0, 1e8, -300.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(sinr(20.0, 0.0, 20.0, 1e8, -95.0).is_err());
    }

    #[test]
    fn toa_variance_values() {
        assert!(rel(toa_variance(1.0, 10e6).unwrap(), 898.755_178_736_817_6) < 1e-12);
        // (c/B)^2 is 29.98^2, i.e. ~900 m^2
        assert!((toa_variance(1.0, 10e6).unwrap() - 900.0).abs() < 1.5);
        assert!(rel(toa_variance(100.0, 10e6).unwrap(), 8.987_551_787_368_176) < 1e-12);
        assert!(toa_variance(0.0, 10e6).is_err());
        let v = toa_variance(3.7, 5e6).unwrap();
        assert!(rel(v * 3.7 * 5e6 * 5e6, SPEED_OF_LIGHT * SPEED_OF_LIGHT) < 1e-12);
    }

    #[test]
    fn g1_to_v2_canonical_budget() {
        // Hand-evaluated link budget: G_1 (2500, 0, 25) -> V_2 (950, 0, 100),
        // jammer (0, 0, 5) at 20 dBm, LoS exponents 2.
        let s = canonical_scenario();
        let b = g2v_budget(&s, s.reference_grs(), 1).unwrap();
        assert!(rel(b.sinr, 11.630_583_553_378_077) < 1e-10);
        assert!(rel(b.toa_var, 77.275_157_743_549) < 1e-10);

        let nlos = g2v_budget(&s.with_j2v(LinkCondition::Nlos), s.reference_grs(), 1).unwrap();
        assert!(rel(nlos.sinr, 406.616_321_163_043_4) < 1e-10);
    }

    #[test]
    fn nlos_never_lowers_g2v_sinr() {
        let s = canonical_scenario();
        let n = s.with_j2v(LinkCondition::Nlos);
        for m in 0..s.num_grs() {
            for v in 0..s.num_uavs() {
                assert!(g2v_budget(&n, m, v).unwrap().sinr >= g2v_budget(&s, m, v).unwrap().sinr);
            }
        }
    }

    #[test]
    fn link_variance_tables() {
        let s = canonical_scenario();
        let lv = LinkVariances::from_scenario(&s).unwrap();
        assert_eq!(lv.g2v.shape(), (6, 6));
        for n in 0..6 {
            assert_eq!(lv.v2v(n, n), 0.0);
            assert_eq!(lv.sync(n), lv.g2v(s.reference_grs(), n));
            for m in 0..6 {
                assert_eq!(lv.g2v(m, n), g2v_budget(&s, m, n).unwrap().toa_var);
            }
        }
        assert_eq!(lv.v2v(2, 4), v2v_budget(&s, 2, 4).unwrap().toa_var);
        assert_eq!(lv.scaled(0.0).g2v.max(), 0.0);
    }

    #[test]
    fn ue_variances_use_g2g_jamming() {
        let s = canonical_scenario();
        let lv = LinkVariances::from_scenario(&s).unwrap();
        let u = UeLinkVariances::at(&s, &lv, s.target.center_xy()).unwrap();
        let ue = s.target.ue_at(s.target.center_xy());
        let pl_v = path_loss(&s.uavs[1].position, &ue, 2.0, s.radio.beta0).unwrap();
        let pl_j = path_loss(&s.jammer.position, &ue, 2.2, s.radio.beta0).unwrap();
        let expect = toa_variance(sinr(30.0, pl_v, 20.0, pl_j, -95.0).unwrap(), 10e6).unwrap();
        assert!(rel(u.v2u[1], expect) < 1e-14);
    }
}
