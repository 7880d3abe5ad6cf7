//! World model: jammer, ground reference stations (GRS), UAV anchors, the UE
//! target area and the radio parameters shared by every link.
//!
//! A [`Scenario`] is plain data. It is immutable after construction and can be
//! shared read-only between worker threads. [`validate_scenario`] reports every
//! violated constraint without failing, and [`build_canonical_scenario`] builds
//! the six-GRS / six-UAV evaluation scenario used by the experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::SPEED_OF_LIGHT;

/// Horizontal tolerance (m) used when checking the "outside the jamming area" rule.
pub const BOUNDARY_TOLERANCE_M: f64 = 1e-6;

/// Default azimuth (deg) of the centre of the canonical GRS fan. With 20 degree
/// spacing the six stations sit at 0, 20, ..., 100 degrees.
pub const CANONICAL_GRS_CENTER_AZIMUTH_DEG: f64 = 50.0;

/// Relative offsets (deg) of the canonical GRSs around the fan centre.
pub const CANONICAL_GRS_OFFSETS_DEG: [f64; 6] = [-50.0, -30.0, -10.0, 10.0, 30.0, 50.0];

/// Horizontal coordinates (m) of the canonical UAVs, `V_1` first.
pub const CANONICAL_UAV_XY: [[f64; 2]; 6] = [
    [1350.0, -400.0],
    [950.0, 0.0],
    [550.0, -400.0],
    [550.0, 400.0],
    [1750.0, 0.0],
    [1350.0, 400.0],
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown override parameter `{0}`")]
    UnknownOverride(String),
    #[error("override `{key}` = {value} is invalid: {reason}")]
    InvalidOverride {
        key: String,
        value: f64,
        reason: String,
    },
    #[error("scenario violates {} constraint(s): {}", .0.violations.len(), .0)]
    Invalid(ValidationReport),
    #[error("grid step {step} m must satisfy 0 < step <= side ({side} m)")]
    InvalidGridStep { step: f64, side: f64 },
    #[error("failed to parse scenario document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
}

/// A point given as a horizontal coordinate plus a height above ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position3 {
    /// Horizontal coordinate `[x, y]` in meters.
    pub horizontal: [f64; 2],
    /// Height in meters.
    pub height: f64,
}

impl Position3 {
    pub fn new(x: f64, y: f64, height: f64) -> Self {
        Self {
            horizontal: [x, y],
            height,
        }
    }

    pub fn xy(&self) -> Vector2<f64> {
        Vector2::new(self.horizontal[0], self.horizontal[1])
    }

    pub fn xyz(&self) -> Vector3<f64> {
        Vector3::new(self.horizontal[0], self.horizontal[1], self.height)
    }

    /// Same height, new horizontal coordinate.
    pub fn with_xy(&self, xy: Vector2<f64>) -> Self {
        Self::new(xy.x, xy.y, self.height)
    }

    /// Full 3-D Euclidean distance.
    pub fn distance(&self, other: &Position3) -> f64 {
        (self.xyz() - other.xyz()).norm()
    }

    pub fn horizontal_distance(&self, other: &Position3) -> f64 {
        (self.xy() - other.xy()).norm()
    }
}

/// Propagation condition of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkCondition {
    #[serde(rename = "LoS")]
    Los,
    #[serde(rename = "NLoS")]
    Nlos,
}

impl fmt::Display for LinkCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkCondition::Los => f.write_str("LoS"),
            LinkCondition::Nlos => f.write_str("NLoS"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jammer {
    pub position: Position3,
    /// Transmit power in the ISM band (dBm).
    pub tx_power_ism: f64,
    /// Radius (m) of the disc in which GNSS is denied.
    pub jam_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStation {
    pub position: Position3,
    /// Transmit power (dBm).
    pub tx_power: f64,
    /// TDoA and clock reference (`G_1`).
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavNode {
    pub position: Position3,
    /// Transmit power (dBm).
    pub tx_power: f64,
    /// Propagation condition of the jammer-to-UAV link.
    pub j2v_condition: LinkCondition,
    /// Reference anchor (`V_1`) of the UE TDoA set.
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetArea {
    pub center: [f64; 2],
    /// Side length (m) of the square area.
    pub side: f64,
    /// UE antenna height (m).
    pub ue_height: f64,
}

impl TargetArea {
    pub fn center_xy(&self) -> Vector2<f64> {
        Vector2::new(self.center[0], self.center[1])
    }

    /// UE position at horizontal coordinate `xy`.
    pub fn ue_at(&self, xy: Vector2<f64>) -> Position3 {
        Position3::new(xy.x, xy.y, self.ue_height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// Carrier frequency (Hz).
    pub fc: f64,
    /// Signal bandwidth (Hz).
    pub bandwidth: f64,
    /// Receiver noise power (dBm).
    pub noise_power: f64,
    /// Reference path loss at 1 m, `(4 pi fc / c)^2`.
    pub beta0: f64,
    pub ple_g2a_los: f64,
    pub ple_g2a_nlos: f64,
    pub ple_g2g_los: f64,
}

impl RadioParams {
    pub fn reference_path_loss(fc: f64) -> f64 {
        (4.0 * std::f64::consts::PI * fc / SPEED_OF_LIGHT).powi(2)
    }

    /// Table of parameters used by the canonical scenario.
    pub fn canonical() -> Self {
        let fc = 2.4e9;
        Self {
            fc,
            bandwidth: 10e6,
            noise_power: -95.0,
            beta0: Self::reference_path_loss(fc),
            ple_g2a_los: 2.0,
            ple_g2a_nlos: 3.2,
            ple_g2g_los: 2.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub jammer: Jammer,
    pub grs: Vec<GroundStation>,
    pub uavs: Vec<UavNode>,
    pub target: TargetArea,
    pub radio: RadioParams,
}

impl Scenario {
    pub fn num_grs(&self) -> usize {
        self.grs.len()
    }

    pub fn num_uavs(&self) -> usize {
        self.uavs.len()
    }

    /// Index of `G_1`. Falls back to 0 when the flag is missing; validation
    /// reports that case separately.
    pub fn reference_grs(&self) -> usize {
        self.grs.iter().position(|g| g.is_reference).unwrap_or(0)
    }

    /// Index of `V_1`, with the same fallback as [`Scenario::reference_grs`].
    pub fn reference_uav(&self) -> usize {
        self.uavs.iter().position(|v| v.is_reference).unwrap_or(0)
    }

    /// GRS indices other than `G_1`, in list order (`m = 2..M`).
    pub fn non_reference_grs(&self) -> Vec<usize> {
        let r = self.reference_grs();
        (0..self.grs.len()).filter(|&m| m != r).collect()
    }

    /// UAV indices other than `V_1`, in list order (`n = 2..N`).
    pub fn non_reference_uavs(&self) -> Vec<usize> {
        let r = self.reference_uav();
        (0..self.uavs.len()).filter(|&n| n != r).collect()
    }

    /// Copy with every J2V link set to `condition`.
    pub fn with_j2v(&self, condition: LinkCondition) -> Self {
        let mut s = self.clone();
        for v in &mut s.uavs {
            v.j2v_condition = condition;
        }
        s
    }

    /// Copy with every GRS transmitting at `dbm`.
    pub fn with_grs_power(&self, dbm: f64) -> Self {
        let mut s = self.clone();
        for g in &mut s.grs {
            g.tx_power = dbm;
        }
        s
    }

    /// Copy with every UAV transmitting at `dbm`.
    pub fn with_uav_power(&self, dbm: f64) -> Self {
        let mut s = self.clone();
        for v in &mut s.uavs {
            v.tx_power = dbm;
        }
        s
    }

    /// Copy with every node (jammer, GRSs, UAVs, target area) shifted horizontally.
    pub fn translated(&self, offset: Vector2<f64>) -> Self {
        let shift = |p: &Position3| p.with_xy(p.xy() + offset);
        let mut s = self.clone();
        s.jammer.position = shift(&s.jammer.position);
        for g in &mut s.grs {
            g.position = shift(&g.position);
        }
        for v in &mut s.uavs {
            v.position = shift(&v.position);
        }
        s.target.center = [s.target.center[0] + offset.x, s.target.center[1] + offset.y];
        s
    }

    /// Copy reflected across the x-axis (`y -> -y` for every node).
    pub fn mirrored_y(&self) -> Self {
        let flip = |p: &Position3| Position3::new(p.horizontal[0], -p.horizontal[1], p.height);
        let mut s = self.clone();
        s.jammer.position = flip(&s.jammer.position);
        for g in &mut s.grs {
            g.position = flip(&g.position);
        }
        for v in &mut s.uavs {
            v.position = flip(&v.position);
        }
        s.target.center = [s.target.center[0], -s.target.center[1]];
        s
    }

    /// Loads a JSON scenario document and validates it.
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        validate_scenario(&s).into_result()?;
        Ok(s)
    }

    /// Loads a scenario document without validating it.
    pub fn parse_json_unchecked(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "constraint")]
pub enum Violation {
    NonFinitePosition {
        node: String,
    },
    NegativeHeight {
        node: String,
        height: f64,
    },
    NonPositiveJamRadius {
        radius: f64,
    },
    GrsInsideJammingArea {
        index: usize,
        distance: f64,
        radius: f64,
    },
    ReferenceGrsCount {
        count: usize,
    },
    ReferenceUavCount {
        count: usize,
    },
    TooFewGrs {
        count: usize,
    },
    TooFewUavs {
        count: usize,
    },
    UavAltitudeMismatch {
        index: usize,
        height: f64,
        expected: f64,
    },
    CoincidentUavs {
        first: usize,
        second: usize,
    },
    CoincidentNodes {
        first: String,
        second: String,
    },
    NonPositiveTargetSide {
        side: f64,
    },
    NonPositiveRadio {
        field: String,
        value: f64,
    },
    Beta0Mismatch {
        beta0: f64,
        expected: f64,
    },
    PleBelowTwo {
        field: String,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinitePosition { node } => write!(f, "non-finite position ({node})"),
            Violation::NegativeHeight { node, height } => {
                write!(f, "negative height {height} m ({node})")
            }
            Violation::NonPositiveJamRadius { radius } => {
                write!(f, "jam radius must be positive (got {radius} m)")
            }
            Violation::GrsInsideJammingArea {
                index,
                distance,
                radius,
            } => write!(
                f,
                "GRS inside jamming area (GRS {index} at {distance:.3} m < {radius} m)"
            ),
            Violation::ReferenceGrsCount { count } => {
                write!(f, "exactly one reference GRS required (found {count})")
            }
            Violation::ReferenceUavCount { count } => {
                write!(f, "exactly one reference UAV required (found {count})")
            }
            Violation::TooFewGrs { count } => write!(f, "at least 2 GRSs required (found {count})"),
            Violation::TooFewUavs { count } => {
                write!(f, "at least 3 UAVs required (found {count})")
            }
            Violation::UavAltitudeMismatch {
                index,
                height,
                expected,
            } => write!(
                f,
                "UAVs must share one altitude (UAV {index} at {height} m, expected {expected} m)"
            ),
            Violation::CoincidentUavs { first, second } => {
                write!(f, "coincident UAVs ({first} and {second})")
            }
            Violation::CoincidentNodes { first, second } => {
                write!(f, "coincident nodes ({first} and {second})")
            }
            Violation::NonPositiveTargetSide { side } => {
                write!(f, "target side must be positive (got {side} m)")
            }
            Violation::NonPositiveRadio { field, value } => {
                write!(f, "radio parameter {field} must be positive (got {value})")
            }
            Violation::Beta0Mismatch { beta0, expected } => {
                write!(
                    f,
                    "beta0 {beta0} does not match (4 pi fc / c)^2 = {expected}"
                )
            }
            Violation::PleBelowTwo { field, value } => {
                write!(f, "path loss exponent {field} = {value} is below 2")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), ScenarioError> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(self))
        }
    }

    /// Human-readable constraint messages.
    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        f.write_str(&self.messages().join("; "))
    }
}

fn check_position(out: &mut Vec<Violation>, node: String, p: &Position3) {
    if !(p.horizontal[0].is_finite() && p.horizontal[1].is_finite() && p.height.is_finite()) {
        out.push(Violation::NonFinitePosition { node });
    } else if p.height < 0.0 {
        out.push(Violation::NegativeHeight {
            node,
            height: p.height,
        });
    }
}

/// Checks every scenario constraint; violations are collected, never raised.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut v = Vec::new();

    check_position(&mut v, "jammer".into(), &s.jammer.position);
    for (i, g) in s.grs.iter().enumerate() {
        check_position(&mut v, format!("GRS {i}"), &g.position);
    }
    for (i, u) in s.uavs.iter().enumerate() {
        check_position(&mut v, format!("UAV {i}"), &u.position);
    }

    if !(s.jammer.jam_radius > 0.0) {
        v.push(Violation::NonPositiveJamRadius {
            radius: s.jammer.jam_radius,
        });
    }
    for (index, g) in s.grs.iter().enumerate() {
        let distance = g.position.horizontal_distance(&s.jammer.position);
        if distance < s.jammer.jam_radius - BOUNDARY_TOLERANCE_M {
            v.push(Violation::GrsInsideJammingArea {
                index,
                distance,
                radius: s.jammer.jam_radius,
            });
        }
    }

    if s.grs.len() < 2 {
        v.push(Violation::TooFewGrs { count: s.grs.len() });
    }
    if s.uavs.len() < 3 {
        v.push(Violation::TooFewUavs {
            count: s.uavs.len(),
        });
    }
    let grs_refs = s.grs.iter().filter(|g| g.is_reference).count();
    if grs_refs != 1 {
        v.push(Violation::ReferenceGrsCount { count: grs_refs });
    }
    let uav_refs = s.uavs.iter().filter(|u| u.is_reference).count();
    if uav_refs != 1 {
        v.push(Violation::ReferenceUavCount { count: uav_refs });
    }

    if let Some(first) = s.uavs.first() {
        let expected = first.position.height;
        for (index, u) in s.uavs.iter().enumerate().skip(1) {
            if u.position.height != expected {
                v.push(Violation::UavAltitudeMismatch {
                    index,
                    height: u.position.height,
                    expected,
                });
            }
        }
    }
    for i in 0..s.uavs.len() {
        for j in (i + 1)..s.uavs.len() {
            if s.uavs[i].position.horizontal_distance(&s.uavs[j].position) <= 0.0 {
                v.push(Violation::CoincidentUavs {
                    first: i,
                    second: j,
                });
            }
        }
    }
    // Every link distance must be nonzero for the path-loss model.
    for (gi, g) in s.grs.iter().enumerate() {
        for (ui, u) in s.uavs.iter().enumerate() {
            if g.position.distance(&u.position) <= 0.0 {
                v.push(Violation::CoincidentNodes {
                    first: format!("GRS {gi}"),
                    second: format!("UAV {ui}"),
                });
            }
        }
    }
    for (ui, u) in s.uavs.iter().enumerate() {
        if u.position.distance(&s.jammer.position) <= 0.0 {
            v.push(Violation::CoincidentNodes {
                first: "jammer".into(),
                second: format!("UAV {ui}"),
            });
        }
    }

    if !(s.target.side > 0.0) {
        v.push(Violation::NonPositiveTargetSide {
            side: s.target.side,
        });
    }
    if !(s.target.ue_height >= 0.0) {
        v.push(Violation::NegativeHeight {
            node: "UE".into(),
            height: s.target.ue_height,
        });
    }

    let r = &s.radio;
    for (field, value) in [("fc", r.fc), ("bandwidth", r.bandwidth)] {
        if !(value > 0.0 && value.is_finite()) {
            v.push(Violation::NonPositiveRadio {
                field: field.into(),
                value,
            });
        }
    }
    let expected = RadioParams::reference_path_loss(r.fc);
    if !(((r.beta0 - expected) / expected).abs() < 1e-12) {
        v.push(Violation::Beta0Mismatch {
            beta0: r.beta0,
            expected,
        });
    }
    for (field, value) in [
        ("ple_g2a_los", r.ple_g2a_los),
        ("ple_g2a_nlos", r.ple_g2a_nlos),
        ("ple_g2g_los", r.ple_g2g_los),
    ] {
        if !(value >= 2.0) {
            v.push(Violation::PleBelowTwo {
                field: field.into(),
                value,
            });
        }
    }

    ValidationReport { violations: v }
}

/// Named scalar overrides accepted by [`build_canonical_scenario`].
pub type Overrides = BTreeMap<String, f64>;

/// Parameter names understood by [`build_canonical_scenario`].
pub const OVERRIDE_KEYS: [&str; 18] = [
    "fc",
    "bandwidth",
    "noise_power",
    "ple_g2a_los",
    "ple_g2a_nlos",
    "ple_g2g_los",
    "jammer_height",
    "jammer_power",
    "jam_radius",
    "grs_height",
    "grs_power",
    "grs_reference_index",
    "uav_height",
    "uav_power",
    "ue_height",
    "target_side",
    "target_center_x",
    "target_center_y",
];

#[derive(Debug, Clone)]
struct CanonicalParams {
    values: BTreeMap<&'static str, f64>,
}

impl CanonicalParams {
    fn new() -> Self {
        let radio = RadioParams::canonical();
        let values = BTreeMap::from([
            ("fc", radio.fc),
            ("bandwidth", radio.bandwidth),
            ("noise_power", radio.noise_power),
            ("ple_g2a_los", radio.ple_g2a_los),
            ("ple_g2a_nlos", radio.ple_g2a_nlos),
            ("ple_g2g_los", radio.ple_g2g_los),
            ("jammer_height", 5.0),
            ("jammer_power", 20.0),
            ("jam_radius", 2500.0),
            ("grs_height", 25.0),
            ("grs_power", 35.0),
            ("grs_reference_index", 0.0),
            ("uav_height", 100.0),
            ("uav_power", 30.0),
            ("ue_height", 1.5),
            ("target_side", 500.0),
            ("target_center_x", 950.0),
            ("target_center_y", 0.0),
        ]);
        Self { values }
    }

    fn get(&self, key: &str) -> f64 {
        self.values[key]
    }

    fn set(&mut self, key: &str, value: f64) -> Result<(), ScenarioError> {
        let slot = OVERRIDE_KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| ScenarioError::UnknownOverride(key.to_string()))?;
        let invalid = |reason: &str| ScenarioError::InvalidOverride {
            key: key.to_string(),
            value,
            reason: reason.to_string(),
        };
        if !value.is_finite() {
            return Err(invalid("value must be finite"));
        }
        if key == "grs_reference_index"
            && (value.fract() != 0.0
                || value < 0.0
                || value >= CANONICAL_GRS_OFFSETS_DEG.len() as f64)
        {
            return Err(invalid("must be an integer station index in 0..6"));
        }
        self.values.insert(slot, value);
        Ok(())
    }
}

/// Builds the canonical evaluation scenario: jammer at the origin, six GRSs on
/// the jamming-area boundary spaced 20 degrees apart around
/// `grs_center_azimuth_deg`, six UAVs at 100 m and a 500 m target area centred
/// at (950, 0).
///
/// `G_1` is the lowest-azimuth station unless `grs_reference_index` is
/// overridden; GRSs are listed in ascending azimuth. The result is validated
/// and an override that breaks an invariant is rejected.
pub fn build_canonical_scenario(
    grs_center_azimuth_deg: f64,
    overrides: Option<&Overrides>,
) -> Result<Scenario, ScenarioError> {
    let mut p = CanonicalParams::new();
    if let Some(map) = overrides {
        for (k, v) in map {
            p.set(k, *v)?;
        }
    }

    let radius = p.get("jam_radius");
    let reference = p.get("grs_reference_index") as usize;
    let grs = CANONICAL_GRS_OFFSETS_DEG
        .iter()
        .enumerate()
        .map(|(i, off)| {
            let az = (grs_center_azimuth_deg + off).to_radians();
            GroundStation {
                position: Position3::new(radius * az.cos(), radius * az.sin(), p.get("grs_height")),
                tx_power: p.get("grs_power"),
                is_reference: i == reference,
            }
        })
        .collect();

    let uavs = CANONICAL_UAV_XY
        .iter()
        .enumerate()
        .map(|(i, xy)| UavNode {
            position: Position3::new(xy[0], xy[1], p.get("uav_height")),
            tx_power: p.get("uav_power"),
            j2v_condition: LinkCondition::Los,
            is_reference: i == 0,
        })
        .collect();

    let fc = p.get("fc");
    let scenario = Scenario {
        jammer: Jammer {
            position: Position3::new(0.0, 0.0, p.get("jammer_height")),
            tx_power_ism: p.get("jammer_power"),
            jam_radius: radius,
        },
        grs,
        uavs,
        target: TargetArea {
            center: [p.get("target_center_x"), p.get("target_center_y")],
            side: p.get("target_side"),
            ue_height: p.get("ue_height"),
        },
        radio: RadioParams {
            fc,
            bandwidth: p.get("bandwidth"),
            noise_power: p.get("noise_power"),
            beta0: RadioParams::reference_path_loss(fc),
            ple_g2a_los: p.get("ple_g2a_los"),
            ple_g2a_nlos: p.get("ple_g2a_nlos"),
            ple_g2g_los: p.get("ple_g2g_los"),
        },
    };
    validate_scenario(&scenario).into_result()?;
    Ok(scenario)
}

/// The canonical scenario with its default GRS fan.
pub fn canonical_scenario() -> Scenario {
    build_canonical_scenario(CANONICAL_GRS_CENTER_AZIMUTH_DEG, None)
        .expect("canonical scenario is valid")
}

/// Regular evaluation grid over the target area.
///
/// Each axis has `floor(side / step) + 1` points starting at
/// `center - side / 2`; points are emitted row by row (y outer, x inner), both
/// ascending.
pub fn discretize_target_area(
    t: &TargetArea,
    step: f64,
) -> Result<Vec<Vector2<f64>>, ScenarioError> {
    if !(step > 0.0 && step <= t.side) {
        return Err(ScenarioError::InvalidGridStep { step, side: t.side });
    }
    // Allow side/step to land a hair under an integer.
    let n = ((t.side / step) * (1.0 + 1e-12)).floor() as usize + 1;
    let x0 = t.center[0] - t.side / 2.0;
    let y0 = t.center[1] - t.side / 2.0;
    let mut pts = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            pts.push(Vector2::new(x0 + ix as f64 * step, y0 + iy as f64 * step));
        }
    }
    Ok(pts)
}

/// Random valid scenario for property tests: jammer at the origin, 3-8 GRSs
/// just outside the jamming disc over a 60-300 degree arc, 3-8 UAVs at a
/// common height at least 50 m apart.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R) -> Scenario {
    loop {
        let jam_radius = rng.random_range(1500.0..3000.0);
        let m = rng.random_range(3..=8);
        let span = rng.random_range(60f64..300.0).to_radians();
        let start = rng.random_range(0.0..std::f64::consts::TAU);
        let grs: Vec<GroundStation> = (0..m)
            .map(|k| {
                let a = start + span * k as f64 / (m - 1) as f64 + rng.random_range(-0.05..0.05);
                let r = jam_radius * rng.random_range(1.0..1.5);
                GroundStation {
                    position: Position3::new(
                        r * a.cos(),
                        r * a.sin(),
                        rng.random_range(10.0..50.0),
                    ),
                    tx_power: rng.random_range(25.0..45.0),
                    is_reference: k == 0,
                }
            })
            .collect();
        let n = rng.random_range(3..=8);
        let cx = rng.random_range(-0.5..0.5) * jam_radius;
        let cy = rng.random_range(-0.5..0.5) * jam_radius;
        let h = rng.random_range(50.0..300.0);
        let uavs: Vec<UavNode> = (0..n)
            .map(|k| UavNode {
                position: Position3::new(
                    cx + rng.random_range(-600.0..600.0),
                    cy + rng.random_range(-600.0..600.0),
                    h,
                ),
                tx_power: rng.random_range(20.0..40.0),
                j2v_condition: if rng.random_bool(0.5) {
                    LinkCondition::Los
                } else {
                    LinkCondition::Nlos
                },
                is_reference: k == 0,
            })
            .collect();
        let min_sep = uavs
            .iter()
            .enumerate()
            .flat_map(|(i, a)| {
                uavs[i + 1..]
                    .iter()
                    .map(move |b| a.position.distance(&b.position))
            })
            .fold(f64::INFINITY, f64::min);
        if min_sep < 50.0 {
            continue;
        }
        let s = Scenario {
            jammer: Jammer {
                position: Position3::new(0.0, 0.0, rng.random_range(2.0..20.0)),
                tx_power_ism: rng.random_range(10.0..30.0),
                jam_radius,
            },
            grs,
            uavs,
            target: TargetArea {
                center: [cx, cy],
                side: 500.0,
                ue_height: 1.5,
            },
            radio: RadioParams::canonical(),
        };
        if validate_scenario(&s).is_ok() {
            return s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_layout() {
        let s = build_canonical_scenario(0.0, None).unwrap();
        assert_eq!(s.jammer.position, Position3::new(0.0, 0.0, 5.0));
        assert_eq!(s.jammer.jam_radius, 2500.0);
        assert_eq!(s.uavs[1].position, Position3::new(950.0, 0.0, 100.0));
        assert!(s.uavs[0].is_reference);
        assert_eq!(s.reference_grs(), 0);
        let az = s.grs[0].position.horizontal[1].atan2(s.grs[0].position.horizontal[0]);
        assert!((az.to_degrees() + 50.0).abs() < 1e-9);
        assert!((s.radio.beta0 / 1.01e4 - 1.0).abs() < 0.005);
        for g in &s.grs {
            assert!((g.position.horizontal_distance(&s.jammer.position) - 2500.0).abs() < 1e-6);
        }
    }

    #[test]
    fn default_fan_starts_on_x_axis() {
        let s = canonical_scenario();
        let g1 = &s.grs[s.reference_grs()].position;
        assert!((g1.horizontal[0] - 2500.0).abs() < 1e-9);
        assert!(g1.horizontal[1].abs() < 1e-9);
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_canonical_scenario(12.5, None).unwrap();
        let b = build_canonical_scenario(12.5, None).unwrap();
        assert_eq!(a.to_json_pretty(), b.to_json_pretty());
    }

    #[test]
    fn overrides() {
        let mut o = Overrides::new();
        o.insert("uav_power".into(), 25.0);
        o.insert("grs_reference_index".into(), 2.0);
        let s = build_canonical_scenario(0.0, Some(&o)).unwrap();
        assert!(s.uavs.iter().all(|u| u.tx_power == 25.0));
        assert_eq!(s.reference_grs(), 2);

        let mut bad = Overrides::new();
        bad.insert("warp_factor".into(), 9.0);
        assert!(matches!(
            build_canonical_scenario(0.0, Some(&bad)),
            Err(ScenarioError::UnknownOverride(k)) if k == "warp_factor"
        ));

        let mut broken = Overrides::new();
        broken.insert("target_side".into(), -1.0);
        assert!(matches!(
            build_canonical_scenario(0.0, Some(&broken)),
            Err(ScenarioError::Invalid(_))
        ));
        let mut ple = Overrides::new();
        ple.insert("ple_g2g_los".into(), 1.5);
        assert!(build_canonical_scenario(0.0, Some(&ple)).is_err());
    }

    #[test]
    fn validation_catches_grs_inside() {
        let mut s = canonical_scenario();
        assert!(validate_scenario(&s).is_ok());
        s.grs[2].position = Position3::new(100.0, 0.0, 25.0);
        let report = validate_scenario(&s);
        assert_eq!(report.violations.len(), 1);
        assert!(report.messages()[0].contains("GRS inside jamming area"));
    }

    #[test]
    fn validation_catches_coincident_uavs() {
        let mut s = canonical_scenario();
        s.uavs[3].position = s.uavs[2].position;
        let report = validate_scenario(&s);
        assert!(report
            .messages()
            .iter()
            .any(|m| m.contains("coincident UAVs")));
    }

    #[test]
    fn validation_catches_reference_and_beta0() {
        let mut s = canonical_scenario();
        s.grs[1].is_reference = true;
        s.uavs[0].is_reference = false;
        s.radio.beta0 = 1.01e4;
        s.uavs[4].position.height = 90.0;
        let kinds: Vec<_> = validate_scenario(&s).violations;
        assert!(kinds.contains(&Violation::ReferenceGrsCount { count: 2 }));
        assert!(kinds.contains(&Violation::ReferenceUavCount { count: 0 }));
        assert!(kinds
            .iter()
            .any(|v| matches!(v, Violation::Beta0Mismatch { .. })));
        assert!(kinds
            .iter()
            .any(|v| matches!(v, Violation::UavAltitudeMismatch { index: 4, .. })));
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let s = canonical_scenario();
        let back = Scenario::from_json_str(&s.to_json_pretty()).unwrap();
        assert_eq!(back, s);
        let mut v: serde_json::Value = serde_json::to_value(&s).unwrap();
        v["jammer"]["colour"] = serde_json::json!("red");
        assert!(matches!(
            Scenario::from_json_str(&v.to_string()),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn grid_counts() {
        let t = canonical_scenario().target;
        assert_eq!(discretize_target_area(&t, 10.0).unwrap().len(), 2601);
        let corners = discretize_target_area(&t, 500.0).unwrap();
        assert_eq!(corners.len(), 4);
        assert_eq!(corners[0], Vector2::new(700.0, -250.0));
        assert_eq!(corners[3], Vector2::new(1200.0, 250.0));
        let nine = discretize_target_area(&t, 250.0).unwrap();
        assert_eq!(nine.len(), 9);
        assert_eq!(nine[4], Vector2::new(950.0, 0.0));
        // row-major: x varies fastest
        assert_eq!(nine[1], Vector2::new(950.0, -250.0));
    }

    #[test]
    fn grid_rejects_bad_step() {
        let t = canonical_scenario().target;
        assert!(discretize_target_area(&t, 0.0).is_err());
        assert!(discretize_target_area(&t, -5.0).is_err());
        assert!(discretize_target_area(&t, 501.0).is_err());
    }

    #[test]
    fn grid_is_symmetric_about_center() {
        let t = canonical_scenario().target;
        let pts = discretize_target_area(&t, 10.0).unwrap();
        let c = t.center_xy();
        let n = pts.len();
        for i in 0..n {
            let mirrored = 2.0 * c - pts[i];
            assert!((pts[n - 1 - i] - mirrored).norm() < 1e-9);
        }
    }
}
