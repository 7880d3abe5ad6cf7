//! Experiment drivers: RMSE heatmaps over the target area, coverage curves,
//! SJR sweeps, energy-efficient power selection and Monte Carlo validation of
//! the analytic bounds, plus the CSV/JSON artifact writers.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{ChannelError, LinkVariances};
use crate::measurement::{MeasurementSet, UavClocks, DEFAULT_MAX_DRIFT_PPM};
use crate::scenario::{discretize_target_area, LinkCondition, Scenario, ScenarioError};
use crate::selfloc::{
    crlb, max_and_mean_error, ml_estimate, MlOptions, SelfLocError, UavStateVector,
};
use crate::sync::sync_errors;
use crate::uepos::{
    conventional_baseline_rmse, ils_estimate, sample_v2u_tdoa, theoretical_rmse, UePosError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    SelfLoc(#[from] SelfLocError),
    #[error(transparent)]
    UePos(#[from] UePosError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{failed} of {trials} Monte Carlo trials failed to converge (limit 2%)")]
    ExcessiveNonConvergence { failed: usize, trials: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// True for failures of the numerical pipeline rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::Channel(_)
                | Self::SelfLoc(_)
                | Self::UePos(_)
                | Self::ExcessiveNonConvergence { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Proposed,
    NoV2v,
    Conventional,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Proposed, Variant::NoV2v, Variant::Conventional];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::NoV2v => "no-v2v",
            Variant::Conventional => "conventional",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ExperimentError::InvalidInput(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatPoint {
    pub x: f64,
    pub y: f64,
    /// `None` where the geometry was degenerate; see `note`.
    pub rmse: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub points: Vec<HeatPoint>,
    pub step: f64,
    pub variant: Variant,
    pub j2v: LinkCondition,
}

impl Heatmap {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.rmse).collect()
    }

    pub fn max_rmse(&self) -> Option<f64> {
        self.values().into_iter().reduce(f64::max)
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.rmse.is_none()).count()
    }
}

/// UAV covariance used by a variant, or `None` for the GRS-only baseline.
fn anchor_covariance(
    s: &Scenario,
    links: &LinkVariances,
    variant: Variant,
) -> Result<Option<DMatrix<f64>>, ExperimentError> {
    Ok(match variant {
        Variant::Proposed => Some(crlb(s, true, links)?.crlb),
        Variant::NoV2v => Some(crlb(s, false, links)?.crlb),
        Variant::Conventional => None,
    })
}

fn point_rmse(
    s: &Scenario,
    links: &LinkVariances,
    q_dv: Option<&DMatrix<f64>>,
    xy: Vector2<f64>,
) -> Result<f64, UePosError> {
    match q_dv {
        Some(q) => Ok(theoretical_rmse(xy, s, links, q, true)?.rmse),
        None => conventional_baseline_rmse(xy, s),
    }
}

/// RMSE at every grid point of the target area, in grid order. The scenario's
/// J2V condition is replaced by `j2v`.
pub fn rmse_heatmap(
    s: &Scenario,
    variant: Variant,
    j2v: LinkCondition,
    step: f64,
) -> Result<Heatmap, ExperimentError> {
    let s = s.with_j2v(j2v);
    let grid = discretize_target_area(&s.target, step)?;
    let links = LinkVariances::from_scenario(&s)?;
    let q_dv = anchor_covariance(&s, &links, variant)?;
    let points = grid
        .par_iter()
        .map(|&xy| {
            let r = point_rmse(&s, &links, q_dv.as_ref(), xy);
            HeatPoint {
                x: xy.x,
                y: xy.y,
                rmse: r.as_ref().ok().copied(),
                note: r.err().map(|e| e.to_string()),
            }
        })
        .collect();
    Ok(Heatmap {
        points,
        step,
        variant,
        j2v,
    })
}

/// Empirical CDF of grid RMSE values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCurve {
    /// `(threshold_m, covered_fraction)` at each distinct RMSE value.
    pub points: Vec<(f64, f64)>,
    sorted: Vec<f64>,
}

impl CoverageCurve {
    pub fn from_values(values: &[f64]) -> Result<Self, ExperimentError> {
        if values.is_empty() {
            return Err(ExperimentError::InvalidInput("empty heatmap".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            let frac = (i + 1) as f64 / n;
            match points.last_mut() {
                Some(last) if last.0 == v => last.1 = frac,
                _ => points.push((v, frac)),
            }
        }
        Ok(Self { points, sorted })
    }

    /// Smallest threshold whose covered fraction reaches `q`.
    pub fn coverage_rmse(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.sorted[idx]
    }

    /// Fraction of grid points with RMSE at or below `threshold`.
    pub fn fraction_at(&self, threshold: f64) -> f64 {
        let k = self.sorted.partition_point(|&v| v <= threshold);
        k as f64 / self.sorted.len() as f64
    }
}

pub fn coverage_curve(h: &Heatmap) -> Result<CoverageCurve, ExperimentError> {
    CoverageCurve::from_values(&h.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Grs,
    Uav,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SjrRow {
    pub sjr_db: f64,
    pub variant: Variant,
    /// CRLB-derived UAV errors; `None` for the baseline.
    pub max_uav_error: Option<f64>,
    pub mean_uav_error: Option<f64>,
    pub coverage_60: f64,
    pub coverage_90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SjrSweep {
    pub axis: SweepAxis,
    pub grid_step: f64,
    pub rows: Vec<SjrRow>,
}

impl SjrSweep {
    pub fn rows_for(&self, variant: Variant) -> impl Iterator<Item = &SjrRow> {
        self.rows.iter().filter(move |r| r.variant == variant)
    }
}

/// Copy of `s` with the swept transmit power set to `P_J + sjr_db`.
pub fn with_sjr(s: &Scenario, axis: SweepAxis, sjr_db: f64) -> Scenario {
    let p = s.jammer.tx_power_ism + sjr_db;
    match axis {
        SweepAxis::Grs => s.with_grs_power(p),
        SweepAxis::Uav => s.with_uav_power(p),
    }
}

pub fn sweep_sjr(
    s: &Scenario,
    axis: SweepAxis,
    sjr_list: &[f64],
    variants: &[Variant],
    grid_step: f64,
) -> Result<SjrSweep, ExperimentError> {
    if sjr_list.is_empty() || sjr_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ExperimentError::InvalidInput(
            "SJR list must be non-empty and strictly increasing".into(),
        ));
    }
    let mut rows = Vec::new();
    for &sjr in sjr_list {
        let sc = with_sjr(s, axis, sjr);
        let links = LinkVariances::from_scenario(&sc)?;
        for &variant in variants {
            let uav = anchor_covariance(&sc, &links, variant)?.map(|q| max_and_mean_error(&q));
            let h = rmse_heatmap(&sc, variant, sc.uavs[0].j2v_condition, grid_step)?;
            let c = coverage_curve(&h)?;
            rows.push(SjrRow {
                sjr_db: sjr,
                variant,
                max_uav_error: uav.map(|u| u.0),
                mean_uav_error: uav.map(|u| u.1),
                coverage_60: c.coverage_rmse(0.6),
                coverage_90: c.coverage_rmse(0.9),
            });
        }
    }
    Ok(SjrSweep {
        axis,
        grid_step,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyScan {
    pub coverage_level: f64,
    pub start: f64,
    pub step: f64,
    pub threshold: f64,
    pub ceiling: f64,
    pub grid_step: f64,
}

impl Default for EnergyScan {
    fn default() -> Self {
        Self {
            coverage_level: 0.6,
            start: 20.0,
            step: 0.5,
            threshold: 0.15,
            ceiling: 40.0,
            grid_step: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyPower {
    pub power_dbm: f64,
    /// The scan reached the ceiling without the gain dropping below threshold.
    pub hit_ceiling: bool,
}

fn proposed_coverage(s: &Scenario, level: f64, grid_step: f64) -> Result<f64, ExperimentError> {
    let h = rmse_heatmap(s, Variant::Proposed, s.uavs[0].j2v_condition, grid_step)?;
    Ok(coverage_curve(&h)?.coverage_rmse(level))
}

/// Scans UAV power upward and returns the first power whose next step gains
/// less than `threshold` meters of coverage RMSE.
pub fn energy_efficient_power(
    s: &Scenario,
    scan: &EnergyScan,
) -> Result<EnergyPower, ExperimentError> {
    if !(scan.step > 0.0) || !(scan.coverage_level > 0.0 && scan.coverage_level < 1.0) {
        return Err(ExperimentError::InvalidInput(
            "power step must be positive and coverage level inside (0, 1)".into(),
        ));
    }
    let mut p = scan.start;
    let mut here = proposed_coverage(&s.with_uav_power(p), scan.coverage_level, scan.grid_step)?;
    while p + scan.step <= scan.ceiling + 1e-9 {
        let next = proposed_coverage(
            &s.with_uav_power(p + scan.step),
            scan.coverage_level,
            scan.grid_step,
        )?;
        if here - next < scan.threshold {
            return Ok(EnergyPower {
                power_dbm: p,
                hit_ceiling: false,
            });
        }
        p += scan.step;
        here = next;
    }
    Ok(EnergyPower {
        power_dbm: scan.ceiling,
        hit_ceiling: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub trials: usize,
    pub seed: u64,
    /// Multiplies every ToA standard deviation.
    pub noise_scale: f64,
    /// Standard deviation (m) of the ML starting point around the truth.
    pub init_sigma: f64,
    pub max_drift_ppm: f64,
    pub ue_xy: Option<Vector2<f64>>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: 2000,
            seed: 0,
            noise_scale: 1.0,
            init_sigma: 50.0,
            max_drift_ppm: DEFAULT_MAX_DRIFT_PPM,
            ue_xy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub failed_trials: usize,
    pub ue_xy: [f64; 2],
    pub uav_trace_empirical: f64,
    pub uav_trace_std_error: f64,
    pub uav_trace_theoretical: f64,
    /// Per-coordinate mean UAV error (m) and its standard error.
    pub uav_bias: Vec<f64>,
    pub uav_bias_std_error: Vec<f64>,
    pub ue_rmse_empirical: f64,
    pub ue_rmse_std_error: f64,
    pub ue_rmse_theoretical: f64,
    pub ue_max_abs_error: f64,
    pub uav_max_abs_error: f64,
}

struct TrialOutcome {
    uav_error: DVector<f64>,
    ue_error: Vector2<f64>,
}

fn run_trial(
    s: &Scenario,
    links: &LinkVariances,
    cfg: &MonteCarloConfig,
    ue_xy: Vector2<f64>,
    trial: usize,
) -> Option<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let n = s.num_uavs();
    let clocks = UavClocks::random(n, cfg.max_drift_ppm, &mut rng);
    let meas = MeasurementSet::sample(s, links, &clocks, cfg.noise_scale, &mut rng);
    let truth = UavStateVector::truth(s);
    let init = if cfg.init_sigma > 0.0 {
        let g = Normal::new(0.0, cfg.init_sigma).expect("positive sigma");
        UavStateVector(truth.0.map(|v| v + g.sample(&mut rng)))
    } else {
        truth.clone()
    };
    let est = ml_estimate(&meas, s, &init, &MlOptions::default()).ok()?;
    if !est.converged {
        return None;
    }
    let sync = sync_errors(&est.estimate, s, links, cfg.noise_scale, &mut rng);
    let d = sample_v2u_tdoa(s, links, ue_xy, &sync, cfg.noise_scale, &mut rng).ok()?;
    let ue = ils_estimate(&d, &est.estimate, s, s.target.center_xy()).ok()?;
    if !ue.converged {
        return None;
    }
    Some(TrialOutcome {
        uav_error: &est.estimate.0 - &truth.0,
        ue_error: ue.estimate - ue_xy,
    })
}

fn mean_and_se(samples: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = samples.clone().count() as f64;
    let mean = samples.clone().sum::<f64>() / n;
    let var = samples.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Full pipeline per trial: sampled measurements, ML self-localization, sync,
/// V2U sampling and ILS at `ue_xy` (target center by default). Trial `k`
/// draws from the ChaCha stream `k` of `seed`, so results are independent of
/// the worker count.
pub fn monte_carlo_validate(
    s: &Scenario,
    cfg: &MonteCarloConfig,
) -> Result<MonteCarloReport, ExperimentError> {
    if cfg.trials < 100 {
        return Err(ExperimentError::InvalidInput(format!(
            "at least 100 trials required, got {}",
            cfg.trials
        )));
    }
    let ue_xy = cfg.ue_xy.unwrap_or_else(|| s.target.center_xy());
    let links = LinkVariances::from_scenario(s)?;
    let bound = crlb(s, true, &links)?.crlb;
    let ue_theory = theoretical_rmse(ue_xy, s, &links, &bound, true)?.rmse;

    let outcomes: Vec<Option<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|k| run_trial(s, &links, cfg, ue_xy, k))
        .collect();
    let ok: Vec<&TrialOutcome> = outcomes.iter().flatten().collect();
    let failed = cfg.trials - ok.len();
    if failed as f64 > 0.02 * cfg.trials as f64 {
        return Err(ExperimentError::ExcessiveNonConvergence {
            failed,
            trials: cfg.trials,
        });
    }

    let dim = 2 * s.num_uavs();
    let (uav_trace, uav_trace_se) = mean_and_se(ok.iter().map(|t| t.uav_error.norm_squared()));
    let mut bias = Vec::with_capacity(dim);
    let mut bias_se = Vec::with_capacity(dim);
    for c in 0..dim {
        let (m, se) = mean_and_se(ok.iter().map(|t| t.uav_error[c]));
        bias.push(m);
        bias_se.push(se);
    }
    let (ue_mse, ue_mse_se) = mean_and_se(ok.iter().map(|t| t.ue_error.norm_squared()));
    let ue_rmse = ue_mse.sqrt();
    let ue_rmse_se = if ue_rmse > 0.0 {
        ue_mse_se / (2.0 * ue_rmse)
    } else {
        0.0
    };

    Ok(MonteCarloReport {
        trials: cfg.trials,
        failed_trials: failed,
        ue_xy: [ue_xy.x, ue_xy.y],
        uav_trace_empirical: uav_trace,
        uav_trace_std_error: uav_trace_se,
        uav_trace_theoretical: bound.trace(),
        uav_bias: bias,
        uav_bias_std_error: bias_se,
        ue_rmse_empirical: ue_rmse,
        ue_rmse_std_error: ue_rmse_se,
        ue_rmse_theoretical: ue_theory,
        ue_max_abs_error: ok.iter().map(|t| t.ue_error.amax()).fold(0.0, f64::max),
        uav_max_abs_error: ok.iter().map(|t| t.uav_error.amax()).fold(0.0, f64::max),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_heatmap_csv<W: Write>(h: &Heatmap, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_m", "y_m", "rmse_m"])?;
    for p in &h.points {
        w.write_record([p.x.to_string(), p.y.to_string(), fmt_opt(p.rmse)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coverage_csv<W: Write>(c: &CoverageCurve, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold_m", "fraction"])?;
    for (t, f) in &c.points {
        w.write_record([t.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one `(sjr_db, metric, value)` row per recorded quantity,
/// with metrics named `<variant>.<quantity>`.
pub fn write_sweep_csv<W: Write>(sweep: &SjrSweep, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sjr_db", "metric", "value"])?;
    for r in &sweep.rows {
        let mut metrics = vec![
            ("coverage_60_m", Some(r.coverage_60)),
            ("coverage_90_m", Some(r.coverage_90)),
        ];
        if r.max_uav_error.is_some() {
            metrics.insert(0, ("max_uav_error_m", r.max_uav_error));
            metrics.insert(1, ("mean_uav_error_m", r.mean_uav_error));
        }
        for (name, v) in metrics {
            w.write_record([
                r.sjr_db.to_string(),
                format!("{}.{}", r.variant, name),
                fmt_opt(v),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of the canonical JSON form of a scenario.
pub fn scenario_hash(s: &Scenario) -> String {
    hex::encode(Sha256::digest(s.to_json_pretty().as_bytes()))
}

/// Everything needed to re-run an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub scenario_sha256: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub scenario: Scenario,
}

impl RunManifest {
    pub fn new(
        command: &str,
        seed: u64,
        s: &Scenario,
        parameters: BTreeMap<String, serde_json::Value>,
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            scenario_sha256: scenario_hash(s),
            parameters,
            scenario: s.clone(),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), ExperimentError> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}
