//! Command implementations behind the `antijam` binary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use antijam::experiments::{
    coverage_curve, energy_efficient_power, monte_carlo_validate, rmse_heatmap, sweep_sjr,
    write_coverage_csv, write_heatmap_csv, write_sweep_csv, EnergyScan, ExperimentError,
    MonteCarloConfig, RunManifest, SweepAxis, Variant,
};
use antijam::measurement::{
    g2v_labels, v2v_labels, MeasurementSet, UavClocks, DEFAULT_MAX_DRIFT_PPM,
};
use antijam::scenario::{
    canonical_scenario, validate_scenario, LinkCondition, Scenario, ScenarioError,
};
use antijam::selfloc::crlb;
use antijam::LinkVariances;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Canonical,
    Crlb,
    Heatmap,
    Coverage,
    SweepGrsSjr,
    SweepUavSjr,
    EnergyPower,
    MonteCarlo,
    Measurements,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Canonical => "canonical",
            Command::Crlb => "crlb",
            Command::Heatmap => "heatmap",
            Command::Coverage => "coverage",
            Command::SweepGrsSjr => "sweep-grs-sjr",
            Command::SweepUavSjr => "sweep-uav-sjr",
            Command::EnergyPower => "energy-power",
            Command::MonteCarlo => "monte-carlo",
            Command::Measurements => "measurements",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepRange {
    /// Inclusive list `start, start + step, ..., <= stop`.
    pub fn values(&self) -> Vec<f64> {
        if self.step.is_nan() || self.step <= 0.0 || self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `None` selects the built-in canonical scenario.
    pub scenario_path: Option<PathBuf>,
    pub command: Command,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub trials: usize,
    pub grid_step: f64,
    pub variant: Variant,
    /// Overrides every UAV's J2V condition when set.
    pub j2v: Option<LinkCondition>,
    pub sweep: SweepRange,
    pub coverage_level: f64,
    pub noise_scale: f64,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            scenario_path: None,
            command,
            output_dir: PathBuf::from("out"),
            seed: 0,
            trials: 2000,
            grid_step: 10.0,
            variant: Variant::Proposed,
            j2v: None,
            sweep: SweepRange {
                start: 5.0,
                stop: 25.0,
                step: 5.0,
            },
            coverage_level: 0.6,
            noise_scale: 1.0,
        }
    }

    /// Makes every path absolute against the current directory.
    pub fn resolved(mut self) -> std::io::Result<Self> {
        if let Some(p) = &self.scenario_path {
            self.scenario_path = Some(std::path::absolute(p)?);
        }
        self.output_dir = std::path::absolute(&self.output_dir)?;
        Ok(self)
    }

    fn parameters(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        m.insert(
            "scenario_path".into(),
            json!(self.scenario_path.as_ref().map(|p| p.display().to_string())),
        );
        m.insert("trials".into(), json!(self.trials));
        m.insert("grid_step_m".into(), json!(self.grid_step));
        m.insert("variant".into(), json!(self.variant.as_str()));
        m.insert("j2v".into(), json!(self.j2v.map(|c| c.to_string())));
        m.insert(
            "sjr_db".into(),
            json!({"start": self.sweep.start, "stop": self.sweep.stop, "step": self.sweep.step}),
        );
        m.insert("coverage_level".into(), json!(self.coverage_level));
        m.insert("noise_scale".into(), json!(self.noise_scale));
        m
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("scenario is invalid: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable report for stderr.
    pub fn report(&self) -> Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Validation(items) = self {
            v["violations"] = json!(items);
        }
        v
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid(report) => CliError::Validation(report.messages()),
            ScenarioError::Io(e) => CliError::Parse(format!("cannot read scenario: {e}")),
            ScenarioError::Parse(e) => CliError::Parse(format!("cannot parse scenario: {e}")),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Scenario(s) => s.into(),
            ExperimentError::Io(io) => CliError::Io(io),
            ExperimentError::InvalidInput(msg) => CliError::Usage(msg),
            other if other.is_numerical() => CliError::Numerical(other.to_string()),
            other => CliError::Io(std::io::Error::other(other.to_string())),
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn load_scenario(cfg: &RunConfig) -> Result<Scenario, CliError> {
    let s = match &cfg.scenario_path {
        Some(p) => Scenario::load(p)?,
        None => canonical_scenario(),
    };
    Ok(match cfg.j2v {
        Some(c) => s.with_j2v(c),
        None => s,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn finish(mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush()?;
    Ok(())
}

/// Executes one command, writing artifacts into the output directory, and
/// returns a JSON summary for stdout.
pub fn run(cfg: &RunConfig) -> Result<Value, CliError> {
    if cfg.command == Command::Validate {
        let s = match &cfg.scenario_path {
            Some(p) => Scenario::parse_json_unchecked(
                &fs::read_to_string(p)
                    .map_err(|e| CliError::Parse(format!("cannot read scenario: {e}")))?,
            )?,
            None => canonical_scenario(),
        };
        let report = validate_scenario(&s);
        if !report.is_ok() {
            return Err(CliError::Validation(report.messages()));
        }
        return Ok(json!({"command": "validate", "valid": true}));
    }

    let s = load_scenario(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut outputs = vec!["manifest.json".to_string()];
    let mut summary = serde_json::Map::new();

    match cfg.command {
        Command::Validate => unreachable!(),
        Command::Canonical => {
            let mut w = create(dir, "scenario.json")?;
            w.write_all(s.to_json_pretty().as_bytes())?;
            w.write_all(b"\n")?;
            finish(w)?;
            outputs.push("scenario.json".into());
        }
        Command::Crlb => {
            let use_v2v = match cfg.variant {
                Variant::Proposed => true,
                Variant::NoV2v => false,
                Variant::Conventional => {
                    return Err(CliError::Usage(
                        "the conventional baseline has no UAV bound".into(),
                    ))
                }
            };
            let lv = LinkVariances::from_scenario(&s).map_err(numerical)?;
            let b = crlb(&s, use_v2v, &lv).map_err(numerical)?.crlb;
            let mut w = create(dir, "crlb.csv")?;
            writeln!(w, "uav,x_std_m,y_std_m")?;
            for n in 0..s.num_uavs() {
                writeln!(
                    w,
                    "{},{},{}",
                    n + 1,
                    b[(2 * n, 2 * n)].sqrt(),
                    b[(2 * n + 1, 2 * n + 1)].sqrt()
                )?;
            }
            finish(w)?;
            let mut w = create(dir, "crlb_matrix.csv")?;
            writeln!(w, "row,col,value_m2")?;
            for r in 0..b.nrows() {
                for c in 0..b.ncols() {
                    writeln!(w, "{r},{c},{}", b[(r, c)])?;
                }
            }
            finish(w)?;
            outputs.extend(["crlb.csv".into(), "crlb_matrix.csv".into()]);
            let (max, mean) = antijam::selfloc::max_and_mean_error(&b);
            summary.insert("trace_m2".into(), json!(b.trace()));
            summary.insert("max_uav_error_m".into(), json!(max));
            summary.insert("mean_uav_error_m".into(), json!(mean));
        }
        Command::Heatmap | Command::Coverage => {
            let j2v = cfg.j2v.unwrap_or(s.uavs[0].j2v_condition);
            let h = rmse_heatmap(&s, cfg.variant, j2v, cfg.grid_step)?;
            summary.insert("points".into(), json!(h.points.len()));
            summary.insert("failed_points".into(), json!(h.failures()));
            summary.insert("max_rmse_m".into(), json!(h.max_rmse()));
            if cfg.command == Command::Heatmap {
                let w = create(dir, "heatmap.csv")?;
                write_heatmap_csv(&h, w)?;
                outputs.push("heatmap.csv".into());
            } else {
                let c = coverage_curve(&h)?;
                let w = create(dir, "coverage.csv")?;
                write_coverage_csv(&c, w)?;
                outputs.push("coverage.csv".into());
                summary.insert("coverage_60_m".into(), json!(c.coverage_rmse(0.6)));
                summary.insert("coverage_90_m".into(), json!(c.coverage_rmse(0.9)));
            }
        }
        Command::SweepGrsSjr | Command::SweepUavSjr => {
            let (axis, name) = if cfg.command == Command::SweepGrsSjr {
                (SweepAxis::Grs, "sweep_grs_sjr.csv")
            } else {
                (SweepAxis::Uav, "sweep_uav_sjr.csv")
            };
            let sweep = sweep_sjr(&s, axis, &cfg.sweep.values(), &Variant::ALL, cfg.grid_step)?;
            let w = create(dir, name)?;
            write_sweep_csv(&sweep, w)?;
            outputs.push(name.into());
            summary.insert("rows".into(), json!(sweep.rows.len()));
        }
        Command::EnergyPower => {
            let scan = EnergyScan {
                coverage_level: cfg.coverage_level,
                grid_step: cfg.grid_step,
                ..EnergyScan::default()
            };
            let r = energy_efficient_power(&s, &scan)?;
            let mut w = create(dir, "energy_power.json")?;
            serde_json::to_writer_pretty(&mut w, &r).map_err(|e| CliError::Io(e.into()))?;
            w.write_all(b"\n")?;
            finish(w)?;
            outputs.push("energy_power.json".into());
            summary.insert("power_dbm".into(), json!(r.power_dbm));
            summary.insert("hit_ceiling".into(), json!(r.hit_ceiling));
        }
        Command::MonteCarlo => {
            let mc = MonteCarloConfig {
                trials: cfg.trials,
                seed: cfg.seed,
                noise_scale: cfg.noise_scale,
                ..MonteCarloConfig::default()
            };
            let r = monte_carlo_validate(&s, &mc)?;
            let mut w = create(dir, "monte_carlo.json")?;
            serde_json::to_writer_pretty(&mut w, &r).map_err(|e| CliError::Io(e.into()))?;
            w.write_all(b"\n")?;
            finish(w)?;
            outputs.push("monte_carlo.json".into());
            summary.insert("ue_rmse_empirical_m".into(), json!(r.ue_rmse_empirical));
            summary.insert("ue_rmse_theoretical_m".into(), json!(r.ue_rmse_theoretical));
            summary.insert("failed_trials".into(), json!(r.failed_trials));
        }
        Command::Measurements => {
            let lv = LinkVariances::from_scenario(&s).map_err(numerical)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let clocks = UavClocks::random(s.num_uavs(), DEFAULT_MAX_DRIFT_PPM, &mut rng);
            let m = MeasurementSet::sample(&s, &lv, &clocks, cfg.noise_scale, &mut rng);
            let mut w = create(dir, "measurements.csv")?;
            writeln!(w, "kind,uav,peer,value_m,variance_m2")?;
            for (k, &(n, g)) in g2v_labels(&s).iter().enumerate() {
                writeln!(
                    w,
                    "g2v_tdoa,{},{},{},{}",
                    n + 1,
                    g + 1,
                    m.tdoa_g2v[k],
                    m.cov_g2v[(k, k)]
                )?;
            }
            for (k, &(n, i)) in v2v_labels(&s).iter().enumerate() {
                writeln!(
                    w,
                    "v2v_range,{},{},{},{}",
                    n + 1,
                    i + 1,
                    m.range_v2v[k],
                    m.cov_v2v[(k, k)]
                )?;
            }
            finish(w)?;
            outputs.push("measurements.csv".into());
        }
    }

    let manifest = RunManifest::new(cfg.command.name(), cfg.seed, &s, cfg.parameters());
    let w = create(dir, "manifest.json")?;
    manifest.write(w)?;

    summary.insert("command".into(), json!(cfg.command.name()));
    summary.insert("output_dir".into(), json!(dir.display().to_string()));
    summary.insert("outputs".into(), json!(outputs));
    Ok(Value::Object(summary))
}
