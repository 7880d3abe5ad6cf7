use std::path::PathBuf;
use std::process::ExitCode;

use antijam::experiments::Variant;
use antijam::scenario::LinkCondition;
use antijam_cli::{run, CliError, Command, RunConfig, SweepRange};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "antijam",
    version,
    about = "UAV-assisted positioning under jamming: bounds, heatmaps and Monte Carlo runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Scenario JSON file; the built-in canonical scenario when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Monte Carlo trials.
    #[arg(long, global = true, default_value_t = 2000)]
    trials: usize,

    /// Target-area grid spacing (m).
    #[arg(long, global = true, default_value_t = 10.0)]
    grid_step: f64,

    #[arg(long, global = true, value_enum, default_value_t = VariantArg::Proposed)]
    variant: VariantArg,

    /// Override the jammer-to-UAV link condition of every UAV.
    #[arg(long, global = true, value_enum)]
    j2v: Option<J2vArg>,

    /// First SJR (dB) of a sweep.
    #[arg(long, global = true, default_value_t = 5.0)]
    sjr_start: f64,

    /// Last SJR (dB) of a sweep, inclusive.
    #[arg(long, global = true, default_value_t = 25.0)]
    sjr_stop: f64,

    #[arg(long, global = true, default_value_t = 5.0)]
    sjr_step: f64,

    /// Service coverage level for energy-power.
    #[arg(long, global = true, default_value_t = 0.6)]
    coverage_level: f64,

    /// Multiplier on every ToA standard deviation in sampled runs.
    #[arg(long, global = true, default_value_t = 1.0)]
    noise_scale: f64,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Check a scenario against all constraints.
    Validate,
    /// Write the canonical scenario as JSON.
    Canonical,
    /// UAV self-localization CRLB.
    Crlb,
    /// UE RMSE over the target grid.
    Heatmap,
    /// Service coverage curve of the RMSE heatmap.
    Coverage,
    /// Sweep GRS transmit power expressed as SJR.
    SweepGrsSjr,
    /// Sweep UAV transmit power expressed as SJR.
    SweepUavSjr,
    /// Smallest UAV power beyond which coverage RMSE gains flatten.
    EnergyPower,
    /// Sampled end-to-end pipeline against the closed-form bounds.
    MonteCarlo,
    /// Dump one sampled set of G2V/V2V measurements.
    Measurements,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum VariantArg {
    Proposed,
    NoV2v,
    Conventional,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum J2vArg {
    Los,
    Nlos,
}

impl Cli {
    fn into_config(self) -> RunConfig {
        let command = match self.command {
            Cmd::Validate => Command::Validate,
            Cmd::Canonical => Command::Canonical,
            Cmd::Crlb => Command::Crlb,
            Cmd::Heatmap => Command::Heatmap,
            Cmd::Coverage => Command::Coverage,
            Cmd::SweepGrsSjr => Command::SweepGrsSjr,
            Cmd::SweepUavSjr => Command::SweepUavSjr,
            Cmd::EnergyPower => Command::EnergyPower,
            Cmd::MonteCarlo => Command::MonteCarlo,
            Cmd::Measurements => Command::Measurements,
        };
        RunConfig {
            scenario_path: self.scenario,
            command,
            output_dir: self.out,
            seed: self.seed,
            trials: self.trials,
            grid_step: self.grid_step,
            variant: match self.variant {
                VariantArg::Proposed => Variant::Proposed,
                VariantArg::NoV2v => Variant::NoV2v,
                VariantArg::Conventional => Variant::Conventional,
            },
            j2v: self.j2v.map(|c| match c {
                J2vArg::Los => LinkCondition::Los,
                J2vArg::Nlos => LinkCondition::Nlos,
            }),
            sweep: SweepRange {
                start: self.sjr_start,
                stop: self.sjr_stop,
                step: self.sjr_step,
            },
            coverage_level: self.coverage_level,
            noise_scale: self.noise_scale,
        }
    }
}

fn main() -> ExitCode {
    let cfg = Cli::parse().into_config();
    let result = cfg
        .resolved()
        .map_err(CliError::from)
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
