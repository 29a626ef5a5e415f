use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dampplan_core::models::AdMode;
use dampplan_core::network::NodeId;

mod run;

/// Stability analysis and active-damper planning for multi-inverter networks.
///
/// Exit status: 0 stable (or a command without a verdict succeeded),
/// 2 unstable, 1 error.
#[derive(Debug, Parser)]
#[command(name = "damp-planner", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Network description (JSON).
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 10.0)]
    pub fmin: f64,

    #[arg(long, global = true, default_value_t = 2500.0)]
    pub fmax: f64,

    #[arg(long, global = true, default_value_t = 1.0)]
    pub df: f64,

    /// Damping margin in siemens.
    #[arg(long, global = true, default_value_t = dampplan_core::planner::DEFAULT_EPSILON)]
    pub epsilon: f64,

    /// Conductance step in siemens.
    #[arg(long, global = true, default_value_t = dampplan_core::planner::DEFAULT_DALPHA)]
    pub dalpha: f64,

    /// Damper node; defaults to the top-ranked node.
    #[arg(long, global = true)]
    pub node: Option<NodeId>,

    #[arg(long, global = true, default_value = "proposed")]
    pub ad_mode: AdMode,

    /// Damper voltage gain; calibrated from the plan when omitted.
    #[arg(long = "k-v", global = true)]
    pub k_v: Option<f64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Eigenvalue traces over the frequency grid.
    Sweep,
    /// Crossover table with verdicts.
    Criticals,
    /// Compensation coefficients and damper placement ranking.
    Rank,
    /// Conductance requirement at a node and damper calibration.
    Plan,
    /// Damper admittance curves.
    AdCurve {
        /// Parameter to vary: l_f, g or k_v.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values for --param.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Re-run the analysis with the damper installed.
    Verify,
    /// Write the built-in reference network file.
    Fixture {
        /// Target file; defaults to <out>/fixture.json.
        path: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run::execute(&cli) {
        Ok(run::Outcome::Stable) | Ok(run::Outcome::Done) => ExitCode::SUCCESS,
        Ok(run::Outcome::Unstable) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
