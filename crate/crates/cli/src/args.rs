use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "lme",
    version,
    about = "Dispatch, locational marginal emissions and carbon accounting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Subcommand)]
pub enum Command {
    /// Load and validate a network file.
    Validate,
    /// Cost-optimal dispatch with nodal prices.
    Dispatch,
    /// Nodal LMEs and line SCIs.
    Lme,
    /// Carbon ledger and footprint residual.
    Accounts,
    /// Replay a scenario period by period and aggregate.
    Scenario,
    /// Windowed multi-period solves with storage.
    Storage,
    /// Run the verification checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Network JSON file.
    #[arg(long, global = true, env = "LME_NETWORK")]
    pub network: Option<PathBuf>,
    /// Demand file: `node_id,demand_mw` for single-period commands, a
    /// scenario CSV for `scenario`, a horizon CSV for `storage`.
    #[arg(long, global = true, env = "LME_DEMAND")]
    pub demand: Option<PathBuf>,
    /// `period,generator_id,capacity_factor` file for `storage`.
    #[arg(long, global = true, env = "LME_CAPACITY_FACTORS")]
    pub capacity_factors: Option<PathBuf>,
    /// Relative tolerance for identities and checks.
    #[arg(long, global = true, env = "LME_TOL", default_value_t = 1e-6)]
    pub tol: f64,
    /// Override the network's reference node.
    #[arg(long, global = true, env = "LME_REF_NODE")]
    pub ref_node: Option<String>,
    /// Periods per multi-period solve.
    #[arg(long, global = true, env = "LME_WINDOW", default_value_t = 24, value_parser = clap::value_parser!(u64).range(1..))]
    pub window: u64,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true, env = "LME_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "LME_FORMAT", value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for scenario replay; 0 uses every core.
    #[arg(long, global = true, env = "LME_WORKERS", default_value_t = 0)]
    pub workers: usize,
    /// Hour-of-day bucket length for scenario aggregation.
    #[arg(long, global = true, env = "LME_PERIODS_PER_DAY", default_value_t = 24, value_parser = clap::value_parser!(u64).range(1..))]
    pub periods_per_day: u64,
    /// Round-trip efficiency for storage units that omit `efficiency`.
    #[arg(long, global = true, env = "LME_EFFICIENCY", default_value_t = 0.81)]
    pub efficiency: f64,
    /// Accept negative nodal demand.
    #[arg(long, global = true, env = "LME_ALLOW_NEGATIVE_DEMAND")]
    pub allow_negative_demand: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Args)]
pub struct VerifyArgs {
    /// Skip the finite-difference comparison.
    #[arg(long)]
    pub no_finite_differences: bool,
    /// Also verify this many random networks.
    #[arg(long, default_value_t = 0)]
    pub random: u64,
    /// First seed of the random networks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true, env = "LME_INJECT_DUAL_OFFSET", default_value_t = 0.0)]
    pub inject_dual_offset: f64,
}
