//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swarm_forecast::pipeline::{ClusteringMode, GoalSource};

#[derive(Debug, Parser)]
#[command(
    name = "swarm-forecast",
    version,
    about = "Cluster-based multi-agent motion prediction"
)]
pub struct Cli {
    /// Worker threads for parallel sections [default: available cores]
    #[arg(long, global = true, env = "SWARM_FORECAST_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a Trajnet++ ndjson file into canonical scene CSVs
    Convert(ConvertArgs),
    /// Simulate a synthetic scene from a JSON group specification
    Synth(SynthArgs),
    /// Run cluster prediction over a scene and write the run artifacts
    Predict(PredictArgs),
    /// Run prediction and score it against the scene truth
    Eval(PredictArgs),
    /// Compare cost-distance clustering with the Euclidean density baseline
    Compare(CompareArgs),
    /// Sweep the cost weight lambda1 (lambda2 = 1 - lambda1)
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Trajnet++ ndjson file
    pub input: PathBuf,
    /// Output directory; one `<scene_id>.csv` per scene
    #[arg(long)]
    pub out: PathBuf,
    /// Time between consecutive frame steps (s)
    #[arg(long, default_value_t = swarm_forecast::io::TRAJNET_DT)]
    pub frame_interval: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON specification: {"scene_id", "groups": [{count, start_min, start_max, goal, speed}], "seed", "duration", "dt"}
    pub spec: PathBuf,
    /// Output directory; writes `<scene_id>.csv` and `<scene_id>.goals.csv`
    #[arg(long)]
    pub out: PathBuf,
    /// Generator seed, replacing the one in the specification
    #[arg(long)]
    pub synth_seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy)]
pub enum Stride {
    Every(usize),
    Never,
}

pub fn parse_stride(s: &str) -> Result<Stride, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Stride::Never);
    }
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(Stride::Every(n)),
        _ => Err("stride must be ≥ 1 or 'none'".into()),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Cost-distance pairing and complete-linkage merging
    Cd,
    /// Euclidean density baseline
    Ed,
}

impl From<ModeArg> for ClusteringMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cd => ClusteringMode::CostDistance,
            ModeArg::Ed => ClusteringMode::EuclideanDensity,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GoalArg {
    /// Goals file, falling back to each agent's final truth position
    Provided,
    /// Final truth position of every agent
    FinalTruth,
    /// Constant-velocity extrapolation over the cost horizon
    Extrapolated,
}

impl From<GoalArg> for GoalSource {
    fn from(g: GoalArg) -> Self {
        match g {
            GoalArg::Provided => GoalSource::Provided,
            GoalArg::FinalTruth => GoalSource::FinalTruth,
            GoalArg::Extrapolated => GoalSource::Extrapolated,
        }
    }
}

/// Scene input and run options shared by the prediction commands.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Time between consecutive frame steps of the scene CSV (s)
    #[arg(long, default_value_t = swarm_forecast::io::TRAJNET_DT)]
    pub frame_interval: f64,
    /// Measurements every N frames (N ≥ 1), or 'none' for open-loop prediction
    #[arg(long, value_name = "N|none", default_value = "1", value_parser = parse_stride)]
    pub stride: Stride,
    /// Clustering rule
    #[arg(long, value_enum, default_value_t = ModeArg::Cd)]
    pub mode: ModeArg,
    /// Source of agent goals
    #[arg(long, value_enum, default_value_t = GoalArg::Provided)]
    pub goal_source: GoalArg,
    /// Use exact truth positions as measurements
    #[arg(long)]
    pub no_measurement_noise: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Scene CSV (`scene_id,frame,agent_id,x,y[,vx,vy]`)
    pub scene: PathBuf,
    /// Goals CSV (`agent_id,gx,gy`) [default: `<scene>.goals.csv` next to the scene, if present]
    #[arg(long)]
    pub goals: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Density raster cells per axis over the scene extent; 0 disables the export
    #[arg(long, default_value_t = 40)]
    pub grid_cells: usize,
    /// Padding around the scene extent for the density raster (m)
    #[arg(long, default_value_t = 2.0)]
    pub grid_margin: f64,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scene CSVs; `<scene>.goals.csv` next to each is used when present
    #[arg(required = true)]
    pub scenes: Vec<PathBuf>,
    /// Output directory; writes `comparison.csv` and `comparison.txt`
    #[arg(long)]
    pub out: PathBuf,
    /// Timed repetitions per arm; the median wall clock is reported
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
    /// Time between consecutive frame steps of the scene CSVs (s)
    #[arg(long, default_value_t = swarm_forecast::io::TRAJNET_DT)]
    pub frame_interval: f64,
    /// Measurements every N frames (N ≥ 1), or 'none' for open-loop prediction
    #[arg(long, value_name = "N|none", default_value = "1", value_parser = parse_stride)]
    pub stride: Stride,
    /// Source of agent goals
    #[arg(long, value_enum, default_value_t = GoalArg::Provided)]
    pub goal_source: GoalArg,
    /// Use exact truth positions as measurements
    #[arg(long)]
    pub no_measurement_noise: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scene CSV
    pub scene: PathBuf,
    /// Goals CSV [default: `<scene>.goals.csv` next to the scene, if present]
    #[arg(long)]
    pub goals: Option<PathBuf>,
    /// Output directory; writes one `timeline_lambda1_<value>.csv` per grid point
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated lambda1 values in [0, 1] (dimensionless)
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.7,1")]
    pub lambdas: Vec<f64>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// A JSON configuration file plus per-field overrides.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// JSON configuration; missing keys take defaults, unknown keys are rejected
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Position gain K_p, negative (1/s²)
    #[arg(long)]
    pub k_p: Option<f64>,
    /// Velocity gain K_v, negative (1/s)
    #[arg(long)]
    pub k_v: Option<f64>,
    /// Social-force magnitude A_int (m/s²)
    #[arg(long)]
    pub a_int: Option<f64>,
    /// Social-force range B_int (m)
    #[arg(long)]
    pub b_int: Option<f64>,
    /// Distance threshold for clustering (m)
    #[arg(long)]
    pub d_tol: Option<f64>,
    /// Cost threshold for clustering (m²/s³)
    #[arg(long)]
    pub c_tol: Option<f64>,
    /// Interaction cut-off distance (m)
    #[arg(long)]
    pub d_int_tol: Option<f64>,
    /// Weight of the agent-to-agent cost (dimensionless)
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the agent-to-goal cost (dimensionless)
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Horizon of the cost problems (s)
    #[arg(long)]
    pub t_f_cost: Option<f64>,
    /// Integration step of the dynamics (s)
    #[arg(long)]
    pub dt: Option<f64>,
    /// Initial singleton position standard deviation (m)
    #[arg(long)]
    pub sigma_p: Option<f64>,
    /// Initial singleton velocity standard deviation (m/s)
    #[arg(long)]
    pub sigma_v: Option<f64>,
    /// Sigma-point spread alpha (dimensionless)
    #[arg(long)]
    pub ukf_alpha: Option<f64>,
    /// Sigma-point prior weight beta (dimensionless)
    #[arg(long)]
    pub ukf_beta: Option<f64>,
    /// Sigma-point secondary scaling kappa (dimensionless)
    #[arg(long)]
    pub ukf_kappa: Option<f64>,
    /// Position measurement noise standard deviation (m)
    #[arg(long)]
    pub meas_noise_std: Option<f64>,
    /// Process noise standard deviation on position (m)
    #[arg(long)]
    pub proc_noise_pos: Option<f64>,
    /// Process noise standard deviation on velocity (m/s)
    #[arg(long)]
    pub proc_noise_vel: Option<f64>,
    /// Agent radius used by the social force (m)
    #[arg(long)]
    pub radius_default: Option<f64>,
    /// Missed observation steps tolerated before an agent is deleted (steps)
    #[arg(long)]
    pub deletion_grace: Option<usize>,
    /// Seed of the synthetic measurement noise
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use positions only when choosing the farthest cross-cluster pair
    #[arg(long)]
    pub farthest_pair_positions_only: bool,
    /// Divide the measurement noise variance by the number of observed members
    #[arg(long)]
    pub scale_meas_noise_by_members: bool,
}
