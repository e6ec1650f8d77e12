mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wightman::verify::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(name = "wightman", version, about = "Wightman correlators of the harmonic and quartic anharmonic oscillator")]
pub struct Cli {
    /// Worker threads for the parallel integrations.
    #[arg(long, global = true, env = "WIGHTMAN_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the cumulant table of a state.
    Chi(ChiArgs),
    /// Evaluate correlators through a given order in the coupling.
    Correlator(CorrelatorArgs),
    /// Write the diagrams of one order, one file each.
    Diagrams(DiagramArgs),
    /// Run an acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct PhysicsArgs {
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hbar: f64,
    /// Quartic coupling in units of omega^3 / hbar.
    #[arg(long, default_value_t = 0.0)]
    pub lambda_rel: f64,
    /// Time at which the state is prepared.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t0: f64,
}

#[derive(Args, Debug, Clone)]
pub struct QuadArgs {
    #[arg(long, default_value_t = 32)]
    pub quad_nodes: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub quad_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Args, Debug)]
pub struct ChiArgs {
    /// State as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub state: String,
    #[arg(long, default_value_t = 4)]
    pub max_order: usize,
    /// Use the truncated Fock-space route even when a closed form exists.
    #[arg(long)]
    pub oracle: bool,
    /// For a thermal state, use the Gibbs state of the quartic Hamiltonian.
    #[arg(long)]
    pub interacting_thermal: bool,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CorrelatorArgs {
    #[arg(long)]
    pub state: String,
    /// Time tuples: commas within a tuple, semicolons between tuples.
    #[arg(long, allow_hyphen_values = true)]
    pub times: String,
    /// Highest order in the coupling.
    #[arg(long, default_value_t = 0)]
    pub order: usize,
    /// Also evaluate the exact truncated Fock-space correlator.
    #[arg(long)]
    pub compare_oracle: bool,
    #[arg(long)]
    pub interacting_thermal: bool,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagramArgs {
    /// Number of external points.
    #[arg(long, short = 'n')]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub order: usize,
    /// Evaluate each diagram for this state; needs --times.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub times: Option<String>,
    /// Keep connected diagrams only.
    #[arg(long)]
    pub connected: bool,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[arg(long, value_enum, default_value_t = Format::Dot)]
    pub format: Format,
    /// Output directory.
    #[arg(long, default_value = "diagrams")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// transforms, free, perturbation, diagrams or all.
    #[arg(default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
