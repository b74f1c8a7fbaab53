mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rfsplat_core::train::Stage;

#[derive(Parser, Debug)]
#[command(name = "rfsplat", version, about = "RF radiance fields from power angular spectra")]
struct Cli {
    /// Worker threads; falls back to RFSPLAT_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trace a scene and write its PAS dataset.
    Simulate(SimulateArgs),
    /// Fit a model to a dataset.
    Train(TrainArgs),
    /// Score a checkpoint and draw PAS panels.
    Eval(EvalArgs),
    /// Run the theory battery.
    Theory(TheoryArgs),
    /// Two-stage fits with the person's material swapped.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scene JSON file or the name of a bundled scene.
    pub scene: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the train/test split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Copies of each static sample for the duplicated baseline.
    #[arg(long, default_value_t = 1)]
    pub duplicate: usize,
    #[arg(long)]
    pub static_only: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Stage1,
    Stage2,
    E2e,
    BaselineStatic,
    BaselineDuplicated,
    BaselineAugmented,
}

impl Mode {
    pub fn stage(self) -> Stage {
        match self {
            Mode::Stage1 => Stage::Stage1,
            Mode::Stage2 => Stage::Stage2,
            Mode::E2e => Stage::EndToEnd,
            Mode::BaselineStatic => Stage::BaselineStatic,
            Mode::BaselineDuplicated => Stage::BaselineDuplicated,
            Mode::BaselineAugmented => Stage::BaselineAugmented,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Training config JSON; unspecified fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub from_stage1: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps per row of the curves file.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Static,
    Dynamic,
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of ground truth | prediction | difference panels to draw.
    #[arg(long, default_value_t = 4)]
    pub panels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Battery {
    All,
    Verify,
    Modes,
    Budget,
    Gain,
    Correlation,
    Fim,
    Quadratic,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    #[arg(value_enum, default_value = "all")]
    pub battery: Battery,
    #[arg(long)]
    pub out: PathBuf,
    /// Mode-reduction parameters as JSON.
    #[arg(long)]
    pub modes_config: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub instances: u64,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long, default_value = "bedroom")]
    pub scene: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "human,metal,concrete")]
    pub materials: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub stage1_iterations: usize,
    #[arg(long, default_value_t = 1000)]
    pub stage2_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn init_threads(cli: Option<usize>) -> anyhow::Result<usize> {
    let env = std::env::var("RFSPLAT_THREADS").ok();
    let n = match (cli, env) {
        (Some(n), _) => n,
        (None, Some(v)) => v
            .parse()
            .map_err(|_| rfsplat_core::Error::Config(format!("RFSPLAT_THREADS must be a number, got '{v}'")))?,
        (None, None) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| rfsplat_core::Error::Config(e.to_string()))?;
    Ok(rayon::current_num_threads())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<rfsplat_core::Error>()) {
        Some(e) if e.is_numeric() => 3,
        Some(_) => 2,
        None if err.chain().any(|e| e.is::<serde_json::Error>()) => 2,
        None => 1,
    }
}

fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain().map(|c| c.to_string()) {
        if !out.contains(&cause) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&cause);
        }
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = init_threads(cli.threads)?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a, threads),
        Command::Train(a) => commands::train(&a, threads),
        Command::Eval(a) => commands::eval(&a, threads),
        Command::Theory(a) => commands::theory(&a, threads),
        Command::Ablate(a) => commands::ablate(&a, threads),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
