use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jumpsense_cli::{run, CliError, Command, ExperimentSpec};

#[derive(Parser)]
#[command(name = "jumpsense", about = "Photodetection-assisted sensing experiments")]
struct Args {
    #[command(subcommand)]
    command: Option<Cmd>,
    /// Experiment spec (TOML); defaults are used for missing keys.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the spec seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the spec thread count (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Prints the fully defaulted spec and exits.
    #[arg(long)]
    print_defaults: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Ensemble of quantum-jump trajectories.
    Trajectory,
    /// Deterministic master-equation curves.
    Master,
    /// Delayed-correction model curves and fits.
    Analytic,
    /// Correctability report for a code.
    Klcheck,
    /// Loss sweep of decay and frequency.
    Table1,
    /// Delayed-correction curves at the default parameters.
    Fig2,
    /// Scaling of the optimal uncertainty with total time.
    Sensitivity,
}

fn load(args: &Args) -> Result<ExperimentSpec, CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("spec {}: {e}", path.display())))?;
            ExperimentSpec::from_toml(&text)?
        }
        None => ExperimentSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(t) = args.threads {
        spec.threads = t;
    }
    Ok(spec)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.print_defaults {
        print!("{}", ExperimentSpec::default().to_toml());
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = args.command else {
        eprintln!("no subcommand given (see --help)");
        return ExitCode::from(1);
    };
    let command = match cmd {
        Cmd::Trajectory => Command::Trajectory,
        Cmd::Master => Command::Master,
        Cmd::Analytic => Command::Analytic,
        Cmd::Klcheck => Command::Klcheck,
        Cmd::Table1 => Command::Table1,
        Cmd::Fig2 => Command::Fig2,
        Cmd::Sensitivity => Command::Sensitivity,
    };
    match load(&args).and_then(|spec| run(command, &spec, &args.out)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("jumpsense {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
