use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ksd::data::{generate_curves, write_idx_images};
use ksd::harness::{parse_config, run_experiment, selftest};
use ksd::KsdError;

#[derive(Parser)]
#[command(name = "ksd", version, about = "Krylov Subspace Descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Write a synthetic curves dataset as an IDX image file.
    GenCurves {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 28)]
        resolution: usize,
    },
    /// Check gradients and curvature products against reference oracles.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(err: &KsdError) -> ExitCode {
    if err.is_numerical() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn run(command: Command) -> Result<ExitCode, KsdError> {
    match command {
        Command::Run { config } => {
            let cfg = parse_config(&config)?;
            let outcome = run_experiment(&cfg)?;
            println!("{}", outcome.summary);
            if let Some(path) = &cfg.csv_out {
                println!("convergence CSV: {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenCurves { out_dir, samples, seed, resolution } => {
            if samples == 0 || resolution == 0 {
                return Err(KsdError::InvalidInput("samples and resolution must be positive".into()));
            }
            std::fs::create_dir_all(&out_dir)?;
            let data = generate_curves(samples, resolution, seed);
            let path = out_dir.join("curves-images-idx3-ubyte");
            write_idx_images(&path, resolution, resolution, data.inputs())?;
            println!("wrote {samples} curves to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { seed } => {
            let checks = selftest::run_all(seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{c}");
                ok &= c.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
