use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dpdlab::trainer::Algorithm;
use dpdlab_cli::{complexity_table, exit, run_experiment, ExperimentConfig, Overrides, RunError};

#[derive(Parser)]
#[command(name = "dpdlab", version, about = "Subarray DPD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the selected algorithms and write all artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for both the waveform and the PA population.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated algorithms: ff, lc_i, lc_ii, lc_iii, single.
        #[arg(long, value_delimiter = ',')]
        algos: Option<Vec<Algorithm>>,
    },
    /// List every violated invariant of a configuration file.
    Validate { config: PathBuf },
    /// Print the multiplier, adder and RF-chain counts of FF and LC.
    Complexity { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, RunError> {
    ExperimentConfig::load(path).map_err(RunError::Config)
}

fn code(e: &RunError) -> u8 {
    match e {
        RunError::Config(_) | RunError::Io(_) => exit::CONFIG,
        RunError::Diverged(_) => exit::DIVERGED,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            algos,
        } => load(&config).and_then(|cfg| {
            let cfg = Overrides {
                out,
                seed,
                algorithms: algos,
            }
            .apply(&cfg);
            let summary = run_experiment(&cfg)?;
            println!("wrote {}", summary.out_dir.display());
            for (alg, evm) in &summary.rows {
                let mean = evm.iter().sum::<f64>() / evm.len() as f64;
                println!("{:<8} mean EVM {mean:6.2} %", alg.name());
            }
            Ok(())
        }),
        Command::Validate { config } => load(&config).and_then(|cfg| {
            let issues = cfg.validate();
            if issues.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(RunError::Config(issues))
            }
        }),
        Command::Complexity { config } => load(&config).and_then(|cfg| {
            print!("{}", complexity_table(&cfg)?);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprint!("{e}");
            ExitCode::from(code(&e))
        }
    }
}
