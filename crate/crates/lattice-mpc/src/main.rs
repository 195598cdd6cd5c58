use clap::{Parser, Subcommand};
use lattice_mpc::config::RunConfig;
use lattice_mpc::error::Error;
use lattice_mpc::pipeline;
use std::path::PathBuf;
use std::process::ExitCode;

/// Lattice piecewise-affine approximation of linear MPC control laws,
/// benchmarked on a nonlinear satellite attitude-control plant.
#[derive(Parser)]
#[command(name = "lattice-mpc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the worked two-dimensional example end to end and verify the
    /// recovered literals and term structure.
    Example1 {
        /// Output directory for the trajectory CSV.
        #[arg(long, default_value = "out/example1")]
        out_dir: PathBuf,
    },
    /// Full pipeline from a JSON config: condense, sample, build the
    /// lattice, simulate all controllers, compare.
    Pipeline {
        /// Path to the run configuration.
        config: PathBuf,
    },
    /// Re-run only the closed-loop comparison against a lattice file
    /// built by a previous `pipeline` run.
    Bench { config: PathBuf },
    /// Split a simulation CSV into plot-ready series (body rates, wheel
    /// speeds, torques, Euler angles).
    Plotdata {
        sim_csv: PathBuf,
        #[arg(long, default_value = "out/plots")]
        out_dir: PathBuf,
    },
    /// Write the default satellite configuration to stdout.
    PrintConfig,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::VersionMismatch { .. } => {
            2
        }
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<u8, Error> = match cli.command {
        Command::Example1 { out_dir } => pipeline::cmd_example1(&out_dir).map(|report| {
            if report.failures.is_empty() {
                0
            } else {
                4
            }
        }),
        Command::Pipeline { config } => pipeline::cmd_pipeline(&config).map(|dir| {
            println!("artifacts written to {}", dir.display());
            0
        }),
        Command::Bench { config } => pipeline::cmd_bench(&config).map(|_| 0),
        Command::Plotdata { sim_csv, out_dir } => {
            pipeline::cmd_plotdata(&sim_csv, &out_dir).map(|_| 0)
        }
        Command::PrintConfig => {
            let cfg = RunConfig::satellite_demo();
            println!(
                "{}",
                serde_json::to_string_pretty(&cfg).expect("config serialization")
            );
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
