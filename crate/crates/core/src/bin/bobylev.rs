use bobylev::cli::{error_code, exit_code, resolve_out_dir, run, Command, Params};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Fourier-side Boltzmann experiments for Maxwellian molecules.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration; defaults apply to every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Artifact directory (overridden by BOBYLEV_OUT).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the random point sets; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let params = match &args.config {
        Some(path) => Params::from_file(path),
        None => Ok(Params::default()),
    };
    let mut params = match params {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(error_code(&e) as u8);
        }
    };
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    let out = resolve_out_dir(&args.out);
    let result = run(args.command, &params, &out);
    match &result {
        Ok(outcome) => {
            let failures = outcome.failures();
            println!(
                "{}: {} checks, {} failed, artifacts in {}",
                args.command.name(),
                outcome.reports.len(),
                failures.len(),
                out.display()
            );
            for f in failures {
                println!("FAIL {} at {}: lhs {:e} > rhs {:e}", f.check_name, f.location, f.lhs, f.rhs);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
