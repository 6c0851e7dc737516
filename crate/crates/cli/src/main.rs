use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use manakov_cli::commands::{load_with_overrides, run, Command, Overrides};

/// Floquet spectral analysis of the periodic 3x3 Manakov operator.
#[derive(Debug, Parser)]
#[command(name = "manakov", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,

    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Output directory (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Disc indices `a:b`, inclusive (overrides `n_range`).
    #[arg(long = "n-range", allow_hyphen_values = true)]
    n_range: Option<String>,

    /// Worker threads, 0 for the default.
    #[arg(long)]
    threads: Option<usize>,

    /// Multiplies every numerical tolerance.
    #[arg(long = "tol-scale")]
    tol_scale: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let o = Overrides { out: args.out, n_range: args.n_range, threads: args.threads, tol_scale: args.tol_scale };
    let result = load_with_overrides(&args.config, &o).and_then(|cfg| run(&cfg, args.command));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
