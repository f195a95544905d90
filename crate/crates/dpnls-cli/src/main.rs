use clap::Parser;
use dpnls_cli::{run, Command, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Minimal-mass blow-up experiments for the double-power NLS.
#[derive(Debug, Parser)]
#[command(name = "dpnls", version)]
struct Args {
    command: Command,
    /// TOML configuration file; defaults apply to missing keys
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// override one key, e.g. --set numerics.N=2048 (repeatable)
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// print the resolved configuration and exit
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match RunConfig::load(args.config.as_deref(), &args.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        return match cfg.resolved_toml() {
            Ok(s) => {
                print!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    let start = Instant::now();
    match run(args.command, &cfg) {
        Ok(out) => {
            for c in &out.checks {
                println!("{c}");
            }
            eprintln!("{} finished in {:.1?}", args.command.name(), start.elapsed());
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {}: {e}", args.command.name());
            ExitCode::FAILURE
        }
    }
}
