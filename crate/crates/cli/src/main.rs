use clap::{Parser, Subcommand};
use msopt::BenchmarkKind;
use msopt_cli::{parse_config, parse_flags, run_command};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "msopt", version, about = "Temperature-scheduled multi-stage swarm optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimization.
    Run {
        /// Flat `key = value` file, applied before the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides as `--key value` or `--key=value` (see the README for keys).
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        settings: Vec<String>,
    },
    /// List the built-in benchmark functions.
    Functions,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Functions => {
            for kind in BenchmarkKind::ALL {
                let (lo, hi) = kind.range();
                println!("{:<16} [{lo}, {hi}]", kind.name());
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, settings } => {
            let parsed = parse_flags(&settings).and_then(|flags| parse_config(config.as_deref(), &flags));
            let config = match parsed {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_command(&config, &mut std::io::stdout().lock()) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
