use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slack_clearing_cli::{exit, load_config, run, Command};

#[derive(Parser)]
#[command(name = "slackclear", version, about = "Run slack-clearing experiments from a JSON config")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Settle explicit or generated claim profiles.
    Clear(RunArgs),
    /// Best-reply monotonicity sweep.
    Dominance(RunArgs),
    /// Coalition deviation search against a defecting complement.
    Coalition(RunArgs),
    /// Boundary jump scan and noise bias.
    Boundary(RunArgs),
    /// Multi-period settlement with the penalty collar.
    Policy(RunArgs),
    /// Classic bankruptcy rules and the No-Sucker-Loss audit.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Clear(a) => (Command::Clear, a),
        Sub::Dominance(a) => (Command::Dominance, a),
        Sub::Coalition(a) => (Command::Coalition, a),
        Sub::Boundary(a) => (Command::Boundary, a),
        Sub::Policy(a) => (Command::Policy, a),
        Sub::Compare(a) => (Command::Compare, a),
    };
    let result = load_config(&args.config).and_then(|c| run(c, command, args.out.as_deref(), args.seed));
    let code = match result {
        Ok(outcome) => {
            for f in &outcome.report.findings {
                eprintln!("violation: {f}");
            }
            println!(
                "{}: wrote {} files",
                command.as_str(),
                outcome.manifest.files.len()
            );
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(exit::FAILURE as u8))
}
