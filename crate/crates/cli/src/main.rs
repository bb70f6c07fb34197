use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hybridwalk_cli::{CliError, PipelineConfig};

#[derive(Parser)]
#[command(name = "hybridwalk", version, about = "Cold-start item recommendation with learned feature weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and binarize the data, split items into warm/validation/test.
    Prepare(Args),
    /// Learn feature weights for the configured hybrid models.
    Train(Args),
    /// Score every configured algorithm on the test items.
    Evaluate(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Directory holding prepared data, weights and reports.
    #[arg(long)]
    output: PathBuf,
}

fn run(command: Command) -> Result<String, CliError> {
    let (Command::Prepare(args) | Command::Train(args) | Command::Evaluate(args)) = &command;
    let config = PipelineConfig::load(&args.config)?;
    match command {
        Command::Prepare(_) => hybridwalk_cli::prepare(&config, &args.output),
        Command::Train(_) => hybridwalk_cli::train(&config, &args.output),
        Command::Evaluate(_) => hybridwalk_cli::evaluate_all(&config, &args.output).map(|r| r.render()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
