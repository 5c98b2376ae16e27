use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sep_cli::commands::{self, Report};
use sep_cli::CliError;

#[derive(Parser)]
#[command(name = "sep", version, about = "Run, verify and time sep-core operator chains")]
struct Cli {
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true, env = "SEP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a chain on a tensor file (or pyramid directory) and print stats.
    Forward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Overrides the `[chain]` seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the property suites.
    Props {
        /// Restrict to one suite.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Certify chain gradients against central differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time every chain stage.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<Report, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Forward { config, input, output, seed } => commands::forward(&config, &input, &output, seed),
        Command::Props { filter, seed, inject_fault } => {
            sep_core::spectral::inject_modulate_sign_fault(inject_fault);
            commands::props(filter.as_deref(), seed)
        }
        Command::Gradcheck { config, seed } => commands::gradcheck(&config, seed),
        Command::Bench { config, repeats, seed } => commands::bench(&config, repeats, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("sep: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
