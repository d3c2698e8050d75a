use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qhist_cli::{list_experiments, run};

/// Discrete-time quantum history experiments.
#[derive(Debug, Parser)]
#[command(name = "qhist", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the experiment kinds.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", list_experiments());
            ExitCode::SUCCESS
        }
        Command::Run { config, out } => match run(&config, out.as_deref()) {
            Ok(o) => {
                for f in &o.files {
                    println!("{}", o.dir.join(f).display());
                }
                eprintln!("done in {:.2} s", o.elapsed.as_secs_f64());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("qhist: {e}");
                ExitCode::from(e.code() as u8)
            }
        },
    }
}
