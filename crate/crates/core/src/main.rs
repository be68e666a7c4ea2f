use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use termnet::cli::{CliError, Interpreter};

/// Anytime inference over discrete belief networks by best-first term
/// enumeration.
#[derive(Parser, Debug)]
#[command(name = "termnet", version)]
struct Args {
    /// Append engine events as JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run commands from this file, one per line (`-` reads stdin).
    #[arg(long)]
    script: Option<PathBuf>,
    /// A single command, e.g. `bench circuits --gates 9 --fault 1 --seed 7`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    command: Vec<String>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let stdout = io::stdout().lock();
    let base = match &args.script {
        Some(p) if p != Path::new("-") => p.parent().map(Path::to_path_buf).unwrap_or_default(),
        _ => PathBuf::from("."),
    };
    let mut it = Interpreter::new(stdout, base);
    if let Some(t) = &args.trace {
        it.trace_to(t)?;
    }
    if let Some(p) = &args.script {
        let text = if p == Path::new("-") {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        } else {
            std::fs::read_to_string(p)?
        };
        it.run_script(&text)?;
    }
    if !args.command.is_empty() {
        it.run_script(&args.command.join(" "))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.script.is_none() && args.command.is_empty() {
        eprintln!("termnet: nothing to do; pass --script FILE or a command");
        return ExitCode::from(2);
    }
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("termnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
