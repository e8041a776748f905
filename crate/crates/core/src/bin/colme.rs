use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use colme::cli::{self, Mode, Overrides, EXIT_INVALID, EXIT_RUNTIME};

#[derive(Parser)]
#[command(name = "colme", version, about = "Collaborative personalized mean estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a manifest and write curves, events, summaries and theory CSVs.
    Run(RunArgs),
    /// Check a manifest and list every problem without running it.
    Validate(RunArgs),
    /// Write only the closed-form theory report for the manifest's instance.
    Theory(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Manifest path, or a bundled name (three-class, two-class).
    manifest: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated algorithm names, replacing the manifest's list.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, short)]
    quiet: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            runs: self.runs,
            horizon: self.horizon,
            out: self.out.clone(),
            algorithms: self.algorithms.clone(),
            jobs: self.jobs,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, mode) = match &cli.command {
        Command::Run(a) => (a, Some(Mode::Simulate)),
        Command::Theory(a) => (a, Some(Mode::TheoryOnly)),
        Command::Validate(a) => (a, None),
    };

    let (text, base) = match cli::load_manifest(&args.manifest) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let manifest = match cli::parse_manifest(&text, &base, &args.overrides()) {
        Ok(m) => m,
        Err(diags) => {
            for d in &diags {
                eprintln!("{d}");
            }
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let Some(mode) = mode else {
        if !args.quiet {
            println!("{}: ok", args.manifest);
        }
        return ExitCode::SUCCESS;
    };

    match cli::run(&manifest, mode, args.quiet) {
        Ok(outcome) => {
            if !args.quiet {
                for path in &outcome.written {
                    println!("{}", path.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME as u8)
        }
    }
}
