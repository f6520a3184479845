use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use exterior_curvature::cli::{parse_config_file, run, Command, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    SolveCompact,
    SolveExterior,
    Oracle,
    Audit,
    BarrierCheck,
    Glue,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::SolveCompact => Command::SolveCompact,
            Cmd::SolveExterior => Command::SolveExterior,
            Cmd::Oracle => Command::Oracle,
            Cmd::Audit => Command::Audit,
            Cmd::BarrierCheck => Command::BarrierCheck,
            Cmd::Glue => Command::Glue,
        }
    }
}

/// Prescribed Gauss curvature graphs close to a cone.
///
/// Exit status: 0 when every check passed, 2 when a check failed,
/// 1 on errors.
#[derive(Debug, Parser)]
#[command(name = "excurv", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for fields and reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 gives bit-identical outputs across runs.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for randomly placed audit points.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = parse_config_file(&args.config)
        .map_err(Into::into)
        .and_then(|cfg| {
            run(
                &cfg,
                args.command.into(),
                &RunOptions {
                    out: args.out.clone(),
                    seed: args.seed,
                },
            )
        });
    match result {
        Ok(summary) => {
            for p in &summary.artifacts {
                println!("{}", p.display());
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: some checks failed; see the reports", summary.command.name());
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
