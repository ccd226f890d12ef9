use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use capsim_cli::config::RunConfig;
use capsim_cli::run::{self, Outcome};
use capsim_cli::verify::{verify, Level, DEFAULT_SEED};
use capsim_cli::CliError;

#[derive(Parser)]
#[command(name = "capsim", version, about = "Thin- and thick-membrane conduction solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mesh described by the config and write it.
    Mesh(Common),
    /// Evolve the thin-interface problem.
    RunThin(Common),
    /// Evolve the thick-membrane problem.
    RunThick(Common),
    /// Compare thick membranes of shrinking width with the thin model.
    Concentration(Common),
    /// Distance of thick solutions to the delta = 0 limit.
    DeltaStudy(Common),
    /// Run the invariant checks and acceptance criteria.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long)]
        threads: Option<usize>,
        /// Seed for randomized corpora.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Negate every stiffness matrix; the suite is expected to fail.
        #[arg(long, hide = true)]
        flip_stiffness_sign: bool,
    },
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn pipeline(common: &Common, f: fn(&RunConfig) -> Result<Outcome, CliError>) -> Result<(), CliError> {
    set_threads(common.threads)?;
    let cfg = RunConfig::load(&common.config)?;
    let dir = match (&common.out, &cfg.output.dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("."),
    };
    let outcome = f(&cfg)?;
    run::write_artifacts(&dir, &outcome.artifacts)?;
    println!("{}", outcome.summary);
    Ok(())
}

fn run_verify(level: Level, threads: Option<usize>, seed: u64, flip: bool) -> Result<(), CliError> {
    set_threads(threads)?;
    let exe = std::env::current_exe().map_err(|e| CliError::Io(e.to_string()))?;
    let report = verify(level, seed, Path::new(&exe), flip, |c| println!("{c}"));
    let failed = report.failures();
    println!(
        "verify {:?}: {} passed, {} failed (seed {seed:#x})",
        report.level,
        report.checks.len() - failed.len(),
        failed.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Mesh(c) => pipeline(c, run::mesh_pipeline),
        Command::RunThin(c) => pipeline(c, run::thin_pipeline),
        Command::RunThick(c) => pipeline(c, run::thick_pipeline),
        Command::Concentration(c) => pipeline(c, run::concentration_pipeline),
        Command::DeltaStudy(c) => pipeline(c, run::delta_pipeline),
        Command::Verify {
            level,
            threads,
            seed,
            flip_stiffness_sign,
        } => run_verify(*level, *threads, *seed, *flip_stiffness_sign),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
