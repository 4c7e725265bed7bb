use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use statmap::runner::{self, RunOutcome};

#[derive(Parser)]
#[command(name = "statmap", version, about = "Harmonic-map analyses between statistical manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate scenario files without running them.
    Check {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
    /// Run scenarios. Without --out a single report is printed to stdout.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Write report.json, timing.json and CSV series to DIR/<scenario>/.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Scenarios run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run every *.json scenario in a directory and aggregate pass/fail.
    Suite {
        dir: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c.clamp(0, 255) as u8)
}

fn summary(o: &RunOutcome) -> String {
    let r = &o.report;
    let status = match (&r.error, r.passed) {
        (Some(e), _) => format!("ERROR({})", e.kind),
        (None, true) => "PASS".to_string(),
        (None, false) => "FAIL".to_string(),
    };
    let failed: Vec<&str> = r.assertions.iter().filter(|a| !a.passed).map(|a| a.name.as_str()).collect();
    let mut line = format!("{status:<24} {:<40} {:>8.2}s", r.name, o.timing.total_seconds);
    if !failed.is_empty() {
        line.push_str(&format!("  failed: {}", failed.join(", ")));
    }
    if let Some(e) = &r.error {
        line.push_str(&format!("  {}", e.message));
    }
    line
}

fn write_all(outcomes: &[RunOutcome], paths: &[PathBuf], out: &Path) -> Result<(), statmap::Error> {
    for (o, p) in outcomes.iter().zip(paths) {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| o.report.name.clone());
        runner::write_outputs(o, &out.join(stem))?;
    }
    Ok(())
}

fn execute(paths: &[PathBuf], out: Option<&Path>, jobs: usize, print_single: bool) -> ExitCode {
    let outcomes = runner::run_many(paths, jobs);
    if let Some(dir) = out {
        if let Err(e) = write_all(&outcomes, paths, dir) {
            eprintln!("statmap: {e}");
            return code(e.exit_code());
        }
    }
    if print_single && out.is_none() && outcomes.len() == 1 {
        print!("{}", outcomes[0].report.to_json());
        eprintln!("{}", summary(&outcomes[0]));
    } else {
        for o in &outcomes {
            println!("{}", summary(o));
        }
        let passed = outcomes.iter().filter(|o| o.report.passed).count();
        println!("{passed}/{} scenarios passed", outcomes.len());
    }
    code(runner::aggregate_exit_code(&outcomes))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match runner::configure_threads() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("statmap: {e}");
            return code(e.exit_code());
        }
    };
    let jobs_cap = |jobs: usize| jobs.clamp(1, threads.max(1));
    match cli.command {
        Command::Check { scenarios } => {
            let mut worst = 0;
            for p in &scenarios {
                match runner::check_path(p) {
                    Ok(sc) => println!("ok      {} ({})", p.display(), sc.display_name()),
                    Err(e) => {
                        println!("invalid {}: {e}", p.display());
                        worst = worst.max(e.exit_code());
                    }
                }
            }
            code(worst)
        }
        Command::Run { scenarios, out, jobs } => execute(&scenarios, out.as_deref(), jobs_cap(jobs), true),
        Command::Suite { dir, out, jobs } => match runner::suite_paths(&dir) {
            Ok(paths) if paths.is_empty() => {
                eprintln!("statmap: no *.json scenarios in {}", dir.display());
                code(3)
            }
            Ok(paths) => execute(&paths, out.as_deref(), jobs_cap(jobs), false),
            Err(e) => {
                eprintln!("statmap: {e}");
                code(e.exit_code())
            }
        },
    }
}
