use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wbap::cli_io::{
    convergence_study_dx, convergence_study_eps, load_config, run_simulation, steady_check,
    write_run, RunConfig, StudyReport,
};
use wbap::Error;

/// Well-balanced asymptotic-preserving kinetic solvers.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write snapshot, residue and flux tables.
    Run { config: PathBuf },
    /// Mesh refinement study over `study_n_cells`, one table per eps.
    StudyDx { config: PathBuf },
    /// Model convergence study over `study_eps`.
    StudyEps { config: PathBuf },
    /// Measure the per-step drift and the final flux against the configured tolerances.
    SteadyCheck { config: PathBuf },
}

const CONFIG_ERROR: u8 = 2;
const SOLVER_FAILURE: u8 = 3;
const TOLERANCE_FAILURE: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => CONFIG_ERROR,
        _ => SOLVER_FAILURE,
    }
}

fn write(dir: &std::path::Path, name: &str, body: &str) -> wbap::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), body)?;
    Ok(())
}

fn print_report(label: &str, r: &StudyReport) {
    println!("{label}: {}", r.norm);
    for row in &r.rows {
        match row.order {
            Some(o) => println!(
                "  {:>12.4e}  {:>12.4e}  order {o:.3}",
                row.control, row.error
            ),
            None => println!("  {:>12.4e}  {:>12.4e}", row.control, row.error),
        }
    }
    match r.slope {
        Some(s) => println!("  fitted slope {s:.3}"),
        None => println!("  fitted slope undefined (fewer than two points)"),
    }
}

fn run(command: Command) -> wbap::Result<bool> {
    match command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let run = run_simulation(&cfg)?;
            println!(
                "{} steps of dt = {:e}; tables written to {}",
                run.n_steps,
                run.dt,
                cfg.output.display()
            );
            Ok(true)
        }
        Command::StudyDx { config } => {
            let cfg = load_config(&config)?;
            for (k, (eps, report)) in convergence_study_dx(&cfg)?.into_iter().enumerate() {
                let dir = cfg.output.join(format!("eps_{k}"));
                write(&dir, "study.csv", &report.to_csv())?;
                print_report(&format!("eps = {eps:e} ({})", dir.display()), &report);
            }
            Ok(true)
        }
        Command::StudyEps { config } => {
            let cfg: RunConfig = load_config(&config)?;
            let study = convergence_study_eps(&cfg)?;
            write(&cfg.output, "study.csv", &study.anisotropy.to_csv())?;
            write(
                &cfg.output,
                "study_limit.csv",
                &study.limit_distance.to_csv(),
            )?;
            for (k, (_, run)) in study.runs.iter().enumerate() {
                write_run(run, &cfg.output.join(format!("eps_{k}")), cfg.write_f)?;
            }
            write_run(&study.limit, &cfg.output.join("limit"), false)?;
            print_report("anisotropy", &study.anisotropy);
            print_report("distance to the limit", &study.limit_distance);
            Ok(true)
        }
        Command::SteadyCheck { config } => {
            let cfg = load_config(&config)?;
            let report = steady_check(&cfg)?;
            write_run(&report.run, &cfg.output, cfg.write_f)?;
            for c in &report.checks {
                let verdict = match c.tolerance {
                    None => "unchecked".to_string(),
                    Some(t) if c.passed() => format!("PASS (<= {t:e})"),
                    Some(t) => format!("FAIL (> {t:e})"),
                };
                println!("{:<18} {:>12.4e}  {verdict}", c.name, c.value);
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(TOLERANCE_FAILURE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
