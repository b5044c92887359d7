use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ergolab::harness::bundled::bundled;
use ergolab::harness::config::{geometric_schedule, validation_report, Experiment, ExperimentConfig};
use ergolab::harness::generate::{generate_example, ExampleKind};
use ergolab::harness::report::{emit_csv, run_experiment, RunError, RunReport};
use ergolab::harness::suites::check_inequalities;

const EXIT_PASS: u8 = 0;
const EXIT_VERDICT: u8 = 1;
const EXIT_INVALID: u8 = 2;

/// Følner-average convergence experiments on finite-dimensional
/// W*-dynamical systems.
#[derive(Parser)]
#[command(name = "ergolab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleChoice {
    /// `⌈1.5^j⌉` up to kmax, plus kmax.
    Geometric,
    /// The config's own schedule.
    List,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a config and check every structural invariant.
    Validate { config: PathBuf },
    /// Sweep the k schedule and write the convergence CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Largest k: truncates the config's schedule, or bounds the
        /// geometric one.
        #[arg(long)]
        kmax: Option<u64>,
        #[arg(long, value_enum)]
        schedule: Option<ScheduleChoice>,
        /// Also write the full report as JSON to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every property suite and the convergence verdict.
    Check {
        config: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a random config that is valid by construction.
    Gen {
        #[arg(long, value_enum)]
        kind: ExampleKind,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled reference configs.
    Bundled {
        #[arg(long, default_value = "configs")]
        out_dir: PathBuf,
    },
}

fn load(path: &Path) -> Result<Experiment, ExitCode> {
    ExperimentConfig::load(path).and_then(|c| c.build()).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(EXIT_INVALID)
    })
}

fn resolve_schedule(exp: &mut Experiment, kmax: Option<u64>, choice: Option<ScheduleChoice>) {
    match choice {
        Some(ScheduleChoice::Geometric) => {
            let top = kmax.unwrap_or(*exp.ks.last().expect("nonempty schedule"));
            exp.ks = geometric_schedule(top);
        }
        Some(ScheduleChoice::List) | None => {
            if let Some(k) = kmax {
                exp.ks.retain(|&x| x <= k);
            }
        }
    }
}

fn write_json(report: &RunReport, path: &Path) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text)
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("{e}");
    match e {
        RunError::Invalid(_) => ExitCode::from(EXIT_INVALID),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let exp = match load(&config) {
                Ok(e) => e,
                Err(code) => return code,
            };
            let report = validation_report(&exp);
            for c in &report.checks {
                println!("{c}");
            }
            if report.passed() {
                println!("valid: {}", exp.name);
                ExitCode::from(EXIT_PASS)
            } else {
                println!("invalid: {} failed checks", report.failures().len());
                ExitCode::from(EXIT_INVALID)
            }
        }
        Command::Run { config, out, kmax, schedule, report } => {
            let mut exp = match load(&config) {
                Ok(e) => e,
                Err(code) => return code,
            };
            resolve_schedule(&mut exp, kmax, schedule);
            if exp.ks.is_empty() {
                eprintln!("config error: schedule is empty after applying --kmax");
                return ExitCode::from(EXIT_INVALID);
            }
            let run = match run_experiment(&exp) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if let Err(e) = emit_csv(&run, &out) {
                return fail(e);
            }
            if let Some(path) = report {
                if let Err(e) = write_json(&run, &path) {
                    eprintln!("{}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            let t = run.theorem;
            println!(
                "{}: m = {} (cross-check {}), tail gap {:e} vs tolerance {:e}: {}",
                run.name,
                run.m_annihilator.value,
                run.m_annihilator_cross_check.value,
                t.tail_max_gap,
                t.tolerance,
                if t.passed { "PASS" } else { "FAIL" }
            );
            ExitCode::from(if t.passed { EXIT_PASS } else { EXIT_VERDICT })
        }
        Command::Check { config, report } => {
            let exp = match load(&config) {
                Ok(e) => e,
                Err(code) => return code,
            };
            let suites = check_inequalities(&exp);
            for v in &suites {
                let status = if v.skipped { "SKIP" } else if v.passed { "PASS" } else { "FAIL" };
                println!("{status} {:24} worst={:.3e} tol={:.0e}  {}", v.name, v.worst, v.tolerance, v.detail);
            }
            if !suites[0].passed {
                return ExitCode::from(EXIT_INVALID);
            }
            let mut run = match run_experiment(&exp) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            let t = run.theorem;
            println!(
                "{} convergence               tail gap={:.3e} tol={:.0e}",
                if t.passed { "PASS" } else { "FAIL" },
                t.tail_max_gap,
                t.tolerance
            );
            let all = t.passed && suites.iter().all(|v| v.passed);
            run.suites = Some(suites);
            if let Some(path) = report {
                if let Err(e) = write_json(&run, &path) {
                    eprintln!("{}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            ExitCode::from(if all { EXIT_PASS } else { EXIT_VERDICT })
        }
        Command::Gen { kind, seed, dim, out } => {
            let cfg = match generate_example(kind, seed, dim) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_INVALID);
                }
            };
            if let Err(e) = std::fs::write(&out, cfg.to_json()) {
                eprintln!("{}: {e}", out.display());
                return ExitCode::FAILURE;
            }
            println!("wrote {}", out.display());
            ExitCode::from(EXIT_PASS)
        }
        Command::Bundled { out_dir } => {
            if let Err(e) = std::fs::create_dir_all(&out_dir) {
                eprintln!("{}: {e}", out_dir.display());
                return ExitCode::FAILURE;
            }
            for cfg in bundled() {
                let path = out_dir.join(format!("{}.json", cfg.name));
                if let Err(e) = std::fs::write(&path, cfg.to_json()) {
                    eprintln!("{}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
                println!("wrote {}", path.display());
            }
            ExitCode::from(EXIT_PASS)
        }
    }
}
