//! Config-driven experiments: parsing, bundled and generated systems, norm
//! sweeps with CSV output, and the property suites.

pub mod bundled;
pub mod config;
pub mod generate;
pub mod report;
pub mod suites;

use report::{run_experiment, RunError, RunReport};

/// [`run_experiment`] followed by every suite.
pub fn run_and_check(exp: &config::Experiment) -> Result<RunReport, RunError> {
    let mut report = run_experiment(exp)?;
    let t = std::time::Instant::now();
    report.suites = Some(suites::check_inequalities(exp));
    report.timings.suites_ms = Some(t.elapsed().as_secs_f64() * 1e3);
    Ok(report)
}
