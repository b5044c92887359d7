//! Norm sweeps, theorem verdicts and their CSV/JSON serializations.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{norm_sequence, DynamicsError, ValidationReport};
use crate::group_kernel::{defect_to_f64, GroupError};
use crate::invariant_opt::{m_value, m_value_cross_check, Constraint, MaxResult, OptError, WitnessResiduals};

use super::config::{validation_report, Experiment};
use super::suites::SuiteVerdict;

pub const CSV_HEADER: [&str; 6] = ["k", "folner_size", "norm_avg", "m_target", "abs_gap", "max_defect"];
/// Number of trailing schedule entries the theorem verdict looks at.
pub const TAIL: usize = 5;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("system failed validation: {}", .0.failures().iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(ValidationReport),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Model(#[from] crate::cstar_model::ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Rounds to 15 significant digits.
pub fn round15(x: f64) -> f64 {
    format!("{x:.14e}").parse().expect("formatted float parses")
}

/// Shortest decimal of the 15-significant-digit rounding.
pub fn fmt15(x: f64) -> String {
    round15(x).to_string()
}

/// One CSV row. Floating fields already hold their rounded values, so the
/// row prints exactly what is stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Row {
    pub k: u64,
    pub folner_size: u64,
    pub norm_avg: f64,
    pub m_target: f64,
    pub abs_gap: f64,
    pub max_defect: f64,
}

impl Row {
    pub fn new(k: u64, folner_size: u64, norm: f64, m: f64, defect: f64) -> Self {
        let norm_avg = round15(norm);
        let m_target = round15(m);
        Row { k, folner_size, norm_avg, m_target, abs_gap: round15((norm_avg - m_target).abs()), max_defect: round15(defect) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremVerdict {
    pub tolerance: f64,
    /// `max abs_gap` over the last [`TAIL`] rows.
    pub tail_max_gap: f64,
    pub passed: bool,
}

impl TheoremVerdict {
    pub fn from_rows(rows: &[Row], tolerance: f64) -> Self {
        let tail = &rows[rows.len().saturating_sub(TAIL)..];
        let tail_max_gap = tail.iter().map(|r| r.abs_gap).fold(0.0, f64::max);
        TheoremVerdict { tolerance, tail_max_gap, passed: tail_max_gap <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxSummary {
    pub value: f64,
    pub method: String,
    pub gap: f64,
    pub invariance_residual: f64,
    pub kernel_mass: f64,
    pub value_residual: f64,
}

impl From<&MaxResult> for MaxSummary {
    fn from(r: &MaxResult) -> Self {
        let WitnessResiduals { invariance, kernel_mass, value } = r.residuals;
        MaxSummary {
            value: r.value,
            method: r.method.to_string(),
            gap: r.gap,
            invariance_residual: invariance,
            kernel_mass,
            value_residual: value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub maxima_ms: f64,
    pub sweep_ms: f64,
    pub suites_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub faithful: bool,
    pub rows: Vec<Row>,
    /// `m(a | Ann(ker ι))` from the fixed-point backend: the CSV's target.
    pub m_annihilator: MaxSummary,
    pub m_annihilator_cross_check: MaxSummary,
    /// `m(a | S^G)` over all invariant states of the domain.
    pub m_full: MaxSummary,
    pub theorem: TheoremVerdict,
    pub suites: Option<Vec<SuiteVerdict>>,
    pub timings: Timings,
}

/// Both maxima of an experiment, by both backends.
pub struct Maxima {
    pub annihilator: MaxResult,
    pub annihilator_cross_check: MaxResult,
    pub full: MaxResult,
    pub full_cross_check: MaxResult,
}

pub fn maxima(exp: &Experiment) -> Result<Maxima, OptError> {
    Ok(Maxima {
        annihilator: m_value(&exp.model, &exp.a, Constraint::Annihilator)?,
        annihilator_cross_check: m_value_cross_check(&exp.model, &exp.a, Constraint::Annihilator)?,
        full: m_value(&exp.model, &exp.a, Constraint::Full)?,
        full_cross_check: m_value_cross_check(&exp.model, &exp.a, Constraint::Full)?,
    })
}

/// `(k, |F_k|, ‖avg_k(ι(a))‖, max generator defect)` along the schedule.
pub fn sweep(exp: &Experiment) -> Result<Vec<(u64, u64, f64, f64)>, RunError> {
    let ia = exp.model.apply_iota(&exp.a)?;
    let sys = exp.model.target();
    let norms = norm_sequence(sys, &ia, &exp.ks)?;
    norms
        .into_iter()
        .map(|r| Ok((r.k, r.folner_size, r.norm, defect_to_f64(sys.folner().max_generator_defect(r.k)?))))
        .collect()
}

/// Validates, sweeps the schedule and computes the maxima. Nothing is
/// computed for a system that fails validation.
pub fn run_experiment(exp: &Experiment) -> Result<RunReport, RunError> {
    let validation = validation_report(exp);
    if !validation.passed() {
        return Err(RunError::Invalid(validation));
    }
    let t0 = Instant::now();
    let m = maxima(exp)?;
    let maxima_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let target = m.annihilator.value;
    let rows: Vec<Row> = sweep(exp)?
        .into_iter()
        .map(|(k, size, norm, defect)| Row::new(k, size, norm, target, defect))
        .collect();
    let sweep_ms = t1.elapsed().as_secs_f64() * 1e3;
    Ok(RunReport {
        name: exp.name.clone(),
        faithful: exp.model.is_faithful(),
        theorem: TheoremVerdict::from_rows(&rows, exp.tolerance),
        rows,
        m_annihilator: (&m.annihilator).into(),
        m_annihilator_cross_check: (&m.annihilator_cross_check).into(),
        m_full: (&m.full).into(),
        suites: None,
        timings: Timings { maxima_ms, sweep_ms, suites_ms: None },
    })
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), RunError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.folner_size.to_string(),
            r.norm_avg.to_string(),
            r.m_target.to_string(),
            r.abs_gap.to_string(),
            r.max_defect.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn emit_csv(report: &RunReport, path: &Path) -> Result<(), RunError> {
    let file = std::fs::File::create(path)?;
    write_csv(&report.rows, std::io::BufWriter::new(file))
}

/// A CSV row as text, for exact comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub fields: Vec<String>,
}

impl RawRow {
    pub fn get(&self, column: &str) -> &str {
        let i = CSV_HEADER.iter().position(|h| *h == column).expect("known column");
        &self.fields[i]
    }

    pub fn number(&self, column: &str) -> f64 {
        self.get(column).parse().expect("numeric field")
    }
}

pub fn read_csv(text: &str) -> Result<Vec<RawRow>, RunError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    assert_eq!(header, CSV_HEADER, "unexpected CSV header");
    r.records().map(|rec| Ok(RawRow { fields: rec?.iter().map(str::to_string).collect() })).collect()
}
