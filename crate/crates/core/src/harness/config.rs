//! JSON experiment configs and their translation into a validated model.
//!
//! Complex matrix entries are written either as a bare number (real) or as a
//! `[re, im]` pair. Block indices are zero-based.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cstar_model::CStarModel;
use crate::dynamics::{system_report, Check, UnitaryAction, ValidationReport};
use crate::group_kernel::{FiniteTable, GroupModel, Letter};
use crate::matrix_core::{BlockElement, BlockState, Matrix, Signature, C64, PSD_TOL};

pub const DEFAULT_THEOREM_TOL: f64 = 1e-3;
const DELTA_TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError { path: path.into(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    pub fn value(self) -> C64 {
        match self {
            Entry::Real(re) => C64::new(re, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }

    pub fn from_value(z: C64) -> Self {
        if z.im == 0.0 {
            Entry::Real(z.re)
        } else {
            Entry::Complex([z.re, z.im])
        }
    }
}

/// Row-major square matrix.
pub type MatrixSpec = Vec<Vec<Entry>>;

pub fn matrix_spec(m: &Matrix) -> MatrixSpec {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Entry::from_value(m[(i, j)])).collect()).collect()
}

fn parse_matrix(spec: &MatrixSpec, n: usize, path: &str) -> Result<Matrix, ConfigError> {
    if spec.len() != n || spec.iter().any(|row| row.len() != n) {
        let shape: Vec<usize> = spec.iter().map(Vec::len).collect();
        return Err(ConfigError::at(path, format!("expected a {n}x{n} matrix, got rows of lengths {shape:?}")));
    }
    let m = Matrix::from_fn(n, n, |i, j| spec[i][j].value());
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ConfigError::at(path, "non-finite entry"));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GroupSpec {
    Zd {
        dim: usize,
    },
    Heisenberg,
    Finite {
        /// `table[g][h]` is the index of `g h`.
        table: Vec<Vec<usize>>,
        generators: Vec<usize>,
        /// Words in signed generator codes: `i + 1` for generator `i`,
        /// `-(i + 1)` for its inverse.
        #[serde(default)]
        relations: Vec<Vec<i64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub kernel: bool,
    /// This block of the weighted density `⊕ w_i δ_i` of `ρ`; the blocks'
    /// traces must sum to one. Omitted on kernel blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<MatrixSpec>,
    /// One unitary per group generator.
    pub unitaries: Vec<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleSpec {
    List { ks: Vec<u64> },
    Range { start: u64, end: u64 },
    /// `⌈1.5^j⌉` for `j = 0, 1, …`, deduplicated, up to `kmax`, and `kmax`
    /// itself.
    Geometric { kmax: u64 },
}

impl ScheduleSpec {
    pub fn ks(&self) -> Vec<u64> {
        match self {
            ScheduleSpec::List { ks } => ks.clone(),
            ScheduleSpec::Range { start, end } => (*start..=*end).collect(),
            ScheduleSpec::Geometric { kmax } => geometric_schedule(*kmax),
        }
    }

    pub fn kmax(&self) -> u64 {
        self.ks().last().copied().unwrap_or(0)
    }
}

/// `⌈1.5^j⌉` deduplicated up to `kmax`, ending at `kmax`.
pub fn geometric_schedule(kmax: u64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    let (mut num, mut den) = (1u128, 1u128);
    loop {
        let k = num.div_ceil(den);
        if k > kmax as u128 {
            break;
        }
        if out.last() != Some(&(k as u64)) {
            out.push(k as u64);
        }
        num *= 3;
        den *= 2;
    }
    if kmax > 0 && out.last() != Some(&kmax) {
        out.push(kmax);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Bound on the tail of `|‖avg_k‖ − m|`.
    pub theorem: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { theorem: DEFAULT_THEOREM_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub group: GroupSpec,
    pub blocks: Vec<BlockSpec>,
    /// The positive element `a`, one matrix per block.
    pub a: Vec<MatrixSpec>,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Seeds the random samples drawn by the inequality suites.
    #[serde(default)]
    pub seed: u64,
}

/// A parsed config: the model, the element and the resolved schedule.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub model: CStarModel,
    pub a: BlockElement,
    pub ks: Vec<u64>,
    pub tolerance: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::at(if path == "." { "<root>".to_string() } else { path }, e.into_inner())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    fn group_model(&self) -> Result<GroupModel, ConfigError> {
        match &self.group {
            GroupSpec::Zd { dim } => {
                if *dim == 0 {
                    return Err(ConfigError::at("group.dim", "must be at least 1"));
                }
                Ok(GroupModel::zd(*dim))
            }
            GroupSpec::Heisenberg => Ok(GroupModel::heisenberg()),
            GroupSpec::Finite { table, generators, relations } => {
                let table = FiniteTable::new(table.clone()).map_err(|e| ConfigError::at("group.table", e))?;
                let mut words = Vec::with_capacity(relations.len());
                for (ri, rel) in relations.iter().enumerate() {
                    let word = rel
                        .iter()
                        .enumerate()
                        .map(|(li, &code)| {
                            Letter::from_signed(code)
                                .filter(|l| l.generator < generators.len())
                                .ok_or_else(|| {
                                    ConfigError::at(
                                        format!("group.relations[{ri}][{li}]"),
                                        format!("{code} is not a generator code"),
                                    )
                                })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    words.push(word);
                }
                GroupModel::finite(table, generators, words).map_err(|e| ConfigError::at("group", e))
            }
        }
    }

    /// Builds the model and element; shapes and the density's trace are
    /// checked here, dynamical invariants by [`validation_report`].
    pub fn build(&self) -> Result<Experiment, ConfigError> {
        let group = self.group_model()?;
        let ngen = group.generators().len();
        if self.blocks.is_empty() {
            return Err(ConfigError::at("blocks", "at least one block is required"));
        }
        let signature = Signature(self.blocks.iter().map(|b| b.dim).collect());
        let mut kernel = BTreeSet::new();
        let mut gens: Vec<Vec<Matrix>> = vec![Vec::new(); ngen];
        let mut weights = Vec::new();
        let mut deltas = Vec::new();
        for (bi, block) in self.blocks.iter().enumerate() {
            let path = format!("blocks[{bi}]");
            if block.dim == 0 {
                return Err(ConfigError::at(format!("{path}.dim"), "must be at least 1"));
            }
            if block.unitaries.len() != ngen {
                return Err(ConfigError::at(
                    format!("{path}.unitaries"),
                    format!("expected {ngen} unitaries (one per generator), got {}", block.unitaries.len()),
                ));
            }
            for (gi, u) in block.unitaries.iter().enumerate() {
                gens[gi].push(parse_matrix(u, block.dim, &format!("{path}.unitaries[{gi}]"))?);
            }
            match (&block.delta, block.kernel) {
                (Some(_), true) => {
                    return Err(ConfigError::at(format!("{path}.delta"), "kernel blocks carry no density"))
                }
                (None, false) => return Err(ConfigError::at(format!("{path}.delta"), "missing")),
                (None, true) => {
                    kernel.insert(bi);
                }
                (Some(d), false) => {
                    let d = parse_matrix(d, block.dim, &format!("{path}.delta"))?;
                    let tr = d.trace();
                    if tr.im.abs() > DELTA_TRACE_TOL || tr.re <= 0.0 {
                        return Err(ConfigError::at(format!("{path}.delta"), format!("trace {tr} is not positive")));
                    }
                    weights.push(tr.re);
                    deltas.push(d / tr);
                }
            }
        }
        if deltas.is_empty() {
            return Err(ConfigError::at("blocks", "every block is in the kernel"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > DELTA_TRACE_TOL {
            return Err(ConfigError::at("blocks", format!("delta traces sum to {total}, expected 1")));
        }
        let rho = BlockState::new(weights, deltas).map_err(|e| ConfigError::at("blocks[*].delta", e))?;
        let generators = gens
            .into_iter()
            .map(BlockElement::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ConfigError::at("blocks[*].unitaries", e))?;
        let theta = UnitaryAction::new(group, signature.clone(), generators)
            .map_err(|e| ConfigError::at("blocks[*].unitaries", e))?;
        let model = CStarModel::new(theta, kernel, rho).map_err(|e| ConfigError::at("blocks", e))?;

        if self.a.len() != signature.len() {
            return Err(ConfigError::at("a", format!("expected {} blocks, got {}", signature.len(), self.a.len())));
        }
        let a_blocks = self
            .a
            .iter()
            .zip(signature.dims())
            .enumerate()
            .map(|(i, (m, &n))| parse_matrix(m, n, &format!("a[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let a = BlockElement::new(a_blocks).map_err(|e| ConfigError::at("a", e))?;

        let ks = self.schedule.ks();
        if ks.is_empty() {
            return Err(ConfigError::at("schedule", "empty schedule"));
        }
        if ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::at("schedule", "k values must be positive and strictly increasing"));
        }
        let tolerance = self.tolerances.theorem;
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            return Err(ConfigError::at("tolerances.theorem", "must be a nonnegative number"));
        }
        Ok(Experiment { name: self.name.clone(), model, a, ks, tolerance, seed: self.seed })
    }
}

/// Every invariant a runnable experiment must satisfy: the target system's
/// checks, the domain action's checks on kernel blocks, equivariance of `ι`
/// and positivity of `a`.
pub fn validation_report(exp: &Experiment) -> ValidationReport {
    let mut report = system_report(exp.model.target());
    if !exp.model.is_faithful() {
        report.checks.extend(exp.model.theta().structural_checks("domain "));
    }
    report.checks.push(exp.model.check_equivariance().to_check());
    let herm = exp.a.hermitian_residual();
    report.checks.push(Check::at_most("a hermitian", herm, crate::matrix_core::HERMITIAN_TOL));
    let lowest = exp
        .a
        .hermitian_part()
        .blocks()
        .iter()
        .map(crate::matrix_core::min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    report.checks.push(Check::at_least("a positive", lowest, -PSD_TOL));
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALTERNATING: &str = r#"{
        "name": "alt",
        "group": {"kind": "zd", "dim": 1},
        "blocks": [{"dim": 2, "delta": [[0.5, 0], [0, 0.5]], "unitaries": [[[1, 0], [0, -1]]]}],
        "a": [[[1, 1], [1, 1]]],
        "schedule": {"kind": "range", "start": 1, "end": 5}
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::from_json(ALTERNATING).unwrap();
        assert_eq!(cfg.tolerances.theorem, DEFAULT_THEOREM_TOL);
        let exp = cfg.build().unwrap();
        assert_eq!(exp.ks, vec![1, 2, 3, 4, 5]);
        assert!(validation_report(&exp).passed());
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn complex_entries() {
        let text = ALTERNATING.replace("[[1, 0], [0, -1]]", "[[1, 0], [0, [0, 1]]]");
        let exp = ExperimentConfig::from_json(&text).unwrap().build().unwrap();
        assert_eq!(exp.model.theta().generators()[0].block(0)[(1, 1)], C64::new(0.0, 1.0));
    }

    #[test]
    fn errors_carry_field_paths() {
        let text = ALTERNATING.replace("\"dim\": 2", "\"dim\": \"two\"");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert_eq!(err.path, "blocks[0].dim");

        let text = ALTERNATING.replace("[[1, 0], [0, -1]]", "[[1, 0]]");
        let err = ExperimentConfig::from_json(&text).unwrap().build().unwrap_err();
        assert_eq!(err.path, "blocks[0].unitaries[0]");

        let text = ALTERNATING.replace("[[0.5, 0], [0, 0.5]]", "[[0.5, 0], [0, 0.4]]");
        let err = ExperimentConfig::from_json(&text).unwrap().build().unwrap_err();
        assert_eq!(err.path, "blocks");

        let text = ALTERNATING.replace("\"start\": 1", "\"start\": 0");
        assert_eq!(ExperimentConfig::from_json(&text).unwrap().build().unwrap_err().path, "schedule");

        let text = ALTERNATING.replace("\"name\"", "\"nmae\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn validation_flags_non_invariant_density() {
        let text = ALTERNATING
            .replace("[[1, 0], [0, -1]]", "[[0, 1], [1, 0]]")
            .replace("[[0.5, 0], [0, 0.5]]", "[[0.9, 0], [0, 0.1]]");
        let exp = ExperimentConfig::from_json(&text).unwrap().build().unwrap();
        let report = validation_report(&exp);
        let failed: Vec<_> = report.failures().iter().map(|c| c.name.clone()).collect();
        assert_eq!(failed, vec!["rho-invariance[generator 0, block 0]".to_string()]);
    }

    #[test]
    fn geometric_schedule_values() {
        assert_eq!(geometric_schedule(12), vec![1, 2, 3, 4, 6, 8, 12]);
        assert_eq!(geometric_schedule(1), vec![1]);
        assert_eq!(geometric_schedule(20), vec![1, 2, 3, 4, 6, 8, 12, 18, 20]);
        let long = geometric_schedule(2000);
        assert!(long.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*long.last().unwrap(), 2000);
    }
}
