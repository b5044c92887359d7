//! Random systems that are valid by construction.
//!
//! Each block gets a density `V diag(λ) V†` whose eigenvalues come in
//! repeated groups. Generator unitaries are `V (⊕_g W_g R_g W_g†) V†`, where
//! `g` runs over the eigenspaces of the density, `W_g` is a Haar unitary on
//! that eigenspace and `R_g` a direct sum of small representations of the
//! group. The density is scalar on each eigenspace, so it commutes with every
//! generator, and the relations hold because they hold in every summand.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DVector;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matrix_core::{real_matrix, symmetrize, Matrix, C64};
use crate::sample;

use super::bundled::s3_group;
use super::config::{matrix_spec, BlockSpec, ExperimentConfig, GroupSpec, ScheduleSpec, Tolerances};

pub const MAX_DIM: usize = 64;

/// Eigenphases are drawn from a short list with repeats so the fixed spaces
/// are nontrivial.
const PHASES: [f64; 6] = [0.0, 0.0, PI / 2.0, PI, 2.0 * PI / 3.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExampleKind {
    Zd,
    Finite,
    Heisenberg,
    Kernel,
}

impl ExampleKind {
    pub const ALL: [ExampleKind; 4] =
        [ExampleKind::Zd, ExampleKind::Finite, ExampleKind::Heisenberg, ExampleKind::Kernel];

    pub fn name(self) -> &'static str {
        match self {
            ExampleKind::Zd => "zd",
            ExampleKind::Finite => "finite",
            ExampleKind::Heisenberg => "heisenberg",
            ExampleKind::Kernel => "kernel",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("dimension {0} is outside 1..={MAX_DIM}")]
    Dimension(usize),
}

/// One irreducible-or-small summand: a unitary per generator.
type Summand = Vec<Matrix>;

fn phase(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

fn scalar(z: C64) -> Matrix {
    Matrix::from_element(1, 1, z)
}

/// Commuting phases for `Z^d`.
fn abelian_summand(rng: &mut ChaCha8Rng, ngen: usize) -> Summand {
    (0..ngen).map(|_| scalar(phase(*PHASES.choose(rng).expect("nonempty")))).collect()
}

/// Trivial, sign or the two-dimensional irreducible representation of `S₃`,
/// evaluated on the transposition `(0 1)` and the 3-cycle.
fn s3_summand(dim: usize, sign: bool) -> Summand {
    match (dim, sign) {
        (1, false) => vec![scalar(C64::new(1.0, 0.0)), scalar(C64::new(1.0, 0.0))],
        (1, true) => vec![scalar(C64::new(-1.0, 0.0)), scalar(C64::new(1.0, 0.0))],
        _ => {
            // the permutation representation restricted to sum-zero vectors,
            // in the orthonormal basis (e0 − e1)/√2, (e0 + e1 − 2e2)/√6
            let (c, s) = ((2.0 * PI / 3.0).cos(), (2.0 * PI / 3.0).sin());
            let swap = real_matrix(&[&[-1.0, 0.0], &[0.0, 1.0]]);
            let rot = real_matrix(&[&[c, s], &[-s, c]]);
            vec![swap, rot]
        }
    }
}

/// Clock and shift on `C^q` times random phases; their group commutator is
/// the scalar `e^{2πi/q}`.
fn clock_shift(rng: &mut ChaCha8Rng, q: usize) -> Summand {
    let omega = phase(2.0 * PI / q as f64);
    let shift = Matrix::from_fn(q, q, |i, j| if i == (j + 1) % q { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let clock = Matrix::from_diagonal(&DVector::from_iterator(q, (0..q).map(|i| omega.powu(i as u32))));
    let px = phase(*PHASES.choose(rng).expect("nonempty"));
    let py = phase(*PHASES.choose(rng).expect("nonempty"));
    vec![shift * px, clock * py]
}

fn direct_sum(parts: &[Matrix]) -> Matrix {
    let n: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = Matrix::zeros(n, n);
    let mut at = 0;
    for m in parts {
        out.view_mut((at, at), (m.nrows(), m.ncols())).copy_from(m);
        at += m.nrows();
    }
    out
}

/// Splits `n` into eigenspace sizes between 1 and 3.
fn eigenspace_sizes(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut left = n;
    let mut out = Vec::new();
    while left > 0 {
        let m = rng.random_range(1..=left.min(3));
        out.push(m);
        left -= m;
    }
    out
}

/// Summands filling an eigenspace of size `m`.
fn summands(rng: &mut ChaCha8Rng, kind: ExampleKind, ngen: usize, m: usize) -> Vec<Summand> {
    let mut out = Vec::new();
    let mut left = m;
    while left > 0 {
        let s = match kind {
            ExampleKind::Zd | ExampleKind::Kernel => abelian_summand(rng, ngen),
            ExampleKind::Finite => {
                if left >= 2 && rng.random_bool(0.5) {
                    s3_summand(2, false)
                } else {
                    s3_summand(1, rng.random_bool(0.5))
                }
            }
            ExampleKind::Heisenberg => {
                let q = if left >= 3 && rng.random_bool(0.5) { 3 } else { 2 };
                if left >= 2 && rng.random_bool(0.6) {
                    clock_shift(rng, q.min(left))
                } else {
                    abelian_summand(rng, ngen)
                }
            }
        };
        left -= s[0].nrows();
        out.push(s);
    }
    out
}

/// Density (scaled to trace `weight`) and generator unitaries of one block.
fn invariant_block(rng: &mut ChaCha8Rng, kind: ExampleKind, ngen: usize, n: usize, weight: f64) -> (Matrix, Vec<Matrix>) {
    let v = sample::unitary(rng, n);
    let sizes = eigenspace_sizes(rng, n);
    let mut lambdas = Vec::with_capacity(n);
    let mut per_gen: Vec<Vec<Matrix>> = vec![Vec::new(); ngen];
    for &m in &sizes {
        let lambda = 0.2 + rng.random::<f64>();
        lambdas.extend(std::iter::repeat_n(lambda, m));
        let w = sample::unitary(rng, m);
        let parts = summands(rng, kind, ngen, m);
        for (gi, acc) in per_gen.iter_mut().enumerate() {
            let r: Vec<Matrix> = parts.iter().map(|p| p[gi].clone()).collect();
            acc.push(&w * direct_sum(&r) * w.adjoint());
        }
    }
    let total: f64 = lambdas.iter().sum();
    let d = Matrix::from_diagonal(&DVector::from_iterator(n, lambdas.iter().map(|l| C64::new(weight * l / total, 0.0))));
    let delta = symmetrize(&(&v * d * v.adjoint()));
    let unitaries = per_gen.iter().map(|parts| &v * direct_sum(parts) * v.adjoint()).collect();
    (delta, unitaries)
}

/// Block sizes of the target algebra: one block, or two once `dim ≥ 3`.
fn target_dims(dim: usize) -> Vec<usize> {
    if dim >= 3 {
        vec![dim - dim / 3, dim / 3]
    } else {
        vec![dim]
    }
}

/// A valid experiment config of the given kind. `dim` is the total
/// dimension of the target algebra.
pub fn generate_example(kind: ExampleKind, seed: u64, dim: usize) -> Result<ExperimentConfig, GenerateError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(GenerateError::Dimension(dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (group, ngen, schedule) = match kind {
        ExampleKind::Zd | ExampleKind::Kernel => {
            let d = if kind == ExampleKind::Zd { 1 + (seed % 2) as usize } else { 1 };
            let kmax = if d == 1 { 2000 } else { 100 };
            (GroupSpec::Zd { dim: d }, d, ScheduleSpec::Geometric { kmax })
        }
        ExampleKind::Finite => (s3_group(), 2, ScheduleSpec::Range { start: 1, end: 5 }),
        ExampleKind::Heisenberg => (GroupSpec::Heisenberg, 2, ScheduleSpec::Geometric { kmax: 12 }),
    };
    let dims = target_dims(dim);
    let raw: Vec<f64> = dims.iter().map(|_| 0.5 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut blocks = Vec::new();
    for (&n, w) in dims.iter().zip(&raw) {
        let (delta, unitaries) = invariant_block(&mut rng, kind, ngen, n, w / total);
        blocks.push(BlockSpec {
            dim: n,
            kernel: false,
            delta: Some(matrix_spec(&delta)),
            unitaries: unitaries.iter().map(matrix_spec).collect(),
        });
    }
    if kind == ExampleKind::Kernel {
        let n = (dim / 2).max(1);
        // any unitary will do on the kernel: ρ does not see it
        let (_, unitaries) = invariant_block(&mut rng, ExampleKind::Zd, ngen, n, 1.0);
        blocks.push(BlockSpec { dim: n, kernel: true, delta: None, unitaries: unitaries.iter().map(matrix_spec).collect() });
    }
    let a = blocks
        .iter()
        .map(|b| {
            let g = sample::ginibre(&mut rng, b.dim);
            let p = symmetrize(&(&g * g.adjoint() * C64::new(FRAC_1_SQRT_2, 0.0)));
            matrix_spec(&p)
        })
        .collect();
    Ok(ExperimentConfig {
        name: format!("{}-seed{}-dim{}", kind.name(), seed, dim),
        group,
        blocks,
        a,
        schedule,
        tolerances: Tolerances::default(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::validation_report;

    #[test]
    fn generated_examples_validate() {
        for kind in ExampleKind::ALL {
            for seed in 0..6 {
                for dim in [1, 2, 4, 7] {
                    let cfg = generate_example(kind, seed, dim).unwrap();
                    let exp = cfg.build().unwrap();
                    let report = validation_report(&exp);
                    assert!(report.passed(), "{}: {:?}", cfg.name, report.failures());
                }
            }
        }
    }

    #[test]
    fn zd_seed1_dim4_residuals() {
        let exp = generate_example(ExampleKind::Zd, 1, 4).unwrap().build().unwrap();
        for c in validation_report(&exp).checks {
            if !c.name.starts_with("faithful") && !c.name.starts_with("a positive") {
                assert!(c.residual <= 1e-10, "{c}");
            }
        }
    }

    #[test]
    fn finite_examples_have_zero_defect() {
        let exp = generate_example(ExampleKind::Finite, 3, 5).unwrap().build().unwrap();
        let folner = exp.model.target().folner();
        for k in 1..=10 {
            assert_eq!(folner.max_generator_defect(k).unwrap(), 0.into());
        }
    }

    #[test]
    fn kernel_examples_are_not_faithful() {
        let exp = generate_example(ExampleKind::Kernel, 1, 3).unwrap().build().unwrap();
        assert!(!exp.model.is_faithful());
        assert!(!exp.model.kernel_blocks().is_empty());
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        assert_eq!(generate_example(ExampleKind::Heisenberg, 9, 6), generate_example(ExampleKind::Heisenberg, 9, 6));
        assert_eq!(generate_example(ExampleKind::Zd, 1, 65), Err(GenerateError::Dimension(65)));
        assert_eq!(generate_example(ExampleKind::Zd, 1, 0), Err(GenerateError::Dimension(0)));
    }

    #[test]
    fn config_round_trip_is_bit_exact() {
        let cfg = generate_example(ExampleKind::Heisenberg, 4, 5).unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
