//! The reference systems shipped with the tool. The JSON files under
//! `configs/` are generated from these builders.

use crate::matrix_core::{diag, real_matrix, Matrix, C64};

use super::config::{matrix_spec, BlockSpec, ExperimentConfig, GroupSpec, ScheduleSpec, Tolerances};

fn block(m: &Matrix, delta: &Matrix, unitaries: &[Matrix]) -> BlockSpec {
    BlockSpec {
        dim: m.nrows(),
        kernel: false,
        delta: Some(matrix_spec(delta)),
        unitaries: unitaries.iter().map(matrix_spec).collect(),
    }
}

fn config(name: &str, group: GroupSpec, blocks: Vec<BlockSpec>, a: &[Matrix], schedule: ScheduleSpec) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        group,
        blocks,
        a: a.iter().map(matrix_spec).collect(),
        schedule,
        tolerances: Tolerances::default(),
        seed: 7,
    }
}

fn range(end: u64) -> ScheduleSpec {
    ScheduleSpec::Range { start: 1, end }
}

/// `ℤ` acting trivially on `M₃`.
pub fn identity_action() -> ExperimentConfig {
    let u = Matrix::identity(3, 3);
    let delta = diag(&[0.5, 0.3, 0.2]);
    let a = real_matrix(&[&[2.0, 0.5, 0.0], &[0.5, 1.0, 0.2], &[0.0, 0.2, 0.5]]);
    config("identity-action", GroupSpec::Zd { dim: 1 }, vec![block(&u, &delta, &[u.clone()])], &[a], range(2000))
}

fn ones2() -> Matrix {
    real_matrix(&[&[1.0, 1.0], &[1.0, 1.0]])
}

/// `ℤ` acting on `M₂` through `diag(1, −1)`.
pub fn m2_alternating() -> ExperimentConfig {
    let u = diag(&[1.0, -1.0]);
    let delta = diag(&[0.5, 0.5]);
    config("m2-alternating", GroupSpec::Zd { dim: 1 }, vec![block(&u, &delta, &[u.clone()])], &[ones2()], range(2000))
}

fn hadamard4() -> Matrix {
    real_matrix(&[
        &[0.5, 0.5, 0.5, 0.5],
        &[0.5, -0.5, 0.5, -0.5],
        &[0.5, 0.5, -0.5, -0.5],
        &[0.5, -0.5, -0.5, 0.5],
    ])
}

fn complex_diag(entries: &[C64]) -> Matrix {
    Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries))
}

/// `ℤ²` acting on `M₄` by two commuting unitaries diagonal in the Hadamard
/// basis with distinct joint eigenvalues.
pub fn z2_m4() -> ExperimentConfig {
    let h = hadamard4();
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let u1 = &h * complex_diag(&[one, one, i, -one]) * &h;
    let u2 = &h * complex_diag(&[one, -one, one, i]) * &h;
    let delta = &h * diag(&[0.4, 0.3, 0.2, 0.1]) * &h;
    let a_diag = real_matrix(&[
        &[3.0, 0.3, 0.0, 0.0],
        &[0.3, 2.0, 0.3, 0.0],
        &[0.0, 0.3, 1.5, 0.3],
        &[0.0, 0.0, 0.3, 1.0],
    ]);
    let a = &h * a_diag * &h;
    config("z2-m4", GroupSpec::Zd { dim: 2 }, vec![block(&u1, &delta, &[u1.clone(), u2])], &[a], range(100))
}

/// Heisenberg group on `M₄`: Pauli `X ⊕ I₂` and `Z ⊕ I₂`, so the center acts
/// as `−I ⊕ I`.
pub fn heisenberg_m4() -> ExperimentConfig {
    let ux = real_matrix(&[
        &[0.0, 1.0, 0.0, 0.0],
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 1.0, 0.0],
        &[0.0, 0.0, 0.0, 1.0],
    ]);
    let uy = diag(&[1.0, -1.0, 1.0, 1.0]);
    let delta = real_matrix(&[
        &[0.15, 0.0, 0.0, 0.0],
        &[0.0, 0.15, 0.0, 0.0],
        &[0.0, 0.0, 0.4, 0.05],
        &[0.0, 0.0, 0.05, 0.3],
    ]);
    let mut a = real_matrix(&[
        &[2.0, 0.0, 0.1, 0.0],
        &[0.0, 2.0, 0.0, 0.1],
        &[0.1, 0.0, 2.4, 0.3],
        &[0.0, 0.1, 0.3, 1.2],
    ]);
    a[(0, 1)] = C64::new(0.0, -0.5);
    a[(1, 0)] = C64::new(0.0, 0.5);
    config("heisenberg-m4", GroupSpec::Heisenberg, vec![block(&ux, &delta, &[ux.clone(), uy])], &[a], range(12))
}

/// `M₂ ⊕ M₂` with the second block as the kernel of `ι`; `ℤ` alternates on
/// the surviving block and swaps the basis of the kernel block.
pub fn kernel_m2m2() -> ExperimentConfig {
    let u = diag(&[1.0, -1.0]);
    let swap = real_matrix(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let surviving = block(&u, &diag(&[0.5, 0.5]), &[u.clone()]);
    let kernel = BlockSpec { dim: 2, kernel: true, delta: None, unitaries: vec![matrix_spec(&swap)] };
    config(
        "kernel-m2m2",
        GroupSpec::Zd { dim: 1 },
        vec![surviving, kernel],
        &[ones2(), diag(&[3.0, 3.0])],
        range(2000),
    )
}

/// Signed generator codes of `s² = r³ = (s r)² = 1`.
pub fn s3_relations() -> Vec<Vec<i64>> {
    vec![vec![1, 1], vec![2, 2, 2], vec![1, 2, 1, 2]]
}

/// Index of the transposition `(0 1)` and the 3-cycle `0 → 1 → 2 → 0` in
/// [`FiniteTable::symmetric3`](crate::group_kernel::FiniteTable::symmetric3).
pub const S3_GENERATORS: [usize; 2] = [2, 3];

pub fn s3_group() -> GroupSpec {
    GroupSpec::Finite {
        table: crate::group_kernel::FiniteTable::symmetric3().rows().to_vec(),
        generators: S3_GENERATORS.to_vec(),
        relations: s3_relations(),
    }
}

/// `S₃` permuting the basis of `M₃`.
pub fn s3_m3() -> ExperimentConfig {
    let s = real_matrix(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
    // e_i ↦ e_{σ(i)} for σ = [1, 2, 0]
    let r = real_matrix(&[&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
    let delta = (Matrix::identity(3, 3) + Matrix::from_element(3, 3, C64::new(0.5, 0.0))) / C64::new(4.5, 0.0);
    let a = real_matrix(&[&[2.0, 0.4, 0.1], &[0.4, 1.0, 0.3], &[0.1, 0.3, 0.6]]);
    config("s3-m3", s3_group(), vec![block(&s, &delta, &[s.clone(), r])], &[a], range(10))
}

/// Every bundled system, in a fixed order.
pub fn bundled() -> Vec<ExperimentConfig> {
    vec![identity_action(), m2_alternating(), z2_m4(), heisenberg_m4(), kernel_m2m2(), s3_m3()]
}

pub fn by_name(name: &str) -> Option<ExperimentConfig> {
    bundled().into_iter().find(|c| c.name == name)
}
