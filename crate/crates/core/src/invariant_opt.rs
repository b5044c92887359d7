//! The ergodic maximum `m(a|K) = sup_{φ∈K} φ(a)` over invariant states,
//! computed by the fixed-point identity `m(a|S^G) = ‖E(a)‖` and,
//! independently, by conditional gradient over the invariant spectrahedron.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::cstar_model::{CStarModel, ModelError};
use crate::dynamics::{null_space, DynamicsError, FixedPointProjector, UnitaryAction, WStarSystem};
use crate::matrix_core::{
    is_psd, norming_state, operator_norm, state_eval, top_eigenpair, BlockElement, BlockState,
    Matrix, MatrixError, Signature, C64, PSD_TOL,
};

pub const WITNESS_TOL: f64 = 1e-8;
pub const FW_MAX_ITERATIONS: usize = 500;
pub const FW_GAP_TOL: f64 = 1e-9;
pub const BASIS_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OptError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("element is not positive")]
    NotPositive,
    #[error("Frank-Wolfe stopped after {iterations} iterations with duality gap {gap:e}")]
    NoConvergence { iterations: usize, gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// All `Θ`-invariant states of the domain.
    Full,
    /// Invariant states vanishing on `ker ι`.
    Annihilator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FixedPoint,
    FrankWolfe { iterations: usize },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::FixedPoint => write!(f, "fixed-point"),
            Method::FrankWolfe { iterations } => write!(f, "frank-wolfe({iterations})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessResiduals {
    /// `max_g ‖U_g D U_g† − D‖_F` for the witness density `D`.
    pub invariance: f64,
    /// Weight on kernel blocks.
    pub kernel_mass: f64,
    /// `|witness(a) − value|`.
    pub value: f64,
}

impl WitnessResiduals {
    pub fn acceptable(&self) -> bool {
        self.invariance <= WITNESS_TOL && self.kernel_mass <= WITNESS_TOL && self.value <= WITNESS_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxResult {
    pub value: f64,
    pub witness: BlockState,
    pub method: Method,
    pub residuals: WitnessResiduals,
    /// Final duality gap (zero for the fixed-point backend).
    pub gap: f64,
}

/// Hilbert–Schmidt orthonormal basis of the invariant Hermitian matrices on
/// each block, found by writing `s ↦ U s U† − s` in real coordinates.
#[derive(Debug, Clone)]
pub struct InvariantSubspace {
    bases: Vec<Vec<Matrix>>,
}

/// Orthonormal real basis of the Hermitian `n × n` matrices: `E_ii`,
/// `(E_ij + E_ji)/√2` and `i(E_ij − E_ji)/√2` for `i < j`.
fn hermitian_basis(n: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut m = Matrix::zeros(n, n);
        m[(i, i)] = C64::new(1.0, 0.0);
        out.push(m);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut re = Matrix::zeros(n, n);
            re[(i, j)] = C64::new(FRAC_1_SQRT_2, 0.0);
            re[(j, i)] = C64::new(FRAC_1_SQRT_2, 0.0);
            out.push(re);
            let mut im = Matrix::zeros(n, n);
            im[(i, j)] = C64::new(0.0, FRAC_1_SQRT_2);
            im[(j, i)] = C64::new(0.0, -FRAC_1_SQRT_2);
            out.push(im);
        }
    }
    out
}

/// `Re tr(b x)`, the real coordinate of `x` along the Hermitian `b`.
fn coordinate(b: &Matrix, x: &Matrix) -> f64 {
    b.iter().zip(x.transpose().iter()).map(|(p, q)| (p * q).re).sum()
}

impl InvariantSubspace {
    pub fn new(action: &UnitaryAction) -> Result<Self, DynamicsError> {
        let mut bases = Vec::new();
        for (bi, &n) in action.signature().dims().iter().enumerate() {
            let herm = hermitian_basis(n);
            let dim = herm.len();
            let gens = action.generators();
            let mut stacked = DMatrix::<f64>::zeros(dim * gens.len().max(1), dim);
            for (gi, u) in gens.iter().enumerate() {
                let ub = u.block(bi);
                for (col, b) in herm.iter().enumerate() {
                    let moved = ub * b * ub.adjoint() - b;
                    for (row, c) in herm.iter().enumerate() {
                        stacked[(gi * dim + row, col)] = coordinate(c, &moved);
                    }
                }
            }
            let null = null_space(&stacked).map_err(|(value, largest)| {
                DynamicsError::AmbiguousRank { block: bi, value, largest }
            })?;
            let basis = null
                .column_iter()
                .map(|coeffs| {
                    let mut m = Matrix::zeros(n, n);
                    for (c, b) in coeffs.iter().zip(&herm) {
                        m += b * C64::new(*c, 0.0);
                    }
                    m
                })
                .collect();
            bases.push(basis);
        }
        Ok(InvariantSubspace { bases })
    }

    pub fn basis(&self) -> &[Vec<Matrix>] {
        &self.bases
    }

    pub fn dimensions(&self) -> Vec<usize> {
        self.bases.iter().map(Vec::len).collect()
    }

    pub fn dimension(&self) -> usize {
        self.bases.iter().map(Vec::len).sum()
    }

    /// Orthogonal projection of the Hermitian part of `x`.
    pub fn project(&self, x: &BlockElement) -> BlockElement {
        let h = x.hermitian_part();
        BlockElement::new(
            self.bases
                .iter()
                .zip(h.blocks())
                .map(|(basis, m)| {
                    let mut out = Matrix::zeros(m.nrows(), m.ncols());
                    for b in basis {
                        out += b * C64::new(coordinate(b, m), 0.0);
                    }
                    out
                })
                .collect(),
        )
        .expect("same signature")
    }
}

pub fn invariant_subspace(sys: &WStarSystem) -> Result<InvariantSubspace, DynamicsError> {
    InvariantSubspace::new(sys.action())
}

fn require_positive(a: &BlockElement) -> Result<(), OptError> {
    if !is_psd(a, PSD_TOL)? {
        return Err(OptError::NotPositive);
    }
    Ok(())
}

/// `ψ ∘ E` with `ψ = norming_state(E(a))`, as a state.
fn fixed_point_witness(
    projector: &FixedPointProjector,
    a: &BlockElement,
) -> Result<(f64, BlockState), OptError> {
    let ea = projector.project(a).hermitian_part();
    let value = operator_norm(&ea);
    let psi = norming_state(&ea)?;
    let density = projector.project(&psi.weighted_density()).hermitian_part();
    Ok((value, BlockState::from_weighted_density(&density)?))
}

fn residuals(action: &UnitaryAction, witness: &BlockState, a: &BlockElement, value: f64) -> Result<WitnessResiduals, OptError> {
    Ok(WitnessResiduals {
        invariance: action.state_invariance_residual(witness)?,
        kernel_mass: 0.0,
        value: (state_eval(witness, a)?.re - value).abs(),
    })
}

/// `m(a|S^G) = ‖E(a)‖` for the invariant states of an action, with witness
/// `ψ ∘ E`.
pub fn fixed_point_max(action: &UnitaryAction, a: &BlockElement) -> Result<MaxResult, OptError> {
    a.check_signature(action.signature())?;
    require_positive(a)?;
    let projector = FixedPointProjector::new(action)?;
    let (value, witness) = fixed_point_witness(&projector, a)?;
    let residuals = residuals(action, &witness, a, value)?;
    Ok(MaxResult { value, witness, method: Method::FixedPoint, residuals, gap: 0.0 })
}

/// An invariant state `φ` with `φ(a) = m(a|S^G)`.
pub fn maximizing_state(sys: &WStarSystem, a: &BlockElement) -> Result<BlockState, OptError> {
    Ok(fixed_point_max(sys.action(), a)?.witness)
}

/// Maximizes `s(a)` over invariant states of the model's domain, restricted
/// to the annihilator of `ker ι` when asked. The annihilator problem is
/// solved on the quotient and its witness pulled back.
pub fn m_value(model: &CStarModel, a: &BlockElement, constraint: Constraint) -> Result<MaxResult, OptError> {
    solve(model, a, constraint, fixed_point_max)
}

/// [`m_value`] with the Frank–Wolfe backend.
pub fn m_value_cross_check(
    model: &CStarModel,
    a: &BlockElement,
    constraint: Constraint,
) -> Result<MaxResult, OptError> {
    solve(model, a, constraint, frank_wolfe_max)
}

fn solve(
    model: &CStarModel,
    a: &BlockElement,
    constraint: Constraint,
    backend: fn(&UnitaryAction, &BlockElement) -> Result<MaxResult, OptError>,
) -> Result<MaxResult, OptError> {
    a.check_signature(model.domain())?;
    require_positive(a)?;
    match constraint {
        Constraint::Full => backend(model.theta(), a),
        Constraint::Annihilator => {
            let quotient = model.quotient_model();
            let inner = backend(quotient.theta(), &model.project(a)?)?;
            let witness = model.pullback_state(&inner.witness)?;
            let mut residuals = residuals(model.theta(), &witness, a, inner.value)?;
            residuals.kernel_mass = model.kernel_mass(&witness);
            Ok(MaxResult { witness, residuals, ..inner })
        }
    }
}

/// Independent estimate of `m(a|S^G)` for the system's action.
pub fn sdp_cross_check(sys: &WStarSystem, a: &BlockElement) -> Result<MaxResult, OptError> {
    frank_wolfe_max(sys.action(), a)
}

/// Conditional gradient for `max ⟨a, D⟩` over invariant block densities
/// `D ≥ 0`, `Σ tr D_i = 1`. The linear oracle takes the top eigenvector `v`
/// of the projected gradient `P(a)` over all blocks and returns `P(vv†)`.
/// Starts from the tracial state with step `2/(t+2)`.
pub fn frank_wolfe_max(action: &UnitaryAction, a: &BlockElement) -> Result<MaxResult, OptError> {
    a.check_signature(action.signature())?;
    let subspace = InvariantSubspace::new(action)?;
    let grad = subspace.project(a);
    let sig = action.signature().clone();
    let (top, vertex) = linear_oracle(&subspace, &grad, &sig);
    let mut d = BlockState::tracial(&sig).weighted_density();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < FW_MAX_ITERATIONS {
        gap = top - objective(&grad, &d);
        if gap <= FW_GAP_TOL {
            break;
        }
        let step = 2.0 / (iterations as f64 + 2.0);
        d = &d.scale(1.0 - step) + &vertex.scale(step);
        iterations += 1;
    }
    if iterations == FW_MAX_ITERATIONS {
        gap = top - objective(&grad, &d);
        if gap > FW_GAP_TOL {
            return Err(OptError::NoConvergence { iterations, gap });
        }
    }
    let witness = BlockState::from_weighted_density(&d.hermitian_part())?;
    let value = state_eval(&witness, a)?.re;
    let residuals = residuals(action, &witness, a, value)?;
    Ok(MaxResult { value, witness, method: Method::FrankWolfe { iterations }, residuals, gap })
}

fn objective(grad: &BlockElement, d: &BlockElement) -> f64 {
    grad.blocks()
        .iter()
        .zip(d.blocks())
        .map(|(g, m)| coordinate(g, m))
        .sum()
}

/// The gradient is constant, so the oracle's answer is computed once.
fn linear_oracle(subspace: &InvariantSubspace, grad: &BlockElement, sig: &Signature) -> (f64, BlockElement) {
    let mut best: Option<(f64, usize, nalgebra::DVector<C64>)> = None;
    for (bi, g) in grad.blocks().iter().enumerate() {
        let (value, v) = top_eigenpair(g);
        if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
            best = Some((value, bi, v));
        }
    }
    let (value, block, v) = best.expect("nonempty signature");
    let pure = BlockState::pure(sig, block, &v).weighted_density();
    (value, subspace.project(&pure))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_kernel::GroupModel;
    use crate::matrix_core::{diag, real_matrix};
    use crate::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn system(sig: Signature, group: GroupModel, gens: Vec<BlockElement>) -> WStarSystem {
        let action = UnitaryAction::new(group, sig.clone(), gens).unwrap();
        WStarSystem::new(action, BlockState::tracial(&sig)).unwrap()
    }

    fn alternating() -> WStarSystem {
        system(Signature(vec![2]), GroupModel::zd(1), vec![BlockElement::single(diag(&[1.0, -1.0])).unwrap()])
    }

    fn ones() -> BlockElement {
        BlockElement::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap()
    }

    fn rotation(theta: f64) -> BlockElement {
        let (s, c) = theta.sin_cos();
        BlockElement::single(real_matrix(&[&[c, -s], &[s, c]])).unwrap()
    }

    fn random_abelian(seed: u64, n: usize) -> WStarSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = sample::unitary(&mut rng, n);
        // repeated phases leave a nontrivial fixed space
        let phases = [0.0, 0.0, 1.3, 1.3, 2.9, 0.0];
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            (0..n).map(|i| C64::from_polar(1.0, phases[i % phases.len()])),
        ));
        let u = &v * d * v.adjoint();
        system(Signature(vec![n]), GroupModel::zd(1), vec![BlockElement::single(u).unwrap()])
    }

    #[test]
    fn subspace_dimensions() {
        for n in 1..=4 {
            let sig = Signature(vec![n]);
            let sys = system(sig.clone(), GroupModel::zd(1), vec![BlockElement::identity(&sig)]);
            assert_eq!(invariant_subspace(&sys).unwrap().dimension(), n * n);
        }
        assert_eq!(invariant_subspace(&alternating()).unwrap().dimension(), 2);
        let rot = system(Signature(vec![2]), GroupModel::zd(1), vec![rotation(2.0 * std::f64::consts::PI / 5.0)]);
        let sub = invariant_subspace(&rot).unwrap();
        assert_eq!(sub.dimension(), 2);
        // identity and the skew generator [[0,-i],[i,0]] (up to sign and scale)
        let gen = BlockElement::single(crate::matrix_core::symmetrize(&Matrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
        )))
        .unwrap();
        assert!(sub.project(&gen).distance(&gen) < 1e-10);
        let id = BlockElement::identity(&Signature(vec![2]));
        assert!(sub.project(&id).distance(&id) < 1e-10);
    }

    #[test]
    fn subspace_basis_is_orthonormal_and_invariant() {
        for seed in 0..5 {
            let sys = random_abelian(seed, 4);
            let sub = invariant_subspace(&sys).unwrap();
            let u = sys.action().generators()[0].block(0);
            let basis = &sub.basis()[0];
            for (i, b) in basis.iter().enumerate() {
                assert!((u * b * u.adjoint() - b).norm() <= BASIS_RESIDUAL_TOL);
                assert!((b - b.adjoint()).norm() < 1e-12);
                for (j, c) in basis.iter().enumerate() {
                    let ip = (b.adjoint() * c).trace();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - C64::new(expect, 0.0)).norm() < 1e-10);
                }
            }
            // 3 distinct phases with multiplicities 2, 1, 1 at n = 4
            let p = FixedPointProjector::new(sys.action()).unwrap();
            assert_eq!(sub.dimensions(), p.dimensions());
        }
    }

    #[test]
    fn both_subspace_routes_project_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..4 {
            let sys = random_abelian(seed, 5);
            let sub = invariant_subspace(&sys).unwrap();
            let p = FixedPointProjector::new(sys.action()).unwrap();
            let x = sample::hermitian_element(&mut rng, sys.signature());
            assert!(sub.project(&x).distance(&p.project(&x)) < 1e-9);
        }
    }

    #[test]
    fn identity_action_gives_the_norm() {
        let sig = Signature(vec![3]);
        let sys = system(sig.clone(), GroupModel::zd(1), vec![BlockElement::identity(&sig)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sample::positive(&mut rng, &sig);
        let model = CStarModel::faithful(sys.clone());
        let r = m_value(&model, &a, Constraint::Full).unwrap();
        assert!((r.value - operator_norm(&a)).abs() < 1e-12);
        let expect = norming_state(&a).unwrap();
        assert!(r.witness.weighted_density().distance(&expect.weighted_density()) < 1e-9);
        assert_eq!(maximizing_state(&sys, &a).unwrap().weighted_density().distance(&expect.weighted_density()) < 1e-9, true);
        let fw = sdp_cross_check(&sys, &a).unwrap();
        assert!((fw.value - operator_norm(&a)).abs() < 1e-6);
    }

    #[test]
    fn alternating_maximum() {
        let sys = alternating();
        let model = CStarModel::faithful(sys.clone());
        let r = m_value(&model, &ones(), Constraint::Annihilator).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let expect = diag(&[1.0, 0.0]);
        assert!((&r.witness.densities()[0] - expect).norm() < 1e-12);
        assert!(r.residuals.acceptable());
        let phi = maximizing_state(&sys, &ones()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x = sample::element(&mut rng, sys.signature());
            for g in sys.group().generators() {
                let moved = crate::dynamics::act(&sys, g, &x).unwrap();
                assert!((state_eval(&phi, &moved).unwrap() - state_eval(&phi, &x).unwrap()).norm() < 1e-8);
            }
        }
        let fw = sdp_cross_check(&sys, &ones()).unwrap();
        assert!((fw.value - 1.0).abs() < 1e-6);
    }

    fn block_model(surviving: Matrix) -> CStarModel {
        let sig = Signature(vec![2, 2]);
        let u = BlockElement::new(vec![surviving, Matrix::identity(2, 2)]).unwrap();
        let theta = UnitaryAction::new(GroupModel::zd(1), sig, vec![u]).unwrap();
        CStarModel::new(theta, BTreeSet::from([1]), BlockState::tracial(&Signature(vec![2]))).unwrap()
    }

    fn kernel_element() -> BlockElement {
        BlockElement::new(vec![ones().block(0).clone(), diag(&[3.0, 3.0])]).unwrap()
    }

    #[test]
    fn kernel_model_maximum_comes_from_surviving_blocks() {
        let m = block_model(diag(&[1.0, -1.0]));
        let a = kernel_element();
        let ann = m_value(&m, &a, Constraint::Annihilator).unwrap();
        assert!((ann.value - 1.0).abs() < 1e-12);
        assert_eq!(ann.witness.weights()[1], 0.0);
        assert!(ann.residuals.acceptable());
        let full = m_value(&m, &a, Constraint::Full).unwrap();
        assert!((full.value - 3.0).abs() < 1e-12);
        assert!(full.residuals.invariance < WITNESS_TOL);
        for c in [Constraint::Annihilator, Constraint::Full] {
            let fw = m_value_cross_check(&m, &a, c).unwrap();
            assert!((fw.value - m_value(&m, &a, c).unwrap().value).abs() < 1e-6);
        }
    }

    #[test]
    fn trivial_action_kernel_model() {
        let m = block_model(Matrix::identity(2, 2));
        let a = kernel_element();
        assert!((m_value(&m, &a, Constraint::Annihilator).unwrap().value - 2.0).abs() < 1e-12);
        assert!((m_value(&m, &a, Constraint::Full).unwrap().value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn faithful_constraints_agree() {
        for seed in 0..5 {
            let sys = random_abelian(seed, 4);
            let m = CStarModel::faithful(sys.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let a = sample::positive(&mut rng, sys.signature());
            let full = m_value(&m, &a, Constraint::Full).unwrap();
            let ann = m_value(&m, &a, Constraint::Annihilator).unwrap();
            assert!((full.value - ann.value).abs() < 1e-8);
        }
    }

    #[test]
    fn backends_agree_on_random_systems() {
        for seed in 0..8 {
            let sys = random_abelian(seed, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = sample::positive(&mut rng, sys.signature());
            let primary = fixed_point_max(sys.action(), &a).unwrap();
            let fw = sdp_cross_check(&sys, &a).unwrap();
            assert!((primary.value - fw.value).abs() < 1e-6);
            assert!(primary.residuals.acceptable(), "{:?}", primary.residuals);
            assert!(fw.residuals.acceptable(), "{:?}", fw.residuals);
            // certified from above by ‖E(a)‖ and from below by the witness
            let upper = operator_norm(&crate::dynamics::mean_ergodic_projection(&sys, &a).unwrap());
            let lower = state_eval(&primary.witness, &a).unwrap().re;
            assert!((upper - lower).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_non_positive() {
        let sys = alternating();
        let m = CStarModel::faithful(sys);
        let bad = BlockElement::single(diag(&[1.0, -1.0])).unwrap();
        assert!(matches!(m_value(&m, &bad, Constraint::Full), Err(OptError::NotPositive)));
    }
}
