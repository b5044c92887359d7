//! Unitarily implemented group actions `Ξ_g(x) = U_g x U_g†` on block
//! algebras, the W*-dynamical systems built from them, Følner averages and
//! the mean-ergodic projection.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DVector;
use rand::SeedableRng;
use thiserror::Error;

use crate::group_kernel::{FolnerFamily, GroupElement, GroupError, GroupKind, GroupModel, Letter};
use crate::matrix_core::{
    is_psd, min_eigenvalue, operator_norm, BlockElement, BlockState, Matrix, MatrixError,
    Signature, C64, PSD_TOL,
};

pub const UNITARITY_TOL: f64 = 1e-10;
pub const INVARIANCE_TOL: f64 = 1e-10;
pub const FAITHFUL_MIN_EIGENVALUE: f64 = 1e-8;
pub const RELATION_TOL: f64 = 1e-8;
const SCHUR_MAX_ITERATIONS: usize = 10_000;
const SCHUR_RETRIES: u64 = 8;
const SCHUR_DEFLATION: [f64; 2] = [f64::EPSILON, 1e-14];
const SCHUR_RECONSTRUCTION_TOL: f64 = 1e-11;
const SCHUR_BASIS_SEED: u64 = 0x5eed;
/// Singular values at or below this fraction of `max(1, largest)` count as
/// zero when solving for fixed points.
pub const RANK_CUT: f64 = 1e-8;
/// Singular values strictly inside this band (relative to `max(1, largest)`) make
/// the rank decision ambiguous.
pub const RANK_AMBIGUITY_BAND: (f64, f64) = (1e-10, 1e-6);
/// Largest Følner set averaged by direct summation inside sweeps; bigger sets
/// go through [`SpectralAverager`].
pub const DIRECT_SUM_LIMIT: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("expected {expected} generator unitaries, got {found}")]
    GeneratorCount { expected: usize, found: usize },
    #[error("system failed validation: {}", failures.join("; "))]
    Invalid { report: ValidationReport, failures: Vec<String> },
    #[error("fixed-point rank is ambiguous on block {block}: singular value {value:e} (largest {largest:e}) sits near the cut")]
    AmbiguousRank { block: usize, value: f64, largest: f64 },
    #[error("element is not positive")]
    NotPositive,
    #[error("k schedule must be strictly increasing and start at 1 or more")]
    BadSchedule,
    #[error("Schur decomposition of a {dim}x{dim} unitary did not converge")]
    NoSchur { dim: usize },
}

/// One named validation check with its measured residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes iff `residual <= tolerance`.
    pub fn at_most(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Check { name: name.into(), residual, tolerance, passed: residual <= tolerance }
    }

    /// Passes iff `value >= bound`; the stored residual is `value`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), residual: value, tolerance: bound, passed: value >= bound }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "ok" } else { "FAIL" };
        write!(f, "{verdict:4} {} residual={:.3e} tol={:.1e}", self.name, self.residual, self.tolerance)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn into_result(self) -> Result<ValidationReport, DynamicsError> {
        if self.passed() {
            Ok(self)
        } else {
            let failures = self.failures().iter().map(|c| c.to_string()).collect();
            Err(DynamicsError::Invalid { report: self, failures })
        }
    }
}

/// An action of a group on a block algebra, given by one block-diagonal
/// unitary per generator.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryAction {
    group: GroupModel,
    signature: Signature,
    generators: Vec<BlockElement>,
}

impl UnitaryAction {
    pub fn new(
        group: GroupModel,
        signature: Signature,
        generators: Vec<BlockElement>,
    ) -> Result<Self, DynamicsError> {
        if generators.len() != group.generators().len() {
            return Err(DynamicsError::GeneratorCount {
                expected: group.generators().len(),
                found: generators.len(),
            });
        }
        for u in &generators {
            u.check_signature(&signature)?;
        }
        Ok(UnitaryAction { group, signature, generators })
    }

    /// Every generator acts by the identity.
    pub fn trivial(group: GroupModel, signature: Signature) -> Self {
        let generators =
            vec![BlockElement::identity(&signature); group.generators().len()];
        UnitaryAction { group, signature, generators }
    }

    pub fn group(&self) -> &GroupModel {
        &self.group
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn generators(&self) -> &[BlockElement] {
        &self.generators
    }

    /// Restriction to a subset of blocks, in the given order.
    pub fn restrict(&self, blocks: &[usize]) -> UnitaryAction {
        let pick = |u: &BlockElement| {
            BlockElement::new(blocks.iter().map(|&i| u.block(i).clone()).collect())
                .expect("restriction keeps at least one block")
        };
        UnitaryAction {
            group: self.group.clone(),
            signature: Signature(blocks.iter().map(|&i| self.signature.dims()[i]).collect()),
            generators: self.generators.iter().map(pick).collect(),
        }
    }

    fn letter_unitary(&self, letter: Letter) -> BlockElement {
        let u = &self.generators[letter.generator];
        if letter.inverse {
            u.adjoint()
        } else {
            u.clone()
        }
    }

    /// Product of generator unitaries along a word.
    pub fn word_unitary(&self, word: &[Letter]) -> Result<BlockElement, DynamicsError> {
        let mut acc = BlockElement::identity(&self.signature);
        for &letter in word {
            if letter.generator >= self.generators.len() {
                return Err(GroupError::UnknownGenerator {
                    generator: letter.generator,
                    count: self.generators.len(),
                }
                .into());
            }
            acc = &acc * &self.letter_unitary(letter);
        }
        Ok(acc)
    }

    /// `U_z = U_x U_y U_x† U_y†` for the Heisenberg model.
    fn heisenberg_center(&self) -> BlockElement {
        let (x, y) = (&self.generators[0], &self.generators[1]);
        &(&(x * y) * &x.adjoint()) * &y.adjoint()
    }

    /// `U_g` without memoization.
    pub fn unitary(&self, g: &GroupElement) -> Result<BlockElement, DynamicsError> {
        ActionEvaluator::new(self).unitary(g)
    }

    /// `Ξ_g(x) = U_g x U_g†`.
    pub fn act(&self, g: &GroupElement, x: &BlockElement) -> Result<BlockElement, DynamicsError> {
        x.check_signature(&self.signature)?;
        Ok(x.conjugate_by(&self.unitary(g)?))
    }

    /// `max_g ‖U_g D U_g† − D‖_F` for the weighted density `D` of a state;
    /// zero iff the state is invariant.
    pub fn state_invariance_residual(&self, s: &BlockState) -> Result<f64, DynamicsError> {
        let d = s.weighted_density();
        d.check_signature(&self.signature)?;
        Ok(self
            .generators
            .iter()
            .map(|u| d.conjugate_by(u).distance(&d))
            .fold(0.0, f64::max))
    }

    /// Unitarity of every generator, then the relations of the group model,
    /// then (finite models) the full multiplication table.
    pub fn structural_checks(&self, label: &str) -> Vec<Check> {
        let mut checks = Vec::new();
        let identity = BlockElement::identity(&self.signature);
        for (gi, u) in self.generators.iter().enumerate() {
            for (bi, ub) in u.blocks().iter().enumerate() {
                let n = ub.nrows();
                let residual = (ub * ub.adjoint() - Matrix::identity(n, n)).norm();
                checks.push(Check::at_most(
                    format!("{label}unitarity[generator {gi}, block {bi}]"),
                    residual,
                    UNITARITY_TOL,
                ));
            }
        }
        for (ri, word) in self.group.relations().iter().enumerate() {
            let residual = self
                .word_unitary(word)
                .map(|w| w.distance(&identity))
                .unwrap_or(f64::INFINITY);
            checks.push(Check::at_most(format!("{label}relation[{ri}]"), residual, RELATION_TOL));
        }
        if let GroupKind::Finite(table) = self.group.kind() {
            let mut ev = ActionEvaluator::new(self);
            let elements = self.group.finite_elements().unwrap_or_default();
            let mut worst = 0.0f64;
            for g in &elements {
                for (si, s) in self.group.generators().iter().enumerate() {
                    let gs = table.product(g.coords()[0] as usize, s.coords()[0] as usize);
                    let lhs = ev.unitary(&elements[gs]).expect("table element");
                    let rhs = &ev.unitary(g).expect("table element") * &self.generators[si];
                    worst = worst.max(lhs.distance(&rhs));
                }
            }
            checks.push(Check::at_most(format!("{label}homomorphism"), worst, RELATION_TOL));
        }
        checks
    }
}

/// Memoized evaluation of `g ↦ U_g`. Generator powers are cached, and finite
/// groups additionally cache every element.
pub struct ActionEvaluator<'a> {
    action: &'a UnitaryAction,
    /// `(source, exponent) -> U_source^exponent`; source 2 is the Heisenberg
    /// center.
    powers: HashMap<(usize, i64), BlockElement>,
    elements: HashMap<GroupElement, BlockElement>,
    center: Option<BlockElement>,
}

impl<'a> ActionEvaluator<'a> {
    pub fn new(action: &'a UnitaryAction) -> Self {
        let center = matches!(action.group.kind(), GroupKind::Heisenberg)
            .then(|| action.heisenberg_center());
        ActionEvaluator { action, powers: HashMap::new(), elements: HashMap::new(), center }
    }

    fn source(&self, source: usize) -> &BlockElement {
        if source < self.action.generators.len() {
            &self.action.generators[source]
        } else {
            self.center.as_ref().expect("center only exists for Heisenberg models")
        }
    }

    fn power(&mut self, source: usize, exponent: i64) -> BlockElement {
        if exponent == 0 {
            return BlockElement::identity(&self.action.signature);
        }
        if let Some(p) = self.powers.get(&(source, exponent)) {
            return p.clone();
        }
        let step = exponent.signum();
        let prev = self.power(source, exponent - step);
        let base = if step > 0 { self.source(source).clone() } else { self.source(source).adjoint() };
        let p = &prev * &base;
        self.powers.insert((source, exponent), p.clone());
        p
    }

    pub fn unitary(&mut self, g: &GroupElement) -> Result<BlockElement, DynamicsError> {
        let group = &self.action.group;
        if !group.contains(g) {
            return Err(GroupError::ModelMismatch {
                element: g.to_string(),
                expected: group.tag(),
            }
            .into());
        }
        let c = g.coords();
        Ok(match group.kind() {
            GroupKind::Zd(d) => {
                let mut acc = self.power(0, c[0]);
                for i in 1..*d {
                    acc = &acc * &self.power(i, c[i]);
                }
                acc
            }
            GroupKind::Heisenberg => {
                // (a, b, c) = x^a y^b z^(c - ab)
                let ua = self.power(0, c[0]);
                let ub = self.power(1, c[1]);
                let uz = self.power(2, c[2] - c[0] * c[1]);
                &(&ua * &ub) * &uz
            }
            GroupKind::Finite(_) => {
                if let Some(u) = self.elements.get(g) {
                    return Ok(u.clone());
                }
                let word = group.finite_word(g).expect("generating set reaches every element");
                let u = self.action.word_unitary(word)?;
                self.elements.insert(g.clone(), u.clone());
                u
            }
        })
    }
}

/// A W*-dynamical system on a finite direct sum of matrix algebras: an action
/// together with a faithful invariant state `ρ` and the group's Følner family.
#[derive(Debug, Clone, PartialEq)]
pub struct WStarSystem {
    action: UnitaryAction,
    rho: BlockState,
    folner: FolnerFamily,
}

impl WStarSystem {
    /// Shape checks only; see [`validate_system`] for the invariants.
    pub fn new(action: UnitaryAction, rho: BlockState) -> Result<Self, DynamicsError> {
        if rho.signature() != *action.signature() {
            return Err(MatrixError::SignatureMismatch {
                expected: action.signature().clone(),
                found: rho.signature(),
            }
            .into());
        }
        let folner = FolnerFamily::new(action.group().clone());
        Ok(WStarSystem { action, rho, folner })
    }

    pub fn action(&self) -> &UnitaryAction {
        &self.action
    }

    pub fn rho(&self) -> &BlockState {
        &self.rho
    }

    pub fn folner(&self) -> &FolnerFamily {
        &self.folner
    }

    pub fn group(&self) -> &GroupModel {
        self.action.group()
    }

    pub fn signature(&self) -> &Signature {
        self.action.signature()
    }
}

/// Runs every structural check on a system and fails if any is violated.
pub fn validate_system(sys: &WStarSystem) -> Result<ValidationReport, DynamicsError> {
    system_report(sys).into_result()
}

/// The full check list of [`validate_system`] without turning failures into
/// an error.
pub fn system_report(sys: &WStarSystem) -> ValidationReport {
    let mut checks = sys.action.structural_checks("");
    let delta = sys.rho.weighted_density();
    for (gi, u) in sys.action.generators.iter().enumerate() {
        for (bi, (ub, d)) in u.blocks().iter().zip(delta.blocks()).enumerate() {
            let residual = (ub * d - d * ub).norm();
            checks.push(Check::at_most(
                format!("rho-invariance[generator {gi}, block {bi}]"),
                residual,
                INVARIANCE_TOL,
            ));
        }
    }
    for (bi, d) in delta.blocks().iter().enumerate() {
        checks.push(Check::at_least(
            format!("faithful[block {bi}]"),
            min_eigenvalue(d),
            FAITHFUL_MIN_EIGENVALUE,
        ));
    }
    ValidationReport { checks }
}

pub fn act(
    sys: &WStarSystem,
    g: &GroupElement,
    x: &BlockElement,
) -> Result<BlockElement, DynamicsError> {
    sys.action.act(g, x)
}

/// `(1/|F_k|) Σ_{g ∈ F_k} U_g x U_g†`, summed term by term.
pub fn ergodic_average(
    sys: &WStarSystem,
    x: &BlockElement,
    k: u64,
) -> Result<BlockElement, DynamicsError> {
    average_over(&sys.action, &sys.folner, x, k)
}

pub(crate) fn average_over(
    action: &UnitaryAction,
    folner: &FolnerFamily,
    x: &BlockElement,
    k: u64,
) -> Result<BlockElement, DynamicsError> {
    x.check_signature(action.signature())?;
    let mut ev = ActionEvaluator::new(action);
    let mut sum = BlockElement::zeros(action.signature());
    let mut failure = None;
    folner.for_each(k, |g| match ev.unitary(&g) {
        Ok(u) => sum = &sum + &x.conjugate_by(&u),
        Err(e) => failure = Some(e),
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(sum.scale(1.0 / folner.size(k)? as f64))
}

/// One row of a norm sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRow {
    pub k: u64,
    pub folner_size: u64,
    pub norm: f64,
}

/// `‖avg_k(x)‖` for each `k` of a strictly increasing schedule.
///
/// Følner families are nested, so small sets are summed incrementally: each
/// `k` adds only the conjugations for `F_k \ F_{k'}`. Sets larger than
/// [`DIRECT_SUM_LIMIT`] are averaged with [`SpectralAverager`].
pub fn norm_sequence(
    sys: &WStarSystem,
    x: &BlockElement,
    ks: &[u64],
) -> Result<Vec<NormRow>, DynamicsError> {
    if !is_psd(x, PSD_TOL)? {
        return Err(DynamicsError::NotPositive);
    }
    averages(sys.action(), sys.folner(), x, ks)
        .map(|avgs| avgs.into_iter().map(|(k, size, avg)| NormRow { k, folner_size: size, norm: operator_norm(&avg) }).collect())
}

/// Følner averages along a strictly increasing schedule, as `(k, |F_k|, avg)`.
pub fn averages(
    action: &UnitaryAction,
    folner: &FolnerFamily,
    x: &BlockElement,
    ks: &[u64],
) -> Result<Vec<(u64, u64, BlockElement)>, DynamicsError> {
    x.check_signature(action.signature())?;
    if ks.first() == Some(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DynamicsError::BadSchedule);
    }
    let mut ev = ActionEvaluator::new(action);
    let mut sum = BlockElement::zeros(action.signature());
    let mut covered: Option<u64> = None;
    let mut spectral: Option<SpectralAverager> = None;
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let size = folner.size(k)?;
        if size <= DIRECT_SUM_LIMIT {
            let mut failure = None;
            folner.for_each(k, |g| {
                if covered.is_some_and(|prev| folner.contains(prev, &g)) {
                    return;
                }
                match ev.unitary(&g) {
                    Ok(u) => sum = &sum + &x.conjugate_by(&u),
                    Err(e) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            covered = Some(k);
            out.push((k, size, sum.scale(1.0 / size as f64)));
        } else {
            if spectral.is_none() {
                let kmax = *ks.last().expect("nonempty");
                spectral = Some(SpectralAverager::new(action, kmax)?);
            }
            let avg = spectral.as_ref().expect("just built").average(x, k)?;
            out.push((k, size, avg));
        }
    }
    Ok(out)
}

/// Eigen-decomposition `U = V diag(d) V†` of one unitary block, with the
/// eigenvalues pushed onto the unit circle.
#[derive(Debug, Clone)]
struct UnitarySpectrum {
    basis: Matrix,
    phases: Vec<C64>,
}

impl UnitarySpectrum {
    fn new(u: &Matrix) -> Result<Self, DynamicsError> {
        let (basis, phases) = unitary_schur(u)?;
        Ok(UnitarySpectrum { basis, phases })
    }

    /// `Σ_{j<count} U^j x U^{-j}`, or `Σ_{j<count} U^{-j} x U^j` when `dual`.
    fn geometric_conjugation_sum(&self, x: &Matrix, count: u64, dual: bool) -> Matrix {
        let mut y = self.basis.adjoint() * x * &self.basis;
        let n = y.nrows();
        for i in 0..n {
            for j in 0..n {
                let d = dirichlet_sum(self.phases[i] * self.phases[j].conj(), count);
                y[(i, j)] *= if dual { d.conj() } else { d };
            }
        }
        &self.basis * y * self.basis.adjoint()
    }
}

/// `Σ_{j<n} q^j` for unimodular `q`, via `e^{i(n-1)θ/2} sin(nθ/2) / sin(θ/2)`,
/// which stays accurate as `θ → 0`.
pub fn dirichlet_sum(q: C64, n: u64) -> C64 {
    let theta = q.arg();
    let half = theta / 2.0;
    if half.sin() == 0.0 {
        return C64::new(n as f64, 0.0);
    }
    let n = n as f64;
    let ratio = (n * half).sin() / half.sin();
    C64::from_polar(ratio, (n - 1.0) * half)
}

/// `U = Q D Q†` with `D` the unimodular diagonal of a Schur form, computed
/// with a bounded iteration count. Shifted QR can stall on near-scalar or
/// permutation-like unitaries, so a looser deflation tolerance and then a few
/// fixed generic bases `U = V W V†` are tried. A candidate is accepted only
/// if it reproduces `U`.
fn unitary_schur(u: &Matrix) -> Result<(Matrix, Vec<C64>), DynamicsError> {
    let n = u.nrows();
    let attempt = |w: Matrix, eps: f64, v: Option<&Matrix>| -> Option<(Matrix, Vec<C64>)> {
        let (q, t) = w.try_schur(eps, SCHUR_MAX_ITERATIONS)?.unpack();
        let q = match v {
            Some(v) => v * q,
            None => q,
        };
        let phases: Vec<C64> = t.diagonal().iter().map(|d| d / d.norm()).collect();
        let d = Matrix::from_diagonal(&DVector::from_vec(phases.clone()));
        ((&q * d * q.adjoint() - u).norm() <= SCHUR_RECONSTRUCTION_TOL).then_some((q, phases))
    };
    for eps in SCHUR_DEFLATION {
        if let Some(found) = attempt(u.clone(), eps, None) {
            return Ok(found);
        }
    }
    for retry in 0..SCHUR_RETRIES {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(SCHUR_BASIS_SEED + retry);
        let v = crate::sample::unitary(&mut rng, n);
        for eps in SCHUR_DEFLATION {
            if let Some(found) = attempt(v.adjoint() * u * &v, eps, Some(&v)) {
                return Ok(found);
            }
        }
    }
    Err(DynamicsError::NoSchur { dim: n })
}

fn block_spectra(u: &BlockElement) -> Result<Vec<UnitarySpectrum>, DynamicsError> {
    u.blocks().iter().map(UnitarySpectrum::new).collect()
}

fn geometric_sum(spectra: &[UnitarySpectrum], x: &BlockElement, count: u64, dual: bool) -> BlockElement {
    BlockElement::new(
        spectra
            .iter()
            .zip(x.blocks())
            .map(|(s, b)| s.geometric_conjugation_sum(b, count, dual))
            .collect(),
    )
    .expect("same signature")
}

enum SpectralPlan {
    /// One spectrum per generator; the box average factors over coordinates.
    Abelian(Vec<Vec<UnitarySpectrum>>),
    /// `avg = k⁻⁴ Σ_a X^a G_k(Ad(U_y U_z^{-a})) G_{k²}(Ad U_z)` with `G_n`
    /// the geometric conjugation sum.
    Heisenberg {
        x_powers: Vec<BlockElement>,
        twisted: Vec<Vec<UnitarySpectrum>>,
        center: Vec<UnitarySpectrum>,
    },
    Finite(Vec<BlockElement>),
}

/// Følner averages evaluated through eigen-decompositions of the generator
/// unitaries instead of one conjugation per group element. The cost per
/// average is `O(d n³)` for `Z^d`, `O(k n³)` for the Heisenberg group, which
/// makes sweeps with `|F_k|` in the billions feasible. Immutable once built,
/// so it can be shared across threads.
pub struct SpectralAverager {
    plan: SpectralPlan,
    kmax: u64,
    folner: FolnerFamily,
    signature: Signature,
}

impl SpectralAverager {
    /// Prepares averages for every `k ≤ kmax`.
    pub fn new(action: &UnitaryAction, kmax: u64) -> Result<Self, DynamicsError> {
        let plan = match action.group().kind() {
            GroupKind::Zd(_) => {
                SpectralPlan::Abelian(action.generators.iter().map(block_spectra).collect::<Result<_, _>>()?)
            }
            GroupKind::Heisenberg => {
                let ux = &action.generators[0];
                let uy = &action.generators[1];
                let uz = action.heisenberg_center();
                let uz_inv = uz.adjoint();
                let mut x_powers = Vec::with_capacity(kmax as usize);
                let mut twisted = Vec::with_capacity(kmax as usize);
                let mut xp = BlockElement::identity(action.signature());
                let mut zp = BlockElement::identity(action.signature());
                for _ in 0..kmax {
                    x_powers.push(xp.clone());
                    twisted.push(block_spectra(&(uy * &zp))?);
                    xp = &xp * ux;
                    zp = &zp * &uz_inv;
                }
                SpectralPlan::Heisenberg { x_powers, twisted, center: block_spectra(&uz)? }
            }
            GroupKind::Finite(_) => {
                let mut ev = ActionEvaluator::new(action);
                let elements = action.group().finite_elements().unwrap_or_default();
                SpectralPlan::Finite(
                    elements.iter().map(|g| ev.unitary(g)).collect::<Result<_, _>>()?,
                )
            }
        };
        Ok(SpectralAverager {
            plan,
            kmax,
            folner: FolnerFamily::new(action.group().clone()),
            signature: action.signature().clone(),
        })
    }

    pub fn kmax(&self) -> u64 {
        self.kmax
    }

    pub fn average(&self, x: &BlockElement, k: u64) -> Result<BlockElement, DynamicsError> {
        x.check_signature(&self.signature)?;
        let size = self.folner.size(k)?;
        assert!(k <= self.kmax, "averager prepared up to k = {}", self.kmax);
        let sum = match &self.plan {
            SpectralPlan::Abelian(gens) => {
                let mut y = x.clone();
                for spectra in gens {
                    y = geometric_sum(spectra, &y, k, false);
                }
                y
            }
            SpectralPlan::Heisenberg { x_powers, twisted, center } => {
                let s = geometric_sum(center, x, k * k, false);
                let mut acc = BlockElement::zeros(&self.signature);
                for a in 0..k as usize {
                    let inner = geometric_sum(&twisted[a], &s, k, false);
                    acc = &acc + &inner.conjugate_by(&x_powers[a]);
                }
                acc
            }
            SpectralPlan::Finite(unitaries) => {
                let mut acc = BlockElement::zeros(&self.signature);
                for u in unitaries {
                    acc = &acc + &x.conjugate_by(u);
                }
                acc
            }
        };
        Ok(sum.scale(1.0 / size as f64))
    }

    /// The dual of [`average`](Self::average) under `⟨d, y⟩ = Σ_i tr(d_i y_i)`:
    /// `⟨dual_average(d, k), y⟩ = ⟨d, average(y, k)⟩`. With `d` a weighted
    /// density this turns `y ↦ σ(avg_k y)` into one trace pairing.
    pub fn dual_average(&self, d: &BlockElement, k: u64) -> Result<BlockElement, DynamicsError> {
        d.check_signature(&self.signature)?;
        let size = self.folner.size(k)?;
        assert!(k <= self.kmax, "averager prepared up to k = {}", self.kmax);
        let sum = match &self.plan {
            SpectralPlan::Abelian(gens) => {
                let mut y = d.clone();
                for spectra in gens.iter().rev() {
                    y = geometric_sum(spectra, &y, k, true);
                }
                y
            }
            SpectralPlan::Heisenberg { x_powers, twisted, center } => {
                let mut acc = BlockElement::zeros(&self.signature);
                for a in 0..k as usize {
                    let moved = d.conjugate_by(&x_powers[a].adjoint());
                    acc = &acc + &geometric_sum(&twisted[a], &moved, k, true);
                }
                geometric_sum(center, &acc, k * k, true)
            }
            SpectralPlan::Finite(unitaries) => {
                let mut acc = BlockElement::zeros(&self.signature);
                for u in unitaries {
                    acc = &acc + &d.conjugate_by(&u.adjoint());
                }
                acc
            }
        };
        Ok(sum.scale(1.0 / size as f64))
    }
}

/// Column-major `vec` of a square matrix.
fn vectorize(m: &Matrix) -> DVector<C64> {
    DVector::from_column_slice(m.as_slice())
}

fn unvectorize(v: &DVector<C64>, n: usize) -> Matrix {
    Matrix::from_column_slice(n, n, v.as_slice())
}

/// Orthonormal basis (Hilbert–Schmidt) of the joint fixed space
/// `{y : U y U† = y for all generators}` on each block, from the null space
/// of the stacked superoperators `conj(U) ⊗ U − I`.
#[derive(Debug, Clone)]
pub struct FixedPointProjector {
    bases: Vec<Matrix>,
}

impl FixedPointProjector {
    pub fn new(action: &UnitaryAction) -> Result<Self, DynamicsError> {
        let mut bases = Vec::new();
        for (bi, &n) in action.signature().dims().iter().enumerate() {
            let nn = n * n;
            let gens = action.generators();
            if gens.is_empty() {
                bases.push(Matrix::identity(nn, nn));
                continue;
            }
            let mut stacked = Matrix::zeros(nn * gens.len(), nn);
            for (gi, u) in gens.iter().enumerate() {
                let ub = u.block(bi);
                let sup = ub.conjugate().kronecker(ub) - Matrix::identity(nn, nn);
                stacked.view_mut((gi * nn, 0), (nn, nn)).copy_from(&sup);
            }
            let null = null_space(&stacked).map_err(|(value, largest)| {
                DynamicsError::AmbiguousRank { block: bi, value, largest }
            })?;
            bases.push(null);
        }
        Ok(FixedPointProjector { bases })
    }

    /// Dimension of the fixed space on each block.
    pub fn dimensions(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    /// `E(x)`: orthogonal projection onto the fixed space.
    pub fn project(&self, x: &BlockElement) -> BlockElement {
        BlockElement::new(
            self.bases
                .iter()
                .zip(x.blocks())
                .map(|(b, m)| {
                    let v = vectorize(m);
                    let coeffs = b.adjoint() * v;
                    unvectorize(&(b * coeffs), m.nrows())
                })
                .collect(),
        )
        .expect("same signature")
    }
}

/// Columns spanning the numerical null space of `m` (right singular vectors
/// with singular value at most `RANK_CUT` times `max(1, largest)`). On an
/// ambiguous gap returns the offending singular value and the largest one.
pub(crate) fn null_space<T>(m: &nalgebra::DMatrix<T>) -> Result<nalgebra::DMatrix<T>, (f64, f64)>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let cols = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let largest = sv.iter().copied().fold(0.0, f64::max);
    // inputs are superoperators of unitaries, so rounding noise alone must
    // not set the scale
    let scale = largest.max(1.0);
    let (lo, hi) = RANK_AMBIGUITY_BAND;
    if let Some(&value) = sv.iter().find(|&&s| s > lo * scale && s < hi * scale) {
        return Err((value, largest));
    }
    let mut keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= RANK_CUT * scale).collect();
    // a wide matrix has cols - rows directions SVD does not report
    let reported = v_t.nrows();
    let mut basis: Vec<nalgebra::DVector<T>> =
        keep.drain(..).map(|i| v_t.row(i).adjoint()).collect();
    if reported < cols {
        let full = complete_null_space(&v_t);
        basis.extend(full);
    }
    if basis.is_empty() {
        return Ok(nalgebra::DMatrix::zeros(cols, 0));
    }
    Ok(nalgebra::DMatrix::from_columns(&basis))
}

/// Orthonormal complement of the row space of `v_t` (used only when the input
/// has fewer rows than columns).
fn complete_null_space<T>(v_t: &nalgebra::DMatrix<T>) -> Vec<nalgebra::DVector<T>>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let cols = v_t.ncols();
    let mut basis: Vec<nalgebra::DVector<T>> = (0..v_t.nrows()).map(|i| v_t.row(i).adjoint()).collect();
    let mut extra = Vec::new();
    for e in 0..cols {
        let mut v = nalgebra::DVector::<T>::zeros(cols);
        v[e] = T::one();
        for b in basis.iter() {
            let c = b.dotc(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= T::from_real(norm);
            basis.push(v.clone());
            extra.push(v);
        }
        if basis.len() == cols {
            break;
        }
    }
    extra
}

/// `E(x)`: the Hilbert–Schmidt orthogonal projection of `x` onto the joint
/// fixed space of the system's action.
pub fn mean_ergodic_projection(
    sys: &WStarSystem,
    x: &BlockElement,
) -> Result<BlockElement, DynamicsError> {
    x.check_signature(sys.signature())?;
    Ok(FixedPointProjector::new(&sys.action)?.project(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_core::{diag, real_matrix, state_eval};
    use crate::sample;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    pub(crate) fn alternating() -> WStarSystem {
        let sig = Signature(vec![2]);
        let u = BlockElement::single(diag(&[1.0, -1.0])).unwrap();
        let action = UnitaryAction::new(GroupModel::zd(1), sig.clone(), vec![u]).unwrap();
        WStarSystem::new(action, BlockState::tracial(&sig)).unwrap()
    }

    fn ones() -> BlockElement {
        BlockElement::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap()
    }

    fn z(n: i64) -> GroupElement {
        GroupModel::zd(1).element(vec![n]).unwrap()
    }

    /// Pauli X ⊕ I₂ and Pauli Z ⊕ I₂: a Heisenberg action whose center acts
    /// as −I ⊕ I.
    fn heisenberg_m4() -> WStarSystem {
        let mut ux = Matrix::identity(4, 4);
        ux[(0, 0)] = c(0.0);
        ux[(1, 1)] = c(0.0);
        ux[(0, 1)] = c(1.0);
        ux[(1, 0)] = c(1.0);
        let uy = diag(&[1.0, -1.0, 1.0, 1.0]);
        let sig = Signature(vec![4]);
        let action = UnitaryAction::new(
            GroupModel::heisenberg(),
            sig.clone(),
            vec![BlockElement::single(ux).unwrap(), BlockElement::single(uy).unwrap()],
        )
        .unwrap();
        let rho = BlockState::new(
            vec![1.0],
            vec![real_matrix(&[
                &[0.15, 0.0, 0.0, 0.0],
                &[0.0, 0.15, 0.0, 0.0],
                &[0.0, 0.0, 0.4, 0.05],
                &[0.0, 0.0, 0.05, 0.3],
            ])],
        )
        .unwrap();
        WStarSystem::new(action, rho).unwrap()
    }

    fn random_z2(seed: u64) -> WStarSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let v = sample::unitary(&mut rng, n);
        let phases = |rng: &mut ChaCha8Rng| {
            let d: Vec<C64> = (0..n)
                .map(|_| C64::from_polar(1.0, rand::Rng::random_range(rng, 0.0..6.28)))
                .collect();
            &v * Matrix::from_diagonal(&DVector::from_vec(d)) * v.adjoint()
        };
        let u1 = phases(&mut rng);
        let u2 = phases(&mut rng);
        let sig = Signature(vec![n]);
        let action = UnitaryAction::new(
            GroupModel::zd(2),
            sig.clone(),
            vec![BlockElement::single(u1).unwrap(), BlockElement::single(u2).unwrap()],
        )
        .unwrap();
        WStarSystem::new(action, BlockState::tracial(&sig)).unwrap()
    }

    #[test]
    fn tracial_state_is_always_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sig = Signature(vec![3, 2]);
        let u = BlockElement::new(vec![sample::unitary(&mut rng, 3), sample::unitary(&mut rng, 2)]).unwrap();
        let action = UnitaryAction::new(GroupModel::zd(1), sig.clone(), vec![u]).unwrap();
        let sys = WStarSystem::new(action, BlockState::tracial(&sig)).unwrap();
        validate_system(&sys).unwrap();
    }

    #[test]
    fn non_commuting_density_fails_invariance() {
        let sig = Signature(vec![2]);
        let swap = BlockElement::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let action = UnitaryAction::new(GroupModel::zd(1), sig, vec![swap]).unwrap();
        let rho = BlockState::new(vec![1.0], vec![diag(&[0.9, 0.1])]).unwrap();
        let sys = WStarSystem::new(action, rho).unwrap();
        let err = validate_system(&sys).unwrap_err();
        let DynamicsError::Invalid { report, failures } = err else { panic!("wrong error") };
        assert_eq!(failures.len(), 1);
        let bad = report.failures()[0];
        assert!(bad.name.contains("rho-invariance[generator 0, block 0]"));
        assert!((bad.residual - 0.8 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn non_commuting_z2_generators_fail_relations() {
        let sig = Signature(vec![2]);
        let x = BlockElement::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let zz = BlockElement::single(diag(&[1.0, -1.0])).unwrap();
        let action = UnitaryAction::new(GroupModel::zd(2), sig.clone(), vec![x, zz]).unwrap();
        let sys = WStarSystem::new(action, BlockState::tracial(&sig)).unwrap();
        let report = system_report(&sys);
        let failed: Vec<_> = report.failures().iter().map(|c| c.name.clone()).collect();
        assert_eq!(failed, vec!["relation[0]".to_string()]);
        // XZX⁻¹Z⁻¹ = −I, so the residual is ‖−2I‖_F
        assert!((report.failures()[0].residual - 2.0 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn non_unitary_and_unfaithful_are_flagged() {
        let sig = Signature(vec![2]);
        let u = BlockElement::single(diag(&[1.0, 0.5])).unwrap();
        let action = UnitaryAction::new(GroupModel::zd(1), sig, vec![u]).unwrap();
        let rho = BlockState::new(vec![1.0], vec![diag(&[1.0, 0.0])]).unwrap();
        let sys = WStarSystem::new(action, rho).unwrap();
        let report = system_report(&sys);
        let names: Vec<_> = report.failures().iter().map(|c| c.name.clone()).collect();
        assert!(names.iter().any(|n| n.starts_with("unitarity")));
        assert!(names.iter().any(|n| n.starts_with("faithful")));
    }

    #[test]
    fn act_examples() {
        let sys = alternating();
        let x = ones();
        assert_eq!(act(&sys, &z(0), &x).unwrap(), x);
        let y = act(&sys, &z(1), &x).unwrap();
        assert_eq!(y, BlockElement::from_real_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap());
        let foreign = GroupModel::heisenberg().identity();
        assert!(act(&sys, &foreign, &x).is_err());
    }

    #[test]
    fn action_is_a_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let heis = heisenberg_m4();
        let h = heis.group().clone();
        let x = sample::element(&mut rng, heis.signature());
        for (g, k) in [((1, 2, -1), (-2, 1, 3)), ((0, 3, 2), (2, -1, 0)), ((4, -3, 7), (1, 1, 1))] {
            let g = h.element(vec![g.0, g.1, g.2]).unwrap();
            let k = h.element(vec![k.0, k.1, k.2]).unwrap();
            let lhs = act(&heis, &g, &act(&heis, &k, &x).unwrap()).unwrap();
            let rhs = act(&heis, &h.multiply(&g, &k).unwrap(), &x).unwrap();
            assert!(lhs.distance(&rhs) < 1e-8);
            let ug = heis.action().unitary(&g).unwrap();
            let uk = heis.action().unitary(&k).unwrap();
            let ugk = heis.action().unitary(&h.multiply(&g, &k).unwrap()).unwrap();
            assert!(ugk.distance(&(&ug * &uk)) < 1e-8);
        }
        let sys = random_z2(3);
        let zz = sys.group().clone();
        let g = zz.element(vec![3, -2]).unwrap();
        let k = zz.element(vec![-1, 5]).unwrap();
        let lhs = act(&sys, &g, &act(&sys, &k, &x_for(&sys)).unwrap()).unwrap();
        let rhs = act(&sys, &zz.multiply(&g, &k).unwrap(), &x_for(&sys)).unwrap();
        assert!(lhs.distance(&rhs) < 1e-8);
    }

    fn x_for(sys: &WStarSystem) -> BlockElement {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        sample::hermitian_element(&mut rng, sys.signature())
    }

    #[test]
    fn heisenberg_example_validates() {
        let sys = heisenberg_m4();
        validate_system(&sys).unwrap();
    }

    #[test]
    fn ergodic_average_examples() {
        let sys = alternating();
        let x = ones();
        assert_eq!(ergodic_average(&sys, &x, 1).unwrap(), x);
        let two = ergodic_average(&sys, &x, 2).unwrap();
        assert!(two.max_abs_diff(&BlockElement::identity(&Signature(vec![2]))) < 1e-15);
        let three = ergodic_average(&sys, &x, 3).unwrap();
        let expected =
            BlockElement::from_real_rows(&[&[1.0, 1.0 / 3.0], &[1.0 / 3.0, 1.0]]).unwrap();
        assert!(three.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn alternating_norm_closed_form() {
        let sys = alternating();
        let ks: Vec<u64> = (1..=200).collect();
        let rows = norm_sequence(&sys, &ones(), &ks).unwrap();
        for row in rows {
            let expected = if row.k % 2 == 1 { 1.0 + 1.0 / row.k as f64 } else { 1.0 };
            assert!((row.norm - expected).abs() < 1e-9, "k={}", row.k);
            assert_eq!(row.folner_size, row.k);
        }
    }

    #[test]
    fn identity_action_norm_is_constant() {
        let sig = Signature(vec![3]);
        let action = UnitaryAction::trivial(GroupModel::zd(1), sig.clone());
        let sys = WStarSystem::new(action, BlockState::tracial(&sig)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = sample::positive(&mut rng, &sig);
        let norm = operator_norm(&x);
        for row in norm_sequence(&sys, &x, &[1, 2, 5, 40]).unwrap() {
            assert!((row.norm - norm).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_sequence_rejects_bad_input() {
        let sys = alternating();
        let neg = BlockElement::single(diag(&[1.0, -1.0])).unwrap();
        assert!(matches!(norm_sequence(&sys, &neg, &[1]), Err(DynamicsError::NotPositive)));
        assert!(matches!(norm_sequence(&sys, &ones(), &[2, 2]), Err(DynamicsError::BadSchedule)));
        assert!(matches!(norm_sequence(&sys, &ones(), &[0, 1]), Err(DynamicsError::BadSchedule)));
    }

    #[test]
    fn incremental_sweep_matches_direct_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for sys in [heisenberg_m4(), random_z2(7), alternating()] {
            let x = sample::positive(&mut rng, sys.signature());
            let ks = [1, 2, 3, 5, 6];
            let swept = averages(sys.action(), sys.folner(), &x, &ks).unwrap();
            for (k, _, avg) in swept {
                let direct = ergodic_average(&sys, &x, k).unwrap();
                assert!(avg.distance(&direct) < 1e-12, "k={k}");
            }
        }
    }

    #[test]
    fn spectral_route_matches_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for sys in [heisenberg_m4(), random_z2(11), random_z2(12), alternating()] {
            let spectral = SpectralAverager::new(sys.action(), 7).unwrap();
            let x = sample::element(&mut rng, sys.signature());
            for k in 1..=7 {
                let direct = ergodic_average(&sys, &x, k).unwrap();
                let fast = spectral.average(&x, k).unwrap();
                assert!(direct.distance(&fast) < 1e-11, "k={k}: {}", direct.distance(&fast));
            }
        }
    }

    #[test]
    fn dirichlet_sum_matches_loop() {
        for &theta in &[0.0, 1e-14, 1e-7, 0.3, std::f64::consts::PI, -2.0] {
            let q = C64::from_polar(1.0, theta);
            for n in [1u64, 2, 7, 100] {
                let direct: C64 = (0..n).map(|j| q.powu(j as u32)).sum();
                assert!((dirichlet_sum(q, n) - direct).norm() < 1e-10 * n as f64);
            }
        }
    }

    #[test]
    fn averages_preserve_rho_and_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sys = heisenberg_m4();
        let x = sample::hermitian_element(&mut rng, sys.signature());
        let rx = state_eval(sys.rho(), &x).unwrap();
        for k in 1..=4 {
            let avg = ergodic_average(&sys, &x, k).unwrap();
            assert!((state_eval(sys.rho(), &avg).unwrap() - rx).norm() < 1e-9);
            assert!(operator_norm(&avg) <= operator_norm(&x) + 1e-10);
        }
    }

    #[test]
    fn mean_ergodic_projection_examples() {
        let sig = Signature(vec![2]);
        let trivial = WStarSystem::new(
            UnitaryAction::trivial(GroupModel::zd(1), sig.clone()),
            BlockState::tracial(&sig),
        )
        .unwrap();
        let x = ones();
        assert!(mean_ergodic_projection(&trivial, &x).unwrap().distance(&x) < 1e-14);

        let sys = alternating();
        let e = mean_ergodic_projection(&sys, &x).unwrap();
        assert!(e.distance(&BlockElement::identity(&sig)) < 1e-14);
    }

    #[test]
    fn projection_is_idempotent_and_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for sys in [heisenberg_m4(), random_z2(1), alternating()] {
            let p = FixedPointProjector::new(sys.action()).unwrap();
            for _ in 0..5 {
                let x = sample::element(&mut rng, sys.signature());
                let e = p.project(&x);
                assert!(p.project(&e).distance(&e) < 1e-10);
                for g in sys.group().generators() {
                    let moved = act(&sys, g, &x).unwrap();
                    assert!(p.project(&moved).distance(&e) < 1e-8);
                    assert!(act(&sys, g, &e).unwrap().distance(&e) < 1e-8);
                }
                let id = BlockElement::identity(sys.signature());
                assert!(p.project(&id).distance(&id) < 1e-10);
            }
        }
    }

    #[test]
    fn averages_approach_the_projection() {
        let sys = heisenberg_m4();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = sample::hermitian_element(&mut rng, sys.signature());
        let e = mean_ergodic_projection(&sys, &x).unwrap();
        let spectral = SpectralAverager::new(sys.action(), 60).unwrap();
        let gap = |k| spectral.average(&x, k).unwrap().distance(&e);
        assert!(gap(60) < gap(5));
        assert!(gap(60) < 0.05);
    }

    #[test]
    fn ambiguous_rank_is_reported() {
        let mut u = diag(&[1.0, -1.0, 1.0]);
        u[(2, 2)] = C64::from_polar(1.0, 1e-7);
        let action = UnitaryAction::new(
            GroupModel::zd(1),
            Signature(vec![3]),
            vec![BlockElement::single(u).unwrap()],
        )
        .unwrap();
        // entries (0,2) and (2,0) move by ~1e-7 while (0,1) moves by 2
        assert!(matches!(
            FixedPointProjector::new(&action),
            Err(DynamicsError::AmbiguousRank { block: 0, .. })
        ));
    }

    #[test]
    fn scalar_blocks_are_fixed() {
        // conj(u) u - 1 is pure rounding noise on a 1x1 block
        let mut blocks = Vec::new();
        for theta in [0.3, 1.1, 2.9] {
            blocks.push(Matrix::from_element(1, 1, C64::from_polar(1.0, theta)));
        }
        let action = UnitaryAction::new(
            GroupModel::zd(1),
            Signature(vec![1, 1, 1]),
            vec![BlockElement::new(blocks).unwrap()],
        )
        .unwrap();
        assert_eq!(FixedPointProjector::new(&action).unwrap().dimensions(), vec![1, 1, 1]);
    }

    fn shift(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[((i + 1) % n, i)] = c(1.0);
        }
        m
    }

    #[test]
    fn schur_handles_permutation_unitaries() {
        for n in 1..=9 {
            let clock = Matrix::from_diagonal(&DVector::from_fn(n, |j, _| {
                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64)
            }));
            for u in [shift(n), &shift(n) * &clock, &clock * shift(n) * &clock, shift(n).adjoint()] {
                let spec = UnitarySpectrum::new(&u).unwrap();
                let d = Matrix::from_diagonal(&DVector::from_vec(spec.phases.clone()));
                let back = &spec.basis * d * spec.basis.adjoint();
                assert!((back - &u).norm() < 1e-12, "n = {n}");
            }
        }
    }

    #[test]
    fn dual_average_is_the_transpose_of_average() {
        let finite = crate::harness::bundled::s3_m3().build().unwrap();
        let systems = [random_z2(3), heisenberg_m4(), finite.model.target().clone()];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for sys in &systems {
            let averager = SpectralAverager::new(sys.action(), 9).unwrap();
            for k in [1, 4, 9] {
                let d = sample::element(&mut rng, sys.signature());
                let y = sample::element(&mut rng, sys.signature());
                let lhs = crate::matrix_core::trace_pairing(&averager.dual_average(&d, k).unwrap(), &y);
                let rhs = crate::matrix_core::trace_pairing(&d, &averager.average(&y, k).unwrap());
                assert!((lhs - rhs).norm() < 1e-10, "k = {k}");
            }
        }
    }

    #[test]
    fn schur_handles_near_scalar_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=6 {
            let noise = sample::hermitian(&mut rng, n) * c(1e-15);
            let u = Matrix::identity(n, n) + noise;
            let spec = UnitarySpectrum::new(&u).unwrap();
            assert!(spec.phases.iter().all(|p| (p - c(1.0)).norm() < 1e-13));
        }
    }
}
