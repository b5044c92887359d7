//! C*-models `(𝔄, G, Θ; ι)` over a W*-dynamical system: a block algebra
//! whose kernel is a union of blocks, the quotient by that kernel, and the
//! correspondence between states of the quotient and states of `𝔄` that
//! vanish on the kernel.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{Check, DynamicsError, UnitaryAction, WStarSystem};
use crate::matrix_core::{BlockElement, BlockState, MatrixError, Signature};
use crate::sample;

/// Largest weight a state may place on kernel blocks and still count as
/// annihilating the kernel.
pub const KERNEL_MASS_TOL: f64 = 1e-12;
pub const EQUIVARIANCE_TOL: f64 = 1e-8;
pub const EQUIVARIANCE_SAMPLES: usize = 20;
const EQUIVARIANCE_SEED: u64 = 0x1077a;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("kernel block {block} out of range for {blocks} blocks")]
    KernelOutOfRange { block: usize, blocks: usize },
    #[error("every block is in the kernel")]
    KernelIsEverything,
    #[error("surviving blocks {surviving} do not match the target signature {target}")]
    TargetMismatch { surviving: Signature, target: Signature },
    #[error("group of the domain action differs from the target's")]
    GroupMismatch,
    #[error("state puts weight {mass:e} on the kernel")]
    MassOnKernel { mass: f64 },
}

/// Outcome of comparing `Ξ_g ∘ ι` with `ι ∘ Θ_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivarianceReport {
    pub max_residual: f64,
    /// Worst residual per generator.
    pub per_generator: Vec<f64>,
    pub passed: bool,
}

impl EquivarianceReport {
    pub fn to_check(&self) -> Check {
        Check::at_most("equivariance", self.max_residual, EQUIVARIANCE_TOL)
    }
}

/// A block algebra `𝔄 = ⊕ M_{n_i}` with action `Θ`, mapped onto a
/// W*-system by `ι`, which drops the kernel blocks and is the identity on
/// the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct CStarModel {
    theta: UnitaryAction,
    kernel: BTreeSet<usize>,
    surviving: Vec<usize>,
    target: WStarSystem,
}

impl CStarModel {
    /// Builds the target from the surviving blocks of `theta`, so `ι` is
    /// equivariant by construction. `rho` is the target's state.
    pub fn new(
        theta: UnitaryAction,
        kernel: BTreeSet<usize>,
        rho: BlockState,
    ) -> Result<Self, ModelError> {
        let surviving = surviving_blocks(theta.signature(), &kernel)?;
        let target = WStarSystem::new(theta.restrict(&surviving), rho)?;
        Ok(CStarModel { theta, kernel, surviving, target })
    }

    /// The faithful model whose domain is the target itself.
    pub fn faithful(target: WStarSystem) -> Self {
        let surviving = (0..target.signature().len()).collect();
        CStarModel { theta: target.action().clone(), kernel: BTreeSet::new(), surviving, target }
    }

    /// Assembles a model from independent pieces. Only shapes are checked;
    /// use [`check_equivariance`](Self::check_equivariance) to test that the
    /// surviving blocks of `theta` agree with the target's unitaries.
    pub fn from_parts(
        theta: UnitaryAction,
        kernel: BTreeSet<usize>,
        target: WStarSystem,
    ) -> Result<Self, ModelError> {
        let surviving = surviving_blocks(theta.signature(), &kernel)?;
        let expected = Signature(surviving.iter().map(|&i| theta.signature().dims()[i]).collect());
        if &expected != target.signature() {
            return Err(ModelError::TargetMismatch { surviving: expected, target: target.signature().clone() });
        }
        if theta.group() != target.group() {
            return Err(ModelError::GroupMismatch);
        }
        Ok(CStarModel { theta, kernel, surviving, target })
    }

    pub fn domain(&self) -> &Signature {
        self.theta.signature()
    }

    pub fn theta(&self) -> &UnitaryAction {
        &self.theta
    }

    pub fn target(&self) -> &WStarSystem {
        &self.target
    }

    pub fn kernel_blocks(&self) -> &BTreeSet<usize> {
        &self.kernel
    }

    pub fn surviving_blocks(&self) -> &[usize] {
        &self.surviving
    }

    pub fn is_faithful(&self) -> bool {
        self.kernel.is_empty()
    }

    fn keep(&self, a: &BlockElement) -> Result<BlockElement, ModelError> {
        a.check_signature(self.domain())?;
        Ok(BlockElement::new(self.surviving.iter().map(|&i| a.block(i).clone()).collect())?)
    }

    /// `ι(a)`: the surviving blocks of `a`, as an element of the target.
    pub fn apply_iota(&self, a: &BlockElement) -> Result<BlockElement, ModelError> {
        self.keep(a)
    }

    /// `π(a)`: the class of `a` in `𝔄 / ker ι`, realized on the surviving
    /// blocks.
    pub fn project(&self, a: &BlockElement) -> Result<BlockElement, ModelError> {
        self.keep(a)
    }

    /// The faithful model on `𝔄 / ker ι` with the same target.
    pub fn quotient_model(&self) -> CStarModel {
        CStarModel {
            theta: self.theta.restrict(&self.surviving),
            kernel: BTreeSet::new(),
            surviving: (0..self.surviving.len()).collect(),
            target: self.target.clone(),
        }
    }

    pub fn quotient_signature(&self) -> Signature {
        Signature(self.surviving.iter().map(|&i| self.domain().dims()[i]).collect())
    }

    /// `ψ₀ = ψ̃ ∘ π`: zero weight (and density `I/n`) on kernel blocks.
    pub fn pullback_state(&self, quotient_state: &BlockState) -> Result<BlockState, ModelError> {
        let sig = self.quotient_signature();
        if quotient_state.signature() != sig {
            return Err(MatrixError::SignatureMismatch { expected: sig, found: quotient_state.signature() }.into());
        }
        let dims = self.domain().dims();
        let mut weights = vec![0.0; dims.len()];
        let mut densities: Vec<_> = dims
            .iter()
            .map(|&n| crate::matrix_core::Matrix::identity(n, n) / crate::matrix_core::C64::new(n as f64, 0.0))
            .collect();
        for (q, &i) in self.surviving.iter().enumerate() {
            weights[i] = quotient_state.weights()[q];
            densities[i] = quotient_state.densities()[q].clone();
        }
        Ok(BlockState::new(weights, densities)?)
    }

    /// Total weight a state on `𝔄` places on kernel blocks.
    pub fn kernel_mass(&self, s: &BlockState) -> f64 {
        self.kernel.iter().map(|&i| s.weights()[i]).sum()
    }

    /// `ψ̃` with `ψ̃(π(a)) = ψ(a)`, for `ψ` vanishing on the kernel.
    pub fn pushforward_state(&self, s: &BlockState) -> Result<BlockState, ModelError> {
        if s.signature() != *self.domain() {
            return Err(MatrixError::SignatureMismatch { expected: self.domain().clone(), found: s.signature() }.into());
        }
        let mass = self.kernel_mass(s);
        if mass > KERNEL_MASS_TOL {
            return Err(ModelError::MassOnKernel { mass });
        }
        let kept: Vec<f64> = self.surviving.iter().map(|&i| s.weights()[i]).collect();
        let total: f64 = kept.iter().sum();
        let weights = kept.into_iter().map(|w| w / total).collect();
        let densities = self.surviving.iter().map(|&i| s.densities()[i].clone()).collect();
        Ok(BlockState::new(weights, densities)?)
    }

    /// `max ‖Ξ_g(ι(a)) − ι(Θ_g(a))‖_F` over generators and seeded samples.
    pub fn check_equivariance(&self) -> EquivarianceReport {
        let mut rng = ChaCha8Rng::seed_from_u64(EQUIVARIANCE_SEED);
        let samples: Vec<BlockElement> =
            (0..EQUIVARIANCE_SAMPLES).map(|_| sample::element(&mut rng, self.domain())).collect();
        let target_gens = self.target.action().generators();
        let per_generator: Vec<f64> = self
            .theta
            .generators()
            .iter()
            .zip(target_gens)
            .map(|(theta_u, xi_u)| {
                samples
                    .iter()
                    .map(|a| {
                        let lhs = self.keep(a).expect("sampled in domain").conjugate_by(xi_u);
                        let rhs = self.keep(&a.conjugate_by(theta_u)).expect("sampled in domain");
                        lhs.distance(&rhs)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let max_residual = per_generator.iter().copied().fold(0.0, f64::max);
        EquivarianceReport { max_residual, per_generator, passed: max_residual <= EQUIVARIANCE_TOL }
    }
}

fn surviving_blocks(sig: &Signature, kernel: &BTreeSet<usize>) -> Result<Vec<usize>, ModelError> {
    if let Some(&block) = kernel.iter().find(|&&b| b >= sig.len()) {
        return Err(ModelError::KernelOutOfRange { block, blocks: sig.len() });
    }
    let surviving: Vec<usize> = (0..sig.len()).filter(|i| !kernel.contains(i)).collect();
    if surviving.is_empty() {
        return Err(ModelError::KernelIsEverything);
    }
    Ok(surviving)
}
