//! Direct sums of full complex matrix algebras: elements, states, operator
//! norms, positivity and norming states.
//!
//! Every eigen-computation goes through [`hermitian_eigen`], which
//! symmetrizes its input first.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;

/// Residual allowed on `x - x†` before an element stops counting as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default slack on the smallest eigenvalue in positivity checks.
pub const PSD_TOL: f64 = 1e-9;
/// Allowed trace deviation of a density matrix.
pub const TRACE_TOL: f64 = 1e-10;
/// Allowed deviation of state weights from summing to one.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Eigenvalues within this (relative) distance of the maximum count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("signature mismatch: expected {expected}, found {found}")]
    SignatureMismatch { expected: Signature, found: Signature },
    #[error("block {block} is {rows}x{cols}, blocks must be square and nonempty")]
    BadBlock { block: usize, rows: usize, cols: usize },
    #[error("block {block} has a non-finite entry")]
    NonFinite { block: usize },
    #[error("block {block} is not Hermitian (residual {residual:e})")]
    NotHermitian { block: usize, residual: f64 },
    #[error("element is not positive: block {block} has eigenvalue {eigenvalue:e}")]
    NotPositive { block: usize, eigenvalue: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("element has no blocks")]
    Empty,
}

/// Block dimensions `(n_1, ..., n_r)` of `M_{n_1} ⊕ ... ⊕ M_{n_r}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub Vec<usize>);

impl Signature {
    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.0.iter().sum()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| format!("M{n}")).collect();
        write!(f, "{}", parts.join("+"))
    }
}

/// An element of a finite direct sum of matrix algebras.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockElement {
    blocks: Vec<Matrix>,
}

impl BlockElement {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self, MatrixError> {
        if blocks.is_empty() {
            return Err(MatrixError::Empty);
        }
        for (block, m) in blocks.iter().enumerate() {
            if m.nrows() == 0 || m.nrows() != m.ncols() {
                return Err(MatrixError::BadBlock { block, rows: m.nrows(), cols: m.ncols() });
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(MatrixError::NonFinite { block });
            }
        }
        Ok(BlockElement { blocks })
    }

    pub fn single(m: Matrix) -> Result<Self, MatrixError> {
        Self::new(vec![m])
    }

    /// Real matrix given row by row, as a single block.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, MatrixError> {
        Self::single(real_matrix(rows))
    }

    pub fn identity(sig: &Signature) -> Self {
        BlockElement { blocks: sig.0.iter().map(|&n| Matrix::identity(n, n)).collect() }
    }

    pub fn zeros(sig: &Signature) -> Self {
        BlockElement { blocks: sig.0.iter().map(|&n| Matrix::zeros(n, n)).collect() }
    }

    pub fn signature(&self) -> Signature {
        Signature(self.blocks.iter().map(|m| m.nrows()).collect())
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Matrix {
        &self.blocks[i]
    }

    pub fn into_blocks(self) -> Vec<Matrix> {
        self.blocks
    }

    pub fn map_blocks(&self, f: impl FnMut(&Matrix) -> Matrix) -> Self {
        BlockElement { blocks: self.blocks.iter().map(f).collect() }
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|m| m.adjoint())
    }

    /// `(x + x†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        self.map_blocks(symmetrize)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_blocks(|m| m * C64::new(s, 0.0))
    }

    /// `u x u†`, block by block.
    pub fn conjugate_by(&self, u: &BlockElement) -> Self {
        assert_same_signature(self, u);
        BlockElement {
            blocks: self
                .blocks
                .iter()
                .zip(&u.blocks)
                .map(|(x, u)| u * x * u.adjoint())
                .collect(),
        }
    }

    pub fn check_signature(&self, sig: &Signature) -> Result<(), MatrixError> {
        let found = self.signature();
        if &found == sig {
            Ok(())
        } else {
            Err(MatrixError::SignatureMismatch { expected: sig.clone(), found })
        }
    }

    /// Largest Frobenius norm of `x_i - x_i†` over blocks.
    pub fn hermitian_residual(&self) -> f64 {
        self.blocks.iter().map(|m| (m - m.adjoint()).norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.blocks
            .iter()
            .all(|m| (m - m.adjoint()).norm() <= tol * m.norm().max(1.0))
    }

    /// Frobenius (Hilbert–Schmidt) norm of the whole element.
    pub fn frobenius_norm(&self) -> f64 {
        self.blocks.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    /// Hilbert–Schmidt distance `‖x - y‖_2`.
    pub fn distance(&self, other: &BlockElement) -> f64 {
        (self - other).frobenius_norm()
    }

    pub fn max_abs_diff(&self, other: &BlockElement) -> f64 {
        assert_same_signature(self, other);
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }
}

fn assert_same_signature(a: &BlockElement, b: &BlockElement) {
    assert_eq!(a.signature(), b.signature(), "block signatures differ");
}

impl Add for &BlockElement {
    type Output = BlockElement;

    fn add(self, rhs: &BlockElement) -> BlockElement {
        assert_same_signature(self, rhs);
        BlockElement { blocks: self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &BlockElement {
    type Output = BlockElement;

    fn sub(self, rhs: &BlockElement) -> BlockElement {
        assert_same_signature(self, rhs);
        BlockElement { blocks: self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &BlockElement {
    type Output = BlockElement;

    fn mul(self, rhs: &BlockElement) -> BlockElement {
        assert_same_signature(self, rhs);
        BlockElement { blocks: self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a * b).collect() }
    }
}

pub fn real_matrix(rows: &[&[f64]]) -> Matrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Matrix::from_fn(n, m, |i, j| C64::new(rows[i][j], 0.0))
}

pub fn diag(entries: &[f64]) -> Matrix {
    let n = entries.len();
    Matrix::from_fn(n, n, |i, j| if i == j { C64::new(entries[i], 0.0) } else { C64::new(0.0, 0.0) })
}

/// `(m + m†) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of the Hermitian part of `m`. Eigenvalues come in the
/// solver's order, eigenvectors are the matching columns.
pub fn hermitian_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = symmetrize(m).symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Rotates `v` so that its first entry of modulus above `1e-10` is real and
/// positive.
pub fn normalize_phase(v: &mut nalgebra::DVector<C64>) {
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-10).copied() {
        let phase = z.conj() / z.norm();
        v.iter_mut().for_each(|e| *e *= phase);
    }
}

/// Largest eigenvalue of the Hermitian part of `m` and a unit eigenvector.
/// Among tied eigenvalues the first in solver order wins.
pub fn top_eigenpair(m: &Matrix) -> (f64, nalgebra::DVector<C64>) {
    let (values, vectors) = hermitian_eigen(m);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * max.abs().max(1.0);
    let idx = values.iter().position(|&v| v >= max - tol).expect("nonempty block");
    let mut v = vectors.column(idx).into_owned();
    v /= C64::new(v.norm(), 0.0);
    normalize_phase(&mut v);
    (values[idx], v)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    hermitian_eigen(m).0.into_iter().fold(f64::INFINITY, f64::min)
}

fn block_norm(m: &Matrix) -> f64 {
    if (m - m.adjoint()).norm() <= HERMITIAN_TOL * m.norm().max(1.0) {
        hermitian_eigen(m).0.into_iter().map(f64::abs).fold(0.0, f64::max)
    } else {
        m.singular_values().iter().copied().fold(0.0, f64::max)
    }
}

/// The C*-norm: the largest singular value over all blocks.
pub fn operator_norm(x: &BlockElement) -> f64 {
    x.blocks().iter().map(block_norm).fold(0.0, f64::max)
}

/// True iff every block's smallest eigenvalue is at least `-tol`. Non-Hermitian
/// input is an error, not `false`.
pub fn is_psd(x: &BlockElement, tol: f64) -> Result<bool, MatrixError> {
    for (block, m) in x.blocks().iter().enumerate() {
        let residual = (m - m.adjoint()).norm();
        if residual > HERMITIAN_TOL * m.norm().max(1.0) {
            return Err(MatrixError::NotHermitian { block, residual });
        }
    }
    Ok(x.blocks().iter().all(|m| min_eigenvalue(m) >= -tol))
}

/// A state `s(x) = Σ_i w_i tr(s_i x_i)` on a block algebra. Blocks with zero
/// weight still carry a valid density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    weights: Vec<f64>,
    densities: Vec<Matrix>,
}

impl BlockState {
    /// Validates every invariant: Hermitian densities, eigenvalues above
    /// `-1e-9`, unit traces and weights summing to one.
    pub fn new(weights: Vec<f64>, densities: Vec<Matrix>) -> Result<Self, MatrixError> {
        let s = BlockState { weights, densities };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MatrixError> {
        let bad = |msg: String| Err(MatrixError::InvalidState(msg));
        if self.weights.is_empty() || self.weights.len() != self.densities.len() {
            return bad(format!(
                "{} weights for {} densities",
                self.weights.len(),
                self.densities.len()
            ));
        }
        for (i, (&w, s)) in self.weights.iter().zip(&self.densities).enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return bad(format!("weight {i} is {w}"));
            }
            if s.nrows() == 0 || s.nrows() != s.ncols() {
                return bad(format!("density {i} is not square"));
            }
            let herm = (s - s.adjoint()).norm();
            if herm > HERMITIAN_TOL {
                return bad(format!("density {i} not Hermitian (residual {herm:e})"));
            }
            let lo = min_eigenvalue(s);
            if lo < -PSD_TOL {
                return bad(format!("density {i} has eigenvalue {lo:e}"));
            }
            let tr = s.trace();
            if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
                return bad(format!("density {i} has trace {tr}"));
            }
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return bad(format!("weights sum to {total}"));
        }
        Ok(())
    }

    /// The pure state of unit vector `v` on block `block`.
    pub fn pure(sig: &Signature, block: usize, v: &nalgebra::DVector<C64>) -> Self {
        let mut weights = vec![0.0; sig.len()];
        weights[block] = 1.0;
        let densities = sig
            .dims()
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                if i == block {
                    let u = v / C64::new(v.norm(), 0.0);
                    symmetrize(&(&u * u.adjoint()))
                } else {
                    Matrix::identity(n, n) / C64::new(n as f64, 0.0)
                }
            })
            .collect();
        BlockState { weights, densities }
    }

    /// The normalized trace: weight `n_i / Σ n` and density `I / n_i` per block.
    pub fn tracial(sig: &Signature) -> Self {
        let total = sig.total_dim() as f64;
        BlockState {
            weights: sig.dims().iter().map(|&n| n as f64 / total).collect(),
            densities: sig
                .dims()
                .iter()
                .map(|&n| Matrix::identity(n, n) / C64::new(n as f64, 0.0))
                .collect(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn densities(&self) -> &[Matrix] {
        &self.densities
    }

    pub fn signature(&self) -> Signature {
        Signature(self.densities.iter().map(|m| m.nrows()).collect())
    }

    /// The block-diagonal density `⊕ w_i s_i`.
    pub fn weighted_density(&self) -> BlockElement {
        BlockElement {
            blocks: self
                .weights
                .iter()
                .zip(&self.densities)
                .map(|(&w, s)| s * C64::new(w, 0.0))
                .collect(),
        }
    }

    /// Inverse of [`weighted_density`](Self::weighted_density): weights are
    /// the block traces (rescaled to sum to one) and each density is its
    /// block divided by its trace. Blocks of negligible trace get `I / n`.
    pub fn from_weighted_density(d: &BlockElement) -> Result<Self, MatrixError> {
        let traces: Vec<f64> = d.blocks.iter().map(|m| m.trace().re).collect();
        let total: f64 = traces.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(MatrixError::InvalidState(format!("total trace {total}")));
        }
        let mut weights = Vec::with_capacity(traces.len());
        let mut densities = Vec::with_capacity(traces.len());
        for (m, &t) in d.blocks.iter().zip(&traces) {
            let n = m.nrows();
            if t <= WEIGHT_TOL * total {
                weights.push(0.0);
                densities.push(Matrix::identity(n, n) / C64::new(n as f64, 0.0));
            } else {
                weights.push(t / total);
                densities.push(symmetrize(&(m / C64::new(t, 0.0))));
            }
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        BlockState::new(weights, densities)
    }

    /// `(1 - t) self + t other`.
    pub fn mix(&self, other: &BlockState, t: f64) -> BlockState {
        assert_eq!(self.signature(), other.signature(), "state signatures differ");
        let mut weights = Vec::with_capacity(self.weights.len());
        let mut densities = Vec::with_capacity(self.weights.len());
        for i in 0..self.weights.len() {
            let a = (1.0 - t) * self.weights[i];
            let b = t * other.weights[i];
            let w = a + b;
            weights.push(w);
            if w > 0.0 {
                let d = (&self.densities[i] * C64::new(a, 0.0)
                    + &other.densities[i] * C64::new(b, 0.0))
                    / C64::new(w, 0.0);
                densities.push(symmetrize(&d));
            } else {
                densities.push(self.densities[i].clone());
            }
        }
        BlockState { weights, densities }
    }
}

/// `s(x) = Σ_i w_i tr(s_i x_i)`.
pub fn state_eval(s: &BlockState, x: &BlockElement) -> Result<C64, MatrixError> {
    x.check_signature(&s.signature())?;
    Ok(s.weights
        .iter()
        .zip(&s.densities)
        .zip(x.blocks())
        .map(|((&w, rho), m)| trace_product(rho, m) * w)
        .sum())
}

/// `Σ_i tr(d_i y_i)`: `state_eval` with an arbitrary block element in place
/// of the weighted density.
pub fn trace_pairing(d: &BlockElement, y: &BlockElement) -> C64 {
    assert_same_signature(d, y);
    d.blocks().iter().zip(y.blocks()).map(|(a, b)| trace_product(a, b)).sum()
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &Matrix, b: &Matrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// A state attaining the norm of a positive element: the pure state on a top
/// eigenvector of the first block whose top eigenvalue is maximal.
pub fn norming_state(x: &BlockElement) -> Result<BlockState, MatrixError> {
    if !is_psd(x, PSD_TOL)? {
        let (block, eigenvalue) = x
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, m)| (i, min_eigenvalue(m)))
            .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        return Err(MatrixError::NotPositive { block, eigenvalue });
    }
    let tops: Vec<(f64, nalgebra::DVector<C64>)> = x.blocks().iter().map(top_eigenpair).collect();
    let max = tops.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * max.abs().max(1.0);
    let block = tops.iter().position(|t| t.0 >= max - tol).expect("nonempty element");
    Ok(BlockState::pure(&x.signature(), block, &tops[block].1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Power iteration on `x†x` with plain vectors, independent of nalgebra's
    /// eigensolvers.
    fn power_iteration_norm(x: &Matrix, steps: usize) -> f64 {
        let n = x.nrows();
        let apply = |v: &[C64]| -> Vec<C64> {
            let xv: Vec<C64> = (0..n).map(|i| (0..n).map(|j| x[(i, j)] * v[j]).sum()).collect();
            (0..n).map(|i| (0..n).map(|j| x[(j, i)].conj() * xv[j]).sum()).collect()
        };
        let mut v: Vec<C64> = (0..n).map(|i| C64::new(1.0 + i as f64 * 0.37, 0.1 * i as f64)).collect();
        let mut rayleigh = 0.0;
        for _ in 0..steps {
            let w = apply(&v);
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v = w.into_iter().map(|z| z / norm).collect();
            let av = apply(&v);
            rayleigh = v.iter().zip(&av).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        }
        rayleigh.sqrt()
    }

    #[test]
    fn operator_norm_examples() {
        assert_eq!(operator_norm(&BlockElement::identity(&Signature(vec![3]))), 1.0);
        let x = BlockElement::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!((operator_norm(&x) - 2.0).abs() < 1e-14);
        let nonherm = BlockElement::from_real_rows(&[&[0.0, 3.0], &[0.0, 0.0]]).unwrap();
        assert!((operator_norm(&nonherm) - 3.0).abs() < 1e-14);
        assert!((operator_norm(&nonherm.adjoint()) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn operator_norm_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 2 + rand::Rng::random_range(&mut rng, 0..5);
            let h = sample::hermitian(&mut rng, n);
            let oracle = power_iteration_norm(&h, 10_000);
            let got = operator_norm(&BlockElement::single(h).unwrap());
            assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
        }
    }

    #[test]
    fn psd_examples() {
        let id = BlockElement::identity(&Signature(vec![2]));
        assert!(is_psd(&id, PSD_TOL).unwrap());
        let d = BlockElement::single(diag(&[1.0, -1.0])).unwrap();
        assert!(!is_psd(&d, PSD_TOL).unwrap());
        let x = BlockElement::from_real_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        assert!(is_psd(&x, PSD_TOL).unwrap());
        let skew = BlockElement::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        assert!(matches!(is_psd(&skew, PSD_TOL), Err(MatrixError::NotHermitian { .. })));
    }

    #[test]
    fn state_eval_examples() {
        let sig = Signature(vec![2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample::state(&mut rng, &sig);
        let one = state_eval(&s, &BlockElement::identity(&sig)).unwrap();
        assert!((one - c(1.0)).norm() < 1e-12);

        let e1 = nalgebra::DVector::from_vec(vec![c(1.0), c(0.0)]);
        let pure = BlockState::pure(&sig, 0, &e1);
        let x = BlockElement::single(diag(&[3.0, 5.0])).unwrap();
        assert_eq!(state_eval(&pure, &x).unwrap(), c(3.0));

        let mixed = BlockState::tracial(&sig);
        let ones = BlockElement::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!((state_eval(&mixed, &ones).unwrap() - c(1.0)).norm() < 1e-15);

        let wrong = BlockElement::identity(&Signature(vec![3]));
        assert!(matches!(state_eval(&mixed, &wrong), Err(MatrixError::SignatureMismatch { .. })));
    }

    #[test]
    fn state_validation() {
        let bad_trace = BlockState::new(vec![1.0], vec![diag(&[0.5, 0.2])]);
        assert!(bad_trace.is_err());
        let bad_weights = BlockState::new(vec![0.5, 0.4], vec![diag(&[1.0]), diag(&[1.0])]);
        assert!(bad_weights.is_err());
        let negative = BlockState::new(vec![1.0], vec![diag(&[1.5, -0.5])]);
        assert!(negative.is_err());
        BlockState::tracial(&Signature(vec![2, 3])).validate().unwrap();
    }

    #[test]
    fn norming_state_examples() {
        let x = BlockElement::single(diag(&[1.0, 4.0])).unwrap();
        let s = norming_state(&x).unwrap();
        assert!((s.densities()[0][(1, 1)] - c(1.0)).norm() < 1e-14);
        assert!((state_eval(&s, &x).unwrap().re - 4.0).abs() < 1e-14);

        let id = BlockElement::identity(&Signature(vec![3]));
        let s = norming_state(&id).unwrap();
        assert!((s.densities()[0][(0, 0)] - c(1.0)).norm() < 1e-14, "tie-break picks e1");

        let ones = BlockElement::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let s = norming_state(&ones).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.densities()[0][(i, j)] - c(0.5)).norm() < 1e-14);
            }
        }
        assert!((state_eval(&s, &ones).unwrap().re - 2.0).abs() < 1e-14);

        let neg = BlockElement::single(diag(&[1.0, -1.0])).unwrap();
        assert!(matches!(norming_state(&neg), Err(MatrixError::NotPositive { .. })));
    }

    #[test]
    fn norming_state_prefers_first_block_on_ties() {
        let x = BlockElement::new(vec![diag(&[2.0, 1.0]), diag(&[2.0])]).unwrap();
        let s = norming_state(&x).unwrap();
        assert_eq!(s.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn c_star_identity_and_unitary_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..6 {
            let x = BlockElement::new(vec![sample::ginibre(&mut rng, n), sample::ginibre(&mut rng, 2)])
                .unwrap();
            let xx = &x.adjoint() * &x;
            let nx = operator_norm(&x);
            assert!((operator_norm(&xx) - nx * nx).abs() < 1e-8);
            let u = BlockElement::new(vec![sample::unitary(&mut rng, n), sample::unitary(&mut rng, 2)])
                .unwrap();
            assert!((operator_norm(&x.conjugate_by(&u)) - nx).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetrization_fixes_hermitian_input_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = sample::hermitian(&mut rng, 5);
        let h = BlockElement::single(symmetrize(&h)).unwrap();
        assert_eq!(h.hermitian_part(), h);
    }

    #[test]
    fn states_never_exceed_the_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sig = Signature(vec![3, 2]);
        for _ in 0..10 {
            let x = sample::positive(&mut rng, &sig);
            let norm = operator_norm(&x);
            let s = norming_state(&x).unwrap();
            assert!((state_eval(&s, &x).unwrap().re - norm).abs() < 1e-10);
            for _ in 0..100 {
                let t = sample::state(&mut rng, &sig);
                assert!(state_eval(&t, &x).unwrap().re <= norm + 1e-10);
            }
        }
    }

    #[test]
    fn mixing_states_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sig = Signature(vec![2, 3]);
        let a = sample::state(&mut rng, &sig);
        let b = sample::state(&mut rng, &sig);
        let x = sample::hermitian_element(&mut rng, &sig);
        let m = a.mix(&b, 0.3);
        m.validate().unwrap();
        let lhs = state_eval(&m, &x).unwrap();
        let rhs = state_eval(&a, &x).unwrap() * 0.7 + state_eval(&b, &x).unwrap() * 0.3;
        assert!((lhs - rhs).norm() < 1e-13);
    }
}
