//! Seeded random matrices, elements and states.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::matrix_core::{symmetrize, BlockElement, BlockState, Matrix, Signature, C64};

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    symmetrize(&ginibre(rng, n))
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of `R`'s
/// diagonal divided out.
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    let qr = ginibre(rng, n).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// Density matrix `G G† / tr(G G†)`.
pub fn density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    let g = ginibre(rng, n);
    let p = &g * g.adjoint();
    let tr = p.trace().re;
    symmetrize(&(p / C64::new(tr, 0.0)))
}

pub fn weights<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn state<R: Rng + ?Sized>(rng: &mut R, sig: &Signature) -> BlockState {
    let w = weights(rng, sig.len());
    let d = sig.dims().iter().map(|&n| density(rng, n)).collect();
    BlockState::new(w, d).expect("sampled state is valid")
}

pub fn hermitian_element<R: Rng + ?Sized>(rng: &mut R, sig: &Signature) -> BlockElement {
    BlockElement::new(sig.dims().iter().map(|&n| hermitian(rng, n)).collect())
        .expect("nonempty signature")
}

/// Positive element `g g†` per block.
pub fn positive<R: Rng + ?Sized>(rng: &mut R, sig: &Signature) -> BlockElement {
    BlockElement::new(
        sig.dims()
            .iter()
            .map(|&n| {
                let g = ginibre(rng, n);
                symmetrize(&(&g * g.adjoint()))
            })
            .collect(),
    )
    .expect("nonempty signature")
}

pub fn element<R: Rng + ?Sized>(rng: &mut R, sig: &Signature) -> BlockElement {
    BlockElement::new(sig.dims().iter().map(|&n| ginibre(rng, n)).collect())
        .expect("nonempty signature")
}
