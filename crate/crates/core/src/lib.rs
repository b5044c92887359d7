//! Følner averages of unitarily implemented actions on finite direct sums of
//! matrix algebras, and the ergodic maximum they converge to.

pub mod group_kernel;
pub mod invariant_opt;
pub mod matrix_core;
pub mod cstar_model;
pub mod dynamics;
pub mod harness;
pub mod sample;
