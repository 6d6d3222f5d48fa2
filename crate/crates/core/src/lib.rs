//! Harmonic and subharmonic orbits of impulsively perturbed planar
//! Hamiltonian systems: Melnikov-function predictions and their verification
//! by direct simulation.

// `!(a < b)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action_angle;
pub mod bifurcation;
pub mod cli;
pub mod expr;
pub mod flow;
pub mod melnikov;
pub mod system;
