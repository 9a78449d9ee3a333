//! Calculus of deformational structures.
//!
//! The crate is organised bottom-up:
//!
//! * [`forms`] flattens even-degree covariant tensors into square matrices and
//!   pulls back inverse, determinant and trace through that isomorphism.
//! * [`geometry`] samples bodies on tensor-product grids, embeds them into an
//!   ambient chart and measures deformation by pulling back the ambient form.
//! * [`energy`] evaluates polynomial energies in the trace invariants and their
//!   stress, momentum and generalized stress tensors.
//! * [`dynamics`] assembles the discrete action, its Euler-Lagrange residual
//!   and the static / evolutional solvers.
//! * [`motions`] checks Lie derivatives, generalized Killing fields and the
//!   symplectic gauge identity.
//! * [`regions`] classifies deformations through Boolean intersection matrices.

pub mod dynamics;
pub mod energy;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod motions;
pub mod regions;

pub use error::{Error, Result};
pub use forms::{FlatOrdering, FlatView, Tensor};
