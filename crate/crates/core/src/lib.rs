//! Global propagation of rigid-body attitude densities on SO(3) x R^3.
//!
//! Densities live on an Euler-angle by velocity grid and are advected by the
//! backward flow of a Lie group variational integrator for the 3D pendulum.
//! Fourier transforms on SO(3) and per-axis sphere marginals summarize them,
//! and Bayes updates condition them on measurements.

// `!(x > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod harmonic;
pub mod marginals;
pub mod parallel;
pub mod pipeline;
pub mod so3;

pub use error::{Error, Result};
