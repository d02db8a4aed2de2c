//! Two-scale viscoelastic Stokes flow in double-porosity media: cell problems, effective
//! tensors, micro and macro time stepping, and a 1-D lab for reiterated convergence.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod homogenize;
pub mod kernels;
pub mod msconv;
pub mod solvers;
pub mod stokes;

pub use error::{Error, Result};
