//! Staggered finite-volume discretization of the generalized Stokes operator.

mod grid;
mod ops;
mod solve;
mod spectral;

pub use grid::{Bc, EdgeField, FaceField, Grid, StaggeredField};
pub use ops::{
    adjointness_defect, discrete_div, discrete_grad, edge_coefficients, edge_grad, edge_grad_adjoint, edge_inner,
    edge_weights, face_average, grad_norm_sq, Coefficients,
};
pub use solve::{solve_generalized_stokes, SolveOptions, SolveReport, StokesOperator};
