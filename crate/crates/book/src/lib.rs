//! Runs the code samples of the guide in `book/` as doctests.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}

#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}

#[doc = include_str!("../../../book/src/stokes.md")]
pub mod stokes {}

#[doc = include_str!("../../../book/src/homogenize.md")]
pub mod homogenize {}

#[doc = include_str!("../../../book/src/solvers.md")]
pub mod solvers {}

#[doc = include_str!("../../../book/src/msconv.md")]
pub mod msconv {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
