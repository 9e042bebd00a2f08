//! Constrained minimizing-movements solver for surface diffusion of closed
//! curves in the plane and closed surfaces in space.
//!
//! Each time step minimizes perimeter plus the squared geometric H⁻¹ distance
//! to the previous shape, over normal graphs of bounded height. See the
//! README for the discretization and the list of diagnostics.

// negated float comparisons are used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod flow;
pub mod geometry;
pub mod laplace;
pub mod mm_step;
pub mod normal_graph;
pub mod oracles;
pub mod sparse;

pub use error::{Error, Result};
