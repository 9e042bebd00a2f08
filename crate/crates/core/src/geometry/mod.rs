//! Discrete closed curves and surfaces: construction, curvature, measure and
//! the uniform-ball-condition radius.

pub mod bvh;
pub mod curvature;
pub mod io;
pub mod remesh;
pub mod shapes;
pub mod surface;
pub mod ubc;

pub use curvature::{compute_curvature, CurvatureData};
pub use shapes::{build_shape, ShapeSpec};
pub use surface::{DiscreteSurface, Measure, Mode, Point};
pub use ubc::{estimate_ubc_radius, offset_points, OffsetStatus};
