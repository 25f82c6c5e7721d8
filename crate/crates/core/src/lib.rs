//! Digital twin engine for terahertz wireless data centers.
//!
//! The pipeline mirrors a measurement campaign: a synthetic directional
//! sounder stands in for the physical twin, an image-method ray tracer
//! calibrated against extracted multipath components forms the RT twin, and
//! an RT-conditioned implicit neural field provides continuous prediction
//! (the AI twin). Radio maps from either twin feed SINR and coverage analysis.

pub mod calib;
pub mod chanest;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod inf;
pub mod io;
pub mod raytrace;
pub mod scene;
pub mod sounder;
pub mod sysperf;
pub mod twin;
pub mod units;

pub use error::{Error, Result};
pub use geometry::Vec3;
