//! Angle-grid estimation for multipath ghost-target identification in
//! co-located MIMO radar.
//!
//! A scene is described on a shared DOA/DOD grid: actual targets sit on the
//! diagonal (DOA = DOD) and first-order multipath ghosts sit off it. The
//! [`solver`] recovers the complex grid from a single received snapshot,
//! [`detect`] turns the estimate into labeled detections, and [`bench`]
//! runs seeded Monte Carlo comparisons between estimators.

pub mod bench;
pub mod detect;
pub mod error;
pub mod model;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use nalgebra;

pub type Complex64 = nalgebra::Complex<f64>;
