//! Spatial constellations for UAV channel signaling.
//!
//! A UAV announces a new radio channel by hovering at one of a small set of
//! positions in front of a ground radar. This crate covers the whole chain:
//! synthetic radar clouds ([`sensor`]), density-based localization
//! ([`localization`]), symbol error analysis ([`error_model`]), constellation
//! design ([`designer`]), PID flight times ([`flight`]) and an end-to-end
//! jamming recovery scenario ([`scenario`]).

pub mod constellation;
pub mod designer;
pub mod error;
pub mod error_model;
pub mod flight;
pub mod geometry;
pub mod localization;
pub mod scenario;
pub mod sensor;

pub use constellation::{Channel, Constellation};
pub use error::{Error, Result};
pub use geometry::{CartesianPoint, Fov, PolarPoint};
