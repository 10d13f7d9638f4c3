//! Stability certificates and decay estimates for homogeneous time-delay systems.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod envelope;
pub mod error;
pub mod history;
pub mod integrator;
pub mod krasovskii;
pub mod model;
pub mod power;
pub mod quadrature;
pub mod razumikhin;
pub mod roots;
pub mod sampling;
pub mod tuner;

pub use error::{Error, Result};
pub use history::{HistorySegment, HistorySpec};
pub use model::{DelaySystem, GrowthConstants, HomogeneousRhs, LyapunovConstants, LyapunovData, PolyTerm};
pub use power::Exponent;
