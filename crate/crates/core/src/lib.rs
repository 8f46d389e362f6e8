//! Models of a compliant four-axis foot interface: spring-network kinematics
//! and statics, workspace estimation, synthetic trials, sensor-to-command
//! mappings and the direction-accuracy metric.
//!
//! The kinematic and static core is generic over [`Real`]; the data-facing
//! layers (synthesis, mapping, evaluation, file formats) use `f64` through
//! the aliases below.

// NaN-rejecting `!(a <= b)` checks and index loops over fixed-size arrays are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod codec;
pub mod direction;
pub mod eval;
pub mod formats;
pub mod geometry;
pub mod ica;
pub mod mapping;
pub mod mechanics;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod workspace;

pub use direction::{Channel, DirectionLabel, Plane};
pub use scalar::Real;

pub type Geometry64 = geometry::InterfaceGeometry<f64>;
pub type Springs64 = geometry::SpringParams<f64>;
pub type Pose64 = mechanics::Pose<f64>;
pub type Frame64 = mechanics::SensorFrame<f64>;
pub type Command64 = mechanics::CommandVector<f64>;

/// Geometry and springs of one interface.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Plant {
    pub geom: Geometry64,
    pub springs: Springs64,
}

impl Default for Plant {
    fn default() -> Self {
        let (geom, springs) = geometry::default_geometry();
        Self { geom, springs }
    }
}
