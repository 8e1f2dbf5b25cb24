//! Pseudo-harmonic map heat flow on the Heisenberg nilmanifold Nil³.
//!
//! The numerical core is generic over [`Real`]; the aliases below fix it to `f64`,
//! which is what the flow, diagnostics and snapshot format use in practice.

pub mod crgeom;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod flow;
pub mod ops;
pub mod scalar;
pub mod targets;
pub mod theta;

pub use error::{Error, Result};
pub use fields::Grid;
pub use scalar::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Field = fields::ScalarField<f64>;
pub type Map = fields::MapField<f64>;
pub type Model = crgeom::Model<f64>;
