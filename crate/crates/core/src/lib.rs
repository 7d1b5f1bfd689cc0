//! Partial-information Nash equilibrium between a broker and an informed trader.
//!
//! The core is generic over the scalar type; `f64` aliases are re-exported at the root.

pub mod criteria;
pub mod error;
pub mod field;
pub mod filter;
pub mod game;
pub mod linalg;
pub mod model;
pub mod perturbation;
pub mod picard;
pub mod projection;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Params = model::ModelParams<f64>;
pub type Grid = model::TimeGrid<f64>;
pub type Ensemble = sim::PathEnsemble<f64>;
pub type PathField = field::Field<f64>;
pub type Matrix = linalg::Mat<f64>;
pub type Market = game::Game<f64>;
