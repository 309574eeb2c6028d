//! Finite-horizon power-utility investment with small proportional
//! transaction costs.
//!
//! The crate is organised around the reduced state `z = y / (x + y)`, the
//! fraction of paper wealth held in stock:
//!
//! * [`model`] holds the market parameters and the closed-form constants
//!   (Merton proportion, growth rate, leading loss coefficient, ...).
//! * [`asymptotics`] builds the explicit sub- and supersolutions `w⁻`, `w⁺`
//!   together with their free boundaries and checks them against the reduced
//!   HJB operator.
//! * [`hjb`] is a grid solver for the reduced variational inequality, used as
//!   the numerical reference value.
//! * [`simulate`] runs Monte Carlo for the reflected no-trade strategy and the
//!   frictionless Merton portfolio.
//! * [`analysis`] ties the pieces together into λ-sweeps.

pub mod analysis;
pub mod asymptotics;
pub mod error;
pub mod exec;
pub mod export;
pub mod hjb;
pub mod model;
pub mod roots;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{DerivedConstants, MarketParams, Model};
