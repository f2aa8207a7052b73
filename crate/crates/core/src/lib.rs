//! Periodic sensing/actuation schedules for discrete-time linear systems
//! where each step either measures or actuates, never both.
//!
//! The pipeline: build a plant and gains ([`plant`]), certify a periodic
//! schedule ([`sequence`]), compute its steady covariances ([`covariance`]),
//! check chance constraints ([`chance`]), search for the cheapest schedule
//! ([`search`]) and validate by Monte Carlo ([`sim`]).

pub mod chance;
pub mod covariance;
pub mod error;
pub mod io;
pub mod linalg;
pub mod plant;
pub mod search;
pub mod sequence;
pub mod sim;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use plant::{GainSet, ModeMatrices, SystemModel, TargetSpec};
pub use sequence::SwitchSequence;
