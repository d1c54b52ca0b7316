//! Collective three-body spin dynamics: exact unitary and dissipative
//! engines, semiclassical analytics, metrology protocols and parameter sweeps.

pub mod angular;
pub mod cli;
pub mod config;
pub mod couplings;
pub mod dicke;
pub mod dissipative;
pub mod error;
pub mod io;
pub mod metrology;
pub mod ode;
pub mod semiclassical;
pub mod sweep;
pub mod trajectory;
pub mod unitary;

pub use error::{Error, Result};
