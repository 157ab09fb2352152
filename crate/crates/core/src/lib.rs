//! Galton-Watson trees and their codings, continuous-state branching
//! numerics, continuum tree marginals, and branching random walks as a
//! discrete superprocess.

pub mod codings;
pub mod config;
pub mod csbp;
pub mod error;
pub mod gw;
pub mod harness;
pub mod marginals;
pub mod mechanism;
pub mod numerics;
pub mod report;
pub mod rng;
pub mod scaling;
pub mod snake;
pub mod stats;

pub use error::{Error, Result};
