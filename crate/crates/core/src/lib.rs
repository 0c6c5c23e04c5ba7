//! Constrained discounted control of piecewise deterministic Markov processes
//! through occupation-measure linear programs.

pub mod assumptions;
pub mod capacity;
pub mod cli;
pub mod constant_rate;
pub mod error;
pub mod io;
pub mod lp;
pub mod mdp;
pub mod model;
pub mod occupation;
pub mod operators;
pub mod policy;
pub mod simulator;

pub use error::{Error, Result};
