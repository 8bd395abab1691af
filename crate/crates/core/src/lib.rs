//! Tug-of-war dynamic programming for weakly coupled systems of
//! infinity-Laplace equations, with closed-form cone oracles, a Monte Carlo
//! game simulator and slope diagnostics.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod domain;
pub mod error;
pub mod exact;
pub mod expr;
pub mod game;
pub mod io;
pub mod markov;
pub mod solver;

pub use error::{Error, Result};
