//! Playstyle analytics: style similarity and diversity over trajectory
//! datasets, and strength ratings, counter structure and balance
//! indicators learned from match logs.

pub mod cli;
pub mod counter;
pub mod distance;
pub mod diversity;
pub mod error;
pub mod eval;
pub mod io;
pub mod measures;
pub mod rating;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
