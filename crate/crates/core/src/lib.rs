//! Models of a single-photon switch built on Rydberg blockade in an
//! ultracold gas: derived parameters, EIT spectra, blockaded propagation,
//! storage and switching statistics, a Monte Carlo oracle and a
//! least-squares fitting engine.

pub mod acceptance;
pub mod config;
pub mod constants;
pub mod eit;
pub mod fitting;
pub mod error;
pub mod montecarlo;
pub mod params;
pub mod presets;
pub mod report;
pub mod propagation;
pub mod special;
pub mod storage_switch;
pub mod units;

pub use error::{Error, Result};
