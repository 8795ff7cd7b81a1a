//! Liminf weighted approximation over abstract rationals.
//!
//! Exact level systems (real lattices, p-adic integers, the Gaussian torus and
//! missing-digit Cantor sets), dimension formulas for liminf sets, the nested
//! Cantor construction with its mass distribution, and box-count estimators.

pub mod cli;
pub mod config;
pub mod construction;
pub mod dimension;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod sequences;
pub mod systems;

pub use error::{Error, Result};
pub use exact::{BetaPower, Dist, ExactRadius, Rational};
pub use systems::{Coord, Level, Point, System, SystemConfig, SystemKind};
