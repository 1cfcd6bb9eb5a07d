//! Kinetic models of continuous opinion formation.
//!
//! Agents hold opinions in `[-1, 1]` and change them through binary
//! exchanges mixing compromise and random self-thinking. The crate provides
//!
//! * the exchange rule and its admissibility bounds ([`opinion`], [`noise`]),
//! * an ensemble Monte Carlo solver of the kinetic equation ([`mc`]),
//! * a finite-volume solver for the Fokker-Planck limits ([`fokker_planck`]),
//! * closed-form stationary densities ([`stationary`]),
//! * the quasi-invariant limit experiments ([`limit_lab`]),
//! * configuration and CSV output for the command-line tool ([`io`]).

pub mod error;
pub mod exec;
pub mod fokker_planck;
pub mod grid;
pub mod io;
pub mod limit_lab;
pub mod mc;
pub mod noise;
pub mod opinion;
pub mod quadrature;
pub mod rng;
pub mod stationary;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::DensityGrid;
pub use mc::{MomentRecord, MomentSeries, SimConfig};
pub use opinion::{CompromiseFunction, DiffusionFunction, KineticParams, Opinion};
