//! Forward stochastic reach (FSR) sets and probability measures for
//! discrete-time systems driven by countable, bounded disturbances, and the
//! machinery that turns them into probabilistic obstacle-avoidance
//! constraints.
//!
//! The pipeline is:
//!
//! 1. [`disturbance`] builds a lattice probability mass function for the
//!    per-step displacement `v = g(w)`.
//! 2. [`fsr`] propagates an initial [`SparsePmf`] through
//!    `x[t+1] = f(x[t]) + v[t]`, visiting only states with positive mass.
//! 3. [`occupancy`] blurs center-of-mass distributions with the rigid-body
//!    footprint, thresholds the result and decomposes it into axis-aligned
//!    boxes.
//! 4. [`planner`] encodes box avoidance with big-M binaries and solves the
//!    resulting mixed-integer quadratic program by branch-and-bound.
//! 5. [`sim`] closes the loop against sampled obstacle motion and estimates
//!    collision probabilities by Monte-Carlo.
//!
//! The crate is `no_std` and only needs `alloc`. Wall-clock measurements go
//! through the [`Clock`] trait so that callers with an OS clock can supply
//! one.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod clock;
pub mod disturbance;
mod error;
pub mod fsr;
pub mod lattice;
pub(crate) mod math;
pub mod occupancy;
pub mod planner;
pub mod pmf;
pub mod sim;

pub use clock::{Clock, NoClock};
pub use disturbance::DisturbanceSpec;
pub use error::{Error, Result};
pub use fsr::{DynamicsMap, FsrOptions, FsrResult, FsrStep};
pub use lattice::{BoxRegion, Lattice, LatticePoint};
pub use occupancy::{AvoidBoxSet, ObstacleGeometry, OccupancyField, TaggedBox};
pub use pmf::SparsePmf;
