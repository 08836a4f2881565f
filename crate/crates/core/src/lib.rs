//! Dual-variable solver for semi-geostrophic flow with a free surface.
//!
//! The fluid is represented by a discrete cloud of dual particles in
//! geostrophic coordinates. Semidiscrete optimal transport with a vacuum
//! phase recovers the physical partition and its free surface; the particles
//! then move with the geostrophic velocity of their cell barycenters.

pub mod dynamics;
pub mod error;
pub mod export;
pub mod geometry;
pub mod measures;
pub mod oracle;
pub mod solver;

pub use dynamics::{DiagnosticsRecord, SimState, Trajectory};
pub use error::{Error, Result};
pub use geometry::{geopotential, pressure, GridField, PotentialWeights};
pub use measures::{
    validate_cloud, Boundary, CostKind, CostModel, DualCloud, FluidDomain, Particle, Point3,
    SolverConfig, StepController, Stepper, ValidationReport,
};
pub use solver::{solve_weights, tessellate, Solution, Tessellation};
