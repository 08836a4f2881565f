//! Shared fixtures for the benchmarks.

use geodual_core::{DualCloud, FluidDomain, Particle};

/// `n` particles on a sheared lattice over the unit footprint, with
/// distinct `y3` so no two cells share a horizontal interface.
pub fn lattice_cloud(n: usize) -> DualCloud {
    let side = (n as f64).sqrt().ceil() as usize;
    let particles = (0..n)
        .map(|i| {
            let (a, b) = (i % side, i / side);
            let y1 = (a as f64 + 0.5) / side as f64 + 0.05 * b as f64 / side as f64;
            let y2 = (b as f64 + 0.5) / side as f64;
            let y3 = -0.6 - 0.8 * i as f64 / n as f64;
            Particle::new([y1, y2, y3], 1.0)
        })
        .collect();
    DualCloud::normalized(particles, 0.1).expect("nonempty lattice")
}

pub fn free_surface(columns: usize) -> FluidDomain {
    FluidDomain::free_surface([1.0, 1.0], 3.0, [columns, columns]).expect("valid domain")
}
