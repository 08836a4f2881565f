//! Dual measures, physical domains, cost configuration and their validation.
//!
//! The dual measure is a weighted particle cloud in geostrophic coordinates
//! `y = (y1, y2, y3)` with `y3 = -rho` in the incompressible model. The total
//! mass is normalized to one; [`DualCloud::normalized`] rescales arbitrary
//! inputs at ingestion.

mod config;
mod cost;
mod domain;
pub mod ingest;

pub use config::{SolverConfig, StepController, Stepper};
pub use cost::{CostKind, CostModel};
pub use domain::{Boundary, FluidDomain};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Density band used when a configuration does not specify one.
pub const DEFAULT_DENSITY_BAND: f64 = 0.1;

/// Tolerance on the unit-mass normalization.
pub const MASS_NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: Point3,
    pub mass: f64,
}

impl Particle {
    pub fn new(position: Point3, mass: f64) -> Self {
        Self { position, mass }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCloud {
    particles: Vec<Particle>,
    density_band: f64,
}

impl DualCloud {
    /// Wraps the particles as given, without normalizing or validating.
    pub fn new(particles: Vec<Particle>, density_band: f64) -> Self {
        Self {
            particles,
            density_band,
        }
    }

    /// Rescales the masses so they sum to one.
    pub fn normalized(mut particles: Vec<Particle>, density_band: f64) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let total: f64 = particles.iter().map(|p| p.mass).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidCloud(format!(
                "total mass {total} cannot be normalized"
            )));
        }
        for p in &mut particles {
            p.mass /= total;
        }
        Ok(Self::new(particles, density_band))
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn density_band(&self) -> f64 {
        self.density_band
    }

    pub fn positions(&self) -> impl Iterator<Item = Point3> + '_ {
        self.particles.iter().map(|p| p.position)
    }

    pub fn masses(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.mass).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.mass).sum()
    }

    pub fn max_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.mass).fold(0.0, f64::max)
    }

    /// Second moment `sum m_i |y_i|^2`.
    pub fn second_moment(&self) -> f64 {
        self.particles
            .iter()
            .map(|p| p.mass * norm_sq(&p.position))
            .sum()
    }

    /// Same masses and band, new positions.
    pub fn with_positions(&self, positions: &[Point3]) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: positions.len(),
            });
        }
        let particles = self
            .particles
            .iter()
            .zip(positions)
            .map(|(p, &y)| Particle::new(y, p.mass))
            .collect();
        Ok(Self::new(particles, self.density_band))
    }
}

pub(crate) fn norm_sq(v: &Point3) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check {
            name,
            passed,
            detail,
        });
    }
}

/// Checks every cloud invariant and reports each one; never fails.
pub fn validate_cloud(cloud: &DualCloud, cost: &CostModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let ps = cloud.particles();

    report.push(
        "nonempty",
        !ps.is_empty(),
        format!("{} particle(s)", ps.len()),
    );

    let nonfinite = ps
        .iter()
        .position(|p| !p.position.iter().all(|c| c.is_finite()) || !p.mass.is_finite());
    report.push(
        "finite",
        nonfinite.is_none(),
        match nonfinite {
            Some(i) => format!("particle {i} has a non-finite coordinate or mass"),
            None => "all coordinates finite".into(),
        },
    );

    let nonpositive = ps.iter().position(|p| !(p.mass > 0.0));
    report.push(
        "positive_masses",
        nonpositive.is_none(),
        match nonpositive {
            Some(i) => format!("particle {i} has mass {}", ps[i].mass),
            None => "all masses positive".into(),
        },
    );

    let total = cloud.total_mass();
    report.push(
        "mass_normalization",
        (total - 1.0).abs() <= MASS_NORMALIZATION_TOL,
        format!("mass sum {total}"),
    );

    let band = cloud.density_band();
    let band_ok = band > 0.0 && band < 1.0;
    report.push(
        "density_band_parameter",
        band_ok,
        format!("delta = {band}"),
    );

    if !cost.is_compressible() {
        let (lo, hi) = (-1.0 / band, -band);
        let outside = ps
            .iter()
            .position(|p| !(p.position[2] >= lo && p.position[2] <= hi));
        report.push(
            "density_band",
            band_ok && outside.is_none(),
            match outside {
                Some(i) => format!(
                    "particle {i} has y3 = {} outside [{lo}, {hi}]",
                    ps[i].position[2]
                ),
                None => format!("all y3 in [{lo}, {hi}]"),
            },
        );
    }
    report
}

/// Largest Euclidean norm over the particle positions.
pub fn support_radius(cloud: &DualCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(cloud
        .positions()
        .map(|y| norm_sq(&y).sqrt())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(y: Point3, mass: f64, band: f64) -> DualCloud {
        DualCloud::new(vec![Particle::new(y, mass)], band)
    }

    #[test]
    fn single_atom_passes() {
        let r = validate_cloud(&single([0.0, 0.0, -1.0], 1.0, 0.5), &CostModel::incompressible());
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn unnormalized_masses_fail() {
        let c = DualCloud::new(
            vec![
                Particle::new([0.0, 0.0, -1.0], 0.6),
                Particle::new([1.0, 0.0, -1.0], 0.6),
            ],
            0.5,
        );
        let r = validate_cloud(&c, &CostModel::incompressible());
        assert!(!r.passed());
        let check = r.check("mass_normalization").unwrap();
        assert!(!check.passed);
        assert!(check.detail.contains("1.2"));
    }

    #[test]
    fn density_band_violation() {
        let r = validate_cloud(&single([0.0, 0.0, -0.1], 1.0, 0.5), &CostModel::incompressible());
        assert!(!r.check("density_band").unwrap().passed);
        assert!(r.check("mass_normalization").unwrap().passed);
    }

    #[test]
    fn nonpositive_mass_fails() {
        let c = DualCloud::new(
            vec![
                Particle::new([0.0, 0.0, -1.0], 1.0),
                Particle::new([1.0, 0.0, -1.0], 0.0),
            ],
            0.5,
        );
        assert!(!validate_cloud(&c, &CostModel::incompressible())
            .check("positive_masses")
            .unwrap()
            .passed);
    }

    #[test]
    fn support_radius_examples() {
        assert_eq!(support_radius(&single([0.0, 0.0, -1.0], 1.0, 0.1)).unwrap(), 1.0);
        let c = DualCloud::new(
            vec![
                Particle::new([3.0, 4.0, -1.0], 0.5),
                Particle::new([0.0, 0.0, -1.0], 0.5),
            ],
            0.1,
        );
        assert!((support_radius(&c).unwrap() - 26f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            support_radius(&DualCloud::new(vec![], 0.1)),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn normalization_rescales() {
        let c = DualCloud::normalized(
            vec![
                Particle::new([0.0, 0.0, -1.0], 2.0),
                Particle::new([1.0, 0.0, -1.0], 6.0),
            ],
            0.1,
        )
        .unwrap();
        assert_eq!(c.masses(), vec![0.25, 0.75]);
        assert!(DualCloud::normalized(vec![], 0.1).is_err());
    }
}
