//! Cloud ingestion: CSV files and analytic generators.

use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use super::{DualCloud, Particle, Point3};
use crate::error::{Error, Result};

const CSV_COLUMNS: [&str; 4] = ["y1", "y2", "y3", "mass"];

#[derive(Debug, Deserialize)]
struct Row {
    y1: f64,
    y2: f64,
    y3: f64,
    mass: f64,
}

/// Reads `y1,y2,y3,mass` rows (header mandatory, `#` lines ignored) and
/// rescales the masses to unit total.
pub fn read_cloud_csv<R: Read>(reader: R, density_band: f64) -> Result<DualCloud> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_COLUMNS {
        return Err(Error::InvalidCloud(format!(
            "expected header y1,y2,y3,mass, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut particles = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        particles.push(Particle::new([row.y1, row.y2, row.y3], row.mass));
    }
    DualCloud::normalized(particles, density_band)
}

pub fn load_cloud_csv(path: &Path, density_band: f64) -> Result<DualCloud> {
    read_cloud_csv(std::fs::File::open(path)?, density_band)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Uniform random positions in the box `center +- extent`, equal masses.
    UniformBlock,
    /// Two Gaussian clusters at `center +- extent` (horizontal offset only).
    TwoBlob,
    /// Points along a sheared line, `y3` stratified across the vertical extent.
    ShearedBand,
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::UniformBlock => "uniform-block",
            GeneratorKind::TwoBlob => "two-blob",
            GeneratorKind::ShearedBand => "sheared-band",
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform-block" => Ok(Self::UniformBlock),
            "two-blob" => Ok(Self::TwoBlob),
            "sheared-band" => Ok(Self::ShearedBand),
            other => Err(format!(
                "unknown generator {other:?} (expected uniform-block, two-blob or sheared-band)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub count: usize,
    pub center: Point3,
    pub extent: Point3,
    /// Slope `dy2/dy1` of the sheared band.
    pub shear: f64,
}

/// Generates a unit-mass cloud. Vertical coordinates are clamped into the
/// density band `[-1/delta, -delta]`.
pub fn generate(spec: &GeneratorSpec, seed: u64, density_band: f64) -> Result<DualCloud> {
    if spec.count == 0 {
        return Err(Error::EmptyCloud);
    }
    if !spec.extent.iter().all(|e| e.is_finite() && *e >= 0.0) {
        return Err(Error::InvalidCloud(format!(
            "generator extent {:?} must be nonnegative",
            spec.extent
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c1, c2, c3] = spec.center;
    let [e1, e2, e3] = spec.extent;
    let n = spec.count;
    let mut positions: Vec<Point3> = Vec::with_capacity(n);
    match spec.kind {
        GeneratorKind::UniformBlock => {
            for _ in 0..n {
                positions.push([
                    c1 + e1 * rng.random_range(-1.0..=1.0),
                    c2 + e2 * rng.random_range(-1.0..=1.0),
                    c3 + e3 * rng.random_range(-1.0..=1.0),
                ]);
            }
        }
        GeneratorKind::TwoBlob => {
            let spread = |e: f64| Normal::new(0.0, (e / 3.0).max(f64::MIN_POSITIVE)).unwrap();
            let (n1, n2, n3) = (spread(e1), spread(e2), spread(e3));
            for i in 0..n {
                let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                positions.push([
                    c1 + sign * e1 + n1.sample(&mut rng),
                    c2 + sign * e2 + n2.sample(&mut rng),
                    c3 + n3.sample(&mut rng),
                ]);
            }
        }
        GeneratorKind::ShearedBand => {
            for i in 0..n {
                let t = if n == 1 {
                    0.0
                } else {
                    2.0 * i as f64 / (n - 1) as f64 - 1.0
                };
                let along = c1 + e1 * t;
                positions.push([
                    along,
                    c2 + spec.shear * (along - c1) + e2 * rng.random_range(-1.0..=1.0),
                    c3 + e3 * t,
                ]);
            }
        }
    }
    let (lo, hi) = (-1.0 / density_band, -density_band);
    let particles = positions
        .into_iter()
        .map(|[a, b, c]| Particle::new([a, b, c.clamp(lo, hi)], 1.0))
        .collect();
    DualCloud::normalized(particles, density_band)
}
