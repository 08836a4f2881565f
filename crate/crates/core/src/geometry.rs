//! Cost evaluation, the max-affine geopotential and pressure, c-transforms
//! and convexity probes.
//!
//! A weight vector `R` defines the geopotential on lifted coordinates
//! `x = (x1, x2, zeta)`:
//!
//! ```text
//! P(x) = max_i ( x1 y1_i + x2 y2_i + zeta y3_i - R_i )
//! p(x) = P(x) - (x1^2 + x2^2) / 2
//! ```
//!
//! `P` is convex by construction and its gradient is the winning slope `y_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measures::{CostModel, DualCloud, FluidDomain, Point3};

/// `1/2 (|x1 - y1|^2 + |x2 - y2|^2) - zeta(x3) y3` for a physical point `x`.
pub fn cost(x: &Point3, y: &Point3, cost: &CostModel) -> Result<f64> {
    let lifted = cost.lift(x)?;
    Ok(lifted_cost(&lifted, y))
}

#[inline]
pub(crate) fn lifted_cost(x: &Point3, y: &Point3) -> f64 {
    let d1 = x[0] - y[0];
    let d2 = x[1] - y[1];
    0.5 * (d1 * d1 + d2 * d2) - x[2] * y[2]
}

/// One Kantorovich weight per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialWeights {
    values: Vec<f64>,
}

impl PotentialWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("weight {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn for_cloud(values: Vec<f64>, cloud: &DualCloud) -> Result<Self> {
        let w = Self::new(values)?;
        w.check_len(cloud)?;
        Ok(w)
    }

    pub fn check_len(&self, cloud: &DualCloud) -> Result<()> {
        if self.values.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                expected: cloud.len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// Winning particle; ties go to the lowest index.
    pub winner: usize,
}

/// Evaluates `P` at a lifted point. Returns `None` for an empty cloud.
pub fn geopotential(x: &Point3, cloud: &DualCloud, w: &PotentialWeights) -> Option<Evaluation> {
    let mut best: Option<Evaluation> = None;
    for (i, (p, r)) in cloud.particles().iter().zip(w.values()).enumerate() {
        let y = &p.position;
        let v = x[0] * y[0] + x[1] * y[1] + x[2] * y[2] - r;
        match best {
            Some(b) if v <= b.value => {}
            _ => best = Some(Evaluation { value: v, winner: i }),
        }
    }
    best
}

/// `p = P - (x1^2 + x2^2) / 2` at a lifted point.
pub fn pressure(x: &Point3, cloud: &DualCloud, w: &PotentialWeights) -> Option<f64> {
    geopotential(x, cloud, w).map(|e| e.value - 0.5 * (x[0] * x[0] + x[1] * x[1]))
}

/// Scalar samples on the `n1 x n2` column grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: [usize; 2],
    spacing: [f64; 2],
    values: Vec<f64>,
}

impl GridField {
    pub fn new(domain: &FluidDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.column_count() {
            return Err(Error::LengthMismatch {
                expected: domain.column_count(),
                found: values.len(),
            });
        }
        Ok(Self {
            grid: domain.grid(),
            spacing: domain.spacing(),
            values,
        })
    }

    pub fn grid(&self) -> [usize; 2] {
        self.grid
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, j1: usize, j2: usize) -> f64 {
        self.values[j1 * self.grid[1] + j2]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest difference quotient between adjacent columns.
    pub fn lipschitz_estimate(&self) -> f64 {
        let [n1, n2] = self.grid;
        let mut lip: f64 = 0.0;
        for j1 in 0..n1 {
            for j2 in 0..n2 {
                let v = self.get(j1, j2);
                if j1 + 1 < n1 {
                    lip = lip.max((self.get(j1 + 1, j2) - v).abs() / self.spacing[0]);
                }
                if j2 + 1 < n2 {
                    lip = lip.max((self.get(j1, j2 + 1) - v).abs() / self.spacing[1]);
                }
            }
        }
        lip
    }
}

/// Node lattice over a physical box, `counts[k]` points per axis (ends included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub lo: Point3,
    pub hi: Point3,
    pub counts: [usize; 3],
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> Point3 {
        let [_, c1, c2] = self.counts;
        let k0 = index / (c1 * c2);
        let k1 = (index / c2) % c1;
        let k2 = index % c2;
        let coord = |axis: usize, k: usize| {
            let n = self.counts[axis];
            if n == 1 {
                self.lo[axis]
            } else {
                self.lo[axis] + (self.hi[axis] - self.lo[axis]) * k as f64 / (n - 1) as f64
            }
        };
        [coord(0, k0), coord(1, k1), coord(2, k2)]
    }
}

/// Discrete `f^c(y) = min_x { c(x, y) - f(x) }` over the sample lattice.
///
/// This is an upper bound on the true infimum over the box; it converges as
/// the lattice is refined. `values[k]` is `f` at `grid.point(k)`.
pub fn c_transform(
    grid: &SampleGrid,
    values: &[f64],
    cost_model: &CostModel,
    probes: &[Point3],
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidDomain("empty sample grid".into()));
    }
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    let lifted = (0..grid.len())
        .map(|k| cost_model.lift(&grid.point(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(probes
        .iter()
        .map(|y| {
            lifted
                .iter()
                .zip(values)
                .map(|(x, f)| lifted_cost(x, y) - f)
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Axis-aligned box in lifted coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedBox {
    pub lo: Point3,
    pub hi: Point3,
}

impl LiftedBox {
    pub fn of_domain(domain: &FluidDomain, cost: &CostModel) -> Self {
        let [l1, l2] = domain.footprint();
        let base = cost.base();
        Self {
            lo: [0.0, 0.0, cost.zeta(base)],
            hi: [l1, l2, cost.zeta(base + domain.thickness())],
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Point3 {
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = self.lo[k] + (self.hi[k] - self.lo[k]) * rng.random::<f64>();
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityReport {
    pub samples: usize,
    /// Largest `P(mid) - (P(x) + P(x')) / 2` beyond floating-point slack, clamped at 0.
    pub max_violation: f64,
}

/// Floating-point slack for comparing sums of a few `P` values.
fn rounding_slack(values: &[f64]) -> f64 {
    8.0 * f64::EPSILON * values.iter().map(|v| v.abs()).sum::<f64>()
}

/// Midpoint-convexity probe of `P` on random pairs in `bounds`.
pub fn check_c_concavity(
    cloud: &DualCloud,
    w: &PotentialWeights,
    bounds: &LiftedBox,
    samples: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    w.check_len(cloud)?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = bounds.sample(&mut rng);
        let b = bounds.sample(&mut rng);
        let mid = [
            0.5 * (a[0] + b[0]),
            0.5 * (a[1] + b[1]),
            0.5 * (a[2] + b[2]),
        ];
        let pa = geopotential(&a, cloud, w).unwrap().value;
        let pb = geopotential(&b, cloud, w).unwrap().value;
        let pm = geopotential(&mid, cloud, w).unwrap().value;
        let excess = pm - 0.5 * (pa + pb) - rounding_slack(&[pa, pb, pm]);
        worst = worst.max(excess);
    }
    Ok(ConvexityReport {
        samples,
        max_violation: worst,
    })
}

/// Largest increase of `P` along upward vertical moves on random columns.
///
/// With every `y3 < 0` this is zero: `P` is non-increasing in height.
pub fn check_vertical_monotonicity(
    cloud: &DualCloud,
    w: &PotentialWeights,
    bounds: &LiftedBox,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    w.check_len(cloud)?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = bounds.sample(&mut rng);
        let mut b = a;
        b[2] = a[2] + (bounds.hi[2] - a[2]) * rng.random::<f64>();
        let pa = geopotential(&a, cloud, w).unwrap().value;
        let pb = geopotential(&b, cloud, w).unwrap().value;
        worst = worst.max(pb - pa - rounding_slack(&[pa, pb]));
    }
    Ok(worst)
}

/// Geostrophic wind `(u1, u2) = (xbar2 - y2, y1 - xbar1)` of a dual point
/// anchored at the physical position `x_bar`.
pub fn geostrophic_velocity(y: &Point3, x_bar: &Point3) -> [f64; 2] {
    [x_bar[1] - y[1], y[0] - x_bar[0]]
}
