//! Brute-force reference implementations for tests.
//!
//! Nothing here is on the solver's hot path; scale is capped instead of
//! optimized.

mod network_simplex;

use crate::error::{Error, Result};
use crate::geometry::{cost, GridField, PotentialWeights};
use crate::measures::{norm_sq, CostModel, DualCloud, FluidDomain, Point3, MASS_NORMALIZATION_TOL};
use crate::solver::dual_functional;

pub const MAX_SOURCES: usize = 32_768;
pub const MAX_TARGETS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasurePair {
    pub sources: Vec<(Point3, f64)>,
    pub targets: Vec<(Point3, f64)>,
}

impl DiscreteMeasurePair {
    /// Checks positivity and unit total mass on both sides.
    pub fn new(sources: Vec<(Point3, f64)>, targets: Vec<(Point3, f64)>) -> Result<Self> {
        for (side, atoms) in [("source", &sources), ("target", &targets)] {
            Self::check_atoms(side, atoms)?;
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            if (total - 1.0).abs() > MASS_NORMALIZATION_TOL {
                return Err(Error::OracleInput(format!("{side} mass sums to {total}")));
            }
        }
        Ok(Self { sources, targets })
    }

    /// Rescales both sides to unit mass; the total is then exact only to
    /// rounding, which the transport solver tolerates.
    pub fn normalized(mut sources: Vec<(Point3, f64)>, mut targets: Vec<(Point3, f64)>) -> Result<Self> {
        for (side, atoms) in [("source", &mut sources), ("target", &mut targets)] {
            Self::check_atoms(side, atoms)?;
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            for a in atoms.iter_mut() {
                a.1 /= total;
            }
        }
        Ok(Self { sources, targets })
    }

    fn check_atoms(side: &str, atoms: &[(Point3, f64)]) -> Result<()> {
        if atoms.is_empty() {
            return Err(Error::OracleInput(format!("no {side} atoms")));
        }
        if let Some(k) = atoms
            .iter()
            .position(|(p, m)| !(*m > 0.0 && m.is_finite()) || !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::OracleInput(format!("{side} atom {k} is invalid")));
        }
        Ok(())
    }

    /// Target side taken from a particle cloud.
    pub fn with_cloud(sources: Vec<(Point3, f64)>, cloud: &DualCloud) -> Result<Self> {
        let targets = cloud.particles().iter().map(|p| (p.position, p.mass)).collect();
        Self::normalized(sources, targets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub sources: usize,
    pub targets: usize,
    /// Row-major `sources x targets`.
    pub plan: Vec<f64>,
    pub cost: f64,
    /// Dual certificate: `u_i + v_j <= c_ij`, `sum a_i u_i + sum b_j v_j = cost`.
    pub source_potentials: Vec<f64>,
    pub target_potentials: Vec<f64>,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.targets + j]
    }
}

/// Exact discrete transport for an arbitrary pairwise cost.
pub fn lp_transport_with<F>(pair: &DiscreteMeasurePair, mut c: F) -> Result<TransportPlan>
where
    F: FnMut(&Point3, &Point3) -> Result<f64>,
{
    let ns = pair.sources.len();
    let nt = pair.targets.len();
    if ns > MAX_SOURCES || nt > MAX_TARGETS {
        return Err(Error::OracleInput(format!(
            "{ns} x {nt} atoms exceeds the {MAX_SOURCES} x {MAX_TARGETS} cap"
        )));
    }
    let mut costs = Vec::with_capacity(ns * nt);
    for (x, _) in &pair.sources {
        for (y, _) in &pair.targets {
            costs.push(c(x, y)?);
        }
    }
    let supply: Vec<f64> = pair.sources.iter().map(|a| a.1).collect();
    let demand: Vec<f64> = pair.targets.iter().map(|a| a.1).collect();
    let s = network_simplex::solve(&supply, &demand, &costs)?;
    Ok(TransportPlan {
        sources: ns,
        targets: nt,
        plan: s.flows,
        cost: s.cost,
        source_potentials: s.source_potentials,
        target_potentials: s.target_potentials,
    })
}

/// Exact discrete transport for the geostrophic cost; sources are physical
/// points, targets dual points.
pub fn lp_transport(pair: &DiscreteMeasurePair, cost_model: &CostModel) -> Result<TransportPlan> {
    lp_transport_with(pair, |x, y| cost(x, y, cost_model))
}

/// Exact 2-Wasserstein distance.
pub fn exact_w2(pair: &DiscreteMeasurePair) -> Result<f64> {
    if pair.sources.len() > MAX_TARGETS || pair.targets.len() > MAX_TARGETS {
        return Err(Error::OracleInput(format!(
            "exact_w2 takes at most {MAX_TARGETS} atoms per side"
        )));
    }
    let plan = lp_transport_with(pair, |x, y| {
        let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
        Ok(norm_sq(&d))
    })?;
    Ok(plan.cost.max(0.0).sqrt())
}

/// Midpoint voxels of the fluid region `[base, h]` over each column, with
/// `layers` equal slabs spanning the full vertical extent. Partial top
/// voxels are kept at the midpoint of their wet part. Physical coordinates.
pub fn voxelize(
    domain: &FluidDomain,
    cost_model: &CostModel,
    heights: &GridField,
    layers: usize,
) -> Result<Vec<(Point3, f64)>> {
    if layers == 0 {
        return Err(Error::OracleInput("voxelize needs at least one layer".into()));
    }
    let base = cost_model.base();
    let dz = domain.thickness() / layers as f64;
    let area = domain.column_area();
    let mut out = Vec::new();
    for c in 0..domain.column_count() {
        let [x1, x2] = domain.column_center(c);
        let h = heights.values()[c];
        for k in 0..layers {
            let lo = base + k as f64 * dz;
            let hi = (lo + dz).min(h);
            if hi <= lo {
                break;
            }
            out.push(([x1, x2, 0.5 * (lo + hi)], area * (hi - lo)));
        }
    }
    Ok(out)
}

/// Lattice of weight vectors centred on `center`, `points` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub points: usize,
    /// Extra passes, each recentred on the previous argmax with half the width.
    pub refinements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub weights: Vec<f64>,
    pub value: f64,
    /// Lattice spacing of the last pass.
    pub spacing: f64,
    /// Half-width of each pass, starting with the first.
    pub half_widths: Vec<f64>,
}

/// Exhaustive maximization of the dual functional over a weight lattice.
pub fn weight_scan(
    cloud: &DualCloud,
    domain: &FluidDomain,
    cost_model: &CostModel,
    spec: &LatticeSpec,
) -> Result<ScanResult> {
    let n = cloud.len();
    if n == 0 || n > 2 {
        return Err(Error::OracleInput(format!("weight_scan takes 1 or 2 particles, got {n}")));
    }
    if spec.center.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: spec.center.len(),
        });
    }
    if spec.points < 2 || !(spec.half_width > 0.0) {
        return Err(Error::OracleInput("lattice needs >= 2 points and positive width".into()));
    }
    let mut center = spec.center.clone();
    let mut half = spec.half_width;
    let mut half_widths = Vec::new();
    let mut best = (f64::NEG_INFINITY, center.clone());
    let mut spacing = 0.0;
    for _ in 0..=spec.refinements {
        half_widths.push(half);
        spacing = 2.0 * half / (spec.points - 1) as f64;
        let total = spec.points.pow(n as u32);
        best = (f64::NEG_INFINITY, center.clone());
        for k in 0..total {
            let mut r = Vec::with_capacity(n);
            let mut rest = k;
            for d in 0..n {
                let idx = rest % spec.points;
                rest /= spec.points;
                r.push(center[d] - half + idx as f64 * spacing);
            }
            let f = dual_functional(cloud, domain, cost_model, &PotentialWeights::new(r.clone())?)?;
            if f > best.0 {
                best = (f, r);
            }
        }
        center = best.1.clone();
        half *= 0.5;
    }
    Ok(ScanResult {
        weights: best.1,
        value: best.0,
        spacing,
        half_widths,
    })
}

/// Central differences `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::OracleInput(format!("step {step} must be positive")));
    }
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + step;
        let fp = f(&probe)?;
        probe[k] = x[k] - step;
        let fm = f(&probe)?;
        probe[k] = x[k];
        g.push((fp - fm) / (2.0 * step));
    }
    Ok(g)
}

/// Fluid volume of a single incompressible particle `y` with weight `r`,
/// by dense midpoint quadrature of the surface height
/// `h = (|x_h|^2 / 2 - y1 x1 - y2 x2 + r) / y3` clamped to `[0, cap]`.
pub fn single_particle_volume(y: &Point3, r: f64, footprint: [f64; 2], cap: f64, samples: usize) -> f64 {
    let d1 = footprint[0] / samples as f64;
    let d2 = footprint[1] / samples as f64;
    let mut v = 0.0;
    for a in 0..samples {
        let x1 = (a as f64 + 0.5) * d1;
        for b in 0..samples {
            let x2 = (b as f64 + 0.5) * d2;
            v += single_particle_height(y, r, x1, x2, cap);
        }
    }
    v * d1 * d2
}

fn single_particle_height(y: &Point3, r: f64, x1: f64, x2: f64, cap: f64) -> f64 {
    ((0.5 * (x1 * x1 + x2 * x2) - y[0] * x1 - y[1] * x2 + r) / y[2]).clamp(0.0, cap)
}

/// Weight of a single incompressible particle carrying unit mass, by
/// bisection on [`single_particle_volume`].
pub fn single_particle_weight(y: &Point3, footprint: [f64; 2], cap: f64, samples: usize) -> Result<f64> {
    if !(y[2] < 0.0) {
        return Err(Error::OracleInput("single-particle oracle needs y3 < 0".into()));
    }
    let volume = |r: f64| single_particle_volume(y, r, footprint, cap, samples);
    // Volume decreases in r.
    let (mut lo, mut hi) = (-1.0, 1.0);
    while volume(lo) < 1.0 {
        lo *= 2.0;
        if lo < -1e12 {
            return Err(Error::OracleInput("no weight reaches unit volume under the cap".into()));
        }
    }
    while volume(hi) > 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if volume(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `int c(x, y) dx` over the fluid of a single incompressible particle,
/// by dense 3-D midpoint quadrature with `layers` vertical samples per unit
/// column height.
pub fn single_particle_energy(
    y: &Point3,
    r: f64,
    footprint: [f64; 2],
    cap: f64,
    samples: usize,
    layers: usize,
) -> f64 {
    let d1 = footprint[0] / samples as f64;
    let d2 = footprint[1] / samples as f64;
    let mut e = 0.0;
    for a in 0..samples {
        let x1 = (a as f64 + 0.5) * d1;
        for b in 0..samples {
            let x2 = (b as f64 + 0.5) * d2;
            let h = single_particle_height(y, r, x1, x2, cap);
            if h <= 0.0 {
                continue;
            }
            let horiz = 0.5 * ((x1 - y[0]).powi(2) + (x2 - y[1]).powi(2));
            let dz = h / layers as f64;
            for k in 0..layers {
                let x3 = (k as f64 + 0.5) * dz;
                e += (horiz - x3 * y[2]) * dz;
            }
        }
    }
    e * d1 * d2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atoms() {
        let pair = DiscreteMeasurePair::new(vec![([0.0, 0.0, 0.0], 1.0)], vec![([1.0, 1.0, -1.0], 1.0)]).unwrap();
        let p = lp_transport(&pair, &CostModel::incompressible()).unwrap();
        assert_eq!(p.plan, vec![1.0]);
        assert_eq!(p.cost, 1.0);
    }

    #[test]
    fn two_atoms_identity() {
        let pair = DiscreteMeasurePair::new(
            vec![([0.0, 0.0, 0.0], 0.5), ([1.0, 0.0, 0.0], 0.5)],
            vec![([0.0, 0.0, -1.0], 0.5), ([1.0, 0.0, -1.0], 0.5)],
        )
        .unwrap();
        let p = lp_transport(&pair, &CostModel::incompressible()).unwrap();
        assert_eq!(p.plan, vec![0.5, 0.0, 0.0, 0.5]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn w2_of_diracs() {
        let pair = DiscreteMeasurePair::new(vec![([1.0, 2.0, 3.0], 1.0)], vec![([1.0, 5.0, -1.0], 1.0)]).unwrap();
        assert!((exact_w2(&pair).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn finite_differences_of_quadratic() {
        let g = finite_difference_gradient(|x| Ok(x[0] * x[0] + 3.0 * x[1]), &[2.0, -1.0], 1e-3).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-9 && (g[1] - 3.0).abs() < 1e-9);
        let g = finite_difference_gradient(|_| Ok(7.0), &[1.0, 2.0, 3.0], 0.1).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn rejects_oversized_problems() {
        let src = vec![([0.0; 3], 1.0 / 65.0); 65];
        let pair = DiscreteMeasurePair::normalized(src, vec![([0.0; 3], 1.0)]).unwrap();
        assert!(exact_w2(&pair).is_err());
    }
}
