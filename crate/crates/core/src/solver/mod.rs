//! Semidiscrete transport with a vacuum phase.
//!
//! For weights `R`, every column of the footprint (sampled at its midpoint)
//! is split along the lifted vertical coordinate by the upper envelope of
//! the particle scores `x1 y1_i + x2 y2_i + zeta y3_i - R_i`. In free-surface
//! mode a point is fluid only where the envelope is at least
//! `(x1^2 + x2^2) / 2`, i.e. where `p >= 0`; since every `y3_i < 0` the
//! envelope decreases with height and the fluid is `[base, h]`. Vertical
//! integrals along envelope pieces are closed-form.
//!
//! The weights maximize the concave dual functional
//!
//! ```text
//! F(R) = sum_i m_i (|y_h,i|^2 / 2 - R_i) + int_fluid ((x1^2 + x2^2) / 2 - P) dx
//! ```
//!
//! whose gradient is `V_i(R) - m_i`.

mod envelope;

use std::collections::VecDeque;

use log::debug;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{geopotential, GridField, PotentialWeights};
use crate::measures::{Boundary, CostModel, DualCloud, FluidDomain, Point3, SolverConfig};

use envelope::{upper_envelope, EnvelopeScratch, Piece, SlopeOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Particle(usize),
    Vacuum,
}

/// Vertical interval `[lower, upper)` of one column, in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lower: f64,
    pub upper: f64,
    pub owner: Owner,
}

#[derive(Debug, Clone)]
pub struct Tessellation {
    volumes: Vec<f64>,
    moments: Vec<Point3>,
    heights: GridField,
    segments: Vec<Segment>,
    offsets: Vec<usize>,
    energy: f64,
    fluid_integral: f64,
    cap_columns: usize,
    base: f64,
    top: f64,
}

impl Tessellation {
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Cell barycenter; `None` for an empty cell.
    pub fn barycenter(&self, i: usize) -> Option<Point3> {
        let v = self.volumes[i];
        (v > 0.0).then(|| {
            let m = self.moments[i];
            [m[0] / v, m[1] / v, m[2] / v]
        })
    }

    pub fn barycenters(&self) -> Vec<Option<Point3>> {
        (0..self.volumes.len()).map(|i| self.barycenter(i)).collect()
    }

    /// Surface coordinate per column; the lid in rigid-lid mode.
    pub fn heights(&self) -> &GridField {
        &self.heights
    }

    pub fn column_segments(&self, column: usize) -> &[Segment] {
        &self.segments[self.offsets[column]..self.offsets[column + 1]]
    }

    pub fn column_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `sum_i int_{cell_i} c(x, y_i) dx`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Columns whose surface reached the cap.
    pub fn cap_columns(&self) -> usize {
        self.cap_columns
    }

    /// `max_i |V_i - m_i|`.
    pub fn mass_residual(&self, cloud: &DualCloud) -> f64 {
        self.volumes
            .iter()
            .zip(cloud.particles())
            .map(|(v, p)| (v - p.mass).abs())
            .fold(0.0, f64::max)
    }

    /// `int x3 dsigma_h`, the vertical moment of the fluid.
    pub fn vertical_moment(&self) -> f64 {
        self.moments.iter().map(|m| m[2]).sum()
    }

    /// Columns violating the single-valued surface structure: fluid
    /// segments must tile `[base, h]` contiguously with vacuum only above.
    pub fn single_valued_violations(&self) -> usize {
        (0..self.column_count())
            .filter(|&c| !self.column_is_single_valued(c))
            .count()
    }

    fn column_is_single_valued(&self, column: usize) -> bool {
        let segs = self.column_segments(column);
        let mut cursor = self.base;
        let mut seen_vacuum = false;
        for s in segs {
            if s.lower != cursor || !(s.upper > s.lower) {
                return false;
            }
            match s.owner {
                Owner::Vacuum => seen_vacuum = true,
                Owner::Particle(_) if seen_vacuum => return false,
                Owner::Particle(_) => {}
            }
            cursor = s.upper;
        }
        let surface = segs
            .iter()
            .filter(|s| s.owner != Owner::Vacuum)
            .map(|s| s.upper)
            .fold(self.base, f64::max);
        cursor == self.top && surface == self.heights.values()[column]
    }
}

struct ColumnResult {
    segments: Vec<Segment>,
    surface: f64,
    cap_hit: bool,
}

/// Precomputed per-tessellation data shared by all columns.
struct Layout<'a> {
    cloud: &'a DualCloud,
    domain: &'a FluidDomain,
    cost: &'a CostModel,
    weights: &'a [f64],
    slopes: Vec<f64>,
    order: SlopeOrder,
    base: f64,
    top: f64,
    zeta_lo: f64,
    zeta_hi: f64,
    free_surface: bool,
}

impl<'a> Layout<'a> {
    fn new(
        cloud: &'a DualCloud,
        domain: &'a FluidDomain,
        cost: &'a CostModel,
        w: &'a PotentialWeights,
    ) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        w.check_len(cloud)?;
        if let Some(i) = cloud
            .particles()
            .iter()
            .position(|p| !p.position.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidCloud(format!("particle {i} is not finite")));
        }
        let free_surface = domain.is_free_surface();
        let slopes: Vec<f64> = cloud.positions().map(|y| y[2]).collect();
        if free_surface {
            if let Some(i) = slopes.iter().position(|s| !(*s < 0.0)) {
                return Err(Error::NonNegativeVerticalSlope {
                    particle: i,
                    y3: slopes[i],
                });
            }
        }
        let base = cost.base();
        let top = base + domain.thickness();
        Ok(Self {
            cloud,
            domain,
            cost,
            weights: w.values(),
            order: SlopeOrder::new(&slopes),
            slopes,
            base,
            top,
            zeta_lo: cost.zeta(base),
            zeta_hi: cost.zeta(top),
            free_surface,
        })
    }

    /// Maps a lifted breakpoint back to the physical vertical, keeping the
    /// box ends exact.
    fn physical(&self, z: f64) -> f64 {
        if z <= self.zeta_lo {
            self.base
        } else if z >= self.zeta_hi {
            self.top
        } else {
            self.cost.zeta_inverse(z).clamp(self.base, self.top)
        }
    }

    fn column(
        &self,
        index: usize,
        intercepts: &mut Vec<f64>,
        scratch: &mut EnvelopeScratch,
        pieces: &mut Vec<Piece>,
    ) -> ColumnResult {
        let [x1, x2] = self.domain.column_center(index);
        intercepts.clear();
        intercepts.extend(
            self.cloud
                .positions()
                .zip(self.weights)
                .map(|(y, r)| x1 * y[0] + x2 * y[1] - r),
        );
        upper_envelope(
            &self.order,
            &self.slopes,
            intercepts,
            self.zeta_lo,
            self.zeta_hi,
            scratch,
            pieces,
        );

        let mut segments = Vec::with_capacity(pieces.len() + 1);
        let push = |segments: &mut Vec<Segment>, lower: f64, upper: f64, owner: Owner| {
            if upper > lower {
                segments.push(Segment {
                    lower,
                    upper,
                    owner,
                });
            }
        };

        if !self.free_surface {
            for p in pieces.iter() {
                push(
                    &mut segments,
                    self.physical(p.lower),
                    self.physical(p.upper),
                    Owner::Particle(p.owner),
                );
            }
            return ColumnResult {
                segments,
                surface: self.top,
                cap_hit: false,
            };
        }

        let threshold = 0.5 * (x1 * x1 + x2 * x2);
        let mut surface = None;
        for p in pieces.iter() {
            let (b, s) = (intercepts[p.owner], self.slopes[p.owner]);
            let lower = self.physical(p.lower);
            if b + s * p.upper >= threshold {
                push(
                    &mut segments,
                    lower,
                    self.physical(p.upper),
                    Owner::Particle(p.owner),
                );
                continue;
            }
            if b + s * p.lower >= threshold {
                // s < 0, so the crossing lies inside the piece.
                let z = ((threshold - b) / s).clamp(p.lower, p.upper);
                let h = self.physical(z);
                push(&mut segments, lower, h, Owner::Particle(p.owner));
                surface = Some(h);
            } else {
                surface = Some(lower);
            }
            break;
        }
        match surface {
            Some(h) => {
                push(&mut segments, h, self.top, Owner::Vacuum);
                ColumnResult {
                    segments,
                    surface: h,
                    cap_hit: h >= self.top,
                }
            }
            None => ColumnResult {
                segments,
                surface: self.top,
                cap_hit: true,
            },
        }
    }
}

/// Builds the generalized Laguerre decomposition for the given weights.
///
/// Columns are processed in parallel; all reductions run sequentially in
/// row-major column order, so results do not depend on the thread count.
pub fn tessellate(
    cloud: &DualCloud,
    domain: &FluidDomain,
    cost: &CostModel,
    w: &PotentialWeights,
) -> Result<Tessellation> {
    let layout = Layout::new(cloud, domain, cost, w)?;
    let columns: Vec<ColumnResult> = (0..domain.column_count())
        .into_par_iter()
        .map_init(
            || (Vec::new(), EnvelopeScratch::default(), Vec::new()),
            |(intercepts, scratch, pieces), c| layout.column(c, intercepts, scratch, pieces),
        )
        .collect();

    let n = cloud.len();
    let area = domain.column_area();
    let mut volumes = vec![0.0; n];
    let mut moments = vec![[0.0; 3]; n];
    let mut energy = 0.0;
    let mut fluid_integral = 0.0;
    let mut cap_columns = 0;
    let mut heights = Vec::with_capacity(columns.len());
    let mut segments = Vec::new();
    let mut offsets = Vec::with_capacity(columns.len() + 1);
    offsets.push(0);

    for (c, col) in columns.into_iter().enumerate() {
        let [x1, x2] = domain.column_center(c);
        let threshold = 0.5 * (x1 * x1 + x2 * x2);
        for s in &col.segments {
            let Owner::Particle(i) = s.owner else {
                continue;
            };
            let y = cloud.particles()[i].position;
            let len = s.upper - s.lower;
            let zeta_int = cost.zeta_integral(s.lower, s.upper);
            let intercept = x1 * y[0] + x2 * y[1] - w.values()[i];
            let d1 = x1 - y[0];
            let d2 = x2 - y[1];
            volumes[i] += area * len;
            moments[i][0] += area * x1 * len;
            moments[i][1] += area * x2 * len;
            moments[i][2] += area * 0.5 * (s.upper - s.lower) * (s.upper + s.lower);
            energy += area * (0.5 * (d1 * d1 + d2 * d2) * len - y[2] * zeta_int);
            fluid_integral += area * ((threshold - intercept) * len - y[2] * zeta_int);
        }
        if col.cap_hit {
            cap_columns += 1;
        }
        heights.push(col.surface);
        segments.extend_from_slice(&col.segments);
        offsets.push(segments.len());
    }

    Ok(Tessellation {
        volumes,
        moments,
        heights: GridField::new(domain, heights)?,
        segments,
        offsets,
        energy,
        fluid_integral,
        cap_columns,
        base: layout.base,
        top: layout.top,
    })
}

fn linear_term(cloud: &DualCloud, w: &PotentialWeights) -> f64 {
    cloud
        .particles()
        .iter()
        .zip(w.values())
        .map(|(p, r)| {
            let y = p.position;
            p.mass * (0.5 * (y[0] * y[0] + y[1] * y[1]) - r)
        })
        .sum()
}

fn functional_value(cloud: &DualCloud, w: &PotentialWeights, tess: &Tessellation) -> f64 {
    linear_term(cloud, w) + tess.fluid_integral
}

fn gradient_of(cloud: &DualCloud, tess: &Tessellation) -> Vec<f64> {
    tess.volumes
        .iter()
        .zip(cloud.particles())
        .map(|(v, p)| v - p.mass)
        .collect()
}

/// Discrete Kantorovich dual functional `F(R)`.
pub fn dual_functional(
    cloud: &DualCloud,
    domain: &FluidDomain,
    cost: &CostModel,
    w: &PotentialWeights,
) -> Result<f64> {
    let tess = tessellate(cloud, domain, cost, w)?;
    Ok(functional_value(cloud, w, &tess))
}

/// `dF/dR_i = V_i(R) - m_i`.
pub fn dual_gradient(
    cloud: &DualCloud,
    domain: &FluidDomain,
    cost: &CostModel,
    w: &PotentialWeights,
) -> Result<Vec<f64>> {
    let tess = tessellate(cloud, domain, cost, w)?;
    Ok(gradient_of(cloud, &tess))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub evaluations: usize,
    pub residual: f64,
    pub dual_value: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub weights: PotentialWeights,
    pub tessellation: Tessellation,
    pub stats: SolveStats,
}

fn recenter(r: &mut [f64]) {
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    for v in r.iter_mut() {
        *v -= mean;
    }
}

/// Starting weights `R_i = |y_h,i|^2 / 2 - c0`, with `c0` bisected so the
/// initial fluid volume is close to one. Rigid-lid weights are recentred.
pub fn initial_weights(
    cloud: &DualCloud,
    domain: &FluidDomain,
    cost: &CostModel,
) -> Result<PotentialWeights> {
    let shape: Vec<f64> = cloud
        .positions()
        .map(|y| 0.5 * (y[0] * y[0] + y[1] * y[1]))
        .collect();
    if !domain.is_free_surface() {
        let mut r = shape;
        recenter(&mut r);
        return PotentialWeights::new(r);
    }
    let volume_at = |c0: f64| -> Result<f64> {
        let w = PotentialWeights::new(shape.iter().map(|s| s - c0).collect())?;
        Ok(tessellate(cloud, domain, cost, &w)?.total_volume())
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..64 {
        if volume_at(lo)? < 1.0 {
            break;
        }
        lo *= 2.0;
    }
    for _ in 0..64 {
        if volume_at(hi)? > 1.0 {
            break;
        }
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = volume_at(mid)?;
        if (v - 1.0).abs() < 1e-3 {
            lo = mid;
            hi = mid;
            break;
        }
        if v < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c0 = 0.5 * (lo + hi);
    PotentialWeights::new(shape.iter().map(|s| s - c0).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Maximizes `F` by gradient ascent with a nonmonotone line search and
/// optional two-point step sizes, until `max_i |V_i - m_i| <= tol * max_i m_i`.
///
/// Rigid-lid weights are fixed up to a common shift; the returned weights
/// satisfy `sum_i R_i = 0`.
pub fn solve_weights(
    cloud: &DualCloud,
    domain: &FluidDomain,
    cost: &CostModel,
    config: &SolverConfig,
    initial: Option<&PotentialWeights>,
) -> Result<Solution> {
    config.validate()?;
    let rigid = matches!(domain.boundary(), Boundary::RigidLid { .. });
    let mut r = match initial {
        Some(w) => {
            w.check_len(cloud)?;
            w.values().to_vec()
        }
        None => initial_weights(cloud, domain, cost)?.into_inner(),
    };
    if rigid {
        recenter(&mut r);
    }
    let ctl = config.step;
    let target = config.mass_tolerance * cloud.max_mass();

    let mut w = PotentialWeights::new(r.clone())?;
    let mut tess = tessellate(cloud, domain, cost, &w)?;
    let mut value = functional_value(cloud, &w, &tess);
    let mut grad = gradient_of(cloud, &tess);
    let mut evaluations = 1;
    let mut history: VecDeque<f64> = VecDeque::with_capacity(ctl.memory);
    history.push_back(value);
    let mut step = ctl.initial_step;

    for iteration in 0..=config.max_ascent_iterations {
        let residual = max_abs(&grad);
        if residual <= target {
            if domain.is_free_surface() && tess.cap_columns > 0 {
                return Err(Error::CapTooLow {
                    columns: tess.cap_columns,
                });
            }
            debug!("weights converged in {iteration} iterations, residual {residual:e}");
            return Ok(Solution {
                weights: w,
                tessellation: tess,
                stats: SolveStats {
                    iterations: iteration,
                    evaluations,
                    residual,
                    dual_value: value,
                },
            });
        }
        if iteration == config.max_ascent_iterations {
            break;
        }

        let grad_sq = dot(&grad, &grad);
        let reference = history.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = 1e-14 * (value.abs() + 1.0);
        let mut s = step.clamp(ctl.min_step, ctl.max_step);
        let accepted = loop {
            let mut trial: Vec<f64> = r.iter().zip(&grad).map(|(ri, gi)| ri + s * gi).collect();
            if rigid {
                recenter(&mut trial);
            }
            let trial_w = PotentialWeights::new(trial.clone())?;
            let trial_tess = tessellate(cloud, domain, cost, &trial_w)?;
            evaluations += 1;
            let trial_value = functional_value(cloud, &trial_w, &trial_tess);
            let trial_grad = gradient_of(cloud, &trial_tess);
            let sufficient = trial_value >= reference + ctl.armijo * s * grad_sq;
            // Near the optimum F is flat to rounding; fall back on the residual.
            let noisy_ok = trial_value >= reference - slack && max_abs(&trial_grad) < residual;
            if sufficient || noisy_ok {
                break Some((trial, trial_w, trial_tess, trial_value, trial_grad, s));
            }
            s *= 0.5;
            if s < ctl.min_step {
                break None;
            }
        };
        let Some((trial, trial_w, trial_tess, trial_value, trial_grad, s)) = accepted else {
            break;
        };

        let ds: Vec<f64> = trial.iter().zip(&r).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let curvature = -dot(&ds, &dg);
        step = if ctl.two_point && curvature > 0.0 {
            dot(&ds, &ds) / curvature
        } else {
            2.0 * s
        };

        r = trial;
        w = trial_w;
        tess = trial_tess;
        value = trial_value;
        grad = trial_grad;
        if history.len() == ctl.memory {
            history.pop_front();
        }
        history.push_back(value);
    }
    Err(Error::NotConverged {
        iterations: config.max_ascent_iterations,
        residual: max_abs(&grad),
    })
}

/// Surface recomputed by minimizing the column functional
/// `Pi(s) = int_base^s ((x1^2 + x2^2) / 2 - P) dx3`, independently of the
/// envelope construction used by [`tessellate`].
#[derive(Debug, Clone)]
pub struct SurfaceCheck {
    pub heights: GridField,
    /// `max |h_check - h_tessellation|`.
    pub max_height_residual: f64,
    /// `max |p(x1, x2, h)|` over columns with `base < h < top`.
    pub max_pressure_residual: f64,
}

pub const SURFACE_TOLERANCE: f64 = 1e-10;

/// Recomputes the free surface per column from all pairwise breakpoints
/// and brute-force maxima, then compares with the tessellation.
pub fn surface_height_crosscheck(
    cloud: &DualCloud,
    domain: &FluidDomain,
    cost: &CostModel,
    w: &PotentialWeights,
    tess: &Tessellation,
) -> Result<SurfaceCheck> {
    if !domain.is_free_surface() {
        return Err(Error::InvalidDomain(
            "surface cross-check needs a free surface".into(),
        ));
    }
    let layout = Layout::new(cloud, domain, cost, w)?;
    let n = cloud.len();
    let ys: Vec<Point3> = cloud.positions().collect();

    let per_column: Vec<(f64, f64)> = (0..domain.column_count())
        .into_par_iter()
        .map(|c| {
            let [x1, x2] = domain.column_center(c);
            let threshold = 0.5 * (x1 * x1 + x2 * x2);
            let b: Vec<f64> = (0..n)
                .map(|i| x1 * ys[i][0] + x2 * ys[i][1] - w.values()[i])
                .collect();
            let s = &layout.slopes;
            let (zlo, zhi) = (layout.zeta_lo, layout.zeta_hi);
            let envelope = |z: f64| {
                (0..n)
                    .map(|i| (b[i] + s[i] * z, i))
                    .fold((f64::NEG_INFINITY, 0), |acc, v| if v.0 > acc.0 { v } else { acc })
            };

            let mut breaks = vec![zlo, zhi];
            for i in 0..n {
                breaks.push((threshold - b[i]) / s[i]);
                for j in (i + 1)..n {
                    if s[i] != s[j] {
                        breaks.push((b[i] - b[j]) / (s[j] - s[i]));
                    }
                }
            }
            breaks.retain(|z| z.is_finite() && *z >= zlo && *z <= zhi);
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();

            // dPi/ds = threshold - P is nondecreasing; the minimizer is its
            // first zero, found on the piece where the sign changes.
            let mut root = None;
            if envelope(zlo).0 < threshold {
                root = Some(zlo);
            } else {
                for pair in breaks.windows(2) {
                    let (za, zb) = (pair[0], pair[1]);
                    if envelope(zb).0 >= threshold {
                        continue;
                    }
                    let (_, k) = envelope(0.5 * (za + zb));
                    root = Some(((threshold - b[k]) / s[k]).clamp(za, zb));
                    break;
                }
            }
            let h = match root {
                Some(z) => layout.physical(z),
                None => layout.top,
            };

            let mut p_res = 0.0;
            if h > layout.base && h < layout.top {
                let lifted = [x1, x2, cost.zeta(h)];
                let value = geopotential(&lifted, cloud, w).map(|e| e.value).unwrap_or(0.0);
                p_res = (value - threshold).abs();
            }
            (h, p_res)
        })
        .collect();

    let mut heights = Vec::with_capacity(per_column.len());
    let mut max_h: f64 = 0.0;
    let mut max_p: f64 = 0.0;
    let mut worst_column = 0;
    for (c, (h, p_res)) in per_column.into_iter().enumerate() {
        let dh = (h - tess.heights.values()[c]).abs();
        if dh > max_h {
            max_h = dh;
            worst_column = c;
        }
        max_p = max_p.max(p_res);
        heights.push(h);
    }
    if max_h > SURFACE_TOLERANCE {
        return Err(Error::SurfaceMismatch {
            column: worst_column,
            residual: max_h,
        });
    }
    Ok(SurfaceCheck {
        heights: GridField::new(domain, heights)?,
        max_height_residual: max_h,
        max_pressure_residual: max_p,
    })
}

/// Grid diagnostics of a converged free surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDiagnostics {
    pub height_min: f64,
    pub height_max: f64,
    /// Largest adjacent-column difference quotient of `h`.
    pub lipschitz: f64,
    /// `|grad_2 p - rho grad_2 h|` at the surface, max over interior wet columns.
    pub pressure_height_max: f64,
    pub pressure_height_rms: f64,
    /// `int x3 dsigma_h`.
    pub vertical_moment: f64,
}

/// Lipschitz estimate of `h` and the residual of `grad_2 p = rho grad_2 h`.
///
/// The horizontal pressure gradient at the surface is `y_h - x_h` of the
/// winning particle and `rho = -y3`; `grad_2 h` uses central differences.
/// The residual is only meaningful in the incompressible model and away from
/// cell boundaries, where `h` has kinks.
pub fn surface_diagnostics(
    cloud: &DualCloud,
    domain: &FluidDomain,
    w: &PotentialWeights,
    tess: &Tessellation,
) -> SurfaceDiagnostics {
    let h = tess.heights();
    let [n1, n2] = domain.grid();
    let [d1, d2] = domain.spacing();
    let base = tess.base;
    let mut max_res: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for j1 in 1..n1.saturating_sub(1) {
        for j2 in 1..n2.saturating_sub(1) {
            let hc = h.get(j1, j2);
            let neighbours = [
                h.get(j1 - 1, j2),
                h.get(j1 + 1, j2),
                h.get(j1, j2 - 1),
                h.get(j1, j2 + 1),
            ];
            if hc <= base || neighbours.iter().any(|v| *v <= base || *v >= tess.top) {
                continue;
            }
            let c = domain.column_index(j1, j2);
            let [x1, x2] = domain.column_center(c);
            let Some(e) = geopotential(&[x1, x2, hc], cloud, w) else {
                continue;
            };
            let y = cloud.particles()[e.winner].position;
            let rho = -y[2];
            let dh1 = (neighbours[1] - neighbours[0]) / (2.0 * d1);
            let dh2 = (neighbours[3] - neighbours[2]) / (2.0 * d2);
            let r1 = (y[0] - x1) - rho * dh1;
            let r2 = (y[1] - x2) - rho * dh2;
            let r = (r1 * r1 + r2 * r2).sqrt();
            max_res = max_res.max(r);
            sum_sq += r * r;
            count += 1;
        }
    }
    SurfaceDiagnostics {
        height_min: h.min(),
        height_max: h.max(),
        lipschitz: h.lipschitz_estimate(),
        pressure_height_max: max_res,
        pressure_height_rms: if count > 0 {
            (sum_sq / count as f64).sqrt()
        } else {
            0.0
        },
        vertical_moment: tess.vertical_moment(),
    }
}
