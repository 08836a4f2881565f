//! Hamiltonian particle advection of the dual measure.
//!
//! Each particle moves with `w = J (y - xbar)`, where `xbar` is the
//! barycenter of its cell and `J (a, b, c) = (-b, a, 0)`. Weights are
//! re-solved, warm-started, after every position update.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{support_radius, CostModel, DualCloud, FluidDomain, Point3, SolverConfig, Stepper};
use crate::geometry::PotentialWeights;
use crate::solver::{solve_weights, Tessellation};

/// A converged snapshot of the flow.
#[derive(Debug, Clone)]
pub struct SimState {
    pub time: f64,
    pub step: usize,
    pub cloud: DualCloud,
    pub weights: PotentialWeights,
    pub tessellation: Tessellation,
    /// Ascent iterations spent on the most recent solve(s).
    pub solver_iterations: usize,
}

impl SimState {
    /// Solves the weights at `t = 0`.
    pub fn initial(
        cloud: DualCloud,
        domain: &FluidDomain,
        cost: &CostModel,
        config: &SolverConfig,
        initial: Option<&PotentialWeights>,
    ) -> Result<Self> {
        let sol = solve_weights(&cloud, domain, cost, config, initial)?;
        Ok(Self {
            time: 0.0,
            step: 0,
            cloud,
            weights: sol.weights,
            tessellation: sol.tessellation,
            solver_iterations: sol.stats.iterations,
        })
    }

    pub fn mass_residual(&self) -> f64 {
        self.tessellation.mass_residual(&self.cloud)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    /// `(E - E0) / |E0|`, or `E - E0` when `E0 = 0`.
    pub energy_drift: f64,
    pub total_mass: f64,
    pub mass_residual: f64,
    pub support_radius: f64,
    pub max_velocity: f64,
    /// `sqrt(sum_i m_i |dy_i|^2)` over the step that produced this state.
    pub w2_increment: f64,
    /// `max |w| dt` over the velocities used by that step.
    pub w2_bound: f64,
    pub height_min: f64,
    pub height_max: f64,
    pub solver_iterations: usize,
}

pub fn energy(state: &SimState) -> f64 {
    state.tessellation.energy()
}

fn velocity_at(cloud: &DualCloud, tess: &Tessellation) -> Result<Vec<Point3>> {
    cloud
        .positions()
        .enumerate()
        .map(|(i, y)| {
            let xb = tess.barycenter(i).ok_or(Error::UnconvergedState {
                residual: tess.mass_residual(cloud),
                tolerance: 0.0,
            })?;
            Ok([-(y[1] - xb[1]), y[0] - xb[0], 0.0])
        })
        .collect()
}

/// `w_i = J (y_i - xbar_i)`; the third component is exactly zero.
pub fn dual_velocity(state: &SimState) -> Result<Vec<Point3>> {
    velocity_at(&state.cloud, &state.tessellation)
}

/// Rotates `y` counterclockwise about `center` in the horizontal plane.
pub fn rotate_about(y: &Point3, center: [f64; 2], angle: f64) -> Point3 {
    let (s, c) = angle.sin_cos();
    let a = y[0] - center[0];
    let b = y[1] - center[1];
    [center[0] + a * c - b * s, center[1] + a * s + b * c, y[2]]
}

fn horizontal_barycenters(cloud: &DualCloud, tess: &Tessellation) -> Result<Vec<[f64; 2]>> {
    (0..cloud.len())
        .map(|i| {
            tess.barycenter(i)
                .map(|x| [x[0], x[1]])
                .ok_or(Error::UnconvergedState {
                    residual: tess.mass_residual(cloud),
                    tolerance: 0.0,
                })
        })
        .collect()
}

fn norm_h(v: &Point3) -> f64 {
    v[0].hypot(v[1])
}

/// Outcome of one step: the new state and the largest speed used.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: SimState,
    pub max_velocity_used: f64,
}

/// Advances by `dt`.
///
/// The exact-rotation stepper rotates each particle about a barycenter
/// frozen over the step, taken at the state predicted half a step ahead;
/// freezing at the start of the step is only first order.
pub fn step(
    state: &SimState,
    domain: &FluidDomain,
    cost: &CostModel,
    config: &SolverConfig,
    dt: f64,
) -> Result<StepResult> {
    let ys: Vec<Point3> = state.cloud.positions().collect();
    let solve_at = |positions: &[Point3], warm: &PotentialWeights| -> Result<(DualCloud, crate::solver::Solution)> {
        let cloud = state.cloud.with_positions(positions)?;
        let sol = solve_weights(&cloud, domain, cost, config, Some(warm))?;
        Ok((cloud, sol))
    };
    let mut iterations = 0;

    let (positions, max_used, warm) = match config.stepper {
        Stepper::ExactRotation => {
            let xb0 = horizontal_barycenters(&state.cloud, &state.tessellation)?;
            let half: Vec<Point3> = ys
                .iter()
                .zip(&xb0)
                .map(|(y, c)| rotate_about(y, *c, 0.5 * dt))
                .collect();
            let (mid_cloud, mid) = solve_at(&half, &state.weights)?;
            iterations += mid.stats.iterations;
            let xb = horizontal_barycenters(&mid_cloud, &mid.tessellation)?;
            let max_used = ys
                .iter()
                .zip(&xb)
                .map(|(y, c)| (y[0] - c[0]).hypot(y[1] - c[1]))
                .fold(0.0, f64::max);
            let next = ys.iter().zip(&xb).map(|(y, c)| rotate_about(y, *c, dt)).collect();
            (next, max_used, mid.weights)
        }
        Stepper::Rk4 => {
            let advance = |k: &[Point3], h: f64| -> Vec<Point3> {
                ys.iter()
                    .zip(k)
                    .map(|(y, k)| [y[0] + h * k[0], y[1] + h * k[1], y[2]])
                    .collect()
            };
            let k1 = dual_velocity(state)?;
            let (c2, s2) = solve_at(&advance(&k1, 0.5 * dt), &state.weights)?;
            let k2 = velocity_at(&c2, &s2.tessellation)?;
            let (c3, s3) = solve_at(&advance(&k2, 0.5 * dt), &s2.weights)?;
            let k3 = velocity_at(&c3, &s3.tessellation)?;
            let (c4, s4) = solve_at(&advance(&k3, dt), &s3.weights)?;
            let k4 = velocity_at(&c4, &s4.tessellation)?;
            iterations += s2.stats.iterations + s3.stats.iterations + s4.stats.iterations;
            let max_used = [&k1, &k2, &k3, &k4]
                .iter()
                .flat_map(|k| k.iter().map(norm_h))
                .fold(0.0, f64::max);
            let next = (0..ys.len())
                .map(|i| {
                    let y = ys[i];
                    let mut out = y;
                    for d in 0..2 {
                        out[d] = y[d]
                            + dt / 6.0 * (k1[i][d] + 2.0 * k2[i][d] + 2.0 * k3[i][d] + k4[i][d]);
                    }
                    out
                })
                .collect::<Vec<_>>();
            (next, max_used, s4.weights)
        }
    };

    let (cloud, sol) = solve_at(&positions, &warm)?;
    iterations += sol.stats.iterations;
    Ok(StepResult {
        state: SimState {
            time: state.time + dt,
            step: state.step + 1,
            cloud,
            weights: sol.weights,
            tessellation: sol.tessellation,
            solver_iterations: iterations,
        },
        max_velocity_used: max_used,
    })
}

/// Runtime checks of the velocity growth and support bounds of the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianBounds {
    /// `C0 = 1 + diam(domain)`.
    pub c0: f64,
    /// `S = R(0) + diam(domain)`.
    pub support_scale: f64,
}

impl HamiltonianBounds {
    pub fn new(initial: &DualCloud, domain: &FluidDomain) -> Result<Self> {
        let diam = domain.diameter();
        Ok(Self {
            c0: 1.0 + diam,
            support_scale: support_radius(initial)? + diam,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianReport {
    /// Particles with `|w_i| > C0 (1 + |y_i|)`.
    pub velocity_violations: usize,
    /// `max_i |w_i| / (C0 (1 + |y_i|))`.
    pub velocity_ratio: f64,
    pub support_radius: f64,
    /// `S (1 + t)`.
    pub support_limit: f64,
}

impl HamiltonianReport {
    pub fn passed(&self) -> bool {
        self.velocity_violations == 0 && self.support_radius <= self.support_limit
    }
}

pub fn hamiltonian_checks(state: &SimState, bounds: &HamiltonianBounds) -> Result<HamiltonianReport> {
    let w = dual_velocity(state)?;
    let mut violations = 0;
    let mut ratio: f64 = 0.0;
    for (y, w) in state.cloud.positions().zip(&w) {
        let limit = bounds.c0 * (1.0 + crate::measures::norm_sq(&y).sqrt());
        let speed = norm_h(w);
        ratio = ratio.max(speed / limit);
        if speed > limit {
            violations += 1;
        }
    }
    Ok(HamiltonianReport {
        velocity_violations: violations,
        velocity_ratio: ratio,
        support_radius: support_radius(&state.cloud)?,
        support_limit: bounds.support_scale * (1.0 + state.time),
    })
}

/// Whether the horizon `tau` satisfies
/// `C0 tau sqrt(24 (1 + exp((25 C0^2 + 1) tau) (1 + M2))) < R0`,
/// the condition under which the flow provably stays in the ball of radius
/// `R0`; `m2` is the initial second moment.
pub fn horizon_bound_holds(c0: f64, tau: f64, m2: f64, r0: f64) -> bool {
    let growth = ((25.0 * c0 * c0 + 1.0) * tau).exp();
    c0 * tau * (24.0 * (1.0 + growth * (1.0 + m2))).sqrt() < r0
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub reports: Vec<HamiltonianReport>,
    pub final_state: SimState,
    pub warnings: Vec<String>,
}

fn record(
    state: &SimState,
    e0: f64,
    w2_increment: f64,
    w2_bound: f64,
) -> Result<DiagnosticsRecord> {
    let e = energy(state);
    let w = dual_velocity(state)?;
    let heights = state.tessellation.heights();
    Ok(DiagnosticsRecord {
        step: state.step,
        time: state.time,
        energy: e,
        energy_drift: if e0 != 0.0 { (e - e0) / e0.abs() } else { e - e0 },
        total_mass: state.cloud.total_mass(),
        mass_residual: state.mass_residual(),
        support_radius: support_radius(&state.cloud)?,
        max_velocity: w.iter().map(norm_h).fold(0.0, f64::max),
        w2_increment,
        w2_bound,
        height_min: heights.min(),
        height_max: heights.max(),
        solver_iterations: state.solver_iterations,
    })
}

/// Integrates from `t = 0` to the horizon, calling `observer` after the
/// initial solve and after every step.
pub fn run<F>(
    cloud: DualCloud,
    domain: &FluidDomain,
    cost: &CostModel,
    config: &SolverConfig,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&SimState, &DiagnosticsRecord) -> Result<()>,
{
    config.validate()?;
    let bounds = HamiltonianBounds::new(&cloud, domain)?;
    let mut warnings = Vec::new();
    if let Some(r0) = config.support_bound {
        if !horizon_bound_holds(bounds.c0, config.horizon, cloud.second_moment(), r0) {
            let msg = format!(
                "horizon {} exceeds the guaranteed existence time for support bound {r0}",
                config.horizon
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }

    let mut state = SimState::initial(cloud, domain, cost, config, None)?;
    let e0 = energy(&state);
    let first = record(&state, e0, 0.0, 0.0)?;
    observer(&state, &first)?;
    let mut records = vec![first];
    let mut reports = vec![hamiltonian_checks(&state, &bounds)?];

    while state.time < config.horizon - 1e-12 {
        let dt = config.time_step.min(config.horizon - state.time);
        let before: Vec<Point3> = state.cloud.positions().collect();
        let StepResult {
            state: next,
            max_velocity_used,
        } = step(&state, domain, cost, config, dt)?;
        let w2: f64 = next
            .cloud
            .particles()
            .iter()
            .zip(&before)
            .map(|(p, y)| {
                let d = [p.position[0] - y[0], p.position[1] - y[1], p.position[2] - y[2]];
                p.mass * crate::measures::norm_sq(&d)
            })
            .sum::<f64>()
            .sqrt();
        state = next;
        let rec = record(&state, e0, w2, max_velocity_used * dt)?;
        observer(&state, &rec)?;
        records.push(rec);
        reports.push(hamiltonian_checks(&state, &bounds)?);
    }
    Ok(Trajectory {
        records,
        reports,
        final_state: state,
        warnings,
    })
}
