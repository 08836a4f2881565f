//! The `solve`, `run` and `verify` commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use geodual_core::dynamics::{self, dual_velocity, hamiltonian_checks, HamiltonianBounds};
use geodual_core::export::{fmt_f64, write_cells, write_heights, write_particles};
use geodual_core::geometry::{check_c_concavity, check_vertical_monotonicity, LiftedBox};
use geodual_core::oracle::{self, DiscreteMeasurePair, MAX_SOURCES, MAX_TARGETS};
use geodual_core::solver::{dual_functional, dual_gradient, surface_height_crosscheck, Solution};
use geodual_core::{
    solve_weights, validate_cloud, CostModel, DualCloud, FluidDomain, PotentialWeights, SolverConfig,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::json;

pub const DIAGNOSTICS_SCHEMA: &str = "geodual.diagnostics/1";
pub const SOLVE_SCHEMA: &str = "geodual.solve/1";
pub const RUN_SCHEMA: &str = "geodual.run/1";
pub const VERIFY_SCHEMA: &str = "geodual.verify/1";

struct Problem {
    domain: FluidDomain,
    cost: CostModel,
    cloud: DualCloud,
    solver: SolverConfig,
}

fn problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    Ok(Problem {
        domain: cfg.domain()?,
        cost: cfg.cost_model()?,
        cloud: cfg.cloud()?,
        solver: cfg.solver_config()?,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    Ok((path, BufWriter::new(file)))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(io_err(&path))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = json::to_pretty(value).expect("summary serializes");
    text.push('\n');
    write_text(dir, name, &text)
}

/// Creates the output directory and records the effective config in it.
pub fn prepare_output(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    write_text(&cfg.output_dir, "effective_config.json", &cfg.emit())
}

fn snapshot_name(kind: &str, step: usize) -> String {
    format!("{kind}_{step:06}.csv")
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub schema_version: &'static str,
    pub particles: usize,
    pub columns: usize,
    pub energy: f64,
    pub dual_value: f64,
    pub iterations: usize,
    pub mass_residual: f64,
    pub single_valued_violations: usize,
    pub crosscheck_height_residual: Option<f64>,
    pub crosscheck_pressure_residual: Option<f64>,
    pub weights: Vec<f64>,
}

/// One weight solve at `t = 0`: heights and cell tables plus a summary.
pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveSummary, CliError> {
    prepare_output(cfg)?;
    let p = problem(cfg)?;
    let sol = solve_weights(&p.cloud, &p.domain, &p.cost, &p.solver, None)?;
    let check = if p.domain.is_free_surface() {
        Some(surface_height_crosscheck(&p.cloud, &p.domain, &p.cost, &sol.weights, &sol.tessellation)?)
    } else {
        None
    };
    let dir = &cfg.output_dir;
    let (path, out) = create(dir, &snapshot_name("heights", 0))?;
    write_heights(out, &p.domain, &sol.tessellation).map_err(|e| with_path(e, &path))?;
    let (path, out) = create(dir, &snapshot_name("cells", 0))?;
    write_cells(out, &p.cloud, &sol.weights, &sol.tessellation).map_err(|e| with_path(e, &path))?;
    let summary = SolveSummary {
        schema_version: SOLVE_SCHEMA,
        particles: p.cloud.len(),
        columns: p.domain.column_count(),
        energy: sol.tessellation.energy(),
        dual_value: sol.stats.dual_value,
        iterations: sol.stats.iterations,
        mass_residual: sol.stats.residual,
        single_valued_violations: sol.tessellation.single_valued_violations(),
        crosscheck_height_residual: check.as_ref().map(|c| c.max_height_residual),
        crosscheck_pressure_residual: check.as_ref().map(|c| c.max_pressure_residual),
        weights: sol.weights.values().to_vec(),
    };
    write_json(dir, "solve_summary.json", &summary)?;
    Ok(summary)
}

fn with_path(e: geodual_core::Error, path: &Path) -> CliError {
    match e {
        geodual_core::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Core(other),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: &'static str,
    pub steps: usize,
    pub final_time: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_energy_drift: f64,
    pub max_abs_energy_drift: f64,
    pub hamiltonian_violations: usize,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct SchemaLine {
    schema_version: &'static str,
}

/// Integrates the flow, streaming diagnostics and writing snapshots at the
/// configured cadence (and always at the first and last step).
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    prepare_output(cfg)?;
    let p = problem(cfg)?;
    let dir = cfg.output_dir.clone();
    let (diag_path, mut diag) = create(&dir, "diagnostics.jsonl")?;
    let header = json::to_line(&SchemaLine {
        schema_version: DIAGNOSTICS_SCHEMA,
    })
    .expect("schema line serializes");
    writeln!(diag, "{header}").map_err(io_err(&diag_path))?;

    let total_steps = if cfg.tau > 1e-12 {
        (cfg.tau / cfg.dt - 1e-12).ceil() as usize
    } else {
        0
    };
    let trajectory = dynamics::run(p.cloud, &p.domain, &p.cost, &p.solver, |state, rec| {
        writeln!(diag, "{}", json::to_line(rec).expect("record serializes"))?;
        if state.step % cfg.snapshot_cadence == 0 || state.step == total_steps {
            let open = |kind: &str| -> geodual_core::Result<BufWriter<File>> {
                Ok(BufWriter::new(File::create(dir.join(snapshot_name(kind, state.step)))?))
            };
            write_heights(open("heights")?, &p.domain, &state.tessellation)?;
            write_cells(open("cells")?, &state.cloud, &state.weights, &state.tessellation)?;
            write_particles(open("particles")?, state.step, &state.cloud, &dual_velocity(state)?)?;
        }
        Ok(())
    })
    .map_err(|e| with_path(e, &dir))?;
    diag.flush().map_err(io_err(&diag_path))?;

    let first = trajectory.records.first().expect("initial record");
    let last = trajectory.records.last().expect("initial record");
    let summary = RunSummary {
        schema_version: RUN_SCHEMA,
        steps: last.step,
        final_time: last.time,
        initial_energy: first.energy,
        final_energy: last.energy,
        final_energy_drift: last.energy_drift,
        max_abs_energy_drift: trajectory
            .records
            .iter()
            .map(|r| r.energy_drift.abs())
            .fold(0.0, f64::max),
        hamiltonian_violations: trajectory.reports.iter().filter(|r| !r.passed()).count(),
        warnings: trajectory.warnings,
    };
    write_json(&dir, "run_summary.json", &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Property {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub schema_version: &'static str,
    pub passed: bool,
    pub properties: Vec<Property>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Property> {
        self.properties.iter().filter(|p| !p.passed)
    }

    pub fn table(&self) -> String {
        let width = self.properties.iter().map(|p| p.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for p in &self.properties {
            let mark = if p.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{mark}  {:width$}  {}\n", p.name, p.detail));
        }
        out
    }
}

#[derive(Default)]
struct Battery {
    properties: Vec<Property>,
}

impl Battery {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.properties.push(Property {
            name: name.into(),
            passed,
            detail,
        });
    }

    fn finish(self) -> VerifyReport {
        VerifyReport {
            schema_version: VERIFY_SCHEMA,
            passed: self.properties.iter().all(|p| p.passed),
            properties: self.properties,
        }
    }
}

const CONCAVITY_PAIRS: usize = 20;
const GRADIENT_POINTS: usize = 3;
const CONCAVITY_SLACK: f64 = 1e-9;
const GRADIENT_RELATIVE: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;

/// Runs the property battery at the config's scale. Never writes files.
pub fn verify(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let p = problem(cfg)?;
    let mut b = Battery::default();

    let validation = validate_cloud(&p.cloud, &p.cost);
    for check in &validation.checks {
        b.push(&format!("cloud.{}", check.name), check.passed, check.detail.clone());
    }
    if !validation.passed() {
        return Ok(b.finish());
    }

    let sol = match solve_weights(&p.cloud, &p.domain, &p.cost, &p.solver, None) {
        Ok(sol) => sol,
        Err(e) => {
            b.push("solve", false, e.to_string());
            return Ok(b.finish());
        }
    };
    b.push(
        "solve",
        true,
        format!(
            "{} iterations, mass residual {}",
            sol.stats.iterations,
            fmt_f64(sol.stats.residual)
        ),
    );
    let violations = sol.tessellation.single_valued_violations();
    b.push(
        "single_valued_surface",
        violations == 0,
        format!("{violations} of {} columns with fluid above vacuum", p.domain.column_count()),
    );
    if p.domain.is_free_surface() {
        match surface_height_crosscheck(&p.cloud, &p.domain, &p.cost, &sol.weights, &sol.tessellation) {
            Ok(c) => b.push(
                "surface_crosscheck",
                true,
                format!(
                    "height residual {}, pressure residual {}",
                    fmt_f64(c.max_height_residual),
                    fmt_f64(c.max_pressure_residual)
                ),
            ),
            Err(e) => b.push("surface_crosscheck", false, e.to_string()),
        }
    }

    let bounds = LiftedBox::of_domain(&p.domain, &p.cost);
    let convex = check_c_concavity(&p.cloud, &sol.weights, &bounds, cfg.verify_samples, cfg.seed)?;
    b.push(
        "c_concavity",
        convex.max_violation <= CONCAVITY_SLACK,
        format!("{} samples, worst midpoint excess {}", convex.samples, fmt_f64(convex.max_violation)),
    );
    let rise = check_vertical_monotonicity(&p.cloud, &sol.weights, &bounds, cfg.verify_samples, cfg.seed)?;
    b.push(
        "vertical_monotonicity",
        rise <= CONCAVITY_SLACK,
        format!("largest upward increase {}", fmt_f64(rise)),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dual_checks(&mut b, &p, &sol, &mut rng)?;
    oracle_check(&mut b, &p, &sol)?;
    flow_checks(&mut b, cfg, &p)?;
    Ok(b.finish())
}

fn dual_checks(b: &mut Battery, p: &Problem, sol: &Solution, rng: &mut ChaCha8Rng) -> Result<(), CliError> {
    let f = |r: &[f64]| -> geodual_core::Result<f64> {
        dual_functional(&p.cloud, &p.domain, &p.cost, &PotentialWeights::new(r.to_vec())?)
    };
    let star = sol.weights.values();
    let mut jitter = |scale: f64| -> Vec<f64> { star.iter().map(|v| v + rng.random_range(-scale..scale)).collect() };

    let mut worst: f64 = 0.0;
    let f_star = f(star)?;
    let mut above_max: f64 = 0.0;
    for _ in 0..CONCAVITY_PAIRS {
        let (a, c) = (jitter(0.3), jitter(0.3));
        let mid: Vec<f64> = a.iter().zip(&c).map(|(x, y)| 0.5 * (x + y)).collect();
        let (fa, fc, fm) = (f(&a)?, f(&c)?, f(&mid)?);
        worst = worst.max(0.5 * (fa + fc) - fm);
        above_max = above_max.max(fa.max(fc) - f_star);
    }
    b.push(
        "dual_concavity",
        worst <= CONCAVITY_SLACK,
        format!("{CONCAVITY_PAIRS} pairs, worst midpoint deficit {}", fmt_f64(worst)),
    );
    b.push(
        "dual_maximum",
        above_max <= CONCAVITY_SLACK,
        format!("largest excess over the optimum {}", fmt_f64(above_max)),
    );

    let mut worst_rel: f64 = 0.0;
    for _ in 0..GRADIENT_POINTS {
        let r = jitter(0.05);
        let g = dual_gradient(&p.cloud, &p.domain, &p.cost, &PotentialWeights::new(r.clone())?)?;
        let fd = oracle::finite_difference_gradient(f, &r, FD_STEP)?;
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        if scale > 0.0 {
            worst_rel = worst_rel.max(err / scale);
        }
    }
    b.push(
        "dual_gradient",
        worst_rel <= GRADIENT_RELATIVE,
        format!("{GRADIENT_POINTS} points, worst relative error {}", fmt_f64(worst_rel)),
    );
    Ok(())
}

fn oracle_check(b: &mut Battery, p: &Problem, sol: &Solution) -> Result<(), CliError> {
    let [n1, n2] = p.domain.grid();
    let layers = n1.max(n2);
    let voxels = n1 * n2 * layers;
    if p.cloud.len() > MAX_TARGETS || voxels > MAX_SOURCES {
        b.push(
            "oracle_equivalence",
            true,
            format!(
                "skipped: {} particles and {voxels} voxels exceed the exact transport limits",
                p.cloud.len()
            ),
        );
        return Ok(());
    }
    let tolerance = if layers >= 32 { 0.005 } else { 0.02 };
    let vox = oracle::voxelize(&p.domain, &p.cost, sol.tessellation.heights(), layers)?;
    let pair = DiscreteMeasurePair::with_cloud(vox, &p.cloud)?;
    let lp = oracle::lp_transport(&pair, &p.cost)?;
    let e = sol.tessellation.energy();
    let rel = (e - lp.cost).abs() / lp.cost.abs().max(f64::MIN_POSITIVE);
    b.push(
        "oracle_equivalence",
        rel <= tolerance,
        format!(
            "energy {} vs exact transport {} at {layers} layers, relative gap {}",
            fmt_f64(e),
            fmt_f64(lp.cost),
            fmt_f64(rel)
        ),
    );
    Ok(())
}

fn flow_checks(b: &mut Battery, cfg: &RunConfig, p: &Problem) -> Result<(), CliError> {
    let horizon = cfg.tau.min(cfg.verify_steps as f64 * cfg.dt);
    let solver = SolverConfig { horizon, ..p.solver };
    let bounds = HamiltonianBounds::new(&p.cloud, &p.domain)?;
    let y3: Vec<f64> = p.cloud.positions().map(|y| y[2]).collect();
    let mass0 = p.cloud.total_mass();
    let mut y3_shift: f64 = 0.0;
    let mut mass_shift: f64 = 0.0;
    let mut w2_excess: f64 = 0.0;
    let mut single_valued = 0;
    let trajectory = dynamics::run(p.cloud.clone(), &p.domain, &p.cost, &solver, |state, rec| {
        for (y, z) in state.cloud.positions().zip(&y3) {
            y3_shift = y3_shift.max((y[2] - z).abs());
        }
        mass_shift = mass_shift.max((rec.total_mass - mass0).abs());
        w2_excess = w2_excess.max(rec.w2_increment - rec.w2_bound * (1.0 + 1e-6));
        single_valued += state.tessellation.single_valued_violations();
        Ok(())
    });
    let trajectory = match trajectory {
        Ok(t) => t,
        Err(e) => {
            b.push("flow", false, e.to_string());
            return Ok(());
        }
    };
    let steps = trajectory.final_state.step;
    let mut velocity = 0;
    let mut support = 0;
    let mut worst_ratio: f64 = 0.0;
    for rep in &trajectory.reports {
        velocity += rep.velocity_violations;
        if rep.support_radius > rep.support_limit {
            support += 1;
        }
        worst_ratio = worst_ratio.max(rep.velocity_ratio);
    }
    let last = hamiltonian_checks(&trajectory.final_state, &bounds)?;
    b.push(
        "velocity_bound",
        velocity == 0,
        format!("{velocity} violations over {steps} steps, largest |w| / C0(1+|y|) {}", fmt_f64(worst_ratio)),
    );
    b.push(
        "support_bound",
        support == 0,
        format!(
            "{support} violations, final radius {} within {}",
            fmt_f64(last.support_radius),
            fmt_f64(last.support_limit)
        ),
    );
    b.push("vertical_invariance", y3_shift <= 1e-14, format!("largest y3 change {}", fmt_f64(y3_shift)));
    b.push("mass_conservation", mass_shift <= 1e-12, format!("largest mass change {}", fmt_f64(mass_shift)));
    b.push(
        "wasserstein_increment",
        w2_excess <= 0.0,
        format!("largest excess over max|w| dt {}", fmt_f64(w2_excess.max(0.0))),
    );
    b.push(
        "flow_single_valued",
        single_valued == 0,
        format!("{single_valued} violations over {} states", steps + 1),
    );
    Ok(())
}

/// `verify` as a command: writes the report next to the effective config.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    prepare_output(cfg)?;
    let report = verify(cfg)?;
    write_json(&cfg.output_dir, "verify_report.json", &report)?;
    Ok(report)
}
