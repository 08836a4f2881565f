//! Run configuration: a flat JSON object with strict keys.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `schema_version` | `"geodual.config/1"` | must match when given |
//! | `mode` | required | `"free-surface"` or `"rigid-lid"` |
//! | `footprint` | `[1, 1]` | `[L1, L2]` |
//! | `grid` | `[32, 32]` | columns per axis |
//! | `cap` | `3 / (L1 L2)` | free-surface box height |
//! | `lid_height` | `1 / (L1 L2)` | rigid-lid slab height |
//! | `cost` | `"incompressible"` | or `"compressible"` |
//! | `kappa`, `surface_pressure`, `cp`, `p_ref` | `2`, `0`, `1004`, `1` | compressible cost |
//! | `density_band` | `0.1` | `y3` must lie in `[-1/delta, -delta]` |
//! | `cloud_file` | | CSV `y1,y2,y3,mass`, relative to the config file |
//! | `generator` | | `uniform-block`, `two-blob` or `sheared-band` |
//! | `generator_count`, `generator_center`, `generator_extent`, `generator_shear` | `16`, `[0.5,0.5,-1]`, `[0.3,0.3,0.3]`, `0` | generator parameters |
//! | `seed` | `0` | generator and verify sampling |
//! | `tau`, `dt` | required | horizon and time step |
//! | `stepper` | `"exact-rotation"` | or `"rk4"` |
//! | `mass_tolerance` | `1e-9` | relative mass residual |
//! | `max_ascent_iterations`, `initial_step`, `armijo`, `memory`, `min_step`, `max_step`, `two_point` | solver defaults | weight ascent |
//! | `support_bound` | `null` | radius for the horizon warning |
//! | `snapshot_cadence` | `1` | CSV snapshots every this many steps |
//! | `output_dir` | `"output"` | |
//! | `verify_samples` | `2000` | random probes per convexity check |
//! | `verify_steps` | `10` | steps of the verify flow check |
//!
//! Exactly one of `cloud_file` and `generator` must be present.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use geodual_core::measures::ingest::{generate, load_cloud_csv, GeneratorKind, GeneratorSpec};
use geodual_core::{CostModel, DualCloud, FluidDomain, SolverConfig, StepController, Stepper};

use crate::error::CliError;

pub const CONFIG_SCHEMA: &str = "geodual.config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: String,
    pub mode: String,
    #[serde(default = "unit_footprint")]
    pub footprint: [f64; 2],
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lid_height: Option<f64>,
    #[serde(default = "default_cost")]
    pub cost: String,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub surface_pressure: f64,
    #[serde(default = "default_cp")]
    pub cp: f64,
    #[serde(default = "one")]
    pub p_ref: f64,
    #[serde(default = "default_band")]
    pub density_band: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default = "default_count")]
    pub generator_count: usize,
    #[serde(default = "default_center")]
    pub generator_center: [f64; 3],
    #[serde(default = "default_extent")]
    pub generator_extent: [f64; 3],
    #[serde(default)]
    pub generator_shear: f64,
    #[serde(default)]
    pub seed: u64,
    pub tau: f64,
    pub dt: f64,
    #[serde(default = "default_stepper")]
    pub stepper: String,
    #[serde(default = "default_tolerance")]
    pub mass_tolerance: f64,
    #[serde(default = "default_iterations")]
    pub max_ascent_iterations: usize,
    #[serde(default = "default_initial_step")]
    pub initial_step: f64,
    #[serde(default = "default_armijo")]
    pub armijo: f64,
    #[serde(default = "default_memory")]
    pub memory: usize,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    #[serde(default = "yes")]
    pub two_point: bool,
    #[serde(default)]
    pub support_bound: Option<f64>,
    #[serde(default = "default_cadence")]
    pub snapshot_cadence: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_samples")]
    pub verify_samples: usize,
    #[serde(default = "default_verify_steps")]
    pub verify_steps: usize,
}

fn default_schema() -> String {
    CONFIG_SCHEMA.into()
}
fn unit_footprint() -> [f64; 2] {
    [1.0, 1.0]
}
fn default_grid() -> [usize; 2] {
    [32, 32]
}
fn default_cost() -> String {
    "incompressible".into()
}
fn default_kappa() -> f64 {
    2.0
}
fn default_cp() -> f64 {
    1004.0
}
fn one() -> f64 {
    1.0
}
fn default_band() -> f64 {
    0.1
}
fn default_count() -> usize {
    16
}
fn default_center() -> [f64; 3] {
    [0.5, 0.5, -1.0]
}
fn default_extent() -> [f64; 3] {
    [0.3, 0.3, 0.3]
}
fn default_stepper() -> String {
    "exact-rotation".into()
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_iterations() -> usize {
    SolverConfig::default().max_ascent_iterations
}
fn default_initial_step() -> f64 {
    StepController::default().initial_step
}
fn default_armijo() -> f64 {
    StepController::default().armijo
}
fn default_memory() -> usize {
    StepController::default().memory
}
fn default_min_step() -> f64 {
    StepController::default().min_step
}
fn default_max_step() -> f64 {
    StepController::default().max_step
}
fn yes() -> bool {
    true
}
fn default_cadence() -> usize {
    1
}
fn default_output() -> PathBuf {
    "output".into()
}
fn default_samples() -> usize {
    2000
}
fn default_verify_steps() -> usize {
    10
}

fn out_of_range(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: Some(key.into()),
        message: message.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(out_of_range(key, format!("{key} = {v} must be positive and finite")))
    }
}

/// Parses and validates a config. Relative `cloud_file` paths resolve
/// against `base_dir` and must exist.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config {
        key: offending_key(&e.to_string()),
        message: e.to_string(),
    })?;
    if let Some(path) = &cfg.cloud_file {
        if path.is_relative() {
            cfg.cloud_file = Some(base_dir.join(path));
        }
    }
    cfg.fill_defaults();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

// serde_json reports unknown and missing keys as "... field `name` ...".
fn offending_key(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

impl RunConfig {
    fn fill_defaults(&mut self) {
        let area = self.footprint[0] * self.footprint[1];
        match self.mode.as_str() {
            "free-surface" if self.cap.is_none() => self.cap = Some(3.0 / area),
            "rigid-lid" if self.lid_height.is_none() => self.lid_height = Some(1.0 / area),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != CONFIG_SCHEMA {
            return Err(out_of_range(
                "schema_version",
                format!("unsupported schema {:?}, expected {CONFIG_SCHEMA:?}", self.schema_version),
            ));
        }
        match self.mode.as_str() {
            "free-surface" => {
                if self.lid_height.is_some() {
                    return Err(out_of_range("lid_height", "lid_height applies to rigid-lid mode only"));
                }
            }
            "rigid-lid" => {
                if self.cap.is_some() {
                    return Err(out_of_range("cap", "cap applies to free-surface mode only"));
                }
            }
            other => {
                return Err(out_of_range(
                    "mode",
                    format!("unknown mode {other:?} (expected free-surface or rigid-lid)"),
                ))
            }
        }
        self.domain()?;
        self.cost_model()?;
        positive("density_band", self.density_band)?;
        if self.density_band >= 1.0 {
            return Err(out_of_range("density_band", "density_band must be below 1"));
        }
        match (&self.cloud_file, &self.generator) {
            (Some(_), Some(_)) => {
                return Err(out_of_range("generator", "give either cloud_file or generator, not both"))
            }
            (None, None) => {
                return Err(CliError::Config {
                    key: Some("cloud_file".into()),
                    message: "missing cloud source: set cloud_file or generator".into(),
                })
            }
            (Some(path), None) => {
                if !path.is_file() {
                    return Err(out_of_range(
                        "cloud_file",
                        format!("cloud file {} does not exist", path.display()),
                    ));
                }
            }
            (None, Some(name)) => {
                name.parse::<GeneratorKind>()
                    .map_err(|e| out_of_range("generator", e))?;
                if self.generator_count == 0 {
                    return Err(out_of_range("generator_count", "generator_count must be at least 1"));
                }
                if !self.generator_center.iter().all(|c| c.is_finite()) {
                    return Err(out_of_range("generator_center", "generator_center must be finite"));
                }
                if !self.generator_extent.iter().all(|e| e.is_finite() && *e >= 0.0) {
                    return Err(out_of_range("generator_extent", "generator_extent must be nonnegative"));
                }
                if !self.generator_shear.is_finite() {
                    return Err(out_of_range("generator_shear", "generator_shear must be finite"));
                }
            }
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(out_of_range("tau", format!("tau = {} must be nonnegative", self.tau)));
        }
        positive("dt", self.dt)?;
        self.stepper_kind()?;
        positive("mass_tolerance", self.mass_tolerance)?;
        if self.max_ascent_iterations == 0 {
            return Err(out_of_range("max_ascent_iterations", "max_ascent_iterations must be at least 1"));
        }
        positive("initial_step", self.initial_step)?;
        positive("armijo", self.armijo)?;
        if self.armijo >= 1.0 {
            return Err(out_of_range("armijo", "armijo must be below 1"));
        }
        if self.memory == 0 {
            return Err(out_of_range("memory", "memory must be at least 1"));
        }
        positive("min_step", self.min_step)?;
        positive("max_step", self.max_step)?;
        if self.min_step > self.max_step {
            return Err(out_of_range("min_step", "min_step exceeds max_step"));
        }
        if let Some(r) = self.support_bound {
            positive("support_bound", r)?;
        }
        if self.snapshot_cadence == 0 {
            return Err(out_of_range("snapshot_cadence", "snapshot_cadence must be at least 1"));
        }
        if self.verify_samples == 0 {
            return Err(out_of_range("verify_samples", "verify_samples must be at least 1"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<FluidDomain, CliError> {
        if !self.footprint.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(out_of_range("footprint", "footprint sides must be positive"));
        }
        if self.grid.contains(&0) {
            return Err(out_of_range("grid", "grid needs at least one column per axis"));
        }
        if self.mode == "free-surface" {
            let cap = self.cap.unwrap_or(f64::NAN);
            FluidDomain::free_surface(self.footprint, cap, self.grid).map_err(|e| out_of_range("cap", e.to_string()))
        } else {
            let h = self.lid_height.unwrap_or(f64::NAN);
            FluidDomain::rigid_lid(self.footprint, h, self.grid).map_err(|e| out_of_range("lid_height", e.to_string()))
        }
    }

    pub fn cost_model(&self) -> Result<CostModel, CliError> {
        match self.cost.as_str() {
            "incompressible" => Ok(CostModel::incompressible()),
            "compressible" => {
                let key = if !(self.kappa.is_finite() && self.kappa >= 1.0) {
                    "kappa"
                } else if !(self.surface_pressure.is_finite() && self.surface_pressure >= 0.0) {
                    "surface_pressure"
                } else if !(self.cp.is_finite() && self.cp > 0.0) {
                    "cp"
                } else {
                    "p_ref"
                };
                CostModel::compressible(self.kappa, self.surface_pressure, self.cp, self.p_ref)
                    .map_err(|e| out_of_range(key, e.to_string()))
            }
            other => Err(out_of_range(
                "cost",
                format!("unknown cost {other:?} (expected incompressible or compressible)"),
            )),
        }
    }

    pub fn stepper_kind(&self) -> Result<Stepper, CliError> {
        match self.stepper.as_str() {
            "exact-rotation" => Ok(Stepper::ExactRotation),
            "rk4" => Ok(Stepper::Rk4),
            other => Err(out_of_range(
                "stepper",
                format!("unknown stepper {other:?} (expected exact-rotation or rk4)"),
            )),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        Ok(SolverConfig {
            mass_tolerance: self.mass_tolerance,
            max_ascent_iterations: self.max_ascent_iterations,
            step: StepController {
                initial_step: self.initial_step,
                armijo: self.armijo,
                memory: self.memory,
                min_step: self.min_step,
                max_step: self.max_step,
                two_point: self.two_point,
            },
            time_step: self.dt,
            horizon: self.tau,
            stepper: self.stepper_kind()?,
            output_cadence: self.snapshot_cadence,
            support_bound: self.support_bound,
        })
    }

    pub fn cloud(&self) -> Result<DualCloud, CliError> {
        if let Some(path) = &self.cloud_file {
            return Ok(load_cloud_csv(path, self.density_band)?);
        }
        let name = self.generator.as_deref().unwrap_or_default();
        let spec = GeneratorSpec {
            kind: name.parse().map_err(|e: String| out_of_range("generator", e))?,
            count: self.generator_count,
            center: self.generator_center,
            extent: self.generator_extent,
            shear: self.generator_shear,
        };
        Ok(generate(&spec, self.seed, self.density_band)?)
    }

    /// The effective config: every default filled in, floats at 17 digits.
    pub fn emit(&self) -> String {
        let mut text = crate::json::to_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        parse_config(text, Path::new("."))
    }

    const MINIMAL: &str = r#"{"mode":"free-surface","generator":"uniform-block","tau":1,"dt":0.01}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.cap, Some(3.0));
        assert_eq!(c.grid, [32, 32]);
        assert_eq!(c.stepper, "exact-rotation");
        assert_eq!(c.schema_version, CONFIG_SCHEMA);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse(r#"{"mode":"free-surface","generator":"uniform-block","tau":1,"dt":0.01,"viscosity":0.1}"#)
            .unwrap_err();
        assert_eq!(err.key(), Some("viscosity"));
        assert!(err.to_string().contains("viscosity"));
    }

    #[test]
    fn cap_too_low() {
        let err = parse(r#"{"mode":"free-surface","cap":1.0,"generator":"uniform-block","tau":1,"dt":0.01}"#)
            .unwrap_err();
        assert_eq!(err.key(), Some("cap"));
        assert!(err.to_string().contains("cap too low"));
    }

    #[test]
    fn out_of_range_values_name_their_key() {
        for (patch, key) in [
            (r#""dt":-1"#, "dt"),
            (r#""mass_tolerance":0"#, "mass_tolerance"),
            (r#""stepper":"euler""#, "stepper"),
            (r#""grid":[0,4]"#, "grid"),
            (r#""cost":"compressible","kappa":0.5"#, "kappa"),
            (r#""snapshot_cadence":0"#, "snapshot_cadence"),
        ] {
            let text = MINIMAL.replace(r#""dt":0.01"#, &format!(r#""dt":0.01,{patch}"#));
            let text = if key == "dt" { text.replace(r#""dt":0.01,"#, "") } else { text };
            let err = parse(&text).unwrap_err();
            assert_eq!(err.key(), Some(key), "{text}: {err}");
        }
    }

    #[test]
    fn missing_required_key_is_named() {
        let err = parse(r#"{"mode":"rigid-lid","generator":"two-blob","dt":0.01}"#).unwrap_err();
        assert_eq!(err.key(), Some("tau"));
    }

    #[test]
    fn missing_cloud_file_is_rejected() {
        let err = parse(r#"{"mode":"rigid-lid","cloud_file":"no/such.csv","tau":1,"dt":0.01}"#).unwrap_err();
        assert_eq!(err.key(), Some("cloud_file"));
    }

    #[test]
    fn effective_config_round_trips() {
        let c = parse(r#"{"mode":"rigid-lid","footprint":[2,0.5],"generator":"two-blob","tau":0.3,"dt":0.1,"seed":9}"#)
            .unwrap();
        let text = c.emit();
        assert!(text.starts_with("{\n  \"schema_version\": \"geodual.config/1\""));
        assert_eq!(parse(&text).unwrap(), c);
    }
}
