use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    /// Exact rotation about a frozen barycenter taken at the midpoint predictor.
    ExactRotation,
    /// Classical fourth-order Runge-Kutta with a weight solve per stage.
    Rk4,
}

/// Step-size control for the weight ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepController {
    pub initial_step: f64,
    /// Sufficient-increase constant of the line search.
    pub armijo: f64,
    /// Number of past dual values the nonmonotone test compares against.
    pub memory: usize,
    pub min_step: f64,
    pub max_step: f64,
    /// Two-point (Barzilai-Borwein) step estimate between iterations.
    pub two_point: bool,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            armijo: 1e-4,
            memory: 8,
            min_step: 1e-14,
            max_step: 1e8,
            two_point: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Convergence threshold on `max_i |V_i - m_i|`, relative to `max_i m_i`.
    pub mass_tolerance: f64,
    pub max_ascent_iterations: usize,
    pub step: StepController,
    pub time_step: f64,
    pub horizon: f64,
    pub stepper: Stepper,
    /// Snapshot every this many steps.
    pub output_cadence: usize,
    /// Radius bound for the flow-horizon warning; `None` means unbounded.
    pub support_bound: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mass_tolerance: 1e-6,
            max_ascent_iterations: 20_000,
            step: StepController::default(),
            time_step: 0.01,
            horizon: 1.0,
            stepper: Stepper::ExactRotation,
            output_cadence: 1,
            support_bound: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} must be positive")))
            }
        };
        positive("mass_tolerance", self.mass_tolerance)?;
        positive("initial_step", self.step.initial_step)?;
        positive("armijo", self.step.armijo)?;
        positive("min_step", self.step.min_step)?;
        positive("max_step", self.step.max_step)?;
        positive("time_step", self.time_step)?;
        if self.max_ascent_iterations == 0 {
            return Err(Error::InvalidConfig("max_ascent_iterations must be >= 1".into()));
        }
        if self.step.memory == 0 {
            return Err(Error::InvalidConfig("step memory must be >= 1".into()));
        }
        if self.output_cadence == 0 {
            return Err(Error::InvalidConfig("output_cadence must be >= 1".into()));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon = {} must be >= 0",
                self.horizon
            )));
        }
        // A zero horizon is a degenerate but valid run with no steps.
        if self.horizon > 0.0 && self.time_step > self.horizon {
            return Err(Error::InvalidConfig(format!(
                "time_step = {} exceeds horizon = {}",
                self.time_step, self.horizon
            )));
        }
        if let Some(b) = self.support_bound {
            positive("support_bound", b)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SolverConfig::default().validate().unwrap();
    }

    #[test]
    fn step_longer_than_horizon() {
        let c = SolverConfig {
            time_step: 2.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = SolverConfig {
            horizon: 0.0,
            ..Default::default()
        };
        c.validate().unwrap();
    }
}
