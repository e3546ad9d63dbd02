use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and numerical parameters of a run.
///
/// Rates are in inverse time units. The total loss rate is always derived as
/// `gamma1 + gamma2` rather than stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Photodetector coupling.
    pub gamma1: f64,
    /// Homodyne coupling.
    pub gamma2: f64,
    /// Detuning relative to the local oscillator.
    pub omega: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Truncation dimension of the Fock space.
    pub dim: usize,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            gamma1: 1.0,
            gamma2: 1.0,
            omega: 0.0,
            dt: 1e-3,
            t_final: 4.0,
            dim: 32,
            seed: 42,
        }
    }
}

impl SimParams {
    pub fn gamma_total(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    /// Decay constant `iω + Γ/2` of the no-count evolution.
    pub fn decay(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(0.5 * self.gamma_total(), self.omega)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite()) {
            return Err(Error::Config(format!("gamma1 must be >= 0, got {}", self.gamma1)));
        }
        if !(self.gamma2 >= 0.0 && self.gamma2.is_finite()) {
            return Err(Error::Config(format!("gamma2 must be >= 0, got {}", self.gamma2)));
        }
        if !self.omega.is_finite() {
            return Err(Error::Config("omega must be finite".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be > 0, got {}", self.t_final)));
        }
        if self.dim < 2 {
            return Err(Error::Config(format!("dimension must be >= 2, got {}", self.dim)));
        }
        Ok(())
    }
}
