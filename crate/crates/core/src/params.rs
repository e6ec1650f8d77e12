use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};

/// Oscillator frequency, action scale, quartic coupling and switch-on time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    omega: f64,
    hbar: f64,
    lambda: f64,
    t0: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { omega: 1.0, hbar: 1.0, lambda: 0.0, t0: 0.0 }
    }
}

impl PhysicalParams {
    pub fn new(omega: f64, hbar: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(argument(format!("omega must be positive, got {omega}")));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(argument(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { omega, hbar, ..Self::default() })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(argument(format!("lambda must be non-negative, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// Coupling given in units of omega^3 / hbar.
    pub fn with_lambda_rel(self, rel: f64) -> Result<Self> {
        let scale = self.omega.powi(3) / self.hbar;
        self.with_lambda(rel * scale)
    }

    pub fn with_t0(mut self, t0: f64) -> Result<Self> {
        if !t0.is_finite() {
            return Err(argument("t0 must be finite"));
        }
        self.t0 = t0;
        Ok(self)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// hbar / (2 omega), the square of the position-operator scale.
    pub fn propagator_scale(&self) -> f64 {
        self.hbar / (2.0 * self.omega)
    }

    /// Dimensionless coupling lambda hbar / omega^3.
    pub fn coupling_ratio(&self) -> f64 {
        self.lambda * self.hbar / self.omega.powi(3)
    }
}
