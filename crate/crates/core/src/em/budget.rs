use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractions of the power intercepted by a scatterer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub specular: f64,
    pub diffuse: f64,
    pub volume: f64,
    pub absorbed: f64,
}

const SUM_TOL: f64 = 1e-12;

impl PowerBudget {
    pub fn new(specular: f64, diffuse: f64, volume: f64, absorbed: f64) -> Result<Self> {
        let b = PowerBudget {
            specular,
            diffuse,
            volume,
            absorbed,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.specular, self.diffuse, self.volume, self.absorbed];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(format!("budget fractions must lie in [0,1]: {parts:?}")));
        }
        let total = self.total();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Domain(format!("budget fractions sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.specular + self.diffuse + self.volume + self.absorbed
    }

    /// Everything that leaves the body again.
    pub fn scattered(&self) -> f64 {
        self.specular + self.diffuse + self.volume
    }
}

impl Default for PowerBudget {
    fn default() -> Self {
        human_power_budget()
    }
}

/// Canonical human-body split: 10% specular, 15% diffuse, 5% volume, 70% absorbed.
pub fn human_power_budget() -> PowerBudget {
    PowerBudget {
        specular: 0.10,
        diffuse: 0.15,
        volume: 0.05,
        absorbed: 0.70,
    }
}
