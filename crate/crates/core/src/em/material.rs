use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{PowerBudget, C0};
use crate::error::{Error, Result};

const PRESETS_JSON: &str = include_str!("../../data/materials.json");

/// Electromagnetic description of a slab or scatterer.
///
/// Permittivity is `eps_real - j * eps_imag`. `thickness_m` is the depth a
/// transmitted wave travels through the body and sets the bulk absorption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub eps_real: f64,
    #[serde(default)]
    pub eps_imag: f64,
    #[serde(default = "unit")]
    pub mu_rel: f64,
    #[serde(default)]
    pub thickness_m: f64,
    /// Scattering split used when this material stands in for the human body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter_budget: Option<PowerBudget>,
}

fn unit() -> f64 {
    1.0
}

/// Power reflectance, transmittance and absorptance of one slab.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rta {
    pub reflect: f64,
    pub transmit: f64,
    pub absorb: f64,
}

impl Material {
    pub fn new(name: &str, eps_real: f64, eps_imag: f64, mu_rel: f64, thickness_m: f64) -> Result<Self> {
        let m = Material {
            name: name.to_string(),
            eps_real,
            eps_imag,
            mu_rel,
            thickness_m,
            scatter_budget: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.eps_real, self.eps_imag, self.mu_rel, self.thickness_m]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain(format!("material '{}' has non-finite fields", self.name)));
        }
        if self.eps_real < 1.0 {
            return Err(Error::Domain(format!(
                "material '{}': eps_real {} < 1",
                self.name, self.eps_real
            )));
        }
        if self.eps_imag < 0.0 {
            return Err(Error::Domain(format!("material '{}': eps_imag < 0", self.name)));
        }
        if self.mu_rel <= 0.0 {
            return Err(Error::Domain(format!("material '{}': mu_rel <= 0", self.name)));
        }
        if self.thickness_m < 0.0 {
            return Err(Error::Domain(format!("material '{}': negative thickness", self.name)));
        }
        if let Some(b) = &self.scatter_budget {
            b.validate()?;
        }
        Ok(())
    }

    pub fn permittivity(&self) -> Complex64 {
        Complex64::new(self.eps_real, -self.eps_imag)
    }

    /// Wave impedance relative to free space, `sqrt(mu / eps)`.
    pub fn relative_impedance(&self) -> Complex64 {
        (Complex64::new(self.mu_rel, 0.0) / self.permittivity()).sqrt()
    }

    /// Field attenuation constant in Np/m at `freq_hz`.
    pub fn attenuation_np_per_m(&self, freq_hz: f64) -> f64 {
        let k0 = 2.0 * std::f64::consts::PI * freq_hz / C0;
        let n = (self.permittivity() * self.mu_rel).sqrt();
        // principal root of eps' - j eps'' has a non-positive imaginary part
        k0 * (-n.im).max(0.0)
    }

    pub fn preset(name: &str) -> Result<Material> {
        material_presets()
            .iter()
            .find(|m| m.name == name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown material preset '{name}'")))
    }
}

/// Presets shipped with the crate: air, concrete, metal, human, and a few
/// furniture materials.
pub fn material_presets() -> &'static [Material] {
    static PRESETS: OnceLock<Vec<Material>> = OnceLock::new();
    PRESETS.get_or_init(|| {
        let list: Vec<Material> = serde_json::from_str(PRESETS_JSON).expect("bundled material presets parse");
        for m in &list {
            m.validate().expect("bundled material presets are valid");
        }
        list
    })
}

/// Interface reflectance from the impedance contrast, bulk transmission
/// through `thickness_m` of lossy medium, absorption as the remainder.
pub fn fresnel_rta(mat: &Material, freq_hz: f64) -> Result<Rta> {
    mat.validate()?;
    if !(freq_hz > 0.0 && freq_hz.is_finite()) {
        return Err(Error::Domain(format!("frequency must be positive, got {freq_hz}")));
    }
    let eta0 = Complex64::new(1.0, 0.0);
    let z = mat.relative_impedance();
    let reflect = ((z - eta0) / (z + eta0)).norm_sqr().clamp(0.0, 1.0);
    let alpha = mat.attenuation_np_per_m(freq_hz);
    let transmit = (1.0 - reflect) * (-2.0 * alpha * mat.thickness_m).exp();
    Ok(Rta {
        reflect,
        transmit,
        absorb: 1.0 - reflect - transmit,
    })
}
