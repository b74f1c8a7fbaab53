//! Closed-form propagation and scattering formulas.

mod budget;
mod diffraction;
mod material;
mod radar;
mod reflection;

pub use budget::{human_power_budget, PowerBudget};
pub use diffraction::{
    fresnel_integrals, fresnel_parameter, knife_edge_attenuation, knife_edge_diffraction, EdgeGeometry,
};
pub use material::{fresnel_rta, material_presets, Material, Rta};
pub use radar::{
    bistatic_radar, coherent_interference, Interference, LinkBudgetInput, LinkBudgetReport, QuotedLinkFigures,
};
pub use reflection::{fresnel_normal_power, gauss_legendre, oblique_reflectance, spatial_avg_reflection};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;

/// Thermal noise floor at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

pub fn wavelength(freq_hz: f64) -> f64 {
    C0 / freq_hz
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Free-space path loss `20 log10(4 pi d f / c)` in dB.
pub fn path_loss_db(d: f64, f: f64) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Domain(format!("frequency must be positive, got {f}")));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * d * f / C0).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_loss_one_metre_at_2g4() {
        let pl = path_loss_db(1.0, 2.4e9).unwrap();
        assert!((pl - 40.05).abs() < 0.005, "{pl}");
    }

    #[test]
    fn path_loss_doubling_and_decade() {
        let a = path_loss_db(1.7, 5.0e9).unwrap();
        let b = path_loss_db(3.4, 5.0e9).unwrap();
        assert!((b - a - 20.0 * 2f64.log10()).abs() < 1e-12);
        let c = path_loss_db(17.0, 5.0e9).unwrap();
        assert!((c - a - 20.0).abs() < 1e-12);
    }

    #[test]
    fn path_loss_rejects_bad_inputs() {
        assert!(path_loss_db(0.0, 1e9).is_err());
        assert!(path_loss_db(1.0, -1.0).is_err());
        assert!(path_loss_db(f64::NAN, 1e9).is_err());
    }

    #[test]
    fn dbm_round_trip() {
        for dbm in [-150.0, -62.0, 0.0, 20.0] {
            assert!((watts_to_dbm(dbm_to_watts(dbm)) - dbm).abs() < 1e-12);
        }
        assert!((watts_to_dbm(0.1) - 20.0).abs() < 1e-12);
    }
}
