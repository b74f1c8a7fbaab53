use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{watts_to_dbm, wavelength, THERMAL_NOISE_DBM_HZ};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBudgetInput {
    pub p_t: f64,
    pub g_t: f64,
    pub g_r: f64,
    pub freq: f64,
    pub sigma_rcs: f64,
    pub d1: f64,
    pub d2: f64,
    pub bandwidth: f64,
    pub impl_loss_db: f64,
}

impl LinkBudgetInput {
    /// 20 dBm transmitter, G = 1.58 both ends, 0.125 m carrier, 0.3 m^2 body
    /// RCS, 5 m legs, 20 MHz noise bandwidth, 6 dB implementation loss.
    pub fn reference() -> Self {
        LinkBudgetInput {
            p_t: 0.1,
            g_t: 1.58,
            g_r: 1.58,
            freq: super::C0 / 0.125,
            sigma_rcs: 0.3,
            d1: 5.0,
            d2: 5.0,
            bandwidth: 20e6,
            impl_loss_db: 6.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_t", self.p_t),
            ("g_t", self.g_t),
            ("g_r", self.g_r),
            ("freq", self.freq),
            ("sigma_rcs", self.sigma_rcs),
            ("d1", self.d1),
            ("d2", self.d2),
            ("bandwidth", self.bandwidth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.impl_loss_db >= 0.0 && self.impl_loss_db.is_finite()) {
            return Err(Error::Domain("impl_loss_db must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBudgetReport {
    pub p_r_watts: f64,
    pub p_r_dbm: f64,
    pub noise_dbm: f64,
    pub snr_db: f64,
    pub snr_effective_db: f64,
}

/// Figures quoted for the reference link alongside which reports print the
/// evaluated numbers. They do not follow from the formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotedLinkFigures {
    pub p_r_dbm: f64,
    pub snr_db: f64,
    pub snr_effective_db: f64,
}

impl QuotedLinkFigures {
    pub const REFERENCE: QuotedLinkFigures = QuotedLinkFigures {
        p_r_dbm: -80.0,
        snr_db: 21.0,
        snr_effective_db: 15.0,
    };
}

pub fn bistatic_radar(input: &LinkBudgetInput) -> Result<LinkBudgetReport> {
    input.validate()?;
    let lambda = wavelength(input.freq);
    let p_r_watts = input.p_t * input.g_t * input.g_r * lambda * lambda * input.sigma_rcs
        / ((4.0 * PI).powi(3) * input.d1 * input.d1 * input.d2 * input.d2);
    let p_r_dbm = watts_to_dbm(p_r_watts);
    let noise_dbm = THERMAL_NOISE_DBM_HZ + 10.0 * input.bandwidth.log10();
    let snr_db = p_r_dbm - noise_dbm;
    Ok(LinkBudgetReport {
        p_r_watts,
        p_r_dbm,
        noise_dbm,
        snr_db,
        snr_effective_db: snr_db - input.impl_loss_db,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interference {
    /// Signed cross term in watts.
    pub delta_w: f64,
    /// `|delta_w|` in dBm; `-inf` when the term vanishes.
    pub magnitude_dbm: f64,
}

/// Cross term `2 sqrt(I_d I_s) cos(phi)` between a direct and a scattered
/// component given in dBm.
pub fn coherent_interference(i_direct_dbm: f64, i_scatter_dbm: f64, phase_rad: f64) -> Result<Interference> {
    if ![i_direct_dbm, i_scatter_dbm, phase_rad].iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("interference inputs must be finite".into()));
    }
    let id = super::dbm_to_watts(i_direct_dbm);
    let is = super::dbm_to_watts(i_scatter_dbm);
    let delta_w = 2.0 * (id * is).sqrt() * phase_rad.cos();
    Ok(Interference {
        delta_w,
        magnitude_dbm: watts_to_dbm(delta_w.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rcs_doubling_adds_3db() {
        let a = bistatic_radar(&LinkBudgetInput::reference()).unwrap();
        let mut inp = LinkBudgetInput::reference();
        inp.sigma_rcs *= 2.0;
        let b = bistatic_radar(&inp).unwrap();
        assert!((b.p_r_dbm - a.p_r_dbm - 10.0 * 2f64.log10()).abs() < 1e-10);
    }

    #[test]
    fn leg_scaling() {
        let far = bistatic_radar(&LinkBudgetInput::reference()).unwrap();
        let mut inp = LinkBudgetInput::reference();
        inp.d1 = 1.0;
        inp.d2 = 1.0;
        let near = bistatic_radar(&inp).unwrap();
        assert!((near.p_r_dbm - far.p_r_dbm - 40.0 * 5f64.log10()).abs() < 1e-10);
    }

    #[test]
    fn reciprocity() {
        let mut inp = LinkBudgetInput::reference();
        inp.d1 = 2.0;
        inp.d2 = 7.5;
        let a = bistatic_radar(&inp).unwrap();
        std::mem::swap(&mut inp.d1, &mut inp.d2);
        let b = bistatic_radar(&inp).unwrap();
        assert_eq!(a.p_r_watts, b.p_r_watts);
    }

    #[test]
    fn rejects_non_positive() {
        let mut inp = LinkBudgetInput::reference();
        inp.d2 = 0.0;
        assert!(bistatic_radar(&inp).is_err());
        let mut inp = LinkBudgetInput::reference();
        inp.impl_loss_db = -1.0;
        assert!(bistatic_radar(&inp).is_err());
    }

    #[test]
    fn interference_examples() {
        let r = coherent_interference(-50.0, -80.0, 0.0).unwrap();
        assert!((r.magnitude_dbm + 62.0).abs() < 0.05, "{}", r.magnitude_dbm);
        let q = coherent_interference(-50.0, -80.0, std::f64::consts::FRAC_PI_2).unwrap();
        assert!(q.delta_w.abs() < 1e-24);
        let peak = (0..64)
            .map(|k| k as f64 * std::f64::consts::PI / 32.0)
            .map(|p| coherent_interference(-50.0, -80.0, p).unwrap().delta_w.abs())
            .fold(0.0, f64::max);
        assert_eq!(peak, r.delta_w.abs());
    }
}
