use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the body mode count. Per-mode depths and coverages are not
/// measured quantities; their default spreads are calibrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeParams {
    pub radius_m: f64,
    pub height_m: f64,
    pub wavelength_m: f64,
    /// Surviving amplitude per unit depth.
    pub absorption_base: f64,
    pub absorption_eps: f64,
    /// Mode `k` of `K_max` sits at depth `ceil(k * depth_levels / K_max)`.
    pub depth_levels: usize,
    /// Coverage fraction of the first surviving mode; later ones fall off linearly.
    pub coverage_peak: f64,
    pub coverage_threshold: f64,
    pub phase_variance: f64,
}

impl Default for ModeParams {
    fn default() -> Self {
        ModeParams {
            radius_m: 0.24867,
            height_m: 1.6875,
            wavelength_m: 0.125,
            absorption_base: 0.3,
            absorption_eps: 0.01,
            depth_levels: 30,
            coverage_peak: 0.148,
            coverage_threshold: 0.1,
            phase_variance: 16.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReductionTrace {
    pub k_max: usize,
    pub k1: usize,
    pub k2: usize,
    pub k_eff: usize,
    /// `K2 / sqrt(Var / 2 pi)` before rounding.
    pub k_eff_exact: f64,
    pub params: ModeParams,
    pub calibration: String,
}

impl ModeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radius_m", self.radius_m),
            ("height_m", self.height_m),
            ("wavelength_m", self.wavelength_m),
            ("absorption_eps", self.absorption_eps),
            ("coverage_peak", self.coverage_peak),
            ("coverage_threshold", self.coverage_threshold),
            ("phase_variance", self.phase_variance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.absorption_base > 0.0 && self.absorption_base < 1.0) {
            return Err(Error::Domain("absorption_base must lie in (0, 1)".into()));
        }
        if self.depth_levels == 0 {
            return Err(Error::Domain("depth_levels must be at least 1".into()));
        }
        Ok(())
    }
}

fn half_waves(len: f64, wavelength: f64) -> usize {
    (len / (wavelength / 2.0)).ceil() as usize
}

pub fn mode_reduction(p: &ModeParams) -> Result<ModeReductionTrace> {
    p.validate()?;
    let around = half_waves(std::f64::consts::TAU * p.radius_m, p.wavelength_m);
    let along = half_waves(p.height_m, p.wavelength_m);
    let k_max = around * along;
    let k1 = (1..=k_max)
        .map(|k| (k * p.depth_levels).div_ceil(k_max))
        .filter(|&n| p.absorption_base.powi(n as i32) > p.absorption_eps)
        .count();
    let k2 = (0..k1)
        .map(|j| p.coverage_peak * (1.0 - j as f64 / k1 as f64))
        .filter(|&b| b > p.coverage_threshold)
        .count();
    let k_eff_exact = k2 as f64 / (p.phase_variance / std::f64::consts::TAU).sqrt();
    let k_eff = k_eff_exact.round() as usize;
    if !(k_max >= k1 && k1 >= k2 && k2 >= k_eff && k_eff >= 1) {
        return Err(Error::Domain(format!(
            "mode counts are not a decreasing chain: {k_max} -> {k1} -> {k2} -> {k_eff}"
        )));
    }
    Ok(ModeReductionTrace {
        k_max,
        k1,
        k2,
        k_eff,
        k_eff_exact,
        params: *p,
        calibration: format!(
            "depth of mode k = ceil(k*{}/K_max); coverage of j-th survivor = {}*(1-j/K1)",
            p.depth_levels, p.coverage_peak
        ),
    })
}
