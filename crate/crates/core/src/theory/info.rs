use crate::em::wavelength;
use crate::error::{Error, Result};

/// Effective measurement count `K * N_pos * (1 - rho)`.
pub fn info_gain(pairs: usize, positions: usize, rho: f64) -> Result<f64> {
    if pairs == 0 || positions == 0 {
        return Err(Error::Domain("antenna pairs and positions must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation must lie in [0, 1), got {rho}")));
    }
    Ok(pairs as f64 * positions as f64 * (1.0 - rho))
}

/// `sin(k dr) / (k dr)` with `k = 2 pi / lambda`.
pub fn spatial_correlation(delta_r: f64, freq_hz: f64) -> Result<f64> {
    if !(delta_r >= 0.0 && delta_r.is_finite()) {
        return Err(Error::Domain(format!("separation must be >= 0, got {delta_r}")));
    }
    if !(freq_hz > 0.0 && freq_hz.is_finite()) {
        return Err(Error::Domain(format!("frequency must be positive, got {freq_hz}")));
    }
    let x = std::f64::consts::TAU / wavelength(freq_hz) * delta_r;
    if x < 1e-4 {
        return Ok(1.0 - x * x / 6.0);
    }
    Ok(x.sin() / x)
}
