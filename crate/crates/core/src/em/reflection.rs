use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Power reflection coefficient at normal incidence, `|(sqrt(er)-1)/(sqrt(er)+1)|^2`.
pub fn fresnel_normal_power(eps_real: f64) -> Result<f64> {
    if !(eps_real >= 1.0 && eps_real.is_finite()) {
        return Err(Error::Domain(format!("eps_real must be >= 1, got {eps_real}")));
    }
    let n = eps_real.sqrt();
    Ok(((n - 1.0) / (n + 1.0)).powi(2))
}

/// Parallel and perpendicular power reflectances for a wave arriving from
/// air at angle `theta_i` onto a half-space of relative permittivity `eps_real`.
pub fn oblique_reflectance(eps_real: f64, theta_i: f64) -> (f64, f64) {
    let n1 = 1.0;
    let n2 = eps_real.sqrt();
    let (sin_i, cos_i) = theta_i.sin_cos();
    let sin_t = n1 * sin_i / n2;
    let cos_t = (1.0 - sin_t * sin_t).max(0.0).sqrt();
    let par = (n2 * cos_i - n1 * cos_t) / (n2 * cos_i + n1 * cos_t);
    let perp = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t);
    (par * par, perp * perp)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const PANEL_ORDER: usize = 8;

fn composite_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, n_points: usize) -> f64 {
    let (x, w) = gauss_legendre(PANEL_ORDER);
    let panels = n_points.div_ceil(PANEL_ORDER).max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + 0.5 * h * xi)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// `(1/pi) * int_0^{pi/2} Gamma_avg(theta) cos(theta) dtheta` with the
/// unpolarised reflectance, by composite Gauss-Legendre quadrature.
///
/// The result is refined with twice the points; a difference above 1e-6
/// is reported as non-convergence.
pub fn spatial_avg_reflection(eps_real: f64, n_quad: usize) -> Result<f64> {
    fresnel_normal_power(eps_real)?;
    if n_quad < 16 {
        return Err(Error::Domain(format!("n_quad must be >= 16, got {n_quad}")));
    }
    if eps_real == 1.0 {
        return Ok(0.0);
    }
    let integrand = |t: f64| {
        let (par, perp) = oblique_reflectance(eps_real, t);
        0.5 * (par + perp) * t.cos()
    };
    let coarse = composite_gl(integrand, 0.0, FRAC_PI_2, n_quad) / PI;
    let fine = composite_gl(integrand, 0.0, FRAC_PI_2, 2 * n_quad) / PI;
    if (fine - coarse).abs() > 1e-6 {
        return Err(Error::Numeric(format!(
            "spatial average did not converge: {coarse} vs {fine} with {n_quad} points"
        )));
    }
    Ok(fine)
}
