use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fresnel integrals `C(x) = int_0^x cos(pi t^2 / 2) dt`, `S(x)` likewise with sin.
pub fn fresnel_integrals(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-16;
    const MAXIT: usize = 200;
    const FPMIN: f64 = 1e-300;
    const XMIN: f64 = 1.5;

    let ax = x.abs();
    let (c, s) = if ax < FPMIN.sqrt() {
        (ax, 0.0)
    } else if ax <= XMIN {
        // power series, alternating between the cosine and sine sums
        let fact = FRAC_PI_2 * ax * ax;
        let (mut sum, mut sums, mut sumc) = (0.0, 0.0, ax);
        let mut sign = 1.0;
        let mut odd = true;
        let mut term = ax;
        let mut n = 3.0;
        for k in 1..=MAXIT {
            term *= fact / k as f64;
            sum += sign * term / n;
            let test = sum.abs() * EPS;
            if odd {
                sign = -sign;
                sums = sum;
                sum = sumc;
            } else {
                sumc = sum;
                sum = sums;
            }
            if term < test {
                break;
            }
            odd = !odd;
            n += 2.0;
        }
        (sumc, sums)
    } else {
        // continued fraction for the complementary error function
        let pix2 = PI * ax * ax;
        let mut b = Complex64::new(1.0, -pix2);
        let mut cc = Complex64::new(1.0 / FPMIN, 0.0);
        let mut d = b.inv();
        let mut h = d;
        let mut n = -1.0;
        for _ in 2..=MAXIT {
            n += 2.0;
            let a = -n * (n + 1.0);
            b += Complex64::new(4.0, 0.0);
            d = (d * a + b).inv();
            cc = b + cc.inv() * a;
            let del = cc * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < EPS {
                break;
            }
        }
        h *= Complex64::new(ax, -ax);
        let phase = Complex64::new((0.5 * pix2).cos(), (0.5 * pix2).sin());
        let cs = Complex64::new(0.5, 0.5) * (Complex64::new(1.0, 0.0) - phase * h);
        (cs.re, cs.im)
    };
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

/// Fresnel-Kirchhoff parameter for an edge `h` metres into the path
/// (negative `h` means clearance).
pub fn fresnel_parameter(h: f64, d1: f64, d2: f64, wavelength: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0 && wavelength > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!(
            "knife edge needs positive legs and wavelength (d1={d1}, d2={d2}, lambda={wavelength})"
        )));
    }
    Ok(h * (2.0 * (d1 + d2) / (wavelength * d1 * d2)).sqrt())
}

/// First maximum of the clear-side ripple; below it the ratio is held at 1.
const V_RIPPLE_PEAK: f64 = -1.2172;

/// Field ratio behind a single knife edge, clamped to a monotone envelope
/// so clear paths are never amplified.
pub fn knife_edge_attenuation(v: f64) -> f64 {
    if v <= V_RIPPLE_PEAK {
        return 1.0;
    }
    let (c, s) = fresnel_integrals(v);
    let tail = Complex64::new(0.5 - c, -(0.5 - s));
    let f = (Complex64::new(1.0, 1.0) * 0.5 * tail).norm();
    f.min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeGeometry {
    pub d1: f64,
    pub d2: f64,
    /// Height of the edge above the line of sight; positive obstructs.
    pub h: f64,
    pub wavelength: f64,
}

impl EdgeGeometry {
    /// Builds the geometry from endpoints and the diffracting point. The
    /// edge sits `|h|` from the TX-RX line; `obstructing` fixes the sign.
    pub fn from_points(tx: [f64; 3], rx: [f64; 3], edge: [f64; 3], obstructing: bool, wavelength: f64) -> Result<Self> {
        let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let axis = sub(rx, tx);
        let len2 = dot(axis, axis);
        if !(len2 > 1e-18) {
            return Err(Error::Domain("knife edge endpoints coincide".into()));
        }
        let rel = sub(edge, tx);
        let t = dot(rel, axis) / len2;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Domain("edge does not lie between the endpoints".into()));
        }
        let len = len2.sqrt();
        let foot = [tx[0] + t * axis[0], tx[1] + t * axis[1], tx[2] + t * axis[2]];
        let off = sub(edge, foot);
        let h = dot(off, off).sqrt();
        let d1 = t * len;
        let d2 = (1.0 - t) * len;
        if d1 < 1e-9 || d2 < 1e-9 {
            return Err(Error::Domain("zero-length knife edge leg".into()));
        }
        Ok(EdgeGeometry {
            d1,
            d2,
            h: if obstructing { h } else { -h },
            wavelength,
        })
    }
}

pub fn knife_edge_diffraction(geom: &EdgeGeometry) -> Result<f64> {
    let v = fresnel_parameter(geom.h, geom.d1, geom.d2, geom.wavelength)?;
    Ok(knife_edge_attenuation(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresnel_limits() {
        let (c, s) = fresnel_integrals(0.0);
        assert_eq!((c, s), (0.0, 0.0));
        let (c, s) = fresnel_integrals(200.0);
        assert!((c - 0.5).abs() < 2e-3 && (s - 0.5).abs() < 2e-3);
        let (c1, s1) = fresnel_integrals(-0.7);
        let (c2, s2) = fresnel_integrals(0.7);
        assert_eq!((c1, s1), (-c2, -s2));
    }

    #[test]
    fn series_and_fraction_agree_at_switch() {
        let (a, b) = fresnel_integrals(1.5);
        let (c, d) = fresnel_integrals(1.5 + 1e-12);
        assert!((a - c).abs() < 1e-10 && (b - d).abs() < 1e-10);
    }

    #[test]
    fn grazing_is_half_amplitude() {
        assert!((knife_edge_attenuation(0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clear_path_is_unity_and_monotone() {
        assert_eq!(knife_edge_attenuation(-5.0), 1.0);
        let mut last = 1.0;
        for k in 0..400 {
            let v = -3.0 + k as f64 * 0.02;
            let a = knife_edge_attenuation(v);
            assert!(a <= last + 1e-15 && a > 0.0 && a <= 1.0, "v={v}");
            last = a;
        }
    }

    #[test]
    fn geometry_from_points() {
        let g = EdgeGeometry::from_points([0.0, 0.0, 1.0], [4.0, 0.0, 1.0], [1.0, 0.0, 1.5], true, 0.125).unwrap();
        assert!((g.d1 - 1.0).abs() < 1e-12 && (g.d2 - 3.0).abs() < 1e-12 && (g.h - 0.5).abs() < 1e-12);
        assert!(EdgeGeometry::from_points([0.0; 3], [0.0; 3], [1.0, 0.0, 0.0], true, 0.125).is_err());
        assert!(EdgeGeometry::from_points([0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], true, 0.125).is_err());
        let bad = EdgeGeometry {
            d1: 0.0,
            d2: 1.0,
            h: 0.1,
            wavelength: 0.125,
        };
        assert!(knife_edge_diffraction(&bad).is_err());
    }
}
