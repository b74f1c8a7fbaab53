use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One anisotropic 3D Gaussian. Scales are stored as logarithms and the
/// attenuation factor as a logit so both stay in range under optimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrimitive {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    /// `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub delta_logit: f64,
    pub radiance_base: f64,
}

impl GaussianPrimitive {
    pub fn isotropic(position: [f64; 3], scale: f64, delta: f64, radiance: f64) -> Self {
        GaussianPrimitive {
            position,
            log_scale: [scale.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            delta_logit: logit(delta.clamp(1e-12, 1.0 - 1e-12)),
            radiance_base: radiance,
        }
    }

    pub fn delta(&self) -> f64 {
        sigmoid(self.delta_logit)
    }

    pub fn scale(&self) -> [f64; 3] {
        self.log_scale.map(f64::exp)
    }

    /// Squared Mahalanobis length of an offset from the mean.
    pub fn mahalanobis_sq(&self, offset: &Vector3<f64>) -> f64 {
        let local = rotation_matrix(&self.rotation).transpose() * offset;
        let s = self.scale();
        (0..3).map(|i| (local[i] / s[i]).powi(2)).sum()
    }

    /// Flattened parameters in a fixed order: position, log-scale,
    /// rotation, delta-logit, radiance.
    pub fn to_array(&self) -> [f64; PARAMS_PER_GAUSSIAN] {
        let mut a = [0.0; PARAMS_PER_GAUSSIAN];
        a[0..3].copy_from_slice(&self.position);
        a[3..6].copy_from_slice(&self.log_scale);
        a[6..10].copy_from_slice(&self.rotation);
        a[10] = self.delta_logit;
        a[11] = self.radiance_base;
        a
    }

    pub fn from_array(a: &[f64; PARAMS_PER_GAUSSIAN]) -> Self {
        GaussianPrimitive {
            position: [a[0], a[1], a[2]],
            log_scale: [a[3], a[4], a[5]],
            rotation: [a[6], a[7], a[8], a[9]],
            delta_logit: a[10],
            radiance_base: a[11],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn normalize_rotation(&mut self) {
        let n = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 && n.is_finite() {
            self.rotation = self.rotation.map(|v| v / n);
        } else {
            self.rotation = [1.0, 0.0, 0.0, 0.0];
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::Numeric("gaussian has a non-finite parameter".into()));
        }
        let n = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("rotation quaternion has norm {n}")));
        }
        if self.radiance_base < 0.0 {
            return Err(Error::Contract("radiance_base must be >= 0".into()));
        }
        Ok(())
    }

    /// World-space covariance `R diag(s^2) R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = rotation_matrix(&self.rotation);
        let s = Vector3::from(self.scale());
        let m = r * Matrix3::from_diagonal(&s);
        m * m.transpose()
    }
}

pub const PARAMS_PER_GAUSSIAN: usize = 12;

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn rotation_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back to the raw quaternion,
/// including the normalization.
pub fn rotation_matrix_vjp(q: &[f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let dw = 2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]);
    let dx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let dy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)] - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let dz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    let dr = [dw, dx, dy, dz];
    let r = [w, x, y, z];
    let proj: f64 = dr.iter().zip(&r).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|i| (dr[i] - r[i] * proj) / n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetTag {
    Background,
    Human,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSet {
    pub tag: SetTag,
    pub frozen: bool,
    pub gaussians: Vec<GaussianPrimitive>,
}

impl GaussianSet {
    pub fn new(tag: SetTag, gaussians: Vec<GaussianPrimitive>) -> Self {
        GaussianSet {
            tag,
            frozen: false,
            gaussians,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Applies `f` to every Gaussian unless the set is frozen.
    pub fn update(&mut self, f: impl FnMut(usize, &mut GaussianPrimitive)) -> Result<()> {
        if self.frozen {
            return Err(Error::Contract(format!("{:?} set is frozen", self.tag)));
        }
        self.gaussians.iter_mut().enumerate().for_each({
            let mut f = f;
            move |(i, g)| f(i, g)
        });
        Ok(())
    }
}
