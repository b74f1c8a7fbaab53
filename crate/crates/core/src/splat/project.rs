use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::gaussian::{rotation_matrix, rotation_matrix_vjp, GaussianPrimitive};
use crate::error::{Error, Result};

/// Pixels per radian on both image axes.
pub const PX_PER_RAD: f64 = 180.0 / std::f64::consts::PI;
/// Added to every projected covariance, px^2.
pub const COV_REG_PX2: f64 = 0.09;
pub const MIN_DEPTH_M: f64 = 1e-6;
/// Gaussians whose support reaches the viewpoint are not drawn.
pub const SUPPORT_SIGMAS: f64 = 3.0;
/// Mean directions closer than this (as `rho / depth`) to the zenith are culled.
const MIN_HORIZONTAL: f64 = 1e-6;

/// Footprint of one Gaussian on the (azimuth, elevation) image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    /// `(azimuth, elevation)` in pixels; azimuth in `[0, 360)`.
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub jacobian: Matrix2x3<f64>,
    pub cov3: Matrix3<f64>,
    /// Footprint amplitude; below 1 only when a beam widens the footprint.
    pub gain: f64,
    pub beam_px2: f64,
}

impl Projected {
    /// Half-extents of the 3-sigma box, in pixels.
    pub fn radii(&self) -> (f64, f64) {
        (3.0 * self.cov[(0, 0)].sqrt(), 3.0 * self.cov[(1, 1)].sqrt())
    }
}

/// Jacobian of `(az, el)` in pixels with respect to the offset from the antenna.
pub fn direction_jacobian(d: &Vector3<f64>) -> Matrix2x3<f64> {
    let (x, y, z) = (d.x, d.y, d.z);
    let rho2 = x * x + y * y;
    let rho = rho2.sqrt();
    let h2 = rho2 + z * z;
    Matrix2x3::new(
        -y / rho2,
        x / rho2,
        0.0,
        -x * z / (rho * h2),
        -y * z / (rho * h2),
        rho / h2,
    ) * PX_PER_RAD
}

/// `sum_ab G_ab dJ_ab/dd` for an upstream gradient `g` on the Jacobian.
pub fn direction_jacobian_vjp(d: &Vector3<f64>, g: &Matrix2x3<f64>) -> Vector3<f64> {
    let (x, y, z) = (d.x, d.y, d.z);
    let rho2 = x * x + y * y;
    let rho = rho2.sqrt();
    let h2 = rho2 + z * z;
    let rho4 = rho2 * rho2;
    let h4 = h2 * h2;
    // azimuth row
    let d00 = [2.0 * x * y / rho4, (y * y - x * x) / rho4, 0.0];
    let d01 = [(y * y - x * x) / rho4, -2.0 * x * y / rho4, 0.0];
    // elevation row: -a z / (rho h^2) for a in {x, y}, then rho / h^2
    let k = z * (h2 + 2.0 * rho2) / (rho * rho2 * h4);
    let base = -z / (rho * h2);
    let d10 = [base + x * x * k, x * y * k, x * (2.0 * z * z - h2) / (rho * h4)];
    let d11 = [x * y * k, base + y * y * k, y * (2.0 * z * z - h2) / (rho * h4)];
    let d12 = [
        x * (h2 - 2.0 * rho2) / (rho * h4),
        y * (h2 - 2.0 * rho2) / (rho * h4),
        -2.0 * rho * z / h4,
    ];
    let mut out = Vector3::zeros();
    for i in 0..3 {
        out[i] = PX_PER_RAD
            * (g[(0, 0)] * d00[i] + g[(0, 1)] * d01[i] + g[(1, 0)] * d10[i] + g[(1, 1)] * d11[i] + g[(1, 2)] * d12[i]);
    }
    out
}

/// Projects `g` onto the hemisphere seen from `rx`. `Ok(None)` means culled.
pub fn project_to_pas(g: &GaussianPrimitive, rx: &[f64; 3], index: usize) -> Result<Option<Projected>> {
    project_with_beam(g, rx, index, 0.0)
}

/// Projection whose footprint is convolved with an isotropic Gaussian beam of
/// variance `beam_px2`, keeping the integrated weight unchanged.
pub fn project_with_beam(
    g: &GaussianPrimitive,
    rx: &[f64; 3],
    index: usize,
    beam_px2: f64,
) -> Result<Option<Projected>> {
    let d = Vector3::from(g.position) - Vector3::from(*rx);
    let depth = d.norm();
    if !(depth >= MIN_DEPTH_M) {
        return Err(Error::DegenerateProjection { index, depth });
    }
    let rho = (d.x * d.x + d.y * d.y).sqrt();
    if d.z < 0.0 || rho / depth < MIN_HORIZONTAL || g.mahalanobis_sq(&d) < SUPPORT_SIGMAS * SUPPORT_SIGMAS {
        return Ok(None);
    }
    let az = d.y.atan2(d.x).rem_euclid(std::f64::consts::TAU) * PX_PER_RAD;
    let az = if az >= 360.0 { az - 360.0 } else { az };
    let el = d.z.atan2(rho) * PX_PER_RAD;
    let j = direction_jacobian(&d);
    let cov3 = g.covariance();
    let sharp = j * cov3 * j.transpose() + Matrix2::identity() * COV_REG_PX2;
    let sharp = 0.5 * (sharp + sharp.transpose());
    let cov = sharp + Matrix2::identity() * beam_px2;
    let det = cov.determinant();
    let conic = Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
    let gain = if beam_px2 > 0.0 {
        (sharp.determinant() / det).sqrt()
    } else {
        1.0
    };
    Ok(Some(Projected {
        mean: Vector2::new(az, el),
        cov,
        conic,
        depth,
        jacobian: j,
        cov3,
        gain,
        beam_px2,
    }))
}

/// Gradients of one Gaussian's footprint pulled back to its 3D parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectionGrad {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
}

/// Chain rule from `d/dmean`, `d/dconic` (entries treated independently) and
/// `d/dgain` back to position, log-scale and quaternion.
pub fn project_backward(
    g: &GaussianPrimitive,
    rx: &[f64; 3],
    p: &Projected,
    d_mean: &Vector2<f64>,
    d_conic: &Matrix2<f64>,
    d_gain: f64,
) -> ProjectionGrad {
    let d = Vector3::from(g.position) - Vector3::from(*rx);
    let c = p.conic;
    let mut d_cov = -(c * d_conic * c);
    if p.beam_px2 > 0.0 {
        let sharp = p.cov - Matrix2::identity() * p.beam_px2;
        let inv = sharp.try_inverse().unwrap_or_else(Matrix2::zeros);
        d_cov += (inv - c) * (0.5 * p.gain * d_gain);
    }
    let d_cov = 0.5 * (d_cov + d_cov.transpose());
    let j = p.jacobian;
    let d_cov3 = j.transpose() * d_cov * j;
    let d_j = 2.0 * d_cov * j * p.cov3;
    let d_pos = j.transpose() * d_mean + direction_jacobian_vjp(&d, &d_j);

    let r = rotation_matrix(&g.rotation);
    let s = Vector3::from(g.scale());
    let m = r * Matrix3::from_diagonal(&s);
    let d_m = 2.0 * d_cov3 * m;
    let mut d_ls = [0.0; 3];
    for (i, v) in d_ls.iter_mut().enumerate() {
        let ds: f64 = (0..3).map(|a| r[(a, i)] * d_m[(a, i)]).sum();
        *v = ds * s[i];
    }
    let d_r = d_m * Matrix3::from_diagonal(&s);
    ProjectionGrad {
        position: [d_pos.x, d_pos.y, d_pos.z],
        log_scale: d_ls,
        rotation: rotation_matrix_vjp(&g.rotation, &d_r),
    }
}
