use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Scene, V3};
use crate::em::{dbm_to_watts, knife_edge_diffraction, path_loss_db, EdgeGeometry};
use crate::error::{Error, Result};

/// Contributions weaker than this are dropped.
pub const POWER_FLOOR_DBM: f64 = -150.0;

/// Exponent of the glossy lobe around the mirror direction on the body.
const SPECULAR_LOBE_EXP: i32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Direct,
    Reflect1,
    Reflect2,
    HumanScatter,
    Diffract,
}

/// One propagation path. Elevation is the physical arrival elevation and
/// may be negative for paths arriving from below the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathContribution {
    pub kind: PathKind,
    pub power_w: f64,
    pub arrival_az_deg: f64,
    pub arrival_el_deg: f64,
    pub total_length_m: f64,
}

/// Arrival direction at `from` of a wave coming from `to`.
pub fn direction_angles(from: &V3, to: &V3) -> (f64, f64) {
    let d = to - from;
    let az = d.y.atan2(d.x).to_degrees().rem_euclid(360.0);
    let az = if az >= 360.0 { 0.0 } else { az };
    let el = (d.z / d.norm()).clamp(-1.0, 1.0).asin().to_degrees();
    (az, el)
}

struct Tracer<'a> {
    scene: &'a Scene,
    human: Option<V3>,
    floor_w: f64,
    p_tx_w: f64,
}

impl<'a> Tracer<'a> {
    /// Power transmission along a segment through every crossed slab and the body.
    fn segment_transmission(&self, a: &V3, b: &V3, skip: &[usize]) -> f64 {
        let mut t = 1.0;
        for (k, s) in self.scene.slabs.iter().enumerate() {
            if skip.contains(&k) {
                continue;
            }
            if crosses_slab(a, b, s) {
                t *= s.rta.transmit;
                if t == 0.0 {
                    return 0.0;
                }
            }
        }
        if let Some(h) = self.human {
            if segment_hits_ellipsoid(a, b, &h, &self.scene.human_axes()) {
                t *= self.scene.human_rta.transmit;
            }
        }
        t
    }

    fn free_space(&self, length: f64) -> Result<f64> {
        Ok(self.p_tx_w * 10f64.powf(-path_loss_db(length, self.scene.freq())? / 10.0))
    }

    fn push(&self, out: &mut Vec<PathContribution>, kind: PathKind, power_w: f64, rx: &V3, toward: &V3, length: f64) {
        if !(power_w >= self.floor_w) || !power_w.is_finite() {
            return;
        }
        let (az, el) = direction_angles(rx, toward);
        out.push(PathContribution {
            kind,
            power_w,
            arrival_az_deg: az,
            arrival_el_deg: el,
            total_length_m: length,
        });
    }
}

fn crosses_slab(a: &V3, b: &V3, s: &super::Slab) -> bool {
    let da = a[s.axis] - s.offset;
    let db = b[s.axis] - s.offset;
    if da * db >= 0.0 {
        return false;
    }
    let t = da / (da - db);
    if !(t > 1e-9 && t < 1.0 - 1e-9) {
        return false;
    }
    s.contains_in_plane(&(a + (b - a) * t))
}

/// Intersection of segment `a -> b` with the slab plane, if it lies inside the rectangle.
fn plane_hit(a: &V3, b: &V3, s: &super::Slab) -> Option<V3> {
    let da = a[s.axis] - s.offset;
    let db = b[s.axis] - s.offset;
    if da * db >= 0.0 {
        return None;
    }
    let t = da / (da - db);
    let p = a + (b - a) * t;
    s.contains_in_plane(&p).then_some(p)
}

pub(crate) fn segment_hits_ellipsoid(a: &V3, b: &V3, c: &V3, axes: &V3) -> bool {
    let pa = (a - c).component_div(axes);
    let d = (b - a).component_div(axes);
    let qa = d.dot(&d);
    let qb = 2.0 * pa.dot(&d);
    let qc = pa.dot(&pa) - 1.0;
    if qc <= 0.0 {
        return true;
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 || qa == 0.0 {
        return false;
    }
    let sq = disc.sqrt();
    let t0 = (-qb - sq) / (2.0 * qa);
    let t1 = (-qb + sq) / (2.0 * qa);
    t1 > 0.0 && t0 < 1.0
}

/// Silhouette area of an ellipsoid with semi-axes `axes` seen along unit `u`.
pub fn projected_area(axes: &V3, u: &V3) -> f64 {
    let (a, b, c) = (axes.x, axes.y, axes.z);
    PI * ((b * c * u.x).powi(2) + (a * c * u.y).powi(2) + (a * b * u.z).powi(2)).sqrt()
}

fn ellipsoid_normal(c: &V3, axes: &V3, p: &V3) -> V3 {
    (p - c).component_div(&axes.component_mul(axes)).normalize()
}

/// First point where the ray from `from` toward the centre enters the ellipsoid.
fn entry_point(from: &V3, c: &V3, axes: &V3) -> V3 {
    let pa = (from - c).component_div(axes);
    let d = (c - from).component_div(axes);
    let qa = d.dot(&d);
    let qb = 2.0 * pa.dot(&d);
    let qc = pa.dot(&pa) - 1.0;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
    let t = ((-qb - disc.sqrt()) / (2.0 * qa)).clamp(0.0, 1.0);
    from + (c - from) * t
}

/// Counter-based seed so each (rx, human) sample draws an independent stream.
pub fn sample_seed(scene_seed: u64, rx_index: usize, human_index: Option<usize>) -> u64 {
    let h = human_index.map(|h| h as u64 + 1).unwrap_or(0);
    let mut x = scene_seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [rx_index as u64, h] {
        x = x.wrapping_add(v).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^= x >> 31;
        x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 29;
    }
    x
}

/// All propagation paths from the source to the viewpoint of `rx_index`,
/// with the human at `human_index` if given.
pub fn trace_paths(scene: &Scene, rx_index: usize, human_index: Option<usize>) -> Result<Vec<PathContribution>> {
    if rx_index >= scene.rx.len() {
        return Err(Error::Contract(format!("rx index {rx_index} out of range")));
    }
    let human = match human_index {
        Some(h) if h >= scene.humans.len() => return Err(Error::Contract(format!("human index {h} out of range"))),
        Some(h) => Some(scene.humans[h]),
        None => None,
    };
    let ep = scene.endpoints(rx_index);
    let (tx, rx) = (ep.source, ep.viewpoint);
    let tracer = Tracer {
        scene,
        human,
        floor_w: dbm_to_watts(POWER_FLOOR_DBM),
        p_tx_w: dbm_to_watts(scene.tx_power_dbm),
    };
    let mut out = Vec::new();
    let d = (rx - tx).norm();
    if d < 1e-9 {
        return Ok(out);
    }

    // direct
    let t_direct = tracer.segment_transmission(&tx, &rx, &[]);
    tracer.push(
        &mut out,
        PathKind::Direct,
        tracer.free_space(d)? * t_direct,
        &rx,
        &tx,
        d,
    );

    // first-order image sources
    for (i, s) in scene.slabs.iter().enumerate() {
        let img = s.mirror(&tx);
        let Some(q) = plane_hit(&img, &rx, s) else { continue };
        let len = (rx - img).norm();
        let t = tracer.segment_transmission(&tx, &q, &[i]) * tracer.segment_transmission(&q, &rx, &[i]);
        let p = tracer.free_space(len)? * s.rta.reflect * t;
        tracer.push(&mut out, PathKind::Reflect1, p, &rx, &q, len);
    }

    // second-order image sources
    for (i, s1) in scene.slabs.iter().enumerate() {
        let img1 = s1.mirror(&tx);
        for (j, s2) in scene.slabs.iter().enumerate() {
            if i == j {
                continue;
            }
            let img2 = s2.mirror(&img1);
            let Some(q2) = plane_hit(&img2, &rx, s2) else { continue };
            let Some(q1) = plane_hit(&img1, &q2, s1) else { continue };
            let len = (rx - img2).norm();
            let t = tracer.segment_transmission(&tx, &q1, &[i])
                * tracer.segment_transmission(&q1, &q2, &[i, j])
                * tracer.segment_transmission(&q2, &rx, &[j]);
            let p = tracer.free_space(len)? * s1.rta.reflect * s2.rta.reflect * t;
            tracer.push(&mut out, PathKind::Reflect2, p, &rx, &q2, len);
        }
    }

    // knife edges over the tops of vertical slabs blocking the direct path
    let room_top = scene.room.z;
    for (k, s) in scene.slabs.iter().enumerate() {
        if !s.is_vertical() || s.span_v[1] >= room_top - 1e-6 || !crosses_slab(&tx, &rx, s) {
            continue;
        }
        let edge_at = |u: f64| {
            let mut p = V3::zeros();
            p[s.axis] = s.offset;
            p[s.u] = u;
            p[s.v] = s.span_v[1];
            p
        };
        let len_at = |u: f64| (edge_at(u) - tx).norm() + (rx - edge_at(u)).norm();
        let (mut lo, mut hi) = (s.span_u[0], s.span_u[1]);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if len_at(a) < len_at(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let e = edge_at(0.5 * (lo + hi));
        let Ok(geom) = EdgeGeometry::from_points(tx.into(), rx.into(), e.into(), true, scene.wavelength()) else {
            continue;
        };
        let f = knife_edge_diffraction(&geom)?;
        let len = (e - tx).norm() + (rx - e).norm();
        let t = tracer.segment_transmission(&tx, &e, &[k]) * tracer.segment_transmission(&e, &rx, &[k]);
        let p = tracer.free_space(len)? * f * f * t;
        tracer.push(&mut out, PathKind::Diffract, p, &rx, &e, len);
    }

    if let Some(c) = human {
        human_scatter(&tracer, &mut out, &tx, &rx, &c, rx_index, human_index)?;
    }
    Ok(out)
}

fn human_scatter(
    tracer: &Tracer,
    out: &mut Vec<PathContribution>,
    tx: &V3,
    rx: &V3,
    c: &V3,
    rx_index: usize,
    human_index: Option<usize>,
) -> Result<()> {
    let scene = tracer.scene;
    let axes = scene.human_axes();
    let budget = scene.human_budget;
    let lambda = scene.wavelength();
    let aperture = lambda * lambda / (4.0 * PI);

    let d1 = (c - tx).norm();
    if d1 < 1e-9 || (rx - c).norm() < 1e-9 {
        return Ok(());
    }
    // slabs only: the body does not shadow its own illumination
    let slab_t = |a: &V3, b: &V3| {
        let mut t = 1.0;
        for s in &scene.slabs {
            if crosses_slab(a, b, s) {
                t *= s.rta.transmit;
            }
        }
        t
    };
    let u_in = (c - tx) / d1;
    let p_int = tracer.p_tx_w / (4.0 * PI * d1 * d1) * slab_t(tx, c) * projected_area(&axes, &u_in);
    if p_int <= 0.0 {
        return Ok(());
    }
    let radiate = |from: &V3, share: f64, directivity: f64| -> (f64, f64) {
        let d2 = (rx - from).norm();
        let p = p_int * share * directivity * aperture / (4.0 * PI * d2 * d2) * slab_t(from, rx);
        let path_len = (from - tx).norm() + d2;
        (p, path_len)
    };

    // volume: isotropic from the body centre
    let (p, len) = radiate(c, budget.volume, 1.0);
    tracer.push(out, PathKind::HumanScatter, p, rx, c, len);

    // specular: glossy lobe around the mirror direction at the entry point
    let front = entry_point(tx, c, &axes);
    let n = ellipsoid_normal(c, &axes, &front);
    let mirror = u_in - n * (2.0 * u_in.dot(&n));
    let to_rx = (rx - front).normalize();
    let cos_psi = mirror.dot(&to_rx);
    if cos_psi > 0.0 {
        let directivity = 2.0 * (SPECULAR_LOBE_EXP as f64 + 1.0) * cos_psi.powi(SPECULAR_LOBE_EXP);
        let (p, len) = radiate(&front, budget.specular, directivity);
        tracer.push(out, PathKind::HumanScatter, p, rx, &front, len);
    }

    // diffuse: Lambertian patches sampled over the body surface
    let m = scene.config.diffuse_samples;
    if m > 0 && budget.diffuse > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(scene.config.seed, rx_index, human_index));
        let mut patches = Vec::with_capacity(m);
        for _ in 0..m {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            let s = V3::new(r * phi.cos(), r * phi.sin(), z);
            let p = c + s.component_mul(&axes);
            let n = ellipsoid_normal(c, &axes, &p);
            let cos_in = n.dot(&(tx - p).normalize());
            let cos_out = n.dot(&(rx - p).normalize());
            patches.push((p, cos_in.max(0.0), cos_out.max(0.0)));
        }
        let lit: f64 = patches.iter().map(|(_, ci, _)| ci).sum();
        if lit > 0.0 {
            for (p, ci, co) in patches {
                if ci <= 0.0 || co <= 0.0 {
                    continue;
                }
                let (pw, len) = radiate(&p, budget.diffuse * ci / lit, 4.0 * co);
                tracer.push(out, PathKind::HumanScatter, pw, rx, &p, len);
            }
        }
    }
    Ok(())
}
