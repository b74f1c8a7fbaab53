use std::hash::{Hash, Hasher};

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use super::gaussian::{GaussianPrimitive, GaussianSet};
use super::project::{project_backward, project_with_beam, Projected};
use crate::error::{Error, Result};
use crate::scene::{PasImage, PAS_COLS, PAS_LEN, PAS_ROWS};

pub const TILE: usize = 16;
pub const TILES_X: usize = PAS_COLS.div_ceil(TILE);
pub const TILES_Y: usize = PAS_ROWS.div_ceil(TILE);
const HALF_W: f64 = PAS_COLS as f64 / 2.0;
const HALF_H: f64 = PAS_ROWS as f64 / 2.0;
/// Mahalanobis radius squared where the footprint reaches zero.
pub const CUTOFF_Q: f64 = 9.0;
const TAPER_START_Q: f64 = 8.0;

/// Footprint weight `exp(-q/2)` faded to zero between `q = 8` and `q = 9`,
/// and its derivative in `q`.
#[inline]
pub fn footprint(q: f64) -> (f64, f64) {
    if q >= CUTOFF_Q {
        return (0.0, 0.0);
    }
    let e = (-0.5 * q).exp();
    if q <= TAPER_START_Q {
        return (e, -0.5 * e);
    }
    let t = (q - TAPER_START_Q) / (CUTOFF_Q - TAPER_START_Q);
    let s = t * t * t * (t * (6.0 * t - 15.0) + 10.0);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t) / (CUTOFF_Q - TAPER_START_Q);
    let taper = 1.0 - s;
    (e * taper, e * (-0.5 * taper - ds))
}

/// Signed azimuth difference wrapped into `[-180, 180)`.
#[inline]
pub fn wrap_az(d: f64) -> f64 {
    if (-180.0..180.0).contains(&d) {
        d
    } else if (180.0..540.0).contains(&d) {
        d - 360.0
    } else if (-540.0..-180.0).contains(&d) {
        d + 360.0
    } else {
        (d + 180.0).rem_euclid(360.0) - 180.0
    }
}

pub struct RenderInput<'a> {
    pub sets: &'a [&'a GaussianSet],
    pub rx: [f64; 3],
    /// Per-Gaussian radiance in flattened set order; replaces `radiance_base`.
    pub radiance_override: Option<&'a [f64]>,
    /// Variance in px^2 of an angular beam every footprint is convolved with.
    pub beam_px2: f64,
}

impl<'a> RenderInput<'a> {
    pub fn new(sets: &'a [&'a GaussianSet], rx: [f64; 3]) -> Self {
        RenderInput {
            sets,
            rx,
            radiance_override: None,
            beam_px2: 0.0,
        }
    }

    pub fn with_beam(mut self, beam_px2: f64) -> Self {
        self.beam_px2 = beam_px2;
        self
    }

    pub fn with_radiance(mut self, sig: &'a [f64]) -> Self {
        self.radiance_override = Some(sig);
        self
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn flat(&self) -> Vec<&'a GaussianPrimitive> {
        self.sets.iter().flat_map(|s| s.gaussians.iter()).collect()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.rx.iter().for_each(|v| v.to_bits().hash(&mut h));
        self.beam_px2.to_bits().hash(&mut h);
        for s in self.sets {
            (s.tag, s.frozen, s.len()).hash(&mut h);
            for g in &s.gaussians {
                g.to_array().iter().for_each(|v| v.to_bits().hash(&mut h));
            }
        }
        if let Some(o) = self.radiance_override {
            o.iter().for_each(|v| v.to_bits().hash(&mut h));
        }
        h.finish()
    }
}

/// Per-render state kept for the backward pass.
#[derive(Clone, Debug)]
pub struct SplatWorkspace {
    fingerprint: u64,
    pub projected: Vec<Option<Projected>>,
    /// Visible Gaussians front to back.
    pub order: Vec<u32>,
    /// Visible Gaussians overlapping each tile, front to back; row-major tiles.
    pub tiles: Vec<Vec<u32>>,
}

impl SplatWorkspace {
    pub fn visible(&self) -> usize {
        self.order.len()
    }
}

fn tile_span(tile: usize) -> (usize, usize, usize, usize) {
    let (ty, tx) = (tile / TILES_X, tile % TILES_X);
    let r0 = ty * TILE;
    let c0 = tx * TILE;
    (r0, (r0 + TILE).min(PAS_ROWS), c0, (c0 + TILE).min(PAS_COLS))
}

/// Tiles touched by the 3-sigma box of `p`.
fn covered_tiles(p: &Projected, out: &mut Vec<usize>) {
    let (ru, rv) = p.radii();
    let v_lo = (p.mean.y - rv).ceil().max(0.0);
    let v_hi = (p.mean.y + rv).floor().min((PAS_ROWS - 1) as f64);
    if v_lo > v_hi {
        return;
    }
    let (ty0, ty1) = (v_lo as usize / TILE, v_hi as usize / TILE);
    let mut cols = [false; TILES_X];
    let u_lo = (p.mean.x - ru).ceil();
    let u_hi = (p.mean.x + ru).floor();
    if u_hi - u_lo + 1.0 >= PAS_COLS as f64 {
        cols = [true; TILES_X];
    } else if u_lo <= u_hi {
        let a = (u_lo as i64).rem_euclid(PAS_COLS as i64) as usize;
        let b = (u_hi as i64).rem_euclid(PAS_COLS as i64) as usize;
        let mut mark = |lo: usize, hi: usize| (lo / TILE..=hi / TILE).for_each(|t| cols[t] = true);
        if a <= b {
            mark(a, b);
        } else {
            mark(a, PAS_COLS - 1);
            mark(0, b);
        }
    }
    for ty in ty0..=ty1 {
        for (tx, on) in cols.iter().enumerate() {
            if *on {
                out.push(ty * TILES_X + tx);
            }
        }
    }
}

struct Prepared {
    sig: Vec<f64>,
    delta: Vec<f64>,
    ws: SplatWorkspace,
}

fn prepare(input: &RenderInput) -> Result<Prepared> {
    let flat = input.flat();
    if let Some(o) = input.radiance_override {
        if o.len() != flat.len() {
            return Err(Error::Contract(format!(
                "radiance override has {} entries for {} gaussians",
                o.len(),
                flat.len()
            )));
        }
        if let Some(i) = o.iter().position(|v| !v.is_finite()) {
            return Err(Error::PoisonedRender { index: i });
        }
    }
    if let Some(i) = flat.iter().position(|g| !g.is_finite()) {
        return Err(Error::PoisonedRender { index: i });
    }
    if !input.rx.iter().all(|v| v.is_finite()) {
        return Err(Error::Contract("antenna position is not finite".into()));
    }
    if !(input.beam_px2 >= 0.0 && input.beam_px2.is_finite()) {
        return Err(Error::Contract("beam variance must be finite and non-negative".into()));
    }
    let projected = flat
        .par_iter()
        .enumerate()
        .map(|(i, g)| project_with_beam(g, &input.rx, i, input.beam_px2))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<u32> = (0..flat.len() as u32)
        .filter(|&i| projected[i as usize].is_some())
        .collect();
    if order.is_empty() {
        return Err(Error::Contract("no gaussian survives culling".into()));
    }
    order.sort_by(|&a, &b| {
        let (pa, pb) = (
            projected[a as usize].as_ref().unwrap(),
            projected[b as usize].as_ref().unwrap(),
        );
        let (ga, gb) = (flat[a as usize], flat[b as usize]);
        pa.depth
            .total_cmp(&pb.depth)
            .then(ga.position[0].total_cmp(&gb.position[0]))
            .then(ga.position[1].total_cmp(&gb.position[1]))
            .then(ga.position[2].total_cmp(&gb.position[2]))
            .then(a.cmp(&b))
    });
    let mut tiles = vec![Vec::new(); TILES_X * TILES_Y];
    let mut buf = Vec::new();
    for &i in &order {
        buf.clear();
        covered_tiles(projected[i as usize].as_ref().unwrap(), &mut buf);
        for &t in &buf {
            tiles[t].push(i);
        }
    }
    let sig = match input.radiance_override {
        Some(o) => o.to_vec(),
        None => flat.iter().map(|g| g.radiance_base).collect(),
    };
    let delta = flat.iter().map(|g| g.delta()).collect();
    Ok(Prepared {
        sig,
        delta,
        ws: SplatWorkspace {
            fingerprint: input.fingerprint(),
            projected,
            order,
            tiles,
        },
    })
}

/// Flat copy of what the pixel loops read for one Gaussian.
#[derive(Clone, Copy)]
struct Splat {
    mx: f64,
    my: f64,
    ca: f64,
    cb: f64,
    cc: f64,
    ru: f64,
    rv: f64,
    sig: f64,
    delta: f64,
    gain: f64,
}

impl Splat {
    fn new(p: &Projected, sig: f64, delta: f64) -> Self {
        let c = &p.conic;
        let (ru, rv) = p.radii();
        Splat {
            mx: p.mean.x,
            my: p.mean.y,
            ca: c[(0, 0)],
            cb: c[(0, 1)] + c[(1, 0)],
            cc: c[(1, 1)],
            ru,
            rv,
            sig,
            delta,
            gain: p.gain,
        }
    }

    /// `(du, dv, q)` or `None` outside the 3-sigma box.
    #[inline]
    fn offset(&self, row: usize, col: usize) -> Option<(f64, f64, f64)> {
        let dv = row as f64 - self.my;
        if dv.abs() > self.rv {
            return None;
        }
        let du = wrap_az(col as f64 - self.mx);
        if du.abs() > self.ru {
            return None;
        }
        Some((du, dv, self.ca * du * du + self.cb * du * dv + self.cc * dv * dv))
    }
}

fn tile_splats(ws: &SplatWorkspace, list: &[u32], sig: &[f64], delta: &[f64]) -> Vec<Splat> {
    list.iter()
        .map(|&gi| {
            let gi = gi as usize;
            Splat::new(ws.projected[gi].as_ref().unwrap(), sig[gi], delta[gi])
        })
        .collect()
}

/// Front-to-back compositing of every footprint covering each pixel.
pub fn rasterize(input: &RenderInput) -> Result<(PasImage, SplatWorkspace)> {
    let prep = prepare(input)?;
    let ws = &prep.ws;
    let tiles: Vec<Vec<f64>> = (0..TILES_X * TILES_Y)
        .into_par_iter()
        .map(|t| {
            let (r0, r1, c0, c1) = tile_span(t);
            let splats = tile_splats(ws, &ws.tiles[t], &prep.sig, &prep.delta);
            let mut out = Vec::with_capacity((r1 - r0) * (c1 - c0));
            for row in r0..r1 {
                let live: Vec<&Splat> = splats.iter().filter(|sp| (row as f64 - sp.my).abs() <= sp.rv).collect();
                for col in c0..c1 {
                    let mut trans = 1.0;
                    let mut acc = 0.0;
                    for sp in &live {
                        let Some((_, _, q)) = sp.offset(row, col) else {
                            continue;
                        };
                        let (w, _) = footprint(q);
                        if w == 0.0 {
                            continue;
                        }
                        let w = w * sp.gain;
                        acc += trans * w * sp.sig;
                        trans *= 1.0 - w * (1.0 - sp.delta);
                    }
                    out.push(acc);
                }
            }
            out
        })
        .collect();
    let mut data = vec![0.0; PAS_LEN];
    for (t, vals) in tiles.iter().enumerate() {
        let (r0, r1, c0, c1) = tile_span(t);
        let mut k = 0;
        for row in r0..r1 {
            for col in c0..c1 {
                data[row * PAS_COLS + col] = vals[k];
                k += 1;
            }
        }
    }
    let img = PasImage::from_vec(data)?;
    Ok((img, prep.ws))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussianGrad {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub delta_logit: f64,
    pub radiance_base: f64,
}

impl GaussianGrad {
    pub fn to_array(&self) -> [f64; 12] {
        let mut a = [0.0; 12];
        a[0..3].copy_from_slice(&self.position);
        a[3..6].copy_from_slice(&self.log_scale);
        a[6..10].copy_from_slice(&self.rotation);
        a[10] = self.delta_logit;
        a[11] = self.radiance_base;
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetGradient {
    pub grads: Vec<GaussianGrad>,
    /// Norm of the mean gradient in image coordinates scaled to [-1, 1]; drives densification.
    pub mean2d_norm: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplatGradients {
    /// `None` for frozen sets.
    pub sets: Vec<Option<SetGradient>>,
    /// Gradient with respect to the radiance used for each Gaussian, flattened.
    pub radiance: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct Acc2d {
    mean: [f64; 2],
    conic: [f64; 3],
    delta_logit: f64,
    sig: f64,
    gain: f64,
}

impl Acc2d {
    fn add(&mut self, o: &Acc2d) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
        }
        self.delta_logit += o.delta_logit;
        self.sig += o.sig;
        self.gain += o.gain;
    }
}

/// Exact gradients of `sum_p d_image[p] * I[p]`.
pub fn rasterize_backward(input: &RenderInput, ws: &SplatWorkspace, d_image: &[f64]) -> Result<SplatGradients> {
    if ws.fingerprint != input.fingerprint() {
        return Err(Error::Contract("workspace does not belong to these inputs".into()));
    }
    if d_image.len() != PAS_LEN {
        return Err(Error::Contract(format!("image gradient has {} entries", d_image.len())));
    }
    let flat = input.flat();
    let n = flat.len();
    let sig: Vec<f64> = match input.radiance_override {
        Some(o) => o.to_vec(),
        None => flat.iter().map(|g| g.radiance_base).collect(),
    };
    let delta: Vec<f64> = flat.iter().map(|g| g.delta()).collect();

    let per_tile: Vec<Vec<Acc2d>> = (0..TILES_X * TILES_Y)
        .into_par_iter()
        .map(|t| {
            let (r0, r1, c0, c1) = tile_span(t);
            let list = &ws.tiles[t];
            let splats = tile_splats(ws, list, &sig, &delta);
            let mut acc = vec![Acc2d::default(); list.len()];
            // (slot, w, dw/dq, du, dv, transmittance before)
            let mut hits: Vec<(usize, f64, f64, f64, f64, f64)> = Vec::with_capacity(list.len());
            let mut live: Vec<usize> = Vec::with_capacity(list.len());
            for row in r0..r1 {
                live.clear();
                live.extend((0..splats.len()).filter(|&k| (row as f64 - splats[k].my).abs() <= splats[k].rv));
                for col in c0..c1 {
                    let gpix = d_image[row * PAS_COLS + col];
                    if gpix == 0.0 {
                        continue;
                    }
                    hits.clear();
                    let mut trans = 1.0;
                    for &slot in &live {
                        let sp = &splats[slot];
                        let Some((du, dv, q)) = sp.offset(row, col) else {
                            continue;
                        };
                        let (w, dw) = footprint(q);
                        if w == 0.0 {
                            continue;
                        }
                        let (w, dw) = (w * sp.gain, dw * sp.gain);
                        hits.push((slot, w, dw, du, dv, trans));
                        trans *= 1.0 - w * (1.0 - sp.delta);
                    }
                    let mut behind = 0.0;
                    for &(slot, w, dw, du, dv, tr) in hits.iter().rev() {
                        let sp = &splats[slot];
                        let (s, d) = (sp.sig, sp.delta);
                        let a = &mut acc[slot];
                        a.sig += gpix * tr * w;
                        a.delta_logit += gpix * tr * w * behind * d * (1.0 - d);
                        let g_w = gpix * tr * (s - (1.0 - d) * behind);
                        a.gain += g_w * w / sp.gain;
                        let g_q = g_w * dw;
                        a.mean[0] -= g_q * (2.0 * sp.ca * du + sp.cb * dv);
                        a.mean[1] -= g_q * (sp.cb * du + 2.0 * sp.cc * dv);
                        a.conic[0] += g_q * du * du;
                        a.conic[1] += g_q * du * dv;
                        a.conic[2] += g_q * dv * dv;
                        behind = w * s + (1.0 - w * (1.0 - d)) * behind;
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![Acc2d::default(); n];
    for (t, acc) in per_tile.iter().enumerate() {
        for (slot, a) in acc.iter().enumerate() {
            total[ws.tiles[t][slot] as usize].add(a);
        }
    }

    let grads: Vec<GaussianGrad> = (0..n)
        .into_par_iter()
        .map(|i| {
            let Some(p) = ws.projected[i].as_ref() else {
                return GaussianGrad::default();
            };
            let a = &total[i];
            let d_mean = Vector2::new(a.mean[0], a.mean[1]);
            let d_conic = Matrix2::new(a.conic[0], a.conic[1], a.conic[1], a.conic[2]);
            let pg = project_backward(flat[i], &input.rx, p, &d_mean, &d_conic, a.gain);
            GaussianGrad {
                position: pg.position,
                log_scale: pg.log_scale,
                rotation: pg.rotation,
                delta_logit: a.delta_logit,
                radiance_base: if input.radiance_override.is_some() { 0.0 } else { a.sig },
            }
        })
        .collect();

    let mut sets = Vec::with_capacity(input.sets.len());
    let mut start = 0;
    for s in input.sets {
        let range = start..start + s.len();
        start += s.len();
        if s.frozen {
            sets.push(None);
            continue;
        }
        sets.push(Some(SetGradient {
            grads: grads[range.clone()].to_vec(),
            mean2d_norm: total[range]
                .iter()
                .map(|a| (a.mean[0] * HALF_W).hypot(a.mean[1] * HALF_H))
                .collect(),
        }));
    }
    Ok(SplatGradients {
        sets,
        radiance: total.iter().map(|a| a.sig).collect(),
    })
}
