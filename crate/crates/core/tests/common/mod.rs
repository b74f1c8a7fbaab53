#![allow(dead_code)]

pub mod pipeline;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfsplat_core::scene::{PAS_COLS, PAS_LEN, PAS_ROWS};
use rfsplat_core::splat::{rasterize, rasterize_backward, GaussianPrimitive, GaussianSet, RenderInput, SetTag};

pub const RX: [f64; 3] = [2.0, 2.0, 1.0];

pub fn random_gaussian(rng: &mut ChaCha8Rng, el_range: (f64, f64)) -> GaussianPrimitive {
    let az: f64 = rng.gen_range(0.0..360.0f64).to_radians();
    let el: f64 = rng.gen_range(el_range.0..el_range.1).to_radians();
    let d: f64 = rng.gen_range(1.0..3.0);
    let pos = [
        RX[0] + d * el.cos() * az.cos(),
        RX[1] + d * el.cos() * az.sin(),
        RX[2] + d * el.sin(),
    ];
    let mut q = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ];
    let n = q.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    q = q.map(|v| v / n);
    GaussianPrimitive {
        position: pos,
        log_scale: [0; 3].map(|_| rng.gen_range(0.04f64..0.25).ln()),
        rotation: q,
        delta_logit: rng.gen_range(-1.5..2.0),
        radiance_base: rng.gen_range(0.2..2.0),
    }
}

/// Independent per-pixel evaluation: every Gaussian is tested at every pixel.
pub fn brute_force(gs: &[GaussianPrimitive], rx: [f64; 3], sig: &[f64]) -> Vec<f64> {
    brute_force_beam(gs, rx, sig, 0.0)
}

pub fn brute_force_beam(gs: &[GaussianPrimitive], rx: [f64; 3], sig: &[f64], beam: f64) -> Vec<f64> {
    let k = 180.0 / std::f64::consts::PI;
    struct P {
        depth: f64,
        u: f64,
        v: f64,
        conic: Matrix2<f64>,
        delta: f64,
        sig: f64,
        gain: f64,
        key: (f64, f64, f64, usize),
    }
    let mut ps = Vec::new();
    for (i, g) in gs.iter().enumerate() {
        let d = Vector3::new(g.position[0] - rx[0], g.position[1] - rx[1], g.position[2] - rx[2]);
        let rho = d.x.hypot(d.y);
        if d.z < 0.0 {
            continue;
        }
        let h2 = d.norm_squared();
        let mut u = d.y.atan2(d.x).to_degrees();
        if u < 0.0 {
            u += 360.0;
        }
        let v = d.z.atan2(rho).to_degrees();
        let j = Matrix2x3::new(
            -d.y / (rho * rho),
            d.x / (rho * rho),
            0.0,
            -d.x * d.z / (rho * h2),
            -d.y * d.z / (rho * h2),
            rho / h2,
        ) * k;
        let [w, x, y, z] = g.rotation;
        let r = Matrix3::new(
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        );
        let s2 = Matrix3::from_diagonal(&Vector3::from(g.log_scale.map(|l| (2.0 * l).exp())));
        let sharp = j * (r * s2 * r.transpose()) * j.transpose() + Matrix2::identity() * 0.09;
        let cov = sharp + Matrix2::identity() * beam;
        ps.push(P {
            depth: h2.sqrt(),
            u,
            v,
            conic: cov.try_inverse().unwrap(),
            delta: 1.0 / (1.0 + (-g.delta_logit).exp()),
            sig: sig[i],
            gain: (sharp.determinant() / cov.determinant()).sqrt(),
            key: (g.position[0], g.position[1], g.position[2], i),
        });
    }
    ps.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap()
            .then(a.key.partial_cmp(&b.key).unwrap())
    });
    let weight = |q: f64| {
        if q >= 9.0 {
            0.0
        } else if q <= 8.0 {
            (-q / 2.0).exp()
        } else {
            let t = q - 8.0;
            (-q / 2.0).exp() * (1.0 - (10.0 * t.powi(3) - 15.0 * t.powi(4) + 6.0 * t.powi(5)))
        }
    };
    let mut img = vec![0.0; PAS_LEN];
    for row in 0..PAS_ROWS {
        for col in 0..PAS_COLS {
            let mut t = 1.0;
            let mut acc = 0.0;
            for p in &ps {
                let mut du = col as f64 - p.u;
                while du >= 180.0 {
                    du -= 360.0;
                }
                while du < -180.0 {
                    du += 360.0;
                }
                let dv = row as f64 - p.v;
                let q = p.conic[(0, 0)] * du * du + 2.0 * p.conic[(0, 1)] * du * dv + p.conic[(1, 1)] * dv * dv;
                let w = p.gain * weight(q);
                if w == 0.0 {
                    continue;
                }
                acc += t * w * p.sig;
                t *= 1.0 - w * (1.0 - p.delta);
            }
            img[row * PAS_COLS + col] = acc;
        }
    }
    img
}

pub fn render(gs: &[GaussianPrimitive]) -> Vec<f64> {
    render_beam(gs, 0.0)
}

pub fn render_beam(gs: &[GaussianPrimitive], beam: f64) -> Vec<f64> {
    let set = GaussianSet::new(SetTag::Background, gs.to_vec());
    let sets = [&set];
    rasterize(&RenderInput::new(&sets, RX).with_beam(beam)).unwrap().0.data
}

/// Worst per-pixel relative error, pixels in the far tail measured against
/// a thousandth of the peak.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-3 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

pub fn assert_close(a: &[f64], b: &[f64], rel: f64) {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!(
            (x - y).abs() <= rel * y.abs().max(1e-3 * scale),
            "pixel {i}: {x} vs {y}"
        );
    }
}

pub fn objective(gs: &[GaussianPrimitive], weights: &[f64], beam: f64) -> f64 {
    render_beam(gs, beam).iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Largest relative error between analytic and finite-difference gradients.
pub fn gradient_check(seed: u64, beam: f64, scenes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..scenes {
        let gs: Vec<_> = (0..5).map(|_| random_gaussian(&mut rng, (10.0, 60.0))).collect();
        let weights: Vec<f64> = (0..PAS_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let set = GaussianSet::new(SetTag::Background, gs.clone());
        let sets = [&set];
        let input = RenderInput::new(&sets, RX).with_beam(beam);
        let (_, ws) = rasterize(&input).unwrap();
        let grads = rasterize_backward(&input, &ws, &weights).unwrap();
        let analytic = &grads.sets[0].as_ref().unwrap().grads;
        for (gi, g) in gs.iter().enumerate() {
            let an = analytic[gi].to_array();
            let base = g.to_array();
            let gmax = an.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..12 {
                let h = if k < 3 { 1e-5 } else { 1e-4 * base[k].abs().max(1.0) };
                let eval = |delta: f64| {
                    let mut p = base;
                    p[k] += delta;
                    let mut v = gs.clone();
                    v[gi] = GaussianPrimitive::from_array(&p);
                    objective(&v, &weights, beam)
                };
                // five-point central stencil
                let fd = (8.0 * (eval(0.5 * h) - eval(-0.5 * h)) - (eval(h) - eval(-h))) / (6.0 * h);
                let err = (fd - an[k]).abs() / fd.abs().max(an[k].abs()).max(1e-3 * gmax);
                worst = worst.max(err);
            }
        }
    }
    worst
}
