use ndarray::Array2;

use super::encoding::{PositionalEncoding, RoomNorm};
use super::mlp::{Mlp, MlpCache, MlpGrads, MlpShape};
use crate::error::{Error, Result};
use crate::splat::{GaussianGrad, GaussianPrimitive};

pub const DEFORM_OUTPUTS: usize = 10;

/// Hamilton product `a * b`, `[w, x, y, z]`.
pub fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Gradients of `quat_mul(a, b)` with respect to `a` and `b`.
pub fn quat_mul_vjp(a: &[f64; 4], b: &[f64; 4], g: &[f64; 4]) -> ([f64; 4], [f64; 4]) {
    let ga = [
        b[0] * g[0] + b[1] * g[1] + b[2] * g[2] + b[3] * g[3],
        -b[1] * g[0] + b[0] * g[1] - b[3] * g[2] + b[2] * g[3],
        -b[2] * g[0] + b[3] * g[1] + b[0] * g[2] - b[1] * g[3],
        -b[3] * g[0] - b[2] * g[1] + b[1] * g[2] + b[0] * g[3],
    ];
    let gb = [
        a[0] * g[0] + a[1] * g[1] + a[2] * g[2] + a[3] * g[3],
        -a[1] * g[0] + a[0] * g[1] + a[3] * g[2] - a[2] * g[3],
        -a[2] * g[0] - a[3] * g[1] + a[0] * g[2] + a[1] * g[3],
        -a[3] * g[0] + a[2] * g[1] - a[1] * g[2] + a[0] * g[3],
    ];
    (ga, gb)
}

fn unit_delta(raw: &[f64]) -> ([f64; 4], f64) {
    let m = [1.0 + raw[0], raw[1], raw[2], raw[3]];
    let n = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    (m.map(|v| v / n), n)
}

/// Moves, turns and rescales one Gaussian by a ten-value network output.
pub fn apply_deformation(g: &GaussianPrimitive, out: &[f64]) -> GaussianPrimitive {
    let (dq, _) = unit_delta(&out[3..7]);
    GaussianPrimitive {
        position: std::array::from_fn(|k| g.position[k] + out[k]),
        log_scale: std::array::from_fn(|k| g.log_scale[k] + out[7 + k]),
        rotation: quat_mul(&g.rotation, &dq),
        delta_logit: g.delta_logit,
        radiance_base: g.radiance_base,
    }
}

/// Splits the gradient on a deformed Gaussian into its rest-pose share and
/// the share on the ten network outputs.
pub fn deformation_backward(
    g: &GaussianPrimitive,
    out: &[f64],
    d: &GaussianGrad,
) -> (GaussianGrad, [f64; DEFORM_OUTPUTS]) {
    let (dq, n) = unit_delta(&out[3..7]);
    let (g_rot, g_dq) = quat_mul_vjp(&g.rotation, &dq, &d.rotation);
    let proj = g_dq.iter().zip(&dq).map(|(a, b)| a * b).sum::<f64>();
    let mut d_out = [0.0; DEFORM_OUTPUTS];
    d_out[..3].copy_from_slice(&d.position);
    for k in 0..4 {
        d_out[3 + k] = (g_dq[k] - dq[k] * proj) / n;
    }
    d_out[7..].copy_from_slice(&d.log_scale);
    (GaussianGrad { rotation: g_rot, ..*d }, d_out)
}

/// Per-Gaussian offsets conditioned on the person's position.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformNet {
    pub mlp: Mlp,
    pub encoding: PositionalEncoding,
    pub norm: RoomNorm,
}

pub struct DeformCache {
    mlp: MlpCache,
    positions: Vec<[f64; 3]>,
}

impl DeformNet {
    pub fn new(room: [f64; 3], seed: u64) -> Self {
        Self::with_shape(
            room,
            PositionalEncoding::default(),
            super::em::HIDDEN,
            super::em::DEPTH,
            seed,
        )
    }

    pub fn with_shape(room: [f64; 3], encoding: PositionalEncoding, hidden: usize, depth: usize, seed: u64) -> Self {
        DeformNet {
            mlp: Mlp::new(
                MlpShape {
                    input: encoding.dim(6),
                    hidden,
                    depth,
                    output: DEFORM_OUTPUTS,
                },
                seed,
            ),
            encoding,
            norm: RoomNorm { room },
        }
    }

    /// Raw `(n, 10)` outputs: position offset, quaternion delta, log-scale offset.
    pub fn forward(&self, positions: &[[f64; 3]], human: [f64; 3]) -> Result<(Array2<f64>, DeformCache)> {
        if !human.iter().all(|v| v.is_finite()) {
            return Err(Error::Contract("person position is not finite".into()));
        }
        let block = self.encoding.dim(3);
        let mut x = Array2::zeros((positions.len(), self.mlp.input_dim()));
        let hn = self.norm.apply(&human);
        for (p, mut row) in positions.iter().zip(x.rows_mut()) {
            let r = row.as_slice_mut().unwrap();
            self.encoding.encode_into(&self.norm.apply(p), &mut r[..block]);
            self.encoding.encode_into(&hn, &mut r[block..2 * block]);
        }
        let (out, cache) = self.mlp.forward(x.view())?;
        Ok((
            out,
            DeformCache {
                mlp: cache,
                positions: positions.to_vec(),
            },
        ))
    }

    pub fn backward(&self, cache: &DeformCache, d_out: &Array2<f64>) -> Result<(MlpGrads, Vec<[f64; 3]>)> {
        let (grads, d_in) = self.mlp.backward(&cache.mlp, d_out.view())?;
        let d_in = d_in.as_standard_layout();
        let block = self.encoding.dim(3);
        let slope = self.norm.slope();
        let d_pos = cache
            .positions
            .iter()
            .zip(d_in.rows())
            .map(|(p, row)| {
                let mut g = [0.0; 3];
                self.encoding
                    .backward(&self.norm.apply(p), &row.as_slice().unwrap()[..block], &mut g);
                std::array::from_fn(|k| g[k] * slope[k])
            })
            .collect();
        Ok((grads, d_pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_is_exact_identity() {
        let mut g = GaussianPrimitive::isotropic([1.0, 2.0, 0.5], 0.1, 0.4, 0.8);
        g.rotation = [0.9, 0.1, -0.3, 0.2];
        g.log_scale = [-2.0, -1.5, -2.5];
        let d = apply_deformation(&g, &[0.0; DEFORM_OUTPUTS]);
        assert_eq!(d, g);
    }

    #[test]
    fn quaternion_product_vjp_matches_differences() {
        let a = [0.7, -0.2, 0.4, 0.1];
        let b = [0.3, 0.5, -0.6, 0.2];
        let g = [0.2, -1.0, 0.5, 0.9];
        let (ga, gb) = quat_mul_vjp(&a, &b, &g);
        let f = |a: &[f64; 4], b: &[f64; 4]| quat_mul(a, b).iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
        for k in 0..4 {
            let (mut a1, mut a2) = (a, a);
            a1[k] += 1e-6;
            a2[k] -= 1e-6;
            assert!(((f(&a1, &b) - f(&a2, &b)) / 2e-6 - ga[k]).abs() < 1e-8);
            let (mut b1, mut b2) = (b, b);
            b1[k] += 1e-6;
            b2[k] -= 1e-6;
            assert!(((f(&a, &b1) - f(&a, &b2)) / 2e-6 - gb[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn deformation_gradients_match_differences() {
        let room = [5.0, 4.0, 3.0];
        let mut net = DeformNet::with_shape(room, PositionalEncoding::default(), 16, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flat: Vec<f64> = net.mlp.flatten().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
        net.mlp.set_flat(&flat).unwrap();
        let gs: Vec<GaussianPrimitive> = (0..4)
            .map(|i| {
                let mut g = GaussianPrimitive::isotropic([1.0 + i as f64, 2.0, 1.0], 0.1, 0.5, 1.0);
                g.rotation = [0.8, 0.1 * i as f64, 0.3, -0.2];
                g
            })
            .collect();
        let human = [2.5, 2.0, 0.9];
        // scalar objective: weighted sum of all deformed parameters
        let wts: Vec<[f64; 12]> = (0..4)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        let f = |net: &DeformNet, gs: &[GaussianPrimitive]| -> f64 {
            let pos: Vec<[f64; 3]> = gs.iter().map(|g| g.position).collect();
            let (out, _) = net.forward(&pos, human).unwrap();
            gs.iter()
                .enumerate()
                .map(|(i, g)| {
                    let d = apply_deformation(g, out.row(i).as_slice().unwrap()).to_array();
                    d.iter().zip(&wts[i]).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum()
        };
        let pos: Vec<[f64; 3]> = gs.iter().map(|g| g.position).collect();
        let (out, cache) = net.forward(&pos, human).unwrap();
        let mut d_out = Array2::zeros(out.raw_dim());
        let mut rest = Vec::new();
        for (i, g) in gs.iter().enumerate() {
            let w = &wts[i];
            let up = GaussianGrad {
                position: [w[0], w[1], w[2]],
                log_scale: [w[3], w[4], w[5]],
                rotation: [w[6], w[7], w[8], w[9]],
                delta_logit: w[10],
                radiance_base: w[11],
            };
            let (r, d) = deformation_backward(g, out.row(i).as_slice().unwrap(), &up);
            d_out.row_mut(i).as_slice_mut().unwrap().copy_from_slice(&d);
            rest.push(r);
        }
        let (grads, d_pos) = net.backward(&cache, &d_out).unwrap();
        for (i, r) in rest.iter_mut().enumerate() {
            for k in 0..3 {
                r.position[k] += d_pos[i][k];
            }
        }
        let gflat = grads.flatten();
        let nflat = net.mlp.flatten();
        let mut worst: f64 = 0.0;
        for i in (0..nflat.len()).step_by(3) {
            let (mut a, mut b) = (net.clone(), net.clone());
            let (mut va, mut vb) = (nflat.clone(), nflat.clone());
            va[i] += 1e-6;
            vb[i] -= 1e-6;
            a.mlp.set_flat(&va).unwrap();
            b.mlp.set_flat(&vb).unwrap();
            let fd = (f(&a, &gs) - f(&b, &gs)) / 2e-6;
            let s = fd.abs().max(gflat[i].abs());
            if s > 1e-6 {
                worst = worst.max((fd - gflat[i]).abs() / s);
            }
        }
        assert!(worst < 1e-4, "net weights: {worst}");
        for (i, g) in gs.iter().enumerate() {
            let base = g.to_array();
            let an = rest[i].to_array();
            for k in 0..12 {
                let (mut a, mut b) = (gs.clone(), gs.clone());
                let (mut pa, mut pb) = (base, base);
                pa[k] += 1e-6;
                pb[k] -= 1e-6;
                a[i] = GaussianPrimitive::from_array(&pa);
                b[i] = GaussianPrimitive::from_array(&pb);
                let fd = (f(&net, &a) - f(&net, &b)) / 2e-6;
                assert!(
                    (fd - an[k]).abs() <= 1e-4 * fd.abs().max(1e-2),
                    "g{i} p{k}: {fd} vs {}",
                    an[k]
                );
            }
        }
    }
}
