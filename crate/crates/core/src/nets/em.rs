use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::encoding::{PositionalEncoding, RoomNorm};
use super::mlp::{Mlp, MlpCache, MlpGrads, MlpShape};
use crate::error::{Error, Result};

pub const HIDDEN: usize = 64;
pub const DEPTH: usize = 3;

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn softplus_grad(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmVariant {
    /// Gaussian and antenna positions.
    Background,
    /// Adds the person's position.
    Human,
}

/// Per-Gaussian radiance from positions, evaluated with shared weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EmNet {
    pub variant: EmVariant,
    pub mlp: Mlp,
    pub encoding: PositionalEncoding,
    pub norm: RoomNorm,
}

pub struct EmCache {
    mlp: MlpCache,
    logits: Vec<f64>,
    positions: Vec<[f64; 3]>,
}

impl EmNet {
    fn inputs(variant: EmVariant) -> usize {
        match variant {
            EmVariant::Background => 2,
            EmVariant::Human => 3,
        }
    }

    pub fn new(variant: EmVariant, room: [f64; 3], seed: u64) -> Self {
        Self::with_shape(variant, room, PositionalEncoding::default(), HIDDEN, DEPTH, seed)
    }

    pub fn with_shape(
        variant: EmVariant,
        room: [f64; 3],
        encoding: PositionalEncoding,
        hidden: usize,
        depth: usize,
        seed: u64,
    ) -> Self {
        let shape = MlpShape {
            input: encoding.dim(3 * Self::inputs(variant)),
            hidden,
            depth,
            output: 1,
        };
        EmNet {
            variant,
            mlp: Mlp::new(shape, seed),
            encoding,
            norm: RoomNorm { room },
        }
    }

    fn row(&self, p: &[f64; 3], antenna: &[f64; 3], human: Option<&[f64; 3]>, out: &mut [f64]) {
        let block = self.encoding.dim(3);
        self.encoding.encode_into(&self.norm.apply(p), &mut out[..block]);
        self.encoding
            .encode_into(&self.norm.apply(antenna), &mut out[block..2 * block]);
        if let Some(h) = human {
            self.encoding
                .encode_into(&self.norm.apply(h), &mut out[2 * block..3 * block]);
        }
    }

    /// `Sig = softplus(net(...))` for every position.
    pub fn forward(
        &self,
        positions: &[[f64; 3]],
        antenna: [f64; 3],
        human: Option<[f64; 3]>,
    ) -> Result<(Vec<f64>, EmCache)> {
        match (self.variant, human.is_some()) {
            (EmVariant::Background, true) => {
                return Err(Error::Contract(
                    "background radiance net takes no person position".into(),
                ))
            }
            (EmVariant::Human, false) => {
                return Err(Error::Contract("person radiance net needs the person position".into()))
            }
            _ => {}
        }
        let width = self.mlp.input_dim();
        let mut x = Array2::zeros((positions.len(), width));
        for (p, mut row) in positions.iter().zip(x.rows_mut()) {
            self.row(p, &antenna, human.as_ref(), row.as_slice_mut().unwrap());
        }
        let (out, cache) = self.mlp.forward(x.view())?;
        let logits: Vec<f64> = out.column(0).to_vec();
        let sig = logits.iter().map(|&o| softplus(o)).collect();
        Ok((
            sig,
            EmCache {
                mlp: cache,
                logits,
                positions: positions.to_vec(),
            },
        ))
    }

    /// Weight gradients and per-position gradients for `dL/dSig`.
    pub fn backward(&self, cache: &EmCache, d_sig: &[f64]) -> Result<(MlpGrads, Vec<[f64; 3]>)> {
        if d_sig.len() != cache.logits.len() {
            return Err(Error::Contract(
                "radiance gradient length does not match the cache".into(),
            ));
        }
        let d_out = Array2::from_shape_fn((d_sig.len(), 1), |(i, _)| d_sig[i] * softplus_grad(cache.logits[i]));
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
                let row = row.as_slice().unwrap();
                self.encoding.backward(&self.norm.apply(p), &row[..block], &mut g);
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

    const ROOM: [f64; 3] = [5.0, 4.0, 3.0];

    fn random_positions(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| std::array::from_fn(|k| rng.gen_range(0.0..ROOM[k])))
            .collect()
    }

    fn perturbed(variant: EmVariant, hidden: usize, seed: u64) -> EmNet {
        let mut net = EmNet::with_shape(variant, ROOM, PositionalEncoding::default(), hidden, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let flat: Vec<f64> = net.mlp.flatten().iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
        net.mlp.set_flat(&flat).unwrap();
        net
    }

    #[test]
    fn zero_output_layer_gives_softplus_zero() {
        let net = EmNet::new(EmVariant::Background, ROOM, 4);
        let (sig, _) = net.forward(&random_positions(9, 1), [1.0, 1.0, 1.0], None).unwrap();
        assert!(sig.iter().all(|s| (s - std::f64::consts::LN_2).abs() < 1e-15));
        assert!((sig[0] - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn variant_mismatch_is_a_contract_error() {
        let bg = EmNet::new(EmVariant::Background, ROOM, 1);
        let hu = EmNet::new(EmVariant::Human, ROOM, 1);
        let p = random_positions(2, 2);
        assert!(bg.forward(&p, [1.0; 3], Some([2.0; 3])).is_err());
        assert!(hu.forward(&p, [1.0; 3], None).is_err());
        assert!(hu.forward(&p, [1.0; 3], Some([2.0; 3])).is_ok());
    }

    #[test]
    fn outputs_permute_with_inputs() {
        let net = perturbed(EmVariant::Human, 16, 7);
        let p = random_positions(12, 3);
        let perm: Vec<usize> = (0..12).map(|i| (i * 5) % 12).collect();
        let q: Vec<[f64; 3]> = perm.iter().map(|&i| p[i]).collect();
        let (a, _) = net.forward(&p, [1.0, 2.0, 1.5], Some([2.5, 2.0, 0.9])).unwrap();
        let (b, _) = net.forward(&q, [1.0, 2.0, 1.5], Some([2.5, 2.0, 0.9])).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(a[i].to_bits(), b[j].to_bits());
        }
        assert!(a.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn weight_and_position_gradients_match_differences() {
        let net = perturbed(EmVariant::Human, 16, 11);
        let p = random_positions(6, 5);
        let (ant, hum) = ([1.2, 3.1, 1.0], Some([2.0, 1.5, 0.9]));
        let up: Vec<f64> = (0..6).map(|i| 0.3 + 0.2 * i as f64).collect();
        let f = |n: &EmNet, p: &[[f64; 3]]| -> f64 {
            let (s, _) = n.forward(p, ant, hum).unwrap();
            s.iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward(&p, ant, hum).unwrap();
        let (g, dp) = net.backward(&cache, &up).unwrap();
        let gflat = g.flatten();
        let flat = net.mlp.flatten();
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let h = 1e-5;
            let mut a = net.clone();
            let mut b = net.clone();
            let mut va = flat.clone();
            let mut vb = flat.clone();
            va[i] += h;
            vb[i] -= h;
            a.mlp.set_flat(&va).unwrap();
            b.mlp.set_flat(&vb).unwrap();
            let fd = (f(&a, &p) - f(&b, &p)) / (2.0 * h);
            let scale = fd.abs().max(gflat[i].abs());
            if scale > 1e-6 {
                worst = worst.max((fd - gflat[i]).abs() / scale);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
        for (i, k) in [(0, 0), (2, 1), (5, 2)] {
            let h = 1e-6;
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i][k] += h;
            b[i][k] -= h;
            let fd = (f(&net, &a) - f(&net, &b)) / (2.0 * h);
            assert!(
                (fd - dp[i][k]).abs() <= 1e-4 * fd.abs().max(1e-3),
                "{fd} vs {}",
                dp[i][k]
            );
        }
    }
}
