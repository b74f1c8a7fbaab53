use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splat::{Checkpoint, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `inputs x outputs`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Fully connected network: ReLU between layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    generation: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub depth: usize,
    pub output: usize,
}

/// Activations kept from a forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    generation: u64,
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, o: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&o.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }
}

impl Mlp {
    /// He-uniform hidden layers; the output layer starts at zero.
    pub fn new(shape: MlpShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![shape.input];
        dims.extend(std::iter::repeat_n(shape.hidden, shape.depth));
        dims.push(shape.output);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (dims[k], dims[k + 1]);
                let w = if k + 1 == n {
                    Array2::zeros((fan_in, fan_out))
                } else {
                    let lim = (6.0 / fan_in as f64).sqrt();
                    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-lim..lim))
                };
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp { layers, generation: 0 }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.w.ncols() != l.b.len() {
                return Err(Error::Contract(format!("layer {k}: weight and bias widths differ")));
            }
            if k > 0 && layers[k - 1].w.ncols() != l.w.nrows() {
                return Err(Error::Contract(format!(
                    "layer {k} does not chain onto layer {}",
                    k - 1
                )));
            }
        }
        Ok(Mlp { layers, generation: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Row-major `(batch, input)` in, `(batch, output)` out.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Contract(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.to_owned();
        for (k, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.w) + &l.b;
            inputs.push(h);
            if k + 1 == self.layers.len() {
                return Ok((
                    z,
                    MlpCache {
                        generation: self.generation,
                        inputs,
                        pre,
                    },
                ));
            }
            h = z.mapv(|v| v.max(0.0));
            pre.push(z);
        }
        unreachable!()
    }

    /// Parameter gradients and `dL/dx` for upstream `dL/dy`.
    pub fn backward(&self, cache: &MlpCache, d_out: ArrayView2<f64>) -> Result<(MlpGrads, Array2<f64>)> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(Error::Contract("forward cache is stale for this network".into()));
        }
        let batch = cache.inputs[0].nrows();
        if d_out.nrows() != batch || d_out.ncols() != self.output_dim() {
            return Err(Error::Contract(
                "upstream gradient shape does not match the cache".into(),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = d_out.to_owned();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let a = &cache.inputs[k];
            let dw = a.t().dot(&g);
            let db = g.sum_axis(Axis(0));
            grads.push(Dense { w: dw, b: db });
            let mut dx = g.dot(&l.w.t());
            if k > 0 {
                dx.zip_mut_with(&cache.pre[k - 1], |d, z| {
                    if *z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            g = dx;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, g))
    }

    /// Visits every parameter with its gradient; bumps the generation.
    pub fn update(&mut self, grads: &MlpGrads, mut f: impl FnMut(usize, &mut f64, f64)) {
        let mut idx = 0;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, d) in l.w.iter_mut().zip(g.w.iter()) {
                f(idx, p, *d);
                idx += 1;
            }
            for (p, d) in l.b.iter_mut().zip(g.b.iter()) {
                f(idx, p, *d);
                idx += 1;
            }
        }
        self.generation += 1;
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.param_count() {
            return Err(Error::Contract("flat parameter length mismatch".into()));
        }
        let mut it = v.iter();
        for l in &mut self.layers {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|p| *p = *it.next().unwrap());
        }
        self.generation += 1;
        Ok(())
    }

    pub fn to_tensors(&self, prefix: &str) -> Vec<Tensor> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(k, l)| {
                [
                    Tensor {
                        name: format!("{prefix}.{k}.w"),
                        shape: l.w.shape().to_vec(),
                        data: l.w.iter().copied().collect(),
                    },
                    Tensor {
                        name: format!("{prefix}.{k}.b"),
                        shape: l.b.shape().to_vec(),
                        data: l.b.to_vec(),
                    },
                ]
            })
            .collect()
    }

    pub fn from_checkpoint(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let mut layers = Vec::new();
        while let Some(w) = ck.tensor(&format!("{prefix}.{}.w", layers.len())) {
            let b = ck
                .tensor(&format!("{prefix}.{}.b", layers.len()))
                .ok_or_else(|| Error::Config(format!("network '{prefix}' is missing a bias")))?;
            if w.shape.len() != 2 || b.shape.len() != 1 {
                return Err(Error::Config(format!("network '{prefix}' has malformed tensors")));
            }
            layers.push(Dense {
                w: Array2::from_shape_vec((w.shape[0], w.shape[1]), w.data.clone())
                    .map_err(|e| Error::Config(e.to_string()))?,
                b: Array1::from_vec(b.data.clone()),
            });
        }
        if layers.is_empty() {
            return Err(Error::Config(format!("checkpoint has no network '{prefix}'")));
        }
        Mlp::from_layers(layers)
    }
}
