use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::PAS_LEN;
use crate::splat::{rasterize, rasterize_backward, Checkpoint, GaussianPrimitive, GaussianSet, RenderInput, SetTag};

pub const MAX_PARAMS: usize = 2000;
pub const FULL_PIXEL_MAX_PARAMS: usize = 200;
pub const DEFAULT_PIXELS: usize = 512;
/// Position, log-scale and radiance of every trainable Gaussian.
pub const PARAMS_PER_GAUSSIAN: usize = 7;
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Static,
    Dynamic,
}

/// One PAS observation; `gain` scales the rendered image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub viewpoint: [f64; 3],
    pub gain: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PixelSampling {
    /// This many pixels drawn without replacement from the lit ones, rescaled.
    Random(usize),
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherOptions {
    pub sigma: f64,
    pub sampling: PixelSampling,
    pub seed: u64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions {
            sigma: 0.01,
            sampling: PixelSampling::Random(DEFAULT_PIXELS),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub scenario: Scenario,
    pub parameters: usize,
    pub measurements: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Infinite when the smallest eigenvalue is not positive.
    pub condition: f64,
    pub effective_rank: usize,
    pub max_asymmetry: f64,
}

fn trainable_count(sets: &[GaussianSet]) -> usize {
    sets.iter().filter(|s| !s.frozen).map(|s| s.len()).sum()
}

fn measurement_seed(base: u64, m: &Measurement) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for v in m.viewpoint.iter().chain([&m.gain]) {
        h.update(v.to_bits().to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// `(1/sigma^2) sum J^T J` over the measurements, in fixed order.
pub fn fisher_matrix(sets: &[GaussianSet], measurements: &[Measurement], opts: &FisherOptions) -> Result<DMatrix<f64>> {
    let n = trainable_count(sets) * PARAMS_PER_GAUSSIAN;
    if n == 0 {
        return Err(Error::Domain("no trainable Gaussians".into()));
    }
    if n > MAX_PARAMS {
        return Err(Error::Domain(format!(
            "{n} parameters exceed the limit of {MAX_PARAMS}"
        )));
    }
    if matches!(opts.sampling, PixelSampling::Full) && n > FULL_PIXEL_MAX_PARAMS {
        return Err(Error::Domain(format!(
            "full-pixel mode allows at most {FULL_PIXEL_MAX_PARAMS} parameters"
        )));
    }
    if !(opts.sigma > 0.0 && opts.sigma.is_finite()) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let refs: Vec<&GaussianSet> = sets.iter().collect();
    let parts: Vec<DMatrix<f64>> = measurements
        .par_iter()
        .map(|m| measurement_information(&refs, m, opts, n))
        .collect::<Result<_>>()?;
    let mut fim = DMatrix::zeros(n, n);
    for p in &parts {
        fim += p;
    }
    Ok(fim / (opts.sigma * opts.sigma))
}

fn measurement_information(
    sets: &[&GaussianSet],
    m: &Measurement,
    opts: &FisherOptions,
    n: usize,
) -> Result<DMatrix<f64>> {
    let input = RenderInput::new(sets, m.viewpoint);
    let (img, ws) = rasterize(&input)?;
    let pixels: Vec<usize> = match opts.sampling {
        PixelSampling::Full => (0..PAS_LEN).collect(),
        PixelSampling::Random(k) => {
            let lit: Vec<usize> = (0..PAS_LEN).filter(|&p| img.data[p] > 0.0).collect();
            if lit.len() <= k {
                lit
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(measurement_seed(opts.seed, m));
                let mut idx: Vec<usize> = sample(&mut rng, lit.len(), k).into_iter().map(|i| lit[i]).collect();
                idx.sort_unstable();
                idx
            }
        }
    };
    let weight = match opts.sampling {
        PixelSampling::Random(_) if !pixels.is_empty() => {
            let lit = img.data.iter().filter(|&&v| v > 0.0).count();
            lit as f64 / pixels.len() as f64
        }
        _ => 1.0,
    };
    let mut jac = DMatrix::zeros(pixels.len(), n);
    let mut d_image = vec![0.0; PAS_LEN];
    for (r, &p) in pixels.iter().enumerate() {
        d_image[p] = 1.0;
        let g = rasterize_backward(&input, &ws, &d_image)?;
        d_image[p] = 0.0;
        let mut col = 0;
        for sg in g.sets.iter().flatten() {
            for gg in &sg.grads {
                let row = gg
                    .position
                    .iter()
                    .chain(&gg.log_scale)
                    .chain(std::iter::once(&gg.radiance_base));
                for v in row {
                    jac[(r, col)] = m.gain * v;
                    col += 1;
                }
            }
        }
    }
    Ok(jac.tr_mul(&jac) * weight)
}

impl FisherReport {
    pub fn from_matrix(fim: &DMatrix<f64>, scenario: Scenario, measurements: usize) -> Result<FisherReport> {
        let n = fim.nrows();
        let scale = fim.amax().max(f64::MIN_POSITIVE);
        let max_asymmetry = (fim - fim.transpose()).amax() / scale;
        let sym = (fim + fim.transpose()) * 0.5;
        let eig = sym
            .try_symmetric_eigen(1e-15, 100_000)
            .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let lambda_min = eigenvalues[0];
        let lambda_max = eigenvalues[n - 1];
        let condition = if lambda_min > 0.0 {
            lambda_max / lambda_min
        } else {
            f64::INFINITY
        };
        let effective_rank = eigenvalues.iter().filter(|&&l| l > RANK_RTOL * lambda_max).count();
        Ok(FisherReport {
            scenario,
            parameters: n,
            measurements,
            eigenvalues,
            lambda_min,
            lambda_max,
            condition,
            effective_rank,
            max_asymmetry,
        })
    }
}

/// Receiver-side measurements plus, for each person position, the field the
/// body re-radiates after seeing the room from where it stands.
pub fn measurements_for(rx: &[[f64; 3]], humans: Option<&[[f64; 3]]>, relay_gain: f64) -> Vec<Measurement> {
    let mut out: Vec<Measurement> = rx
        .iter()
        .map(|&viewpoint| Measurement { viewpoint, gain: 1.0 })
        .collect();
    out.extend(humans.unwrap_or_default().iter().map(|&viewpoint| Measurement {
        viewpoint,
        gain: relay_gain,
    }));
    out
}

pub fn fim_from_renderer(
    ck: &Checkpoint,
    rx: &[[f64; 3]],
    humans: Option<&[[f64; 3]]>,
    relay_gain: f64,
    opts: &FisherOptions,
) -> Result<FisherReport> {
    let sets: Vec<GaussianSet> = ck.sets.iter().map(|(_, s)| s.clone()).collect();
    let ms = measurements_for(rx, humans, relay_gain);
    let fim = fisher_matrix(&sets, &ms, opts)?;
    let scenario = if humans.is_some_and(|h| !h.is_empty()) {
        Scenario::Dynamic
    } else {
        Scenario::Static
    };
    FisherReport::from_matrix(&fim, scenario, ms.len())
}

/// A room split by an opaque divider: receivers stand on one side, half of
/// the emitters hang on the other.
#[derive(Clone, Debug, PartialEq)]
pub struct OccludedToyScene {
    pub sets: Vec<GaussianSet>,
    pub rx: Vec<[f64; 3]>,
    pub humans: Vec<[f64; 3]>,
    pub relay_gain: f64,
}

impl OccludedToyScene {
    pub const ROOM: [f64; 3] = [4.0, 3.0, 2.5];
    pub const DIVIDER_X: f64 = 2.0;

    pub fn new() -> Self {
        let [_, ly, lz] = Self::ROOM;
        let mut emitters = Vec::new();
        for (i, x) in [0.7, 1.4, 2.6, 3.3].into_iter().enumerate() {
            for (j, y) in [0.8, 2.2].into_iter().enumerate() {
                let z = 1.7 + 0.25 * ((i + j) % 2) as f64;
                emitters.push(GaussianPrimitive::isotropic(
                    [x, y, z],
                    0.15,
                    0.9,
                    0.4 + 0.1 * (i + 2 * j) as f64,
                ));
            }
        }
        let mut wall = Vec::new();
        for layer in [-0.06, 0.06] {
            let mut y = 0.0;
            while y <= ly + 1e-9 {
                let mut z = 0.0;
                while z <= lz + 1e-9 {
                    let mut g = GaussianPrimitive::isotropic([Self::DIVIDER_X + layer, y, z], 0.2, 1e-6, 0.0);
                    g.log_scale[0] = 0.03f64.ln();
                    wall.push(g);
                    z += 0.15;
                }
                y += 0.15;
            }
        }
        let mut divider = GaussianSet::new(SetTag::Background, wall);
        divider.frozen = true;
        let rx = (0..8)
            .map(|k| [0.4 + 0.4 * (k % 4) as f64, 0.6 + 1.8 * (k / 4) as f64, 0.6])
            .collect();
        let humans = (0..10)
            .map(|k| [0.5 + 3.0 * k as f64 / 9.0, 1.2 + 0.6 * (k % 2) as f64, 0.9])
            .collect();
        OccludedToyScene {
            sets: vec![GaussianSet::new(SetTag::Background, emitters), divider],
            rx,
            humans,
            relay_gain: 0.1,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.sets.push(("emitters".into(), self.sets[0].clone()));
        ck.sets.push(("divider".into(), self.sets[1].clone()));
        ck
    }

    pub fn report(&self, humans: usize, opts: &FisherOptions) -> Result<FisherReport> {
        let h = &self.humans[..humans.min(self.humans.len())];
        let ms = measurements_for(&self.rx, Some(h), self.relay_gain);
        let fim = fisher_matrix(&self.sets, &ms, opts)?;
        let scenario = if h.is_empty() {
            Scenario::Static
        } else {
            Scenario::Dynamic
        };
        FisherReport::from_matrix(&fim, scenario, ms.len())
    }
}

impl Default for OccludedToyScene {
    fn default() -> Self {
        Self::new()
    }
}
