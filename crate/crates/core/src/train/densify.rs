use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::GaussianMoments;
use crate::error::{Error, Result};
use crate::splat::{rotation_matrix, GaussianSet};

/// Running image-plane gradient and radiance statistics per Gaussian.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyStats {
    pub grad_sum: Vec<f64>,
    pub seen: Vec<u32>,
    pub contribution: Vec<f64>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        DensifyStats {
            grad_sum: vec![0.0; n],
            seen: vec![0; n],
            contribution: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.grad_sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_sum.is_empty()
    }

    /// `visible(i)` tells whether Gaussian `i` was drawn in this render.
    pub fn record(&mut self, mean2d: &[f64], radiance: &[f64], visible: impl Fn(usize) -> bool) {
        for i in 0..self.grad_sum.len() {
            if visible(i) {
                self.grad_sum[i] += mean2d[i];
                self.seen[i] += 1;
                self.contribution[i] = self.contribution[i].max(radiance[i].abs());
            }
        }
    }

    pub fn mean_grad(&self, i: usize) -> f64 {
        if self.seen[i] == 0 {
            0.0
        } else {
            self.grad_sum[i] / self.seen[i] as f64
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DensifyRule {
    pub grad_threshold: f64,
    /// Max scale above which a Gaussian is split rather than cloned.
    pub split_scale: f64,
    pub prune_delta_eps: f64,
    pub prune_contribution: f64,
    pub cap: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensifyOutcome {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub capped: bool,
}

const SPLIT_SHRINK: f64 = 1.6;

/// Clones or splits high-gradient Gaussians, then drops transparent silent ones.
pub fn densify_and_prune(
    set: &mut GaussianSet,
    moments: &mut GaussianMoments,
    stats: &DensifyStats,
    rule: &DensifyRule,
    rng: &mut ChaCha8Rng,
) -> Result<DensifyOutcome> {
    if set.frozen {
        return Err(Error::Contract("cannot densify a frozen set".into()));
    }
    let n = set.len();
    if stats.len() != n || moments.len() != n {
        return Err(Error::Contract("densify statistics do not match the set".into()));
    }
    let mut out = DensifyOutcome::default();
    let mut keep = vec![true; n];
    let mut added = Vec::new();
    for i in 0..n {
        if stats.mean_grad(i) <= rule.grad_threshold {
            continue;
        }
        let g = set.gaussians[i];
        let max_scale = g.scale().into_iter().fold(0.0, f64::max);
        // a clone adds one Gaussian and a split replaces one with two
        if n - out.split + added.len() + 1 > rule.cap {
            out.capped = true;
            log::warn!("{:?} set reached its cap of {} gaussians", set.tag, rule.cap);
            break;
        }
        if max_scale <= rule.split_scale {
            added.push(g);
            out.cloned += 1;
        } else {
            let r = rotation_matrix(&g.rotation);
            let s = g.scale();
            for _ in 0..2 {
                let z: [f64; 3] = std::array::from_fn(|k| s[k] * standard_normal(rng));
                let mut child = g;
                for a in 0..3 {
                    child.position[a] += (0..3).map(|b| r[(a, b)] * z[b]).sum::<f64>();
                    child.log_scale[a] -= SPLIT_SHRINK.ln();
                }
                added.push(child);
            }
            keep[i] = false;
            out.split += 1;
        }
    }
    for (i, g) in set.gaussians.iter().enumerate() {
        if keep[i] && g.delta() > 1.0 - rule.prune_delta_eps && stats.contribution[i] < rule.prune_contribution {
            keep[i] = false;
            out.pruned += 1;
        }
    }
    if !keep.iter().any(|k| *k) && added.is_empty() {
        keep[0] = true;
        out.pruned -= 1;
    }
    let mut it = keep.iter();
    set.gaussians.retain(|_| *it.next().unwrap());
    moments.retain(&keep);
    for g in added {
        set.gaussians.push(g);
        moments.push_zero();
    }
    Ok(out)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
