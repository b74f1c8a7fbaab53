use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Stage, TrainConfig};
use super::eval::{evaluate, median};
use super::run::{train_augmented, train_duplicated, train_end_to_end, train_stage1, train_stage2, RunOptions};
use crate::error::{Error, Result};
use crate::scene::{generate_dataset_with, Dataset, DatasetOptions, Partition, Role, Sample, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPlan {
    /// Settings for every background fit; `iterations` is the stage-1 budget.
    pub base: TrainConfig,
    pub stage2_iterations: usize,
    /// Copies of the static data for the duplicated baseline.
    pub duplicate: usize,
    /// Every `eval_stride`-th held-out sample is scored.
    pub eval_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Stage,
    pub dynamic_mean_ssim: f64,
    pub dynamic_median_ssim: f64,
    pub static_mean_ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub split_seed: u64,
    pub scores: Vec<MethodScore>,
    /// Background digests before and after stage 2.
    pub frozen_audit: (String, String),
}

impl Comparison {
    pub fn score(&self, method: Stage) -> Option<&MethodScore> {
        self.scores.iter().find(|s| s.method == method)
    }
}

fn strided<'a>(v: Vec<&'a Sample>, stride: usize) -> Vec<&'a Sample> {
    v.into_iter().step_by(stride.max(1)).collect()
}

fn score(method: Stage, model: &super::model::Model, dynamic: &[&Sample], statics: &[&Sample]) -> Result<MethodScore> {
    let d = evaluate(model, dynamic)?;
    let s = evaluate(model, statics)?;
    Ok(MethodScore {
        method,
        dynamic_mean_ssim: d.mean_ssim,
        dynamic_median_ssim: d.median_ssim,
        static_mean_ssim: s.mean_ssim,
    })
}

/// Trains every method on one split and scores it on the held-out RX.
pub fn compare_methods(scene: &Scene, split_seed: u64, plan: &ComparisonPlan, opts: &RunOptions) -> Result<Comparison> {
    if plan.duplicate < 2 {
        return Err(Error::Config("the duplicated baseline needs duplicate >= 2".into()));
    }
    let ds = generate_dataset_with(
        scene,
        &DatasetOptions {
            split_seed,
            duplicate: plan.duplicate,
            ..Default::default()
        },
    )?;
    let dynamic = strided(ds.select(true, Role::Test), plan.eval_stride);
    let statics = ds.select(false, Role::Test);
    let cfg = |stage| TrainConfig {
        stage,
        seed: plan.base.seed ^ split_seed,
        ..plan.base.clone()
    };

    let mut scores = Vec::with_capacity(5);
    let s1 = train_stage1(&ds, scene, &cfg(Stage::BaselineStatic), opts)?.model;
    scores.push(score(Stage::BaselineStatic, &s1, &dynamic, &statics)?);
    let dup = train_duplicated(&ds, scene, &cfg(Stage::BaselineDuplicated), opts)?.model;
    scores.push(score(Stage::BaselineDuplicated, &dup, &dynamic, &statics)?);
    let aug = train_augmented(&ds, scene, &cfg(Stage::BaselineAugmented), opts)?.model;
    scores.push(score(Stage::BaselineAugmented, &aug, &dynamic, &statics)?);
    let e2e_cfg = TrainConfig {
        iterations: plan.base.iterations + plan.stage2_iterations,
        ..cfg(Stage::EndToEnd)
    };
    let e2e = train_end_to_end(&ds, scene, &e2e_cfg, opts)?.model;
    scores.push(score(Stage::EndToEnd, &e2e, &dynamic, &statics)?);
    let s2_cfg = TrainConfig {
        iterations: plan.stage2_iterations,
        ..cfg(Stage::Stage2)
    };
    let two = train_stage2(&ds, scene, &s1, &s2_cfg, opts)?;
    scores.push(score(Stage::Stage2, &two.model, &dynamic, &statics)?);
    let frozen_audit = two
        .frozen_audit
        .ok_or_else(|| Error::Contract("stage 2 returned no background audit".into()))?;
    Ok(Comparison {
        split_seed,
        scores,
        frozen_audit,
    })
}

/// Median over splits of each method's dynamic mean SSIM, in `methods` order.
pub fn median_dynamic_ssim(runs: &[Comparison], methods: &[Stage]) -> Vec<f64> {
    methods
        .iter()
        .map(|&m| {
            let v: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.score(m))
                .map(|s| s.dynamic_mean_ssim)
                .collect();
            median(&v)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub rx: usize,
    pub train_rx: usize,
    pub test_mean_ssim: f64,
}

/// Stage-1 fits on `n` RX drawn as prefixes of one shuffled order, all scored
/// on one fixed held-out set taken from the smallest prefix.
pub fn rx_scaling(
    scene: &Scene,
    counts: &[usize],
    split_seed: u64,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<Vec<ScalingPoint>> {
    let smallest = counts
        .iter()
        .copied()
        .min()
        .ok_or_else(|| Error::Config("no RX counts given".into()))?;
    if counts.iter().any(|&n| n > scene.rx.len()) {
        return Err(Error::Config(format!("scene has only {} RX", scene.rx.len())));
    }
    let mut order: Vec<usize> = (0..scene.rx.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let base = Partition::seeded(smallest, scene.humans.len(), split_seed)?;
    let test_rx: Vec<usize> = base.test_rx.iter().map(|&i| order[i]).collect();
    let mut out = Vec::with_capacity(counts.len());
    for &n in counts {
        let subset = order[..n].to_vec();
        let train_rx: Vec<usize> = subset.iter().copied().filter(|r| !test_rx.contains(r)).collect();
        let partition = Partition::explicit(train_rx.clone(), test_rx.clone(), scene.humans.len(), split_seed)?;
        let ds: Dataset = generate_dataset_with(
            scene,
            &DatasetOptions {
                split_seed,
                include_dynamic: false,
                partition: Some(partition),
                rx_subset: Some(subset),
                ..Default::default()
            },
        )?;
        let c = TrainConfig {
            stage: Stage::Stage1,
            seed: cfg.seed ^ split_seed,
            ..cfg.clone()
        };
        let model = train_stage1(&ds, scene, &c, opts)?.model;
        let report = evaluate(&model, &ds.select(false, Role::Test))?;
        out.push(ScalingPoint {
            rx: n,
            train_rx: train_rx.len(),
            test_mean_ssim: report.mean_ssim,
        });
    }
    Ok(out)
}
