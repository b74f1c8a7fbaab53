use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{AdamClock, GaussianMoments, NetMoments};
use super::config::{Stage, TrainConfig};
use super::densify::{densify_and_prune, DensifyOutcome, DensifyRule, DensifyStats};
use super::model::{Model, PartGrads, View};
use crate::error::{Error, Result};
use crate::scene::{Dataset, Role, Sample, Scene, PAS_COLS, PAS_ROWS};
use crate::splat::{loss_with, GaussianPrimitive, GaussianSet, SetTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensifyEvent {
    pub iteration: usize,
    pub set: SetTag,
    pub outcome: DensifyOutcome,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stage: Option<Stage>,
    pub steps: usize,
    pub pool: usize,
    pub losses: Vec<f64>,
    pub ssim: Vec<f64>,
    pub events: Vec<DensifyEvent>,
}

impl TrainLog {
    /// Mean loss of consecutive windows.
    pub fn window_means(&self, window: usize) -> Vec<f64> {
        self.losses
            .chunks_exact(window)
            .map(|c| c.iter().sum::<f64>() / window as f64)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainLog,
    /// Frozen background digest before and after the run.
    pub frozen_audit: Option<(String, String)>,
}

/// Run-time knobs that are not part of the recorded configuration.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions<'a> {
    /// Where a parameter dump goes if the loss turns non-finite.
    pub dump_dir: Option<&'a Path>,
    /// Emit a progress line every this many steps.
    pub progress_every: usize,
}

/// Bit-exact digest of a background set and its radiance net.
pub fn background_digest(model: &Model) -> String {
    let mut h = Sha256::new();
    for g in &model.background.gaussians {
        for v in g.to_array() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    for v in model.em_background.mlp.flatten() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn key(p: &[f64; 3]) -> [u64; 3] {
    p.map(f64::to_bits)
}

struct Part {
    moments: GaussianMoments,
    stats: DensifyStats,
}

impl Part {
    fn new(n: usize) -> Self {
        Part {
            moments: GaussianMoments::new(n),
            stats: DensifyStats::new(n),
        }
    }
}

fn apply(
    set: &mut GaussianSet,
    part: &mut Part,
    grads: &PartGrads,
    clock: &AdamClock,
    cfg: &TrainConfig,
    progress: f64,
) -> Result<()> {
    let moments = &mut part.moments;
    let pos_scale = cfg.position_decay.powf(progress);
    set.update(|i, g| {
        let mut p = g.to_array();
        moments.step(clock, i, &mut p, &grads.gaussians[i], |k| {
            let lr = cfg.lr.for_slot(k);
            if k < 3 {
                lr * pos_scale
            } else {
                lr
            }
        });
        *g = GaussianPrimitive::from_array(&p);
        g.normalize_rotation();
        g.radiance_base = g.radiance_base.max(0.0);
    })
}

fn dump(model: &Model, dir: Option<&Path>, iteration: usize) -> String {
    let Some(dir) = dir else {
        return String::new();
    };
    let path = dir.join(format!("nonfinite_iter{iteration:06}.rfgs"));
    let ck = model.to_checkpoint(serde_json::json!({ "iteration": iteration, "reason": "non-finite loss" }));
    match std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .and_then(|_| ck.save(&path))
    {
        Ok(()) => format!("; parameters dumped to {}", path.display()),
        Err(e) => format!("; parameter dump failed: {e}"),
    }
}

/// The optimisation loop shared by every stage.
fn optimize(
    model: &mut Model,
    pool: &[&Sample],
    steps: usize,
    cfg: &TrainConfig,
    scene: &Scene,
    opts: &RunOptions,
) -> Result<TrainLog> {
    if pool.is_empty() {
        return Err(Error::Config("no training samples for this stage".into()));
    }
    let train_bg = !model.background.frozen;
    let train_human = model.human.is_some();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_0001);
    let mut densify_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_0002);
    let mut clock = AdamClock::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut bg = Part::new(model.background.len());
    let mut hu = Part::new(model.human.as_ref().map_or(0, |h| h.set.len()));
    let mut em_bg = NetMoments::new(&model.em_background.mlp);
    let (mut em_h, mut def) = match &model.human {
        Some(h) => (Some(NetMoments::new(&h.em.mlp)), Some(NetMoments::new(&h.deform.mlp))),
        None => (None, None),
    };
    let mut cache: HashMap<[u64; 3], Vec<f64>> = HashMap::new();
    let densify_stop = (cfg.densify_until * steps as f64) as usize;
    let split_scale = cfg.split_scale_fraction * scene.room_diagonal();
    let mut log = TrainLog {
        steps,
        pool: pool.len(),
        ..TrainLog::default()
    };

    for it in 0..steps {
        let s = pool[rng.gen_range(0..pool.len())];
        let view = View::from(s);
        let frozen_sp = if train_bg {
            None
        } else {
            if !cache.contains_key(&key(&view.antenna)) {
                cache.insert(key(&view.antenna), model.background_softplus(view.antenna)?);
            }
            Some(cache[&key(&view.antenna)].as_slice())
        };
        let (img, tape) = model.render_with(&view, frozen_sp)?;
        let lv = loss_with(&img.data, &s.target, PAS_COLS, PAS_ROWS, cfg.lambda_ssim)?;
        if !lv.loss.is_finite() {
            let where_ = dump(model, opts.dump_dir, it);
            return Err(Error::Numeric(format!(
                "loss became non-finite at iteration {it} (sample {}){where_}",
                s.id
            )));
        }
        let grads = model.backward(&tape, &lv.grad)?;
        if !grads.is_finite() {
            let where_ = dump(model, opts.dump_dir, it);
            return Err(Error::Numeric(format!(
                "gradient became non-finite at iteration {it}{where_}"
            )));
        }
        clock.tick();
        let progress = it as f64 / steps.max(2).saturating_sub(1) as f64;
        if let Some(g) = &grads.background {
            if !train_bg {
                return Err(Error::Contract("gradient produced for a frozen background".into()));
            }
            apply(&mut model.background, &mut bg, g, &clock, cfg, progress)?;
            bg.stats.record(&g.mean2d, tape.radiance(), |i| tape.visible(i));
        }
        if let Some(g) = &grads.em_background {
            em_bg.step(&clock, &mut model.em_background.mlp, g, cfg.lr.network);
        }
        if let (Some(hm), Some(g)) = (model.human.as_mut(), &grads.human) {
            apply(&mut hm.set, &mut hu, g, &clock, cfg, progress)?;
            let nb = tape.background_len();
            hu.stats
                .record(&g.mean2d, &tape.radiance()[nb..], |i| tape.visible(nb + i));
            if let (Some(m), Some(gn)) = (em_h.as_mut(), &grads.em_human) {
                m.step(&clock, &mut hm.em.mlp, gn, cfg.lr.network);
            }
            if let (Some(m), Some(gn)) = (def.as_mut(), &grads.deform) {
                m.step(&clock, &mut hm.deform.mlp, gn, cfg.lr.network);
            }
        }
        log.losses.push(lv.loss);
        log.ssim.push(lv.ssim);

        let done = it + 1;
        if done % cfg.densify_interval == 0 && done <= densify_stop && done < steps {
            if train_bg {
                let rule = DensifyRule {
                    grad_threshold: cfg.densify_grad_threshold,
                    split_scale,
                    prune_delta_eps: cfg.prune_delta_eps,
                    prune_contribution: cfg.prune_contribution,
                    cap: cfg.max_background,
                };
                let out = densify_and_prune(
                    &mut model.background,
                    &mut bg.moments,
                    &bg.stats,
                    &rule,
                    &mut densify_rng,
                )?;
                bg.stats = DensifyStats::new(model.background.len());
                log.events.push(DensifyEvent {
                    iteration: done,
                    set: SetTag::Background,
                    outcome: out,
                    count: model.background.len(),
                });
            }
            if let (true, Some(hm)) = (train_human, model.human.as_mut()) {
                let rule = DensifyRule {
                    grad_threshold: cfg.densify_grad_threshold,
                    split_scale,
                    prune_delta_eps: cfg.prune_delta_eps,
                    prune_contribution: cfg.prune_contribution,
                    cap: cfg.max_human,
                };
                let out = densify_and_prune(&mut hm.set, &mut hu.moments, &hu.stats, &rule, &mut densify_rng)?;
                hu.stats = DensifyStats::new(hm.set.len());
                log.events.push(DensifyEvent {
                    iteration: done,
                    set: SetTag::Human,
                    outcome: out,
                    count: hm.set.len(),
                });
            }
        }
        if opts.progress_every > 0 && done % opts.progress_every == 0 {
            let w = opts.progress_every.min(log.losses.len());
            let recent = log.losses[log.losses.len() - w..].iter().sum::<f64>() / w as f64;
            log::info!(
                "step {done}/{steps}: loss {recent:.5}, gaussians {}",
                model.gaussian_count()
            );
        }
    }
    if !model.is_finite() {
        let where_ = dump(model, opts.dump_dir, steps);
        return Err(Error::Numeric(format!("parameters became non-finite{where_}")));
    }
    Ok(log)
}

/// Scales every background `radiance_base` so the first renders match the
/// mean target brightness of a few training samples.
pub fn calibrate_radiance(model: &mut Model, pool: &[&Sample]) -> Result<f64> {
    let probe: Vec<&Sample> = pool.iter().step_by((pool.len() / 8).max(1)).take(8).copied().collect();
    let mut pred = 0.0;
    let mut target = 0.0;
    for s in &probe {
        let (img, _) = model.render(&View {
            human: None,
            ..View::from(*s)
        })?;
        pred += img.data.iter().sum::<f64>();
        target += s.target.iter().sum::<f64>();
    }
    if !(pred > 0.0 && target > 0.0) {
        return Ok(1.0);
    }
    let ratio = target / pred;
    model.background.update(|_, g| g.radiance_base *= ratio)?;
    Ok(ratio)
}

fn fresh_background(scene: &Scene, cfg: &TrainConfig, pool: &[&Sample]) -> Result<Model> {
    let mut model = Model::new_background(scene, cfg);
    if !pool.is_empty() {
        calibrate_radiance(&mut model, pool)?;
    }
    Ok(model)
}

fn static_train(ds: &Dataset, copies: bool) -> Vec<&Sample> {
    ds.samples
        .iter()
        .filter(|s| s.is_static() && s.role == Role::Train && (copies || s.copy == 0))
        .collect()
}

fn dynamic_train(ds: &Dataset) -> Vec<&Sample> {
    ds.select(true, Role::Train)
}

pub fn train_stage1(ds: &Dataset, scene: &Scene, cfg: &TrainConfig, opts: &RunOptions) -> Result<TrainOutcome> {
    let pool = static_train(ds, false);
    let mut model = fresh_background(scene, cfg, &pool)?;
    let mut log = optimize(&mut model, &pool, cfg.iterations, cfg, scene, opts)?;
    log.stage = Some(cfg.stage);
    Ok(TrainOutcome {
        model,
        log,
        frozen_audit: None,
    })
}

/// Static data repeated `k` times and visited for `k` times as many steps.
pub fn train_duplicated(ds: &Dataset, scene: &Scene, cfg: &TrainConfig, opts: &RunOptions) -> Result<TrainOutcome> {
    let originals = static_train(ds, false).len();
    let pool = static_train(ds, true);
    if originals == 0 || pool.len() == originals {
        return Err(Error::Config(
            "duplicated baseline needs a dataset generated with duplicate > 1".into(),
        ));
    }
    let factor = pool.len() / originals;
    let mut model = fresh_background(scene, cfg, &pool)?;
    let mut log = optimize(&mut model, &pool, cfg.iterations * factor, cfg, scene, opts)?;
    log.stage = Some(cfg.stage);
    Ok(TrainOutcome {
        model,
        log,
        frozen_audit: None,
    })
}

/// Background-only model fitted to static and person-present data alike.
pub fn train_augmented(ds: &Dataset, scene: &Scene, cfg: &TrainConfig, opts: &RunOptions) -> Result<TrainOutcome> {
    let mut pool = static_train(ds, false);
    pool.extend(dynamic_train(ds));
    let mut model = fresh_background(scene, cfg, &pool)?;
    let mut log = optimize(&mut model, &pool, cfg.iterations, cfg, scene, opts)?;
    log.stage = Some(cfg.stage);
    Ok(TrainOutcome {
        model,
        log,
        frozen_audit: None,
    })
}

/// Freezes the stage-1 background and fits the person part on dynamic data.
pub fn train_stage2(
    ds: &Dataset,
    scene: &Scene,
    stage1: &Model,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<TrainOutcome> {
    if stage1.human.is_some() {
        return Err(Error::Config("stage 2 starts from a background-only checkpoint".into()));
    }
    let pool = dynamic_train(ds);
    let mut model = stage1.clone();
    model.background.frozen = true;
    model.attach_human(scene, cfg);
    let before = background_digest(&model);
    let mut log = optimize(&mut model, &pool, cfg.iterations, cfg, scene, opts)?;
    let after = background_digest(&model);
    if before != after {
        return Err(Error::Contract("frozen background changed during stage 2".into()));
    }
    log.stage = Some(cfg.stage);
    Ok(TrainOutcome {
        model,
        log,
        frozen_audit: Some((before, after)),
    })
}

/// Background and person part fitted jointly from scratch.
pub fn train_end_to_end(ds: &Dataset, scene: &Scene, cfg: &TrainConfig, opts: &RunOptions) -> Result<TrainOutcome> {
    let mut pool = dynamic_train(ds);
    if pool.is_empty() {
        pool = static_train(ds, false);
    }
    let mut model = fresh_background(scene, cfg, &pool)?;
    model.attach_human(scene, cfg);
    let mut log = optimize(&mut model, &pool, cfg.iterations, cfg, scene, opts)?;
    log.stage = Some(cfg.stage);
    Ok(TrainOutcome {
        model,
        log,
        frozen_audit: None,
    })
}

/// Dispatches on `cfg.stage`; stage 2 needs the stage-1 model.
pub fn train(
    ds: &Dataset,
    scene: &Scene,
    cfg: &TrainConfig,
    stage1: Option<&Model>,
    opts: &RunOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    match cfg.stage {
        Stage::Stage1 | Stage::BaselineStatic => train_stage1(ds, scene, cfg, opts),
        Stage::BaselineDuplicated => train_duplicated(ds, scene, cfg, opts),
        Stage::BaselineAugmented => train_augmented(ds, scene, cfg, opts),
        Stage::EndToEnd => train_end_to_end(ds, scene, cfg, opts),
        Stage::Stage2 => {
            let s1 = stage1.ok_or_else(|| Error::Config("stage 2 needs a stage-1 checkpoint".into()))?;
            train_stage2(ds, scene, s1, cfg, opts)
        }
    }
}
