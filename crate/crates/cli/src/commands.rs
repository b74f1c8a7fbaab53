use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rfsplat_core::em::{bistatic_radar, human_power_budget, LinkBudgetInput, QuotedLinkFigures};
use rfsplat_core::scene::{
    generate_dataset_with, gray_png, read_dataset, write_dataset, Dataset, DatasetOptions, Role, Sample, Scene,
    PAS_COLS, PAS_ROWS,
};
use rfsplat_core::splat::Checkpoint;
use rfsplat_core::theory::{
    info_gain, mode_reduction, spatial_correlation, table_csv, two_stage_vs_joint, verification_table, FisherOptions,
    ModeParams, OccludedToyScene, QuadraticProblem,
};
use rfsplat_core::train::{
    evaluate, material_ablation, material_csv, render_samples, Model, RunOptions, Stage, TrainConfig,
};
use rfsplat_core::Error;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{AblateArgs, Battery, EvalArgs, Mode, SimulateArgs, Split, Subset, TheoryArgs, TrainArgs};

const SCENE_FILE: &str = "scene.json";
const CHECKPOINT_FILE: &str = "checkpoint.rfgs";

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn put(dir: &Path, name: &str, bytes: impl AsRef<[u8]>, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    outputs.push(name.to_string());
    Ok(())
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io {
            path: path.display().to_string(),
            source: e,
        }
        .into()
    })
}

fn pretty(v: &impl serde::Serialize) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn load_scene(spec: &str) -> anyhow::Result<Scene> {
    let path = Path::new(spec);
    Ok(if path.exists() {
        Scene::load(path)?
    } else {
        Scene::bundled(spec)?
    })
}

fn dataset_scene(dir: &Path, ds: &Dataset) -> anyhow::Result<Scene> {
    let path = dir.join(SCENE_FILE);
    Ok(if path.exists() {
        Scene::load(&path)?
    } else {
        Scene::bundled(&ds.scene)?
    })
}

pub fn simulate(a: &SimulateArgs, threads: usize) -> anyhow::Result<()> {
    let scene = load_scene(&a.scene)?;
    let opts = DatasetOptions {
        split_seed: a.seed,
        duplicate: a.duplicate,
        include_dynamic: !a.static_only,
        ..Default::default()
    };
    let ds = generate_dataset_with(&scene, &opts)?;
    create_dir(&a.out)?;
    write_dataset(&ds, &a.out)?;
    let mut m = RunManifest::new(
        "simulate",
        a.seed,
        threads,
        json!({ "scene": scene.config, "dataset": opts }),
    );
    m.outputs
        .extend(["meta.json".into(), "samples/".into(), "previews/".into()]);
    put(&a.out, SCENE_FILE, pretty(&scene.config)?, &mut m.outputs)?;
    log::info!(
        "{}: {} static and {} dynamic samples in {}",
        ds.scene,
        ds.static_samples().count(),
        ds.dynamic_samples().count(),
        a.out.display()
    );
    m.write(&a.out)
}

fn curves_csv(losses: &[f64], ssim: &[f64], every: usize) -> String {
    let mut out = String::from("iteration,loss,ssim\n");
    let every = every.max(1);
    for (k, (l, s)) in losses.chunks(every).zip(ssim.chunks(every)).enumerate() {
        let it = k * every + l.len();
        let ml = l.iter().sum::<f64>() / l.len() as f64;
        let ms = s.iter().sum::<f64>() / s.len() as f64;
        writeln!(out, "{it},{ml:.9},{ms:.9}").expect("writing to a string");
    }
    out
}

pub fn train_config(path: Option<&Path>) -> anyhow::Result<TrainConfig> {
    Ok(match path {
        Some(p) => TrainConfig::from_json(&read_text(p)?).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                origin: p.display().to_string(),
                source,
            },
            other => other,
        })?,
        None => TrainConfig::default(),
    })
}

pub fn train(a: &TrainArgs, threads: usize) -> anyhow::Result<()> {
    let mut cfg = train_config(a.config.as_deref())?;
    cfg.stage = a.mode.stage();
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let stage1 = match (a.mode, &a.from_stage1) {
        (Mode::Stage2, Some(p)) => Some(Model::from_checkpoint(&Checkpoint::load(p)?)?),
        (Mode::Stage2, None) => return Err(Error::Config("stage2 needs --from-stage1".into()).into()),
        _ => None,
    };
    let ds = read_dataset(&a.dataset)?;
    let needs_people = matches!(cfg.stage, Stage::Stage2 | Stage::BaselineAugmented);
    if needs_people && ds.dynamic_samples().next().is_none() {
        return Err(Error::Config(format!("{} has no person-present samples", a.dataset.display())).into());
    }
    let scene = dataset_scene(&a.dataset, &ds)?;
    create_dir(&a.out)?;
    let opts = RunOptions {
        dump_dir: Some(&a.out),
        progress_every: a.log_every,
    };
    let outcome = rfsplat_core::train::train(&ds, &scene, &cfg, stage1.as_ref(), &opts)?;
    let mut m = RunManifest::new(
        "train",
        cfg.seed,
        threads,
        json!({
            "config": cfg,
            "dataset": a.dataset,
            "from_stage1": a.from_stage1,
            "log_every": a.log_every,
        }),
    );
    let extra = json!({ "stage": cfg.stage.name(), "config": cfg, "frozen_audit": outcome.frozen_audit });
    outcome.model.to_checkpoint(extra).save(&a.out.join(CHECKPOINT_FILE))?;
    m.outputs
        .extend([CHECKPOINT_FILE.to_string(), format!("{CHECKPOINT_FILE}.json")]);
    put(
        &a.out,
        "curves.csv",
        curves_csv(&outcome.log.losses, &outcome.log.ssim, a.log_every),
        &mut m.outputs,
    )?;
    let log = json!({ "events": outcome.log.events, "frozen_audit": outcome.frozen_audit, "steps": outcome.log.steps });
    put(&a.out, "train_log.json", pretty(&log)?, &mut m.outputs)?;
    log::info!(
        "{} finished: {} Gaussians, final loss {:.5}",
        cfg.stage.name(),
        outcome.model.gaussian_count(),
        outcome.log.losses.last().copied().unwrap_or(f64::NAN)
    );
    m.write(&a.out)
}

fn triptych(target: &[f64], pred: &[f64]) -> anyhow::Result<Vec<u8>> {
    let mut v = Vec::with_capacity(3 * target.len());
    for r in 0..PAS_ROWS {
        let span = r * PAS_COLS..(r + 1) * PAS_COLS;
        v.extend_from_slice(&target[span.clone()]);
        v.extend(pred[span.clone()].iter().map(|p| p.clamp(0.0, 1.0)));
        v.extend(
            target[span.clone()]
                .iter()
                .zip(&pred[span])
                .map(|(t, p)| (t - p.clamp(0.0, 1.0)).abs()),
        );
    }
    Ok(gray_png(&v, 3 * PAS_COLS as u32, PAS_ROWS as u32)?)
}

pub fn eval(a: &EvalArgs, threads: usize) -> anyhow::Result<()> {
    let model = Model::from_checkpoint(&Checkpoint::load(&a.checkpoint)?)?;
    let ds = read_dataset(&a.dataset)?;
    let role = match a.split {
        Split::Train => Role::Train,
        Split::Test => Role::Test,
    };
    let samples: Vec<&Sample> = ds
        .samples
        .iter()
        .filter(|s| s.role == role && !s.is_duplicate())
        .filter(|s| match a.subset {
            Subset::Static => s.is_static(),
            Subset::Dynamic => !s.is_static(),
            Subset::All => true,
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::Config("the requested split has no samples".into()).into());
    }
    if model.human.is_none() && samples.iter().any(|s| !s.is_static()) {
        log::warn!("background-only checkpoint scored on person-present samples");
    }
    let report = evaluate(&model, &samples)?;
    create_dir(&a.out)?;
    let mut m = RunManifest::new(
        "eval",
        0,
        threads,
        json!({ "checkpoint": a.checkpoint, "dataset": a.dataset, "split": format!("{:?}", a.split), "subset": format!("{:?}", a.subset), "panels": a.panels }),
    );
    put(&a.out, "metrics.csv", report.to_csv(), &mut m.outputs)?;
    let summary = json!({
        "count": report.rows.len(),
        "mean_ssim": report.mean_ssim,
        "median_ssim": report.median_ssim,
        "mean_l1": report.mean_l1,
    });
    put(&a.out, "summary.json", pretty(&summary)?, &mut m.outputs)?;
    let chosen = &samples[..a.panels.min(samples.len())];
    let preds = render_samples(&model, chosen)?;
    for (s, p) in chosen.iter().zip(&preds) {
        let name: PathBuf = ["panels", &format!("{:05}.png", s.id)].iter().collect();
        put(
            &a.out,
            &name.to_string_lossy(),
            triptych(&s.target, &p.data)?,
            &mut m.outputs,
        )?;
    }
    log::info!(
        "{} samples: mean SSIM {:.4}, median {:.4}",
        report.rows.len(),
        report.mean_ssim,
        report.median_ssim
    );
    m.write(&a.out)
}

fn theory_budget(out: &Path, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let input = LinkBudgetInput::reference();
    let r = bistatic_radar(&input)?;
    let q = QuotedLinkFigures::REFERENCE;
    let mut csv = String::from("quantity,evaluated,quoted,deviation\n");
    for (name, ours, quoted) in [
        ("p_r_dbm", r.p_r_dbm, q.p_r_dbm),
        ("snr_db", r.snr_db, q.snr_db),
        ("snr_effective_db", r.snr_effective_db, q.snr_effective_db),
    ] {
        writeln!(csv, "{name},{ours:.6},{quoted},{:.6}", ours - quoted).expect("writing to a string");
    }
    writeln!(csv, "noise_dbm,{:.6},,", r.noise_dbm).expect("writing to a string");
    put(out, "budget.csv", csv, outputs)?;
    let b = human_power_budget();
    let doc = json!({ "input": input, "report": r, "quoted": q, "power_budget": b, "power_budget_total": b.total() });
    put(out, "budget.json", pretty(&doc)?, outputs)
}

fn theory_fim(out: &Path, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let scene = OccludedToyScene::new();
    let opts = FisherOptions::default();
    let mut csv = String::from("scenario,people,parameters,effective_rank,condition,lambda_min,lambda_max\n");
    for people in [0, scene.humans.len()] {
        let r = scene.report(people, &opts)?;
        writeln!(
            csv,
            "{:?},{people},{},{},{:.6e},{:.6e},{:.6e}",
            r.scenario, r.parameters, r.effective_rank, r.condition, r.lambda_min, r.lambda_max
        )
        .expect("writing to a string");
        put(out, &format!("fim_{people}_people.json"), pretty(&r)?, outputs)?;
    }
    put(out, "fim.csv", csv, outputs)
}

fn theory_quadratic(out: &Path, instances: u64, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let mut csv = String::from(
        "instance,kappa_joint,kappa_1,kappa_2,off_diagonal_norm,decoupled,joint_iterations,stage1_iterations,stage2_iterations,worst_bound_ratio,bound_holds\n",
    );
    let orth = QuadraticProblem::random_orthogonal(instances, 30, 8, 6);
    let problems = (0..instances)
        .map(|s| (s.to_string(), s, QuadraticProblem::battery(s)))
        .chain(std::iter::once(("orthogonal".to_string(), instances, orth)));
    for (name, seed, p) in problems {
        let r = two_stage_vs_joint(&p, seed)?;
        writeln!(
            csv,
            "{name},{:.6e},{:.6e},{:.6e},{:.3e},{},{},{},{},{:.9},{}",
            r.kappa_joint,
            r.kappa_1,
            r.kappa_2,
            r.off_diagonal_norm,
            r.decoupled,
            r.joint_iterations,
            r.stage1_iterations,
            r.stage2_iterations,
            r.worst_bound_ratio,
            r.bound_holds
        )
        .expect("writing to a string");
    }
    put(out, "quadratic.csv", csv, outputs)
}

pub fn theory(a: &TheoryArgs, threads: usize) -> anyhow::Result<()> {
    create_dir(&a.out)?;
    let params = match &a.modes_config {
        Some(p) => serde_json::from_str::<ModeParams>(&read_text(p)?).map_err(|e| Error::Json {
            origin: p.display().to_string(),
            source: e,
        })?,
        None => ModeParams::default(),
    };
    let mut m = RunManifest::new(
        "theory",
        0,
        threads,
        json!({ "battery": format!("{:?}", a.battery), "modes": params, "instances": a.instances }),
    );
    let all = a.battery == Battery::All;
    let out = a.out.as_path();
    if all || a.battery == Battery::Verify {
        let rows = verification_table()?;
        put(out, "verification.csv", table_csv(&rows), &mut m.outputs)?;
        put(out, "verification.json", pretty(&rows)?, &mut m.outputs)?;
    }
    if all || a.battery == Battery::Modes {
        put(out, "modes.json", pretty(&mode_reduction(&params)?)?, &mut m.outputs)?;
    }
    if all || a.battery == Battery::Budget {
        theory_budget(out, &mut m.outputs)?;
    }
    if all || a.battery == Battery::Gain {
        let doc = json!({
            "pairs": 8, "positions": 35, "rho": 0.2,
            "effective_positions": info_gain(1, 35, 0.2)?,
            "effective_measurements": info_gain(8, 35, 0.2)?,
        });
        put(out, "gain.json", pretty(&doc)?, &mut m.outputs)?;
    }
    if all || a.battery == Battery::Correlation {
        let mut csv = String::from("delta_r_m,rho\n");
        for k in 0..=50 {
            let dr = k as f64 * 0.01;
            writeln!(csv, "{dr:.2},{:.9}", spatial_correlation(dr, 2.4e9)?).expect("writing to a string");
        }
        put(out, "correlation.csv", csv, &mut m.outputs)?;
    }
    if all || a.battery == Battery::Fim {
        theory_fim(out, &mut m.outputs)?;
    }
    if all || a.battery == Battery::Quadratic {
        theory_quadratic(out, a.instances, &mut m.outputs)?;
    }
    m.write(out)
}

pub fn ablate(a: &AblateArgs, threads: usize) -> anyhow::Result<()> {
    let scene = load_scene(&a.scene)?;
    let base = train_config(a.config.as_deref())?;
    let s1 = TrainConfig {
        iterations: a.stage1_iterations,
        seed: a.seed,
        ..base.clone()
    };
    let s2 = TrainConfig {
        iterations: a.stage2_iterations,
        seed: a.seed,
        ..base
    };
    s1.validate()?;
    s2.validate()?;
    let materials: Vec<&str> = a
        .materials
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let rows = material_ablation(&scene.config, &materials, &s1, &s2, a.seed, &RunOptions::default())?;
    create_dir(&a.out)?;
    let mut m = RunManifest::new(
        "ablate",
        a.seed,
        threads,
        json!({ "scene": scene.config, "materials": materials, "stage1": s1, "stage2": s2 }),
    );
    put(&a.out, "materials.csv", material_csv(&rows), &mut m.outputs)?;
    for r in &rows {
        log::info!(
            "{}: mean SSIM {:.4} (stage 1 {:.4})",
            r.material,
            r.mean_ssim,
            r.stage1_mean_ssim
        );
    }
    m.write(&a.out)
}
