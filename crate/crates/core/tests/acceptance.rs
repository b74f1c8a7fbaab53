//! One PASS/FAIL line per acceptance criterion, with timings.

mod common;

use std::time::Instant;

use common::pipeline::pipeline_gradient_check;
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfsplat_core::em::{bistatic_radar, human_power_budget, LinkBudgetInput, QuotedLinkFigures};
use rfsplat_core::scene::{generate_dataset, pas_to_bytes, Role, Scene};
use rfsplat_core::splat::{rasterize, GaussianSet, RenderInput, SetTag};
use rfsplat_core::theory::{
    info_gain, mode_reduction, spatial_correlation, table_csv, two_stage_vs_joint, verification_table, FisherOptions,
    ModeParams, OccludedToyScene, QuadraticProblem,
};
use rfsplat_core::train::{
    compare_methods, evaluate, median_dynamic_ssim, rx_scaling, train_stage1, ComparisonPlan, RunOptions, Stage,
    TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn theory_golden() -> Outcome {
    let t = Instant::now();
    let gain = info_gain(8, 35, 0.2).unwrap();
    let m = mode_reduction(&ModeParams::default()).unwrap();
    let modes = (m.k_max, m.k1, m.k2, m.k_eff);
    let rho = spatial_correlation(0.30, 2.4e9).unwrap();
    let total = human_power_budget().total();
    let secs = t.elapsed().as_secs_f64();
    let pass = gain == 224.0
        && modes == (675, 67, 22, 8)
        && (rho - 0.04).abs() <= 0.01
        && (total - 1.0).abs() < 1e-12
        && secs < 1.0;
    outcome(
        pass,
        format!(
            "gain {gain} modes {modes:?} rho {rho:.4} budget-1 {:.1e} in {secs:.3}s",
            total - 1.0
        ),
    )
}

fn link_budget() -> Outcome {
    let r = bistatic_radar(&LinkBudgetInput::reference()).unwrap();
    let db = |x: f64| 10.0 * x.log10();
    let four_pi = 4.0 * std::f64::consts::PI;
    let oracle = db(100.0) + db(1.58) + db(1.58) + 2.0 * db(0.125) + db(0.3) - 3.0 * db(four_pi) - 4.0 * db(5.0);
    let noise = -174.0 + db(20e6);
    let err = (r.p_r_dbm - oracle)
        .abs()
        .max((r.snr_db - (oracle - noise)).abs())
        .max((r.snr_effective_db - (oracle - noise - 6.0)).abs());
    let q = QuotedLinkFigures::REFERENCE;
    outcome(
        err < 0.01,
        format!(
            "P_r {:.2} dBm (oracle {oracle:.2}, quoted {}) SNR_eff {:.2} dB (quoted {}) max dev {err:.1e} dB",
            r.p_r_dbm, q.p_r_dbm, r.snr_effective_db, q.snr_effective_db
        ),
    )
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let splat = (0..10u64)
        .map(|seed| gradient_check(100 + seed, if seed % 2 == 0 { 0.0 } else { 49.0 }, 1))
        .fold(0.0, f64::max);
    let pipeline = pipeline_gradient_check(0..3);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        splat < 5e-4 && pipeline.error < 5e-4 && secs < 120.0,
        format!("10 scenes {splat:.1e}, pipeline {:.1e} in {secs:.1}s", pipeline.error),
    )
}

fn rasterizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for n in [1, 7, 20] {
        let gs: Vec<_> = (0..n).map(|_| random_gaussian(&mut rng, (3.0, 80.0))).collect();
        let sig: Vec<f64> = gs.iter().map(|g| g.radiance_base).collect();
        worst = worst.max(max_rel_error(&render(&gs), &brute_force(&gs, RX, &sig)));
    }

    let gs: Vec<_> = (0..8).map(|_| random_gaussian(&mut rng, (5.0, 70.0))).collect();
    let base = render(&gs);
    let mut ghost = random_gaussian(&mut rng, (5.0, 70.0));
    ghost.delta_logit = 800.0;
    ghost.radiance_base = 0.0;
    let mut with = gs.clone();
    with.insert(3, ghost);
    let identity = render(&with).iter().zip(&base).all(|(a, b)| a.to_bits() == b.to_bits());

    let mut human: Vec<_> = (0..6).map(|_| random_gaussian(&mut rng, (5.0, 70.0))).collect();
    for h in &mut human {
        h.delta_logit = 800.0;
    }
    let bgs = GaussianSet::new(SetTag::Background, gs.clone());
    let hs = GaussianSet::new(SetTag::Human, human.clone());
    let sets = [&bgs, &hs];
    let both = rasterize(&RenderInput::new(&sets, RX)).unwrap().0.data;
    let all: Vec<_> = gs.iter().chain(&human).copied().collect();
    let sig: Vec<f64> = gs
        .iter()
        .map(|_| 0.0)
        .chain(human.iter().map(|h| h.radiance_base))
        .collect();
    let expect: Vec<f64> = base
        .iter()
        .zip(brute_force(&all, RX, &sig))
        .map(|(a, b)| a + b)
        .collect();
    let superposition = max_rel_error(&both, &expect);

    outcome(
        worst < 1e-6 && identity && superposition < 1e-6,
        format!("brute force {worst:.1e}, transparent identity {identity}, superposition {superposition:.1e}"),
    )
}

fn comparison_plan() -> ComparisonPlan {
    ComparisonPlan {
        base: TrainConfig {
            iterations: 400,
            init_points: 750,
            max_background: 1500,
            densify_interval: 100,
            ..TrainConfig::default()
        },
        stage2_iterations: 400,
        duplicate: 2,
        eval_stride: 3,
    }
}

fn method_ordering() -> Outcome {
    let t = Instant::now();
    let scene = Scene::bundled("bedroom").unwrap();
    let plan = comparison_plan();
    let runs: Vec<_> = (0..3u64)
        .map(|seed| compare_methods(&scene, seed, &plan, &RunOptions::default()).unwrap())
        .collect();
    let methods = [
        Stage::BaselineDuplicated,
        Stage::BaselineStatic,
        Stage::BaselineAugmented,
        Stage::EndToEnd,
        Stage::Stage2,
    ];
    let m = median_dynamic_ssim(&runs, &methods);
    let (dup, stat, aug, e2e, two) = (m[0], m[1], m[2], m[3], m[4]);
    let frozen = runs.iter().all(|r| r.frozen_audit.0 == r.frozen_audit.1);
    let secs = t.elapsed().as_secs_f64();
    let ordered = dup < stat && stat < aug && aug <= e2e && e2e < two;
    outcome(
        ordered && two >= stat + 0.02 && frozen && secs <= 1800.0,
        format!(
            "dup {dup:.4} static {stat:.4} aug {aug:.4} e2e {e2e:.4} two-stage {two:.4} \
             (margin {:+.4}) background frozen {frozen} in {secs:.0}s",
            two - stat
        ),
    )
}

fn observability() -> Outcome {
    let t = Instant::now();
    let scene = OccludedToyScene::new();
    let opts = FisherOptions::default();
    let st = scene.report(0, &opts).unwrap();
    let dy = scene.report(10, &opts).unwrap();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        dy.effective_rank > st.effective_rank && dy.condition < st.condition && secs < 300.0,
        format!(
            "rank {} -> {}, kappa {:.3e} -> {:.3e} in {secs:.1}s",
            st.effective_rank, dy.effective_rank, st.condition, dy.condition
        ),
    )
}

fn quadratics() -> Outcome {
    let t = Instant::now();
    let reports: Vec<_> = (0..50u64)
        .map(|s| two_stage_vs_joint(&QuadraticProblem::battery(s), s).unwrap())
        .collect();
    let kappa = reports.iter().all(|r| r.kappa_joint >= r.kappa_1.max(r.kappa_2));
    let bound = reports.iter().all(|r| r.bound_holds);
    let orth = two_stage_vs_joint(&QuadraticProblem::random_orthogonal(9, 30, 8, 6), 9).unwrap();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        kappa && bound && orth.off_diagonal_norm == 0.0 && orth.bound_holds && secs < 30.0,
        format!(
            "kappa ordering {kappa}, bound {bound}, orthogonal off-diagonal {:e} in {secs:.1}s",
            orth.off_diagonal_norm
        ),
    )
}

fn scaling_config() -> TrainConfig {
    TrainConfig {
        iterations: 300,
        init_points: 750,
        max_background: 1500,
        densify_interval: 75,
        ..TrainConfig::default()
    }
}

fn rx_monotone() -> Outcome {
    let t = Instant::now();
    let scene = Scene::bundled("bedroom").unwrap();
    let counts = [25, 50, 100];
    let runs: Vec<_> = (0..3u64)
        .map(|seed| rx_scaling(&scene, &counts, seed, &scaling_config(), &RunOptions::default()).unwrap())
        .collect();
    let med: Vec<f64> = (0..counts.len())
        .map(|i| rfsplat_core::train::median(&runs.iter().map(|r| r[i].test_mean_ssim).collect::<Vec<_>>()))
        .collect();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        med.windows(2).all(|w| w[1] > w[0]),
        format!("{:?} RX -> {:.4?} in {secs:.0}s", counts, med),
    )
}

fn rerun_bytes() -> Vec<Vec<u8>> {
    let scene = Scene::bundled("bedroom").unwrap();
    let ds = generate_dataset(&scene, 5).unwrap();
    let mut out: Vec<Vec<u8>> = ds.samples.iter().map(|s| pas_to_bytes(&s.pas)).collect();
    let cfg = TrainConfig {
        iterations: 40,
        init_points: 200,
        max_background: 300,
        densify_interval: 20,
        ..TrainConfig::default()
    };
    let model = train_stage1(&ds, &scene, &cfg, &RunOptions::default()).unwrap().model;
    out.push(model.to_checkpoint(serde_json::Value::Null).to_bytes());
    out.push(
        evaluate(&model, &ds.select(false, Role::Test))
            .unwrap()
            .to_csv()
            .into_bytes(),
    );
    out.push(table_csv(&verification_table().unwrap()).into_bytes());
    out
}

fn determinism() -> Outcome {
    let a = rerun_bytes();
    let b = rerun_bytes();
    let same = a == b;
    outcome(same, format!("{} artefacts compared, identical {same}", a.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("theory golden numbers", theory_golden),
        ("bistatic link budget", link_budget),
        ("gradients vs central differences", gradients),
        ("tiled rasterizer vs brute force", rasterizer),
        ("method ordering on bedroom", method_ordering),
        ("observability with people", observability),
        ("two-stage quadratics", quadratics),
        ("held-out SSIM vs RX count", rx_monotone),
        ("byte-identical re-run", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {verdict} {name}: {} [{:.1}s]",
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
