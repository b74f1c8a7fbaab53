use std::f64::consts::PI;

use proptest::prelude::*;
use rfsplat_core::em::{bistatic_radar, dbm_to_watts, LinkBudgetInput, C0};
use rfsplat_core::scene::{
    generate_dataset, generate_dataset_with, read_dataset, render_ground_truth_pas, render_paths, retained_fraction,
    trace_paths, write_dataset, DatasetOptions, PathKind, Role, Scene, POWER_FLOOR_DBM,
};
use serde_json::json;

const F: f64 = 2.4e9;

fn scene(v: serde_json::Value) -> Scene {
    Scene::from_json(&v.to_string()).unwrap()
}

fn empty_room(tx: [f64; 3], rx: Vec<[f64; 3]>) -> Scene {
    scene(json!({
        "name": "empty", "room": [8.0, 6.0, 3.0], "freq_hz": F,
        "tx": {"position": tx, "power_dbm": 20.0},
        "rx_grid": rx,
    }))
}

fn walled(tx: [f64; 3], rx: [f64; 3], extra: serde_json::Value) -> Scene {
    let mut slabs = vec![
        json!({"axis": "z", "offset": 0.0, "span_u": [0, 6], "span_v": [0, 5], "material": "concrete"}),
        json!({"axis": "z", "offset": 2.8, "span_u": [0, 6], "span_v": [0, 5], "material": "concrete"}),
        json!({"axis": "x", "offset": 0.0, "span_u": [0, 5], "span_v": [0, 2.8], "material": "concrete"}),
        json!({"axis": "x", "offset": 6.0, "span_u": [0, 5], "span_v": [0, 2.8], "material": "plasterboard"}),
        json!({"axis": "y", "offset": 0.0, "span_u": [0, 6], "span_v": [0, 2.8], "material": "concrete"}),
        json!({"axis": "y", "offset": 5.0, "span_u": [0, 6], "span_v": [0, 2.8], "material": "glass"}),
    ];
    if let serde_json::Value::Array(v) = extra {
        slabs.extend(v);
    }
    scene(json!({
        "name": "walled", "room": [6.0, 5.0, 2.8], "freq_hz": F, "slabs": slabs,
        "tx": {"position": tx, "power_dbm": 20.0},
        "rx_grid": [rx],
    }))
}

#[test]
fn clear_line_of_sight_matches_free_space() {
    let s = empty_room([1.0, 1.0, 1.5], vec![[4.0, 1.0, 1.5]]);
    let paths = trace_paths(&s, 0, None).unwrap();
    assert_eq!(paths.len(), 1);
    let p = paths[0];
    assert_eq!(p.kind, PathKind::Direct);
    let lambda = C0 / F;
    let oracle_w = 0.1 * (lambda / (4.0 * PI * 3.0)).powi(2);
    assert!((p.power_w - oracle_w).abs() < 1e-12 * oracle_w);
    assert!((p.arrival_az_deg - 180.0).abs() < 1e-9 && p.arrival_el_deg.abs() < 1e-9);
    assert!((p.total_length_m - 3.0).abs() < 1e-12);
}

fn divided(human: Option<[f64; 3]>) -> Scene {
    let mut v = json!({
        "name": "divided", "room": [6.0, 6.0, 3.0], "freq_hz": F,
        "slabs": [{"name": "divider", "axis": "x", "offset": 3.0, "span_u": [0.0, 3.5], "span_v": [0.0, 2.2], "material": "metal"}],
        "tx": {"position": [1.0, 1.0, 1.5], "power_dbm": 20.0},
        "rx_grid": [[5.0, 1.0, 1.0]],
    });
    if let Some(h) = human {
        v["human_path"] = json!([h]);
    }
    scene(v)
}

#[test]
fn metal_divider_leaves_only_diffraction() {
    let s = divided(None);
    let paths = trace_paths(&s, 0, None).unwrap();
    assert!(!paths.is_empty());
    assert!(paths.iter().all(|p| p.kind == PathKind::Diffract), "{paths:?}");
    let floor = dbm_to_watts(POWER_FLOOR_DBM);
    assert!(paths.iter().all(|p| p.power_w >= floor));
}

#[test]
fn human_in_view_of_both_ends_scatters_above_floor() {
    let c = [3.0, 4.8, 0.9];
    let s = divided(Some(c));
    let paths = trace_paths(&s, 0, Some(0)).unwrap();
    let scatter: Vec<_> = paths.iter().filter(|p| p.kind == PathKind::HumanScatter).collect();
    assert!(!scatter.is_empty());
    let floor = dbm_to_watts(POWER_FLOOR_DBM);
    assert!(scatter.iter().all(|p| p.power_w >= floor));

    // isotropic share: a bistatic link whose cross-section is the body
    // silhouette times the volume fraction
    let (tx, rx) = ([1.0, 1.0, 1.5], [5.0, 1.0, 1.0]);
    let dist =
        |a: [f64; 3], b: [f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let (d1, d2) = (dist(tx, c), dist(c, rx));
    let uz = (c[2] - tx[2]) / d1;
    let (a, h) = (0.25, 0.84);
    let silhouette = PI * a * (a * a * uz * uz + h * h * (1.0 - uz * uz)).sqrt();
    let volume_fraction = s.human_budget.volume;
    let link = LinkBudgetInput {
        p_t: 0.1,
        g_t: 1.0,
        g_r: 1.0,
        freq: F,
        sigma_rcs: silhouette * volume_fraction,
        d1,
        d2,
        bandwidth: 1.0,
        impl_loss_db: 0.0,
    };
    let oracle = bistatic_radar(&link).unwrap().p_r_watts;
    let volume = scatter
        .iter()
        .find(|p| (p.total_length_m - (d1 + d2)).abs() < 1e-9)
        .expect("isotropic body path");
    assert!(
        (volume.power_w - oracle).abs() < 1e-9 * oracle,
        "{} vs {oracle}",
        volume.power_w
    );
}

#[test]
fn reciprocity_in_walled_room() {
    let furniture = json!([
        {"axis": "x", "offset": 3.0, "span_u": [0.5, 3.0], "span_v": [0.0, 1.4], "material": "wood"},
        {"axis": "z", "offset": 0.75, "span_u": [1.0, 2.0], "span_v": [1.0, 4.0], "material": "wood"},
        {"axis": "y", "offset": 2.5, "span_u": [4.0, 5.5], "span_v": [0.0, 2.0], "material": "metal"},
    ]);
    let pairs = [
        ([0.7, 1.2, 2.3], [5.1, 3.7, 0.6]),
        ([1.5, 0.6, 1.0], [4.6, 1.9, 1.1]),
        ([5.2, 4.1, 2.0], [0.9, 0.8, 0.4]),
    ];
    for (a, b) in pairs {
        let fwd: f64 = trace_paths(&walled(a, b, furniture.clone()), 0, None)
            .unwrap()
            .iter()
            .map(|p| p.power_w)
            .sum();
        let rev: f64 = trace_paths(&walled(b, a, furniture.clone()), 0, None)
            .unwrap()
            .iter()
            .map(|p| p.power_w)
            .sum();
        assert!((fwd - rev).abs() <= 1e-9 * fwd, "{fwd} vs {rev}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn absorbing_slab_never_raises_direct_power(
        ty in 0.5f64..4.5, tz in 0.3f64..2.5, ry in 0.5f64..4.5, rz in 0.3f64..2.5,
        lo in 0.0f64..2.0, hi in 2.5f64..5.0, top in 0.5f64..2.8, mat in 0usize..4,
    ) {
        let material = ["concrete", "metal", "wood", "human"][mat];
        let direct = |extra: serde_json::Value| {
            let s = walled([1.0, ty, tz], [5.0, ry, rz], extra);
            trace_paths(&s, 0, None).unwrap().iter().filter(|p| p.kind == PathKind::Direct).map(|p| p.power_w).sum::<f64>()
        };
        let before = direct(json!([]));
        let after = direct(json!([{"axis": "x", "offset": 3.0, "span_u": [lo, hi], "span_v": [0.0, top], "material": material}]));
        prop_assert!(after <= before);
    }
}

#[test]
fn image_energy_matches_path_sum() {
    let s = Scene::bundled("bedroom").unwrap();
    for (rx, h) in [(0, None), (37, Some(5)), (99, Some(34))] {
        let paths = trace_paths(&s, rx, h).unwrap();
        let img = render_ground_truth_pas(&s, rx, h).unwrap();
        let expect: f64 = paths
            .iter()
            .map(|p| p.power_w * retained_fraction(p.arrival_el_deg))
            .sum();
        assert!((img.total() - expect).abs() <= 1e-9 * expect);
        img.check_valid().unwrap();
    }
}

#[test]
fn human_difference_is_confined_to_changed_paths() {
    let s = Scene::bundled("bedroom").unwrap();
    for (rx, h) in [(12, 3), (55, 17), (80, 30)] {
        let stat = trace_paths(&s, rx, None).unwrap();
        let dynm = trace_paths(&s, rx, Some(h)).unwrap();
        let same = |a: &rfsplat_core::scene::PathContribution, b: &rfsplat_core::scene::PathContribution| a == b;
        let mut changed: Vec<_> = dynm
            .iter()
            .filter(|p| !stat.iter().any(|q| same(p, q)))
            .copied()
            .collect();
        changed.extend(stat.iter().filter(|p| !dynm.iter().any(|q| same(p, q))).copied());
        assert!(changed.iter().any(|p| p.kind == PathKind::HumanScatter));
        let mask = render_paths(&changed);
        let a = render_ground_truth_pas(&s, rx, None).unwrap();
        let b = render_ground_truth_pas(&s, rx, Some(h)).unwrap();
        let scale = a.max();
        let mut touched = 0;
        for i in 0..a.data.len() {
            let d = (b.data[i] - a.data[i]).abs();
            if mask[i] == 0.0 {
                assert!(d <= 1e-12 * scale, "bin {i} changed by {d} without a changed path");
            } else if d > 0.0 {
                touched += 1;
            }
        }
        assert!(touched > 0);
    }
}

#[test]
fn distant_human_barely_moves_the_spectrum() {
    let base = Scene::bundled("large").unwrap();
    let mut cfg = base.config.clone();
    cfg.rx_grid = rfsplat_core::scene::PositionSpec::List(vec![[2.0, 1.5, 0.6]]);
    cfg.human_path = Some(rfsplat_core::scene::PositionSpec::List(vec![
        [9.5, 6.2, 0.9],
        [8.5, 5.5, 0.9],
    ]));
    let s = Scene::new(cfg).unwrap();
    let a = render_ground_truth_pas(&s, 0, None).unwrap();
    for h in 0..2 {
        let b = render_ground_truth_pas(&s, 0, Some(h)).unwrap();
        let worst = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.01 * a.max(), "human {h}: {worst} vs {}", a.max());
    }
}

#[test]
fn bedroom_dataset_counts_and_split() {
    let s = Scene::bundled("bedroom").unwrap();
    assert_eq!((s.rx.len(), s.humans.len()), (100, 35));
    let ds = generate_dataset(&s, 7).unwrap();
    assert_eq!(ds.static_samples().count(), 100);
    assert_eq!(ds.dynamic_samples().count(), 3500);
    assert_eq!(ds.partition.test_rx.len(), 20);
    let train_dyn = ds.select(true, Role::Train).len();
    let val_dyn = ds.select(true, Role::Val).len();
    assert_eq!(train_dyn + val_dyn, 80 * 35);
    assert_eq!(val_dyn, (80.0f64 * 35.0 * 0.19).round() as usize);
    assert_eq!(ds.select(true, Role::Test).len(), 20 * 35);
    assert!(ds.samples.iter().enumerate().all(|(i, s)| s.id == i));
    let again = generate_dataset(&s, 7).unwrap();
    assert_eq!(ds.partition, again.partition);
    let other = generate_dataset(&s, 8).unwrap();
    assert_ne!(ds.partition.test_rx, other.partition.test_rx);
}

fn small_scene(n_rx: usize) -> Scene {
    let rx: Vec<[f64; 3]> = (0..n_rx).map(|i| [0.8 + 0.4 * i as f64, 1.5, 0.6]).collect();
    scene(json!({
        "name": "small", "room": [6.0, 5.0, 2.8], "freq_hz": F,
        "slabs": [{"axis": "z", "offset": 0.0, "span_u": [0, 6], "span_v": [0, 5], "material": "concrete"}],
        "tx": {"position": [5.5, 4.5, 2.4], "power_dbm": 20.0},
        "rx_grid": rx,
        "human_path": [[2.0, 3.0, 0.9], [3.0, 3.5, 0.9]],
    }))
}

#[test]
fn too_few_rx_is_a_configuration_error() {
    let err = generate_dataset(&small_scene(4), 0).unwrap_err();
    assert!(!err.is_numeric());
    assert!(generate_dataset(&small_scene(5), 0).is_ok());
}

#[test]
fn duplicated_mode_flags_copies() {
    let s = small_scene(6);
    let ds = generate_dataset_with(
        &s,
        &DatasetOptions {
            duplicate: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let stat: Vec<_> = ds.static_samples().collect();
    assert_eq!(stat.len(), 18);
    assert_eq!(stat.iter().filter(|s| s.is_duplicate()).count(), 12);
    for rx in 0..6 {
        let group: Vec<_> = stat.iter().filter(|s| s.rx == rx).collect();
        assert_eq!(group.len(), 3);
        assert!(group.iter().all(|g| g.pas.data == group[0].pas.data));
    }
    assert_eq!(ds.dynamic_samples().count(), 12);
}

#[test]
fn dataset_round_trips_through_disk_and_is_reproducible() {
    let s = small_scene(6);
    let ds = generate_dataset_with(
        &s,
        &DatasetOptions {
            split_seed: 3,
            duplicate: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    write_dataset(&ds, d1.path()).unwrap();
    write_dataset(
        &generate_dataset_with(
            &s,
            &DatasetOptions {
                split_seed: 3,
                duplicate: 2,
                ..Default::default()
            },
        )
        .unwrap(),
        d2.path(),
    )
    .unwrap();
    for name in [
        "meta.json",
        "samples/00000.bin",
        "previews/00000.png",
        "samples/00012.bin",
    ] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let back = read_dataset(d1.path()).unwrap();
    assert_eq!(back.samples.len(), ds.samples.len());
    assert_eq!(back.partition, ds.partition);
    for (a, b) in back.samples.iter().zip(&ds.samples) {
        assert_eq!((a.rx, a.human, a.copy, a.role), (b.rx, b.human, b.copy, b.role));
        for (x, y) in a.pas.data.iter().zip(&b.pas.data) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
}
