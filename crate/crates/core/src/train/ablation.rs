use serde::{Deserialize, Serialize};

use super::config::{Stage, TrainConfig};
use super::eval::evaluate;
use super::run::{train_stage1, train_stage2, RunOptions};
use crate::error::Result;
use crate::scene::{generate_dataset_with, DatasetOptions, Role, Scene, SceneConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialRow {
    pub material: String,
    pub stage1_mean_ssim: f64,
    pub mean_ssim: f64,
    pub median_ssim: f64,
}

/// Same room with the person's material swapped. The static data does not
/// depend on it, so one background serves every variant.
pub fn material_ablation(
    base: &SceneConfig,
    materials: &[&str],
    stage1: &TrainConfig,
    stage2: &TrainConfig,
    split_seed: u64,
    opts: &RunOptions,
) -> Result<Vec<MaterialRow>> {
    let mut rows = Vec::with_capacity(materials.len());
    let mut background = None;
    for &m in materials {
        let scene = Scene::new(SceneConfig {
            human_material: m.to_string(),
            ..base.clone()
        })?;
        let ds = generate_dataset_with(
            &scene,
            &DatasetOptions {
                split_seed,
                ..Default::default()
            },
        )?;
        if background.is_none() {
            let cfg = TrainConfig {
                stage: Stage::Stage1,
                ..stage1.clone()
            };
            background = Some(train_stage1(&ds, &scene, &cfg, opts)?.model);
        }
        let s1 = background.as_ref().expect("set above");
        let cfg = TrainConfig {
            stage: Stage::Stage2,
            ..stage2.clone()
        };
        let two = train_stage2(&ds, &scene, s1, &cfg, opts)?;
        let test = ds.select(true, Role::Test);
        let before = evaluate(s1, &test)?;
        let after = evaluate(&two.model, &test)?;
        rows.push(MaterialRow {
            material: m.to_string(),
            stage1_mean_ssim: before.mean_ssim,
            mean_ssim: after.mean_ssim,
            median_ssim: after.median_ssim,
        });
    }
    Ok(rows)
}

pub fn material_csv(rows: &[MaterialRow]) -> String {
    let mut out = String::from("material,stage1_mean_ssim,mean_ssim,median_ssim\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.material, r.stage1_mean_ssim, r.mean_ssim, r.median_ssim
        ));
    }
    out
}
