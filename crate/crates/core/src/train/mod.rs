//! Two-stage optimisation, baselines, density control and evaluation.

mod ablation;
mod adam;
mod compare;
mod config;
mod densify;
mod eval;
mod model;
mod run;

pub use ablation::{material_ablation, material_csv, MaterialRow};
pub use adam::{AdamClock, GaussianMoments, NetMoments};
pub use compare::{
    compare_methods, median_dynamic_ssim, rx_scaling, Comparison, ComparisonPlan, MethodScore, ScalingPoint,
};
pub use config::{Anchor, LearningRates, Stage, TrainConfig};
pub use densify::{densify_and_prune, DensifyOutcome, DensifyRule, DensifyStats};
pub use eval::{evaluate, median, render_samples, score, EvalReport, EvalRow};
pub use model::{init_background, init_human, HumanModel, Model, ModelGrads, PartGrads, Tape, View};
pub use run::{
    background_digest, calibrate_radiance, train, train_augmented, train_duplicated, train_end_to_end, train_stage1,
    train_stage2, DensifyEvent, RunOptions, TrainLog, TrainOutcome,
};
