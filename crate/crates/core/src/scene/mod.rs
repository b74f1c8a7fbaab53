//! Rooms of axis-aligned slabs, a ray-based propagation model and the
//! ground-truth power angular spectra it produces.

mod config;
mod dataset;
mod pas;
mod trace;

pub use config::{
    bundled_scene_names, Axis, Endpoints, GridSpec, HumanShape, PasAt, PolylineSpec, PositionSpec, Scene, SceneConfig,
    Slab, SlabSpec, Task, Transmitter, V3,
};
pub use dataset::{
    generate_dataset, generate_dataset_with, gray_png, pas_from_bytes, pas_to_bytes, preview_png, read_dataset,
    write_dataset, Dataset, DatasetOptions, Partition, PasScale, Role, Sample, MIN_RX_FOR_SPLIT,
};
pub use pas::{
    render_ground_truth_pas, render_paths, retained_fraction, splat_path, PasImage, PasMeta, KERNEL_SIGMA_PX, PAS_COLS,
    PAS_LEN, PAS_ROWS,
};
pub use trace::{
    direction_angles, projected_area, sample_seed, trace_paths, PathContribution, PathKind, POWER_FLOOR_DBM,
};
