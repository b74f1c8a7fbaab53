//! Numerical checks of the information, observability and optimisation claims.

mod fisher;
mod info;
mod modes;
mod quadratic;
mod table;

pub use fisher::{
    fim_from_renderer, fisher_matrix, measurements_for, FisherOptions, FisherReport, Measurement, OccludedToyScene,
    PixelSampling, Scenario, DEFAULT_PIXELS, FULL_PIXEL_MAX_PARAMS, MAX_PARAMS, PARAMS_PER_GAUSSIAN, RANK_RTOL,
};
pub use info::{info_gain, spatial_correlation};
pub use modes::{mode_reduction, ModeParams, ModeReductionTrace};
pub use quadratic::{two_stage_vs_joint, QuadraticProblem, TwoStageReport, GD_TOL, MAX_DIM};
pub use table::{table_csv, verification_table, VerificationRow, BODY_EPS};
