//! Experiment drivers, synthetic data and CSV output.

pub mod experiments;
pub mod stats;
pub mod synth;

pub use experiments::{
    classify_split, distance_compare, find_idx_pair, linear_scales, load_digit_split, run, run_aniso_sweep, run_classify,
    run_scale_step_sweep, run_transform_errors, sweep_trends, test_objects, ClassifyOutcome, DigitSplit, ExperimentId,
    ExperimentSpec, Method, Table, CSV_SCHEMA_VERSION,
};
pub use stats::spearman;
pub use synth::{add_clutter, ball_field, ball_field_scaled, ball_pair, synth_transformed, synthetic_object, TransformRanges};
