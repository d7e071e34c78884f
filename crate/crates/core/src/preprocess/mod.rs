//! Collection-epoch detection, missing-point inference, duplicate collapsing
//! and pairwise alignment of irregular telemetry timestamps.

mod align;
mod epochs;
mod missing;
mod resample;

pub use align::{align, mutual_nearest, mutual_nearest_into, Alignment};
pub use epochs::{
    calibrate_epoch_params, detect_epochs, epoch_error, eps_candidates, Epoch, EpochGrid,
    EpochParams, MIN_SAMPLES_CANDIDATES,
};
pub use missing::{
    calibrate_missing_threshold, calibrate_missing_threshold_many, dedupe, dedupe_series, ground_truth_missing, infer_missing,
    infer_missing_series, missing_threshold_candidates, score_missing_threshold, MissingScore,
};
pub use resample::{resample_channel, resample_uniform};
