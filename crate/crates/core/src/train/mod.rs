//! Two-step adversarial/autoencoding training.

mod adam;
mod config;
mod fit;
mod step;

pub use adam::{AdamConfig, AdamState};
pub use config::{NetworkChoice, Optimizers, TrainConfig};
pub use fit::{
    batch_indices, decode_state, encode_state, fit, fit_split, schedule, split_dataset, FitOptions, FitReport, Split,
    METRICS_HEADER,
};
pub use step::{latent_cycle_error, pose_mpjpe, reconstruct, StepMetrics, TrainState, Trainer};
