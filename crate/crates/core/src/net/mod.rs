//! Encoder, generator and critic over the paired-joint grid.

pub(crate) mod checkpoint;
mod config;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest};
pub use config::{ConvLayer, NetworkConfig, Norm, CRITIC_CHANNELS, GRID_CHANNELS};
pub use model::{
    count_parameters, sample_latent, Architecture, Mode, NamedTensors, NormCtx, ParameterSet, Subnet,
    SubnetParams, SubnetVars,
};
