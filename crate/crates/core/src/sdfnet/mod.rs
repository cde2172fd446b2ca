//! Latent-conditioned signed distance network: evaluation, exact partial
//! derivatives, auto-decoder training and checkpoints.

mod checkpoint;
mod family;
mod network;
mod train;

pub use checkpoint::Checkpoint;
pub use family::{build_dataset, held_out_family, training_family, DatasetConfig};
pub use network::{
    Activation, Dense, ForwardCache, LatentCode, LatentField, NetworkConfig, ParamGrad, SdfNetwork, SurfacePartials,
};
pub use train::{sdf_loss, train_sdf, SampleSet, TrainConfig, TrainOutcome};
