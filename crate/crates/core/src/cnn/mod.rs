//! Multi-output 1D CNN with analytic gradients, Adam and checkpointed training.

pub mod adam;
pub mod io;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{load_model, save_model};
pub use layers::{conv1d_forward, dense_forward_tensor, maxpool1d_forward, Activation, LayerSpec, Padding};
pub use model::{paper_architecture, Architecture, ForwardCache, LayerInfo, Model, OutputMeta, Shape};
pub use tensor::Tensor;
pub use train::{mean_mse, mse_loss, train, train_on, EpochRecord, TrainConfig, TrainReport};
