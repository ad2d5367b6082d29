//! The 1D convolutional autoencoder: architecture, parameters, layer
//! primitives and the forward/backward passes.

mod arch;
mod model;
pub mod ops;
mod params;

pub use arch::{ArchSpec, ConvLayerSpec, LayerWidths, PostOp};
pub use model::{
    apply_update, backward, backward_into, batch_gradients, data_loss, forward, loss, predict,
    train_step, BatchGradients, ForwardTape, LayerTape,
};
pub use params::{ConvParams, InitScheme, Kernel, NetworkParams, TensorId, FC_INIT_LIMIT};
