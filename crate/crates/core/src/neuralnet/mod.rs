//! From-scratch sequence classifier: bidirectional GRU layers with
//! attention pooling, trained by backpropagation through time with an
//! adaptive-moment optimizer, verified against finite differences.

pub mod archive;
pub mod attention;
pub mod gradcheck;
pub mod gru;
pub mod model;
pub mod tensor;
pub mod train;

pub use archive::{load_model, save_model};
pub use attention::{attention_pool, AttentionParams};
pub use gradcheck::{corrupted_grad_check, grad_check};
pub use gru::{gru_cell_forward, BiGruParams, GruDirParams};
pub use model::{
    bigru_forward, forward_probs, model_forward, Mode, ModelParams, DENSE_UNITS, DROPOUT_RATES,
    GRU1_UNITS, GRU2_UNITS, INPUT_DIM,
};
pub use tensor::Tensor;
pub use train::{class_weights, loss_and_grads, train, TrainConfig, TrainedModel};
