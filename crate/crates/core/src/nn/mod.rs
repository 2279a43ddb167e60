//! Dense-tensor numerical core: GRU cells, bidirectional encoding, additive
//! attention, softmax output, masked cross-entropy, dropout and optimizers.
//! Every layer exposes a hand-derived backward pass.

pub mod attention;
pub mod dense;
pub mod dropout;
pub mod gru;
pub mod optim;
pub mod tensor;

pub use attention::{attention, AttentionParams};
pub use dense::{masked_cross_entropy, output_distribution, softmax, Dense};
pub use dropout::{dropout_apply, DropoutMask};
pub use gru::{bigru_encode, decoder_step, gru_cell, GruParams};
pub use optim::{adam_step, AdamConfig, OptimizerKind, Parameter, RmsPropConfig};
pub use tensor::{Scalar, Tensor};
