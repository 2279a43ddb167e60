//! The attentional labeller: configuration, weights, teacher-forced training,
//! greedy decoding, checkpoint files and random hyperparameter search.

pub mod checkpoint;
pub mod config;
pub mod search;
pub mod seq2seq;
pub mod train;
pub mod weights;

pub use checkpoint::{init_model, Checkpoint, OptimizerState};
pub use config::ModelConfig;
pub use seq2seq::{forward_teacher_forced, greedy_decode, init_decoder_state};
pub use weights::{init_weights, Weights};
pub use train::{evaluate_loss, train, train_from, EpochRecord, TrainOutcome};
pub use search::{hyperparameter_search, HParamSpace, Trial};
