//! Unrolled primal-dual dealiasing network and its training stack.

mod checkpoint;
mod conv;
mod gradcheck;
mod loss;
mod model;
mod network;
mod optim;
mod train;

pub use checkpoint::{AdamHeader, Architecture, Checkpoint, CheckpointHeader};
pub use conv::Conv;
pub use gradcheck::{check_gradient, relative_error, GradCheck, RELATIVE_FLOOR};
pub use loss::{class_index, class_label, loss, DICE_EPS};
pub use model::{
    architecture_param_count, Head, ModelConfig, PdNetModel, ProxStack, CLASSES, HIDDEN_CHANNELS,
    INITIAL_SLOPE, STATE_CHANNELS,
};
pub use network::{
    argmax_labels, forward, forward_with_branches, loss_and_gradient, predict, wrap_inside_network, wrap_inside_network_grad,
    ForwardOutput,
};
pub use optim::{cosine_annealing, Adam, AdamParams};
pub use train::{
    batch_entries, dataset_loss, train, train_from, training_view, validate, BestModel, EpochLog, StepLog, TrainConfig, TrainLog, TrainOutcome,
    TrainState, TrainStatus, ValidationSummary,
};
