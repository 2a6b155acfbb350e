//! Model assembly, loss, optimization, early stopping and evaluation.

mod early;
mod eval;
mod fit;
pub mod loss;
pub mod metrics;
mod model;
mod optim;

pub use early::EarlyStopping;
pub use eval::evaluate;
pub(crate) use fit::predicted_classes;
pub use fit::{evaluate_loss, train_loop, EpochRecord, History, ModelSnapshot, TrainConfig};
pub use loss::{cce_loss, one_hot, softmax_scores};
pub use metrics::{metrics_from_confusion, ConfusionMatrix, MetricsReport};
pub use model::{build_mininet, build_mininet_sized, forward_layers, stack_images, ForwardTrace, Layer, ModelGraph};
pub use optim::{adam_step, AdamConfig, AdamState};
