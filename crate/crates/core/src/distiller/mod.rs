//! Selection model that picks which history events explain a future.

mod config;
mod encoder;
mod infer;
mod loss;
mod model;
mod rebuild;
mod train;

pub use config::{DistillTrainConfig, DistillerConfig, LossMode};
pub use encoder::time_encoding;
pub use infer::{argmax_bits, distill, selection_log_probs, DistillResult};
pub use loss::{cardinality_loss, constraint_loss, l0, l1};
pub use model::{Distiller, CHECKPOINT_KIND};
pub use rebuild::{rebuild_history, rebuilt_log_perplexity, RebuiltHistory};
pub use train::{
    full_log_perplexities, instance_loss, instance_loss_with_noise, train_distiller, DistillTrainReport, StepTerms,
};
