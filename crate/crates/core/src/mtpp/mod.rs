//! Marked temporal point process models and scoring.

mod fullynn;
mod hawkes;
mod model;
mod poisson;
mod scoring;
mod train;

pub use fullynn::{FullyNn, FullyNnConfig, CHECKPOINT_KIND};
pub use hawkes::{HawkesModel, HawkesParams};
pub use model::{Evaluation, IntensityModel, SequenceInput};
pub use poisson::PoissonModel;
pub use scoring::{
    dppl, future_log_densities, layout, log_likelihood, log_likelihood_var, log_perplexity, log_perplexity_of,
    LOG_ZERO_SENTINEL,
};
pub use train::{mean_nll, train_mtpp, MtppTrainConfig, MtppTrainReport};
