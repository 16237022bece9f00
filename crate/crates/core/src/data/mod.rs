//! Dataset ingestion, windowing and synthetic data.

mod ingest;
mod synth;
mod window;

pub use ingest::{
    ingest, ingest_str, mean_interval, DatasetManifest, Diagnostic, Format, Ingested, WindowStats, MAX_BAD_FRACTION,
    TIE_JITTER,
};
pub use synth::{
    hawkes_log_likelihood, planted_spec, simulate, spectral_radius, stationary_rates, synth_hawkes, SynthSequence,
    SyntheticSpec,
};
pub use window::{
    read_instances, sample_instances, sliding_windows, split_and_sample, split_of, write_instances, Split, Splits,
};
