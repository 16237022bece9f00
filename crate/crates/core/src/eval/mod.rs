//! Metrics, timing, case studies and their reports.

mod case;
mod metrics;
mod report;
mod stats;
mod timing;

pub use case::{
    case_length_and_trace, case_mark_percentage, rd_case_bits, MarkCase, MarkRow, ShiftCase, SizeDistribution,
    TracePoint,
};
pub use metrics::{
    compare, eval_card_diff, eval_dppl_diff, rd_rng, run_chd, Comparison, EvalSettings, InstanceScore, Method,
    MethodReport, MetricReport, Task,
};
pub use report::{left_fraction_csv, lengths_csv, marks_csv, shifts_csv, to_json, traces_csv, write_json, write_text};
pub use stats::{loglog_slope, paired_t_greater, sign_test_greater, spearman, two_proportion_z, Summary};
pub use timing::{gs_sweep, timing_harness, MethodTiming, ScalingPoint, TimingReport};
