//! Wall-clock comparison of the three methods.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::metrics::{rd_rng, Method, Task};
use crate::baselines::{gs_given_length, gs_given_target, rd_given_length, rd_given_target, Scorer, TargetPair};
use crate::distiller::{distill, Distiller};
use crate::error::Result;
use crate::event::DistillInstance;
use crate::mtpp::IntensityModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: Method,
    pub total_secs: f64,
    pub mean_secs: f64,
    /// Total time over CHD's total time.
    pub ratio: f64,
    pub evaluations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub task: Task,
    pub instances: usize,
    pub methods: Vec<MethodTiming>,
    /// Per-instance time averaged over the three methods.
    pub t_bar_mean_over_methods: f64,
    /// Per-instance time of all three methods together.
    pub t_bar_total_over_methods: f64,
}

/// Times each method on every instance, on the calling thread only.
///
/// CHD's output seeds the baselines: its `|H_d|` for DPPL-Diff and its
/// `(dppl_d, dppl_l)` for Card-Diff. Only the method calls are timed.
pub fn timing_harness(
    distiller: &Distiller,
    mtpp: &dyn IntensityModel,
    instances: &[DistillInstance],
    task: Task,
    rd_samples: usize,
    seed: u64,
) -> Result<TimingReport> {
    let mut total = [Duration::ZERO; 3];
    let mut evals = [0u64; 3];
    for inst in instances {
        let start = Instant::now();
        let r = distill(distiller, mtpp, inst)?;
        total[0] += start.elapsed();

        let start = Instant::now();
        let mut s = Scorer::new(mtpp, inst)?;
        match task {
            Task::DpplDiff => {
                gs_given_length(&mut s, r.card_d)?;
            }
            Task::CardDiff => {
                gs_given_target(
                    &mut s,
                    &TargetPair {
                        dppl_d: r.dppl_d,
                        dppl_l: r.dppl_l,
                    },
                )?;
            }
        }
        total[1] += start.elapsed();
        evals[1] += s.counter.evaluations;

        let mut rng = rd_rng(seed, inst);
        let start = Instant::now();
        let mut s = Scorer::new(mtpp, inst)?;
        match task {
            Task::DpplDiff => {
                rd_given_length(&mut s, r.card_d, rd_samples, &mut rng)?;
            }
            Task::CardDiff => {
                rd_given_target(
                    &mut s,
                    &TargetPair {
                        dppl_d: r.dppl_d,
                        dppl_l: r.dppl_l,
                    },
                    rd_samples,
                    &mut rng,
                )?;
            }
        }
        total[2] += start.elapsed();
        evals[2] += s.counter.evaluations;
    }
    let n = instances.len().max(1) as f64;
    let chd = total[0].as_secs_f64();
    let methods = [Method::Chd, Method::Gs, Method::Rd]
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let secs = total[i].as_secs_f64();
            MethodTiming {
                method,
                total_secs: secs,
                mean_secs: secs / n,
                ratio: if i == 0 { 1.0 } else { secs / chd },
                evaluations: evals[i],
            }
        })
        .collect();
    let all: f64 = total.iter().map(Duration::as_secs_f64).sum();
    Ok(TimingReport {
        task,
        instances: instances.len(),
        methods,
        t_bar_mean_over_methods: all / n / 3.0,
        t_bar_total_over_methods: all / n,
    })
}

/// GS cost at one history length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub instances: usize,
    pub evaluations: u64,
    pub secs: f64,
}

/// Runs greedy search for `steps(n)` steps on each instance and reports the
/// evaluation count and wall time per history length.
pub fn gs_sweep(
    mtpp: &dyn IntensityModel,
    groups: &[Vec<DistillInstance>],
    steps: impl Fn(usize) -> usize,
) -> Result<Vec<ScalingPoint>> {
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|group| {
            let n = group[0].history.len();
            let mut evaluations = 0;
            let mut elapsed = Duration::ZERO;
            for inst in group {
                let start = Instant::now();
                let mut s = Scorer::new(mtpp, inst)?;
                gs_given_length(&mut s, steps(n).min(inst.history.len()))?;
                elapsed += start.elapsed();
                evaluations += s.counter.evaluations;
            }
            Ok(ScalingPoint {
                n,
                instances: group.len(),
                evaluations,
                secs: elapsed.as_secs_f64(),
            })
        })
        .collect()
}
