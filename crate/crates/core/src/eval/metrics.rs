//! DPPL-Diff and Card-Diff evaluation of CHD against the baselines.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stats::{paired_t_greater, sign_test_greater, Summary};
use crate::baselines::{gs_given_length, gs_given_target, rd_given_length, rd_given_target, Scorer, TargetPair};
use crate::distiller::{distill, DistillResult, Distiller};
use crate::error::{EhdError, Result};
use crate::event::DistillInstance;
use crate::mtpp::IntensityModel;
use crate::parallel::Workers;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Chd,
    Gs,
    Rd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Chd => "chd",
            Method::Gs => "gs",
            Method::Rd => "rd",
        })
    }
}

impl FromStr for Method {
    type Err = EhdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chd" => Ok(Method::Chd),
            "gs" => Ok(Method::Gs),
            "rd" => Ok(Method::Rd),
            other => Err(EhdError::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Which quantity a report aggregates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// `dppl(H_d) - dppl(H_l)` at CHD's `|H_d|`; higher is better.
    DpplDiff,
    /// Events needed to beat CHD's `(dppl_d, dppl_l)`; lower is better.
    CardDiff,
}

impl Task {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Task::DpplDiff)
    }
}

/// One method's outcome on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub seq_id: u64,
    pub offset: usize,
    pub card: usize,
    pub dppl_d: f64,
    pub dppl_l: f64,
    /// The aggregated value: the DPPL-Diff metric or the count.
    pub value: f64,
    /// Card-Diff only: the target was never met and `card` is the cap.
    #[serde(default)]
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub summary: Summary,
    /// Instances without a CHD result, left out for this method.
    pub skipped: usize,
    pub censored: usize,
    /// dppl evaluation pairs spent (zero for CHD).
    pub evaluations: u64,
    pub instances: Vec<InstanceScore>,
}

/// Paired comparison on the instances both methods scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub better: Method,
    pub worse: Method,
    pub pairs: usize,
    /// Mean improvement of `better` over `worse` in the task's direction.
    pub mean_gain: f64,
    pub t: f64,
    pub p_t: f64,
    pub wins: u64,
    pub losses: u64,
    pub p_sign: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub dataset: String,
    pub config_digest: String,
    pub seed: u64,
    pub rd_samples: usize,
    /// `(name, sha256)` of the checkpoints used.
    pub checkpoints: Vec<(String, String)>,
    pub methods: Vec<MethodReport>,
    pub comparisons: Vec<Comparison>,
}

impl MetricReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Settings shared by both evaluation tasks.
#[derive(Clone, Debug)]
pub struct EvalSettings {
    pub dataset: String,
    pub config_digest: String,
    pub seed: u64,
    pub rd_samples: usize,
    pub checkpoints: Vec<(String, String)>,
}

/// Runs CHD on every instance, in input order.
pub fn run_chd(
    distiller: &Distiller,
    mtpp: &dyn IntensityModel,
    instances: &[DistillInstance],
    workers: &Workers,
) -> Result<Vec<DistillResult>> {
    workers
        .map(instances, |_, inst| distill(distiller, mtpp, inst))
        .into_iter()
        .collect()
}

/// Stream for the RD baseline on one instance, independent of evaluation order.
pub fn rd_rng(seed: u64, inst: &DistillInstance) -> rng::Rng {
    rng::derived(seed, &[0x7264, inst.seq_id, inst.offset as u64])
}

fn key(seq_id: u64, offset: usize) -> (u64, usize) {
    (seq_id, offset)
}

fn chd_scores(chd: &[DistillResult], task: Task) -> Vec<InstanceScore> {
    chd.iter()
        .map(|r| InstanceScore {
            seq_id: r.seq_id,
            offset: r.offset,
            card: r.card_d,
            dppl_d: r.dppl_d,
            dppl_l: r.dppl_l,
            value: match task {
                Task::DpplDiff => r.metric,
                Task::CardDiff => r.card_d as f64,
            },
            censored: false,
        })
        .collect()
}

fn run_baseline<F>(
    method: Method,
    instances: &[DistillInstance],
    chd: &BTreeMap<(u64, usize), &DistillResult>,
    workers: &Workers,
    f: F,
) -> Result<MethodReport>
where
    F: Fn(&DistillInstance, &DistillResult) -> Result<(InstanceScore, u64)> + Sync + Send,
{
    let outcomes = workers.map(instances, |_, inst| -> Result<Option<(InstanceScore, u64)>> {
        match chd.get(&key(inst.seq_id, inst.offset)) {
            Some(r) => f(inst, r).map(Some),
            None => Ok(None),
        }
    });
    let mut scores = Vec::new();
    let mut skipped = 0;
    let mut evaluations = 0;
    for o in outcomes {
        match o? {
            Some((s, e)) => {
                evaluations += e;
                scores.push(s);
            }
            None => skipped += 1,
        }
    }
    Ok(finish(method, scores, skipped, evaluations))
}

fn finish(method: Method, mut scores: Vec<InstanceScore>, skipped: usize, evaluations: u64) -> MethodReport {
    scores.sort_by_key(|s| key(s.seq_id, s.offset));
    let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
    MethodReport {
        method,
        summary: Summary::of(&values),
        skipped,
        censored: scores.iter().filter(|s| s.censored).count(),
        evaluations,
        instances: scores,
    }
}

fn index_chd(chd: &[DistillResult]) -> BTreeMap<(u64, usize), &DistillResult> {
    chd.iter().map(|r| (key(r.seq_id, r.offset), r)).collect()
}

/// Paired tests of `better` against `worse` on their common instances.
pub fn compare(task: Task, better: &MethodReport, worse: &MethodReport) -> Result<Comparison> {
    let other: BTreeMap<_, f64> = worse
        .instances
        .iter()
        .map(|s| (key(s.seq_id, s.offset), s.value))
        .collect();
    let sign = if task.higher_is_better() { 1.0 } else { -1.0 };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in &better.instances {
        if let Some(v) = other.get(&key(s.seq_id, s.offset)) {
            a.push(sign * s.value);
            b.push(sign * v);
        }
    }
    let (t, p_t) = paired_t_greater(&a, &b)?;
    let (wins, losses, p_sign) = sign_test_greater(&a, &b)?;
    let mean_gain = a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
    Ok(Comparison {
        better: better.method,
        worse: worse.method,
        pairs: a.len(),
        mean_gain,
        t,
        p_t,
        wins,
        losses,
        p_sign,
    })
}

fn report(task: Task, settings: &EvalSettings, methods: Vec<MethodReport>) -> Result<MetricReport> {
    let mut comparisons = Vec::new();
    for w in methods.windows(2) {
        if w[0].summary.count >= 2 && w[1].summary.count >= 2 {
            comparisons.push(compare(task, &w[0], &w[1])?);
        }
    }
    Ok(MetricReport {
        task,
        dataset: settings.dataset.clone(),
        config_digest: settings.config_digest.clone(),
        seed: settings.seed,
        rd_samples: settings.rd_samples,
        checkpoints: settings.checkpoints.clone(),
        methods,
        comparisons,
    })
}

/// DPPL-Diff of CHD, and of GS and RD at CHD's per-instance `|H_d|`.
pub fn eval_dppl_diff(
    mtpp: &dyn IntensityModel,
    instances: &[DistillInstance],
    chd: &[DistillResult],
    settings: &EvalSettings,
    workers: &Workers,
) -> Result<MetricReport> {
    let task = Task::DpplDiff;
    let index = index_chd(chd);
    let score = |inst: &DistillInstance, card: usize, (d, l): (f64, f64)| InstanceScore {
        seq_id: inst.seq_id,
        offset: inst.offset,
        card,
        dppl_d: d,
        dppl_l: l,
        value: d - l,
        censored: false,
    };
    let gs = run_baseline(Method::Gs, instances, &index, workers, |inst, r| {
        let mut s = Scorer::new(mtpp, inst)?;
        let (pair, _) = gs_given_length(&mut s, r.card_d)?;
        Ok((score(inst, r.card_d, pair), s.counter.evaluations))
    })?;
    let rd = run_baseline(Method::Rd, instances, &index, workers, |inst, r| {
        let mut s = Scorer::new(mtpp, inst)?;
        let pair = rd_given_length(&mut s, r.card_d, settings.rd_samples, &mut rd_rng(settings.seed, inst))?;
        Ok((score(inst, r.card_d, pair), s.counter.evaluations))
    })?;
    let chd_report = finish(Method::Chd, chd_scores(chd, task), 0, 0);
    report(task, settings, vec![chd_report, gs, rd])
}

/// Card-Diff: events GS and RD need to beat CHD's own `(dppl_d, dppl_l)`.
/// Unreachable targets are kept at the cap and flagged.
pub fn eval_card_diff(
    mtpp: &dyn IntensityModel,
    instances: &[DistillInstance],
    chd: &[DistillResult],
    settings: &EvalSettings,
    workers: &Workers,
) -> Result<MetricReport> {
    let task = Task::CardDiff;
    let index = index_chd(chd);
    let target = |r: &DistillResult| TargetPair {
        dppl_d: r.dppl_d,
        dppl_l: r.dppl_l,
    };
    let score = |inst: &DistillInstance, o: &crate::baselines::CountOutcome| InstanceScore {
        seq_id: inst.seq_id,
        offset: inst.offset,
        card: o.count,
        dppl_d: o.dppl_d,
        dppl_l: o.dppl_l,
        value: o.count as f64,
        censored: o.censored,
    };
    let gs = run_baseline(Method::Gs, instances, &index, workers, |inst, r| {
        let mut s = Scorer::new(mtpp, inst)?;
        let (o, _) = gs_given_target(&mut s, &target(r))?;
        Ok((score(inst, &o), s.counter.evaluations))
    })?;
    let rd = run_baseline(Method::Rd, instances, &index, workers, |inst, r| {
        let mut s = Scorer::new(mtpp, inst)?;
        let o = rd_given_target(
            &mut s,
            &target(r),
            settings.rd_samples,
            &mut rd_rng(settings.seed, inst),
        )?;
        Ok((score(inst, &o), s.counter.evaluations))
    })?;
    let chd_report = finish(Method::Chd, chd_scores(chd, task), 0, 0);
    report(task, settings, vec![chd_report, gs, rd])
}
