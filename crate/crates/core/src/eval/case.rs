//! Case studies: which marks get distilled, how long `H_d` is, and how the
//! selection moves as the window slides.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::two_proportion_z;
use crate::baselines::random_mask;
use crate::distiller::DistillResult;
use crate::error::{EhdError, Result};
use crate::event::DistillInstance;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkRow {
    pub mark: usize,
    pub name: Option<String>,
    /// History events of this mark over all instances.
    pub events: u64,
    pub chd_distilled: u64,
    pub rd_distilled: u64,
    /// `None` when the mark never occurs.
    pub chd_fraction: Option<f64>,
    pub rd_fraction: Option<f64>,
    /// Two-proportion z of CHD against RD.
    pub z: Option<f64>,
    /// One-sided p for CHD's fraction exceeding RD's.
    pub p_greater: Option<f64>,
    /// Two-sided p times the number of marks present, capped at 1.
    pub p_bonferroni: Option<f64>,
    /// RD fraction minus RD's overall rate, in binomial standard errors.
    pub rd_deviation_sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkCase {
    pub chd_overall: f64,
    pub rd_overall: f64,
    pub rows: Vec<MarkRow>,
}

/// RD selection of `card` events for the mark study, one stream per instance.
pub fn rd_case_bits(seed: u64, inst: &DistillInstance, card: usize) -> Vec<bool> {
    let mut r = rng::derived(seed, &[0x6d61_726b, inst.seq_id, inst.offset as u64]);
    random_mask(inst.history.len(), card, &mut r)
}

/// Per-mark distilled fractions of CHD and of RD at CHD's lengths.
pub fn case_mark_percentage(
    instances: &[DistillInstance],
    chd: &[DistillResult],
    marks: usize,
    mark_names: &[String],
    seed: u64,
) -> Result<MarkCase> {
    let index: BTreeMap<_, _> = chd.iter().map(|r| ((r.seq_id, r.offset), r)).collect();
    let mut events = vec![0u64; marks];
    let mut chd_hits = vec![0u64; marks];
    let mut rd_hits = vec![0u64; marks];
    for inst in instances {
        let Some(r) = index.get(&(inst.seq_id, inst.offset)) else {
            continue;
        };
        if r.y.len() != inst.history.len() {
            return Err(EhdError::InvalidData(format!(
                "result for {} has {} bits for {} events",
                inst.id(),
                r.y.len(),
                inst.history.len()
            )));
        }
        let rd = rd_case_bits(seed, inst, r.card_d);
        for (i, e) in inst.history.iter().enumerate() {
            if e.mark >= marks {
                return Err(EhdError::InvalidData(format!("mark {} outside [0, {marks})", e.mark)));
            }
            events[e.mark] += 1;
            chd_hits[e.mark] += u64::from(r.y[i]);
            rd_hits[e.mark] += u64::from(rd[i]);
        }
    }
    let total: u64 = events.iter().sum();
    let overall = |hits: &[u64]| {
        if total == 0 {
            0.0
        } else {
            hits.iter().sum::<u64>() as f64 / total as f64
        }
    };
    let chd_overall = overall(&chd_hits);
    let rd_overall = overall(&rd_hits);
    let present = events.iter().filter(|&&n| n > 0).count().max(1) as f64;
    let mut rows = Vec::with_capacity(marks);
    for m in 0..marks {
        let n = events[m];
        let mut row = MarkRow {
            mark: m,
            name: mark_names.get(m).cloned(),
            events: n,
            chd_distilled: chd_hits[m],
            rd_distilled: rd_hits[m],
            chd_fraction: None,
            rd_fraction: None,
            z: None,
            p_greater: None,
            p_bonferroni: None,
            rd_deviation_sigma: None,
        };
        if n > 0 {
            let rd_fraction = rd_hits[m] as f64 / n as f64;
            row.chd_fraction = Some(chd_hits[m] as f64 / n as f64);
            row.rd_fraction = Some(rd_fraction);
            let (z, p1, p2) = two_proportion_z(chd_hits[m], n, rd_hits[m], n)?;
            row.z = Some(z);
            row.p_greater = Some(p1);
            row.p_bonferroni = Some((p2 * present).min(1.0));
            let se = (rd_overall * (1.0 - rd_overall) / n as f64).sqrt();
            row.rd_deviation_sigma = Some(if se > 0.0 { (rd_fraction - rd_overall) / se } else { 0.0 });
        }
        rows.push(row);
    }
    Ok(MarkCase {
        chd_overall,
        rd_overall,
        rows,
    })
}

/// Histogram over sizes `0..=max` as a PDF and CDF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    pub counts: Vec<u64>,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl SizeDistribution {
    pub fn of(sizes: &[usize]) -> Self {
        let max = sizes.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0u64; max + 1];
        for &s in sizes {
            counts[s] += 1;
        }
        let n = sizes.len().max(1) as f64;
        let pdf: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let cdf = pdf
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        SizeDistribution { counts, pdf, cdf }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Lower median of the sizes.
    pub fn median(&self) -> Option<usize> {
        let n = self.total();
        if n == 0 {
            return None;
        }
        let half = n.div_ceil(2);
        let mut acc = 0;
        for (size, &c) in self.counts.iter().enumerate() {
            acc += c;
            if acc >= half {
                return Some(size);
            }
        }
        None
    }

    /// Number of observations of at least `size`.
    pub fn at_least(&self, size: usize) -> u64 {
        self.counts.iter().skip(size).sum()
    }
}

/// `card(H_d)` at one offset of one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub seq_id: u64,
    /// Increments at every gap in the offsets of a sequence.
    pub segment: usize,
    pub offset: usize,
    pub card: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftCase {
    pub lengths: SizeDistribution,
    /// Events entering `H_d` between consecutive offsets.
    pub additions: SizeDistribution,
    /// Events leaving `H_d` between consecutive offsets, including by falling out of the window.
    pub ejections: SizeDistribution,
    pub steps: usize,
    pub gaps: usize,
    pub median_addition: Option<usize>,
    pub median_ejection: Option<usize>,
    /// One-sided two-proportion test that steps of size >= 2 are more common among ejections.
    pub tail_z: Option<f64>,
    pub tail_p: Option<f64>,
    pub traces: Vec<TracePoint>,
}

/// Length distribution, add/eject sizes and per-sequence traces.
///
/// Selections at consecutive offsets are aligned by absolute event index
/// `offset + i` within the source sequence.
pub fn case_length_and_trace(results: &[DistillResult]) -> Result<ShiftCase> {
    let mut sorted: Vec<&DistillResult> = results.iter().collect();
    sorted.sort_by_key(|r| (r.seq_id, r.offset));
    if let Some(w) = sorted
        .windows(2)
        .find(|w| (w[0].seq_id, w[0].offset) == (w[1].seq_id, w[1].offset))
    {
        return Err(EhdError::InvalidData(format!(
            "duplicate result for {}:{}",
            w[0].seq_id, w[0].offset
        )));
    }
    let absolute = |r: &DistillResult| -> Vec<usize> {
        r.y.iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| r.offset + i)
            .collect()
    };
    let mut additions = Vec::new();
    let mut ejections = Vec::new();
    let mut traces = Vec::with_capacity(sorted.len());
    let mut gaps = 0;
    let mut segment = 0;
    for (k, r) in sorted.iter().enumerate() {
        if k > 0 {
            let p = sorted[k - 1];
            if p.seq_id != r.seq_id {
                segment = 0;
            } else if r.offset == p.offset + 1 {
                let before = absolute(p);
                let after = absolute(r);
                additions.push(after.iter().filter(|i| before.binary_search(i).is_err()).count());
                ejections.push(before.iter().filter(|i| after.binary_search(i).is_err()).count());
            } else {
                gaps += 1;
                segment += 1;
            }
        }
        traces.push(TracePoint {
            seq_id: r.seq_id,
            segment,
            offset: r.offset,
            card: r.card_d,
        });
    }
    let lengths = SizeDistribution::of(&sorted.iter().map(|r| r.card_d).collect::<Vec<_>>());
    let additions = SizeDistribution::of(&additions);
    let ejections = SizeDistribution::of(&ejections);
    let steps = additions.total() as usize;
    let (tail_z, tail_p) = if steps > 0 {
        let (z, p, _) = two_proportion_z(ejections.at_least(2), steps as u64, additions.at_least(2), steps as u64)?;
        (Some(z), Some(p))
    } else {
        (None, None)
    };
    Ok(ShiftCase {
        median_addition: additions.median(),
        median_ejection: ejections.median(),
        lengths,
        additions,
        ejections,
        steps,
        gaps,
        tail_z,
        tail_p,
        traces,
    })
}
