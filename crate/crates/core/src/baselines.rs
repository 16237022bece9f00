//! Greedy and random distillation baselines, plus exhaustive search for small histories.

use std::time::{Duration, Instant};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EhdError, Result};
use crate::event::DistillInstance;
use crate::mtpp::{log_perplexity, IntensityModel};

/// Number of dppl evaluation pairs and the time spent in them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounter {
    pub evaluations: u64,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl EvalCounter {
    pub fn merge(&mut self, other: &EvalCounter) {
        self.evaluations += other.evaluations;
        self.elapsed += other.elapsed;
    }
}

/// Thresholds a baseline must beat: `dppl_d > dppl_d_target` and `dppl_l < dppl_l_target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPair {
    pub dppl_d: f64,
    pub dppl_l: f64,
}

impl TargetPair {
    /// Only the left-history constraint `dppl_l < log ε`.
    pub fn epsilon(epsilon: f64) -> Self {
        TargetPair {
            dppl_d: f64::NEG_INFINITY,
            dppl_l: epsilon.ln(),
        }
    }

    pub fn met(&self, dppl_d: f64, dppl_l: f64) -> bool {
        dppl_d > self.dppl_d && dppl_l < self.dppl_l
    }
}

/// Scores partitions of one instance's history, counting each `(dppl_d, dppl_l)` pair.
pub struct Scorer<'a> {
    model: &'a dyn IntensityModel,
    inst: &'a DistillInstance,
    origin: f64,
    full: f64,
    pub counter: EvalCounter,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a dyn IntensityModel, inst: &'a DistillInstance) -> Result<Self> {
        inst.validate(model.mark_count())?;
        let origin = inst.origin();
        let full = log_perplexity(model, &inst.future, &inst.history, origin)?;
        Ok(Scorer {
            model,
            inst,
            origin,
            full,
            counter: EvalCounter::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.inst.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inst.history.is_empty()
    }

    fn dppl(&self, conditioning: &[crate::event::Event]) -> Result<f64> {
        Ok(self.full - log_perplexity(self.model, &self.inst.future, conditioning, self.origin)?)
    }

    /// `(dppl(H_d), dppl(H_l))` without touching the counter.
    pub fn pair_uncounted(&self, distilled: &[bool]) -> Result<(f64, f64)> {
        Ok((
            self.dppl(&self.inst.distilled(distilled))?,
            self.dppl(&self.inst.kept(distilled))?,
        ))
    }

    /// `(dppl(H_d), dppl(H_l))`, counted as one evaluation.
    pub fn pair(&mut self, distilled: &[bool]) -> Result<(f64, f64)> {
        let start = Instant::now();
        let out = self.pair_uncounted(distilled);
        self.counter.evaluations += 1;
        self.counter.elapsed += start.elapsed();
        out
    }

    /// `dppl(H_l)` alone, counted as one evaluation.
    pub fn left(&mut self, distilled: &[bool]) -> Result<f64> {
        let start = Instant::now();
        let out = self.dppl(&self.inst.kept(distilled));
        self.counter.evaluations += 1;
        self.counter.elapsed += start.elapsed();
        out
    }
}

/// Result of a search for the smallest `H_d` meeting a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountOutcome {
    pub count: usize,
    /// True when the cap was reached without meeting the target.
    pub censored: bool,
    /// Selected events for deterministic searches.
    pub bits: Option<Vec<bool>>,
    pub dppl_d: f64,
    pub dppl_l: f64,
}

/// Uniform mask with exactly `ones` distilled events.
pub fn random_mask(n: usize, ones: usize, rng: &mut impl Rng) -> Vec<bool> {
    let mut bits = vec![false; n];
    for i in index::sample(rng, n, ones) {
        bits[i] = true;
    }
    bits
}

fn mean_pair(scorer: &mut Scorer<'_>, ones: usize, samples: usize, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let n = scorer.len();
    let (mut d, mut l) = (0.0, 0.0);
    for _ in 0..samples {
        let (a, b) = scorer.pair(&random_mask(n, ones, rng))?;
        d += a;
        l += b;
    }
    Ok((d / samples as f64, l / samples as f64))
}

/// Random distillation given a target: grow the count until the mean pair
/// over `samples` random masks meets the target.
pub fn rd_given_target(
    scorer: &mut Scorer<'_>,
    target: &TargetPair,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<CountOutcome> {
    if samples == 0 {
        return Err(EhdError::Config("sample rate must be at least 1".into()));
    }
    let n = scorer.len();
    let mut count = 0;
    let (mut d, mut l) = scorer.pair_uncounted(&vec![false; n])?;
    while !target.met(d, l) {
        if count == n {
            return Ok(CountOutcome {
                count,
                censored: true,
                bits: None,
                dppl_d: d,
                dppl_l: l,
            });
        }
        count += 1;
        (d, l) = mean_pair(scorer, count, samples, rng)?;
    }
    Ok(CountOutcome {
        count,
        censored: false,
        bits: None,
        dppl_d: d,
        dppl_l: l,
    })
}

/// One greedy step: the unselected event whose removal gives the lowest
/// `dppl_l` (ties to the lowest index). Returns `(index, dppl_d, dppl_l)`.
fn greedy_step(scorer: &mut Scorer<'_>, bits: &[bool]) -> Result<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    let mut trial = bits.to_vec();
    for j in (0..bits.len()).filter(|&j| !bits[j]) {
        trial[j] = true;
        let (d, l) = scorer.pair(&trial)?;
        trial[j] = false;
        if best.map_or(true, |(_, _, bl)| l < bl) {
            best = Some((j, d, l));
        }
    }
    best.ok_or_else(|| EhdError::domain("greedy_search", "no event left to select"))
}

/// Greedy search given a target. Also returns the per-step `dppl_l` trace.
pub fn gs_given_target(scorer: &mut Scorer<'_>, target: &TargetPair) -> Result<(CountOutcome, Vec<f64>)> {
    let n = scorer.len();
    let mut bits = vec![false; n];
    let (mut d, mut l) = scorer.pair_uncounted(&bits)?;
    let mut trace = Vec::new();
    let mut count = 0;
    while !target.met(d, l) {
        if count == n {
            return Ok((
                CountOutcome {
                    count,
                    censored: true,
                    bits: Some(bits),
                    dppl_d: d,
                    dppl_l: l,
                },
                trace,
            ));
        }
        let (j, bd, bl) = greedy_step(scorer, &bits)?;
        bits[j] = true;
        (d, l) = (bd, bl);
        trace.push(l);
        count += 1;
    }
    Ok((
        CountOutcome {
            count,
            censored: false,
            bits: Some(bits),
            dppl_d: d,
            dppl_l: l,
        },
        trace,
    ))
}

/// Random distillation with a fixed `|H_d| = l_d`: mean pair over `samples` masks.
///
/// With `l_d = 0` no masks are drawn and the pair is `(dppl(∅), 0)`, scored
/// with the empty-history state.
pub fn rd_given_length(scorer: &mut Scorer<'_>, l_d: usize, samples: usize, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let n = scorer.len();
    if l_d > n {
        return Err(EhdError::Config(format!("l_d = {l_d} exceeds history length {n}")));
    }
    if samples == 0 {
        return Err(EhdError::Config("sample rate must be at least 1".into()));
    }
    if l_d == 0 {
        return scorer.pair_uncounted(&vec![false; n]);
    }
    mean_pair(scorer, l_d, samples, rng)
}

/// Greedy search for exactly `l_d` steps. Returns the pair and the selection.
pub fn gs_given_length(scorer: &mut Scorer<'_>, l_d: usize) -> Result<((f64, f64), Vec<bool>)> {
    let n = scorer.len();
    if l_d > n {
        return Err(EhdError::Config(format!("l_d = {l_d} exceeds history length {n}")));
    }
    let mut bits = vec![false; n];
    let mut pair = scorer.pair_uncounted(&bits)?;
    for _ in 0..l_d {
        let (j, d, l) = greedy_step(scorer, &bits)?;
        bits[j] = true;
        pair = (d, l);
    }
    Ok((pair, bits))
}

/// Smallest `H_d` with `dppl(H_l) < log ε` by enumeration; ties go to the
/// lexicographically smallest mask `(y_0, y_1, ...)`. `None` when infeasible.
pub fn exhaustive_oracle(scorer: &mut Scorer<'_>, epsilon: f64, n_max: usize) -> Result<Option<Vec<bool>>> {
    let n = scorer.len();
    if n > n_max || n >= 64 {
        return Err(EhdError::TooLarge {
            size: n,
            max: n_max.min(63),
        });
    }
    let threshold = epsilon.ln();
    // bit n-1-i of the code is y_i, so increasing codes are increasing masks
    let decode = |code: u64| -> Vec<bool> { (0..n).map(|i| code >> (n - 1 - i) & 1 == 1).collect() };
    for c in 0..=n {
        let mut code: u64 = if c == 0 { 0 } else { (1u64 << c) - 1 };
        loop {
            let bits = decode(code);
            if scorer.left(&bits)? < threshold {
                return Ok(Some(bits));
            }
            if c == 0 {
                break;
            }
            // next larger integer with the same popcount
            let t = code | (code - 1);
            let next = (t + 1) | (((!t & (t + 1)) - 1) >> (code.trailing_zeros() + 1));
            if next >> n != 0 {
                break;
            }
            code = next;
        }
    }
    Ok(None)
}
