//! Likelihood, perplexity and dppl on plain event lists.

use super::model::{IntensityModel, SequenceInput};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{EhdError, Result};
use crate::event::{is_subsequence, Event, EventSequence};

/// Returned by [`log_likelihood`] when an observed event has zero intensity.
pub const LOG_ZERO_SENTINEL: f64 = -1e30;

/// Marks and elapsed times of `events` measured from `origin`.
///
/// Times are first made relative to the origin and then differenced, which
/// is the same arithmetic the differentiable rebuild performs.
pub fn layout(events: &[Event], origin: f64) -> (Vec<usize>, Vec<f64>) {
    let marks = events.iter().map(|e| e.mark).collect();
    let rel: Vec<f64> = events.iter().map(|e| e.time - origin).collect();
    let mut intervals = Vec::with_capacity(rel.len());
    let mut prev = 0.0;
    for &t in &rel {
        intervals.push(t - prev);
        prev = t;
    }
    (marks, intervals)
}

/// `-mean` of the scored log densities, as a graph node.
pub fn log_perplexity_of<'g>(
    model: &dyn IntensityModel,
    g: &'g Graph,
    input: &SequenceInput<'g, '_>,
) -> Result<Var<'g>> {
    if input.score_from >= input.marks.len() {
        return Err(EhdError::domain("log_perplexity", "nothing to score"));
    }
    Ok(model.evaluate(g, input)?.log_densities()?.mean()?.neg())
}

/// Per-event `log p(x_i | x_<i, history)` for each future event.
pub fn future_log_densities(
    model: &dyn IntensityModel,
    history: &[Event],
    future: &[Event],
    origin: f64,
) -> Result<Vec<f64>> {
    let all: Vec<Event> = history.iter().chain(future).copied().collect();
    let (marks, intervals) = layout(&all, origin);
    let g = Graph::new();
    let input = SequenceInput {
        marks: &marks,
        embeddings: model.embedding_table(&g).gather_rows(&marks)?,
        intervals: g.constant(Tensor::vector(intervals)),
        score_from: history.len(),
        tail: None,
    };
    let dens = model.evaluate(&g, &input)?.log_densities()?;
    let out = dens.value().data().to_vec();
    Ok(out)
}

/// `-(1/|future|) Σ log p(x_i | x_<i, history)`.
pub fn log_perplexity(model: &dyn IntensityModel, future: &[Event], history: &[Event], origin: f64) -> Result<f64> {
    if future.is_empty() {
        return Err(EhdError::domain("log_perplexity", "empty future sequence"));
    }
    let all: Vec<Event> = history.iter().chain(future).copied().collect();
    let (marks, intervals) = layout(&all, origin);
    let g = Graph::new();
    let input = SequenceInput {
        marks: &marks,
        embeddings: model.embedding_table(&g).gather_rows(&marks)?,
        intervals: g.constant(Tensor::vector(intervals)),
        score_from: history.len(),
        tail: None,
    };
    Ok(log_perplexity_of(model, &g, &input)?.item())
}

/// `log ppl(x | full) - log ppl(x | left)`; `left` must be a subsequence of `full`.
pub fn dppl(model: &dyn IntensityModel, left: &[Event], full: &[Event], future: &[Event], origin: f64) -> Result<f64> {
    if !is_subsequence(left, full) {
        return Err(EhdError::InvalidData(
            "reduced history is not a subsequence of the full history".into(),
        ));
    }
    Ok(log_perplexity(model, future, full, origin)? - log_perplexity(model, future, left, origin)?)
}

/// Log-likelihood of a whole sequence on its window `[t0, t_end]`.
pub fn log_likelihood(model: &dyn IntensityModel, seq: &EventSequence) -> Result<f64> {
    if seq.is_empty() {
        return Err(EhdError::InvalidData("empty sequence".into()));
    }
    let g = Graph::new();
    let ll = log_likelihood_var(model, &g, seq);
    match ll {
        Ok(v) => Ok(v.item()),
        Err(EhdError::Domain { op: "log", detail }) => {
            log::warn!("zero intensity at an observed event ({detail}); returning sentinel");
            Ok(LOG_ZERO_SENTINEL)
        }
        Err(e) => Err(e),
    }
}

/// Differentiable log-likelihood of a sequence, including the survival term
/// from the last event to `t_end`.
pub fn log_likelihood_var<'g>(model: &dyn IntensityModel, g: &'g Graph, seq: &EventSequence) -> Result<Var<'g>> {
    let (marks, intervals) = layout(&seq.events, seq.t0);
    let last = seq.events.last().map_or(seq.t0, |e| e.time);
    let input = SequenceInput {
        marks: &marks,
        embeddings: model.embedding_table(g).gather_rows(&marks)?,
        intervals: g.constant(Tensor::vector(intervals)),
        score_from: 0,
        tail: Some(seq.t_end - last),
    };
    let ev = model.evaluate(g, &input)?;
    let tail = ev.tail_compensator.expect("tail requested");
    ev.log_densities()?.sum().sub(tail)
}
