use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{EhdError, Result};
use crate::event::Event;
use crate::mtpp::{log_perplexity_of, IntensityModel, SequenceInput};

/// The kept part of a history, with time and embedding representations that
/// carry gradient back to the mask's keep component.
pub struct RebuiltHistory<'g> {
    /// Indices into the original history, in order.
    pub kept: Vec<usize>,
    pub marks: Vec<usize>,
    /// `[k, E]` mark embeddings scaled by their keep weight.
    pub embeddings: Option<Var<'g>>,
    /// `[k]` times since the origin scaled by their keep weight.
    pub times: Option<Var<'g>>,
}

impl<'g> RebuiltHistory<'g> {
    pub fn kept_count(&self) -> usize {
        self.kept.len()
    }

    /// True when every event was distilled; scoring then starts from the
    /// model's empty-history state.
    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// `[k]` elapsed times between consecutive kept events (the first from
    /// the origin).
    pub fn intervals(&self) -> Result<Option<Var<'g>>> {
        self.times.map(|t| t.diff(0.0)).transpose()
    }
}

/// Drops events whose keep weight is zero, after multiplying times and
/// embeddings by that weight so the mask stays in the graph.
///
/// `keep` is `[n, 1]`; with a hard mask every entry is 0 or 1.
pub fn rebuild_history<'g>(
    model: &dyn IntensityModel,
    g: &'g Graph,
    history: &[Event],
    keep: Var<'g>,
    origin: f64,
) -> Result<RebuiltHistory<'g>> {
    let n = history.len();
    if keep.shape() != [n, 1] {
        return Err(EhdError::shape(
            "rebuild_history",
            format!("mask {:?} for {n} events", keep.shape()),
        ));
    }
    let weights = keep.value();
    let kept: Vec<usize> = (0..n).filter(|&i| weights.data()[i] > 0.5).collect();
    let marks_all: Vec<usize> = history.iter().map(|e| e.mark).collect();
    let marks = kept.iter().map(|&i| marks_all[i]).collect();
    if kept.is_empty() {
        return Ok(RebuiltHistory {
            kept,
            marks,
            embeddings: None,
            times: None,
        });
    }
    let rel: Vec<f64> = history.iter().map(|e| e.time - origin).collect();
    let times = g
        .constant(Tensor::vector(rel))
        .mul(keep.reshape(&[n])?)?
        .gather_rows(&kept)?;
    let embeddings = model
        .embedding_table(g)
        .gather_rows(&marks_all)?
        .mul(keep)?
        .gather_rows(&kept)?;
    Ok(RebuiltHistory {
        kept,
        marks,
        embeddings: Some(embeddings),
        times: Some(times),
    })
}

/// Log-perplexity of `future` conditioned on a rebuilt history, as a graph node.
pub fn rebuilt_log_perplexity<'g>(
    model: &dyn IntensityModel,
    g: &'g Graph,
    rebuilt: &RebuiltHistory<'g>,
    future: &[Event],
    origin: f64,
) -> Result<Var<'g>> {
    if future.is_empty() {
        return Err(EhdError::domain("log_perplexity", "empty future sequence"));
    }
    let fut_marks: Vec<usize> = future.iter().map(|e| e.mark).collect();
    let fut_rel: Vec<f64> = future.iter().map(|e| e.time - origin).collect();
    let fut_emb = model.embedding_table(g).gather_rows(&fut_marks)?;
    let fut_times = g.constant(Tensor::vector(fut_rel));
    let (times, embeddings) = match (rebuilt.times, rebuilt.embeddings) {
        (Some(t), Some(e)) => (g.concat_rows(&[t, fut_times])?, g.concat_rows(&[e, fut_emb])?),
        _ => (fut_times, fut_emb),
    };
    let marks: Vec<usize> = rebuilt.marks.iter().chain(&fut_marks).copied().collect();
    let input = SequenceInput {
        marks: &marks,
        embeddings,
        intervals: times.diff(0.0)?,
        score_from: rebuilt.kept_count(),
        tail: None,
    };
    log_perplexity_of(model, g, &input)
}
