use crate::autodiff::{Graph, Var};
use crate::error::{EhdError, Result};

/// A sequence prepared for scoring. Times are in raw dataset units.
pub struct SequenceInput<'g, 'a> {
    pub marks: &'a [usize],
    /// `[n, E]` mark representations, row `i` for event `i`.
    pub embeddings: Var<'g>,
    /// `[n]` elapsed time since the previous event (or the origin for event 0).
    pub intervals: Var<'g>,
    /// Events before this index only condition; later ones are scored.
    pub score_from: usize,
    /// Elapsed time from the last event to the end of the observation window.
    pub tail: Option<f64>,
}

impl SequenceInput<'_, '_> {
    pub(crate) fn check(&self, op: &'static str, dim: usize) -> Result<usize> {
        let n = self.marks.len();
        let e = self.embeddings.shape();
        if e != [n, dim] || self.intervals.shape() != [n] {
            return Err(EhdError::shape(
                op,
                format!(
                    "{n} marks with embeddings {:?} (width {dim}) and intervals {:?}",
                    e,
                    self.intervals.shape()
                ),
            ));
        }
        if self.score_from > n {
            return Err(EhdError::shape(op, format!("score_from {} > {n}", self.score_from)));
        }
        if let Some(bad) = self.intervals.value().data().iter().find(|&&d| !(d >= 0.0)) {
            return Err(EhdError::domain(op, format!("negative interval {bad}")));
        }
        Ok(n)
    }
}

/// Scored quantities for events `score_from..n`.
pub struct Evaluation<'g> {
    /// `[m]` log-intensity of each scored event's own mark at its time.
    pub log_intensity: Var<'g>,
    /// `[m]` compensator summed over marks across each scored event's interval.
    pub compensator: Var<'g>,
    /// Summed compensator from the last event to the window end.
    pub tail_compensator: Option<Var<'g>>,
}

impl<'g> Evaluation<'g> {
    /// `[m]` per-event log density `log λ(m_i, t_i) - Σ_k Λ_k`.
    pub fn log_densities(&self) -> Result<Var<'g>> {
        self.log_intensity.sub(self.compensator)
    }
}

/// A conditional intensity model over marked events.
pub trait IntensityModel: Send + Sync {
    fn mark_count(&self) -> usize;

    fn embedding_dim(&self) -> usize;

    /// `[K, E]` mark representation table bound into `g`.
    fn embedding_table<'g>(&self, g: &'g Graph) -> Var<'g>;

    fn evaluate<'g>(&self, g: &'g Graph, input: &SequenceInput<'g, '_>) -> Result<Evaluation<'g>>;
}
