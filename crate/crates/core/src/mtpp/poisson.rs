use super::model::{Evaluation, IntensityModel, SequenceInput};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{EhdError, Result};
use crate::event::EventSequence;

/// Homogeneous Poisson process with one constant rate per mark.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonModel {
    pub rates: Vec<f64>,
}

impl PoissonModel {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(EhdError::Config(format!("invalid Poisson rates {rates:?}")));
        }
        Ok(PoissonModel { rates })
    }

    /// Maximum-likelihood rates: per-mark counts over total observed time.
    pub fn fit(sequences: &[EventSequence], marks: usize) -> Result<Self> {
        let mut counts = vec![0.0; marks];
        let mut span = 0.0;
        for s in sequences {
            span += s.t_end - s.t0;
            for e in &s.events {
                if e.mark >= marks {
                    return Err(EhdError::InvalidData(format!("mark {} >= {marks}", e.mark)));
                }
                counts[e.mark] += 1.0;
            }
        }
        if span <= 0.0 {
            return Err(EhdError::InvalidData("no observed time to fit rates".into()));
        }
        PoissonModel::new(counts.iter().map(|c| c / span).collect())
    }
}

impl IntensityModel for PoissonModel {
    fn mark_count(&self) -> usize {
        self.rates.len()
    }

    fn embedding_dim(&self) -> usize {
        1
    }

    fn embedding_table<'g>(&self, g: &'g Graph) -> Var<'g> {
        g.constant(Tensor::zeros(&[self.rates.len(), 1]))
    }

    fn evaluate<'g>(&self, g: &'g Graph, input: &SequenceInput<'g, '_>) -> Result<Evaluation<'g>> {
        let n = input.check("poisson", 1)?;
        let total: f64 = self.rates.iter().sum();
        let scored: Vec<usize> = (input.score_from..n).collect();
        let own: Vec<f64> = scored.iter().map(|&i| self.rates[input.marks[i]]).collect();
        let log_intensity = g.constant(Tensor::vector(own)).ln()?;
        let compensator = input.intervals.gather_rows(&scored)?.scale(total);
        let tail_compensator = input.tail.map(|t| g.constant(Tensor::scalar(total * t)));
        Ok(Evaluation {
            log_intensity,
            compensator,
            tail_compensator,
        })
    }
}
