use serde::{Deserialize, Serialize};

use super::model::{Evaluation, IntensityModel, SequenceInput};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{EhdError, Result};

/// Multivariate Hawkes process with exponential kernels.
///
/// `λ_k(t) = base_k + Σ_{t_j < t} excitation[k][m_j] · decay[m_j] · exp(-decay[m_j] (t - t_j))`,
/// so `excitation[k][j]` is the expected number of mark-`k` children of one
/// mark-`j` event (the branching matrix).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub base: Vec<f64>,
    pub excitation: Vec<Vec<f64>>,
    pub decay: Vec<f64>,
}

impl HawkesParams {
    pub fn marks(&self) -> usize {
        self.base.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.base.len();
        let ok = k > 0
            && self.decay.len() == k
            && self.excitation.len() == k
            && self
                .excitation
                .iter()
                .all(|r| r.len() == k && r.iter().all(|a| *a >= 0.0 && a.is_finite()))
            && self.base.iter().all(|b| *b > 0.0 && b.is_finite())
            && self.decay.iter().all(|d| *d > 0.0 && d.is_finite());
        if !ok {
            return Err(EhdError::Config(format!("invalid Hawkes parameters {self:?}")));
        }
        Ok(())
    }

    /// Total expected children per event of each source mark.
    pub fn offspring(&self) -> Vec<f64> {
        let k = self.marks();
        (0..k).map(|j| (0..k).map(|i| self.excitation[i][j]).sum()).collect()
    }
}

/// The Hawkes process as a differentiable scoring model (ground truth for
/// synthetic data).
#[derive(Clone, Debug)]
pub struct HawkesModel {
    pub params: HawkesParams,
}

impl HawkesModel {
    pub fn new(params: HawkesParams) -> Result<Self> {
        params.validate()?;
        Ok(HawkesModel { params })
    }
}

impl IntensityModel for HawkesModel {
    fn mark_count(&self) -> usize {
        self.params.marks()
    }

    fn embedding_dim(&self) -> usize {
        1
    }

    fn embedding_table<'g>(&self, g: &'g Graph) -> Var<'g> {
        g.constant(Tensor::zeros(&[self.params.marks(), 1]))
    }

    fn evaluate<'g>(&self, g: &'g Graph, input: &SequenceInput<'g, '_>) -> Result<Evaluation<'g>> {
        let n = input.check("hawkes", 1)?;
        let p = &self.params;
        let base_total: f64 = p.base.iter().sum();
        let offspring = p.offspring();
        let times = input.intervals.cumsum()?;
        let marks = input.marks;

        // exp(-decay_j (times[at] + shift - t_j)) for all j < upto
        let kernel = |at: usize, shift: f64, upto: usize| -> Result<Var<'g>> {
            let prior: Vec<usize> = (0..upto).collect();
            let neg_decay: Vec<f64> = prior.iter().map(|&j| -p.decay[marks[j]]).collect();
            times
                .gather_rows(&vec![at; upto])?
                .add_scalar(shift)
                .sub(times.gather_rows(&prior)?)?
                .mul(g.constant(Tensor::vector(neg_decay)))
                .map(Var::exp)
        };

        let mut log_rows = Vec::new();
        let mut comp_rows = Vec::new();
        for i in input.score_from..n {
            let own = marks[i];
            let dt = input.intervals.gather_rows(&[i])?;
            if i == 0 {
                log_rows.push(g.constant(Tensor::vector(vec![p.base[own].ln()])));
                comp_rows.push(dt.scale(base_total));
                continue;
            }
            let now = kernel(i, 0.0, i)?;
            let weights: Vec<f64> = (0..i)
                .map(|j| p.excitation[own][marks[j]] * p.decay[marks[j]])
                .collect();
            let lam = now.masked_sum(&weights)?.add_scalar(p.base[own]);
            log_rows.push(lam.ln()?.reshape(&[1])?);
            let before = kernel(i - 1, 0.0, i)?;
            let mass: Vec<f64> = (0..i).map(|j| offspring[marks[j]]).collect();
            let excited = before.sub(now)?.masked_sum(&mass)?.reshape(&[1])?;
            comp_rows.push(excited.add(dt.scale(base_total))?);
        }
        let log_intensity = cat(g, log_rows)?;
        let compensator = cat(g, comp_rows)?;
        let tail_compensator = match input.tail {
            None => None,
            Some(t) if n == 0 => Some(g.constant(Tensor::scalar(base_total * t))),
            Some(t) => {
                let mass: Vec<f64> = marks.iter().map(|&m| offspring[m]).collect();
                let excited = kernel(n - 1, 0.0, n)?.sub(kernel(n - 1, t, n)?)?.masked_sum(&mass)?;
                Some(excited.add_scalar(base_total * t))
            }
        };
        Ok(Evaluation {
            log_intensity,
            compensator,
            tail_compensator,
        })
    }
}

fn cat<'g>(g: &'g Graph, rows: Vec<Var<'g>>) -> Result<Var<'g>> {
    if rows.is_empty() {
        Ok(g.constant(Tensor::zeros(&[0])))
    } else {
        g.concat_rows(&rows)
    }
}
