use serde::{Deserialize, Serialize};

use super::model::Distiller;
use crate::autodiff::Graph;
use crate::error::Result;
use crate::event::DistillInstance;
use crate::mtpp::{dppl, IntensityModel};

/// Outcome of distilling one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillResult {
    pub seq_id: u64,
    pub offset: usize,
    /// 1 marks a distilled (removed) history event.
    pub y: Vec<u8>,
    pub card_d: usize,
    pub dppl_d: f64,
    pub dppl_l: f64,
    /// `dppl_d - dppl_l`.
    pub metric: f64,
    /// Set when `H_d` or `H_l` is empty and was scored with the empty-history state.
    pub empty_conditioning: bool,
}

impl DistillResult {
    /// Scores a given partition. `distilled[i]` is true when event `i` is in `H_d`.
    pub fn from_bits(mtpp: &dyn IntensityModel, inst: &DistillInstance, distilled: &[bool]) -> Result<Self> {
        let origin = inst.origin();
        let h_d = inst.distilled(distilled);
        let h_l = inst.kept(distilled);
        let dppl_d = dppl(mtpp, &h_d, &inst.history, &inst.future, origin)?;
        let dppl_l = dppl(mtpp, &h_l, &inst.history, &inst.future, origin)?;
        Ok(DistillResult {
            seq_id: inst.seq_id,
            offset: inst.offset,
            y: distilled.iter().map(|&b| u8::from(b)).collect(),
            card_d: h_d.len(),
            dppl_d,
            dppl_l,
            metric: dppl_d - dppl_l,
            empty_conditioning: h_d.is_empty() || h_l.is_empty(),
        })
    }

    pub fn bits(&self) -> Vec<bool> {
        self.y.iter().map(|&b| b == 1).collect()
    }
}

/// Per-event `[keep, distill]` log-probabilities.
pub fn selection_log_probs(distiller: &Distiller, inst: &DistillInstance) -> Result<Vec<[f64; 2]>> {
    let g = Graph::new();
    let lp = distiller.selection_distribution(&g, &inst.history, &inst.future, inst.origin())?;
    let v = lp.value();
    Ok(v.data().chunks(2).map(|r| [r[0], r[1]]).collect())
}

/// Argmax partition: an event is distilled when its distill log-probability
/// is strictly larger than its keep log-probability.
pub fn argmax_bits(log_probs: &[[f64; 2]]) -> Vec<bool> {
    log_probs.iter().map(|p| p[1] > p[0]).collect()
}

/// Deterministic distillation of one instance.
pub fn distill(distiller: &Distiller, mtpp: &dyn IntensityModel, inst: &DistillInstance) -> Result<DistillResult> {
    inst.validate(mtpp.mark_count())?;
    let bits = argmax_bits(&selection_log_probs(distiller, inst)?);
    DistillResult::from_bits(mtpp, inst, &bits)
}
