use rand::seq::index;

use super::fullynn::FullyNn;
use super::scoring::log_likelihood_var;
use crate::autodiff::{Adam, Graph, Tensor};
use crate::config::KvConfig;
use crate::error::{EhdError, Result};
use crate::event::EventSequence;
use crate::parallel::Workers;
use crate::rng;

/// Consecutive non-finite gradient steps tolerated before giving up.
const MAX_BAD_STEPS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct MtppTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for MtppTrainConfig {
    fn default() -> Self {
        MtppTrainConfig {
            steps: 2000,
            batch: 16,
            lr: 0.002,
            warmup: 100,
            seed: 0,
        }
    }
}

impl MtppTrainConfig {
    pub fn to_kv(&self) -> KvConfig {
        let mut c = KvConfig::new();
        c.set("mtpp.steps", self.steps);
        c.set("mtpp.batch", self.batch);
        c.set_f64("mtpp.lr", self.lr);
        c.set("mtpp.warmup", self.warmup);
        c.set("mtpp.seed", self.seed);
        c
    }

    pub fn from_kv(c: &KvConfig) -> Result<Self> {
        let d = MtppTrainConfig::default();
        let cfg = MtppTrainConfig {
            steps: c.get_or("mtpp.steps", d.steps)?,
            batch: c.get_or("mtpp.batch", d.batch)?,
            lr: c.get_or("mtpp.lr", d.lr)?,
            warmup: c.get_or("mtpp.warmup", d.warmup)?,
            seed: c.get_or("mtpp.seed", d.seed)?,
        };
        if cfg.batch == 0 || !(cfg.lr > 0.0) {
            return Err(EhdError::Config(format!("invalid MTPP training config {cfg:?}")));
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default)]
pub struct MtppTrainReport {
    /// Per-event negative log-likelihood of each step's batch.
    pub losses: Vec<f64>,
    pub skipped_steps: usize,
}

/// Per-event NLL of `sequences` under `model`, and its parameter gradients.
fn batch_loss(model: &FullyNn, batch: &[&EventSequence], workers: &Workers) -> Result<(f64, Vec<Option<Tensor>>)> {
    let events: usize = batch.iter().map(|s| s.len()).sum();
    let norm = 1.0 / events.max(1) as f64;
    let parts = workers.map(batch, |_, seq| -> Result<(f64, Vec<Option<Tensor>>)> {
        let g = Graph::new();
        let nll = log_likelihood_var(model, &g, seq)?.scale(-norm);
        g.backward(nll)?;
        Ok((nll.item(), g.param_grads(model.params())))
    });
    let mut loss = 0.0;
    let mut grads: Vec<Option<Tensor>> = vec![None; model.params().len()];
    for part in parts {
        let (l, gs) = part?;
        loss += l;
        for (acc, gr) in grads.iter_mut().zip(gs) {
            match (acc.as_mut(), gr) {
                (Some(a), Some(gr)) => a.add_assign(&gr),
                (None, Some(gr)) => *acc = Some(gr),
                _ => {}
            }
        }
    }
    Ok((loss, grads))
}

/// Mean per-event negative log-likelihood over a whole dataset.
pub fn mean_nll(model: &FullyNn, sequences: &[EventSequence], workers: &Workers) -> Result<f64> {
    let parts = workers.map(sequences, |_, seq| -> Result<f64> {
        let g = Graph::new();
        Ok(log_likelihood_var(model, &g, seq)?.item())
    });
    let mut ll = 0.0;
    for p in parts {
        ll += p?;
    }
    let events: usize = sequences.iter().map(|s| s.len()).sum();
    Ok(-ll / events.max(1) as f64)
}

/// Maximum-likelihood training with Adam on random mini-batches.
///
/// A NaN loss restores the last parameters that produced a finite loss and
/// returns [`EhdError::Diverged`]; callers that want that state can keep
/// `model`, which is left at the restored values.
pub fn train_mtpp(
    model: &mut FullyNn,
    sequences: &[EventSequence],
    config: &MtppTrainConfig,
    workers: &Workers,
) -> Result<MtppTrainReport> {
    let sequences: Vec<&EventSequence> = sequences.iter().filter(|s| !s.is_empty()).collect();
    if sequences.is_empty() {
        return Err(EhdError::InvalidData("no non-empty training sequences".into()));
    }
    let marks = model.config().marks;
    for s in &sequences {
        s.validate(marks)?;
    }
    let mut opt = Adam::new(config.lr, config.warmup as u64);
    let mut report = MtppTrainReport::default();
    let mut last_good = model.params().clone();
    let mut bad_run = 0;
    let batch = config.batch.min(sequences.len());
    for step in 0..config.steps {
        let mut r = rng::derived(config.seed, &[0x7472_6e, step as u64]);
        let picked: Vec<&EventSequence> = index::sample(&mut r, sequences.len(), batch)
            .into_iter()
            .map(|i| sequences[i])
            .collect();
        let (loss, grads) = batch_loss(model, &picked, workers)?;
        if loss.is_nan() {
            model.params_mut().load_from(&last_good)?;
            return Err(EhdError::Diverged {
                step: step as u64,
                loss,
            });
        }
        last_good = model.params().clone();
        match opt.step(model.params_mut(), &grads) {
            Ok(()) => bad_run = 0,
            Err(EhdError::NonFiniteGradient { .. }) => {
                report.skipped_steps += 1;
                bad_run += 1;
                log::warn!("step {step}: non-finite gradient, update skipped");
                if bad_run >= MAX_BAD_STEPS {
                    return Err(EhdError::NonFiniteGradient { step: step as u64 });
                }
            }
            Err(e) => return Err(e),
        }
        if step % 100 == 0 {
            log::info!("mtpp step {step} loss {loss:.5}");
        }
        report.losses.push(loss);
    }
    Ok(report)
}
