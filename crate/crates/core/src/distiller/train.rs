use rand::seq::index;

use super::config::{DistillTrainConfig, LossMode};
use super::loss::{cardinality_loss, constraint_loss, l0, l1};
use super::model::Distiller;
use super::rebuild::{rebuild_history, rebuilt_log_perplexity};
use crate::autodiff::{gumbel_noise, gumbel_softmax_with_noise, Adam, Graph, Tensor, Var};
use crate::error::{EhdError, Result};
use crate::event::DistillInstance;
use crate::mtpp::{log_perplexity, IntensityModel};
use crate::parallel::Workers;
use crate::rng;

/// Per-instance loss terms of one training step.
pub struct StepTerms<'g> {
    pub loss: Var<'g>,
    pub constraint: f64,
    pub cardinality: f64,
    /// Mean kept fraction over the mask samples.
    pub left_fraction: f64,
    /// Mean dppl of the sampled left histories.
    pub dppl_left: f64,
}

/// Builds `alpha * L_n + L_c` (or one term, per `config.loss`) for one
/// instance. `full_log_ppl` is the log-perplexity of the future under the
/// full history; `coords` seed the mask samples.
pub fn instance_loss<'g>(
    g: &'g Graph,
    distiller: &Distiller,
    mtpp: &dyn IntensityModel,
    inst: &DistillInstance,
    full_log_ppl: f64,
    config: &DistillTrainConfig,
    coords: &[u64],
) -> Result<StepTerms<'g>> {
    let noise: Vec<Tensor> = (0..config.samples)
        .map(|s| {
            let mut at = coords.to_vec();
            at.push(s as u64);
            gumbel_noise(inst.history.len(), &mut rng::derived(config.seed, &at))
        })
        .collect();
    instance_loss_with_noise(g, distiller, mtpp, inst, full_log_ppl, config, &noise, true)
}

/// As [`instance_loss`] with one caller-supplied `[n, 2]` noise tensor per
/// sample. With `hard = false` the masks are the tempered softmax itself, so
/// the loss is smooth wherever no keep weight crosses 1/2.
#[allow(clippy::too_many_arguments)]
pub fn instance_loss_with_noise<'g>(
    g: &'g Graph,
    distiller: &Distiller,
    mtpp: &dyn IntensityModel,
    inst: &DistillInstance,
    full_log_ppl: f64,
    config: &DistillTrainConfig,
    noise: &[Tensor],
    hard: bool,
) -> Result<StepTerms<'g>> {
    let origin = inst.origin();
    let n = inst.history.len();
    let logits = distiller.selection_distribution(g, &inst.history, &inst.future, origin)?;
    let mut masks = Vec::with_capacity(noise.len());
    let mut dppls = Vec::with_capacity(noise.len());
    let mut kept = 0usize;
    for (s, z) in noise.iter().enumerate() {
        let mask = gumbel_softmax_with_noise(logits, z, config.temperature, s, hard)?;
        if hard {
            debug_assert_eq!(l0(&mask) as f64, l1(&mask));
        }
        let rebuilt = rebuild_history(mtpp, g, &inst.history, mask.keep()?, origin)?;
        kept += rebuilt.kept_count();
        let left = rebuilt_log_perplexity(mtpp, g, &rebuilt, &inst.future, origin)?;
        dppls.push(left.neg().add_scalar(full_log_ppl));
        masks.push(mask);
    }
    let lc = constraint_loss(&dppls, config.epsilon)?;
    let ln = cardinality_loss(&masks)?;
    let loss = match config.loss {
        LossMode::Full => ln.scale(config.alpha).add(lc)?,
        LossMode::ConstraintOnly => lc,
        LossMode::CardinalityOnly => ln,
    };
    let dppl_left = dppls.iter().map(|d| d.item()).sum::<f64>() / dppls.len() as f64;
    Ok(StepTerms {
        loss,
        constraint: lc.item(),
        cardinality: ln.item(),
        left_fraction: kept as f64 / (n * noise.len()) as f64,
        dppl_left,
    })
}

#[derive(Clone, Debug, Default)]
pub struct DistillTrainReport {
    pub losses: Vec<f64>,
    /// Per-step batch mean of the kept fraction.
    pub left_fraction: Vec<f64>,
    /// Per-step batch mean dppl of the sampled left histories.
    pub dppl_left: Vec<f64>,
    /// `(step, mean kept fraction over the interval)` every `log_every` steps.
    pub trace: Vec<(usize, f64)>,
    pub skipped_steps: usize,
}

struct InstanceGrad {
    loss: f64,
    left: f64,
    dppl: f64,
    grads: Vec<Option<Tensor>>,
}

/// Log-perplexity of every instance's future under its full history.
pub fn full_log_perplexities(
    mtpp: &dyn IntensityModel,
    instances: &[DistillInstance],
    workers: &Workers,
) -> Result<Vec<f64>> {
    workers
        .map(instances, |_, inst| {
            log_perplexity(mtpp, &inst.future, &inst.history, inst.origin())
        })
        .into_iter()
        .collect()
}

/// Trains the selection model against a frozen intensity model.
pub fn train_distiller(
    distiller: &mut Distiller,
    mtpp: &dyn IntensityModel,
    instances: &[DistillInstance],
    config: &DistillTrainConfig,
    workers: &Workers,
) -> Result<DistillTrainReport> {
    config.validate()?;
    if instances.is_empty() {
        return Err(EhdError::InvalidData("no training instances".into()));
    }
    for inst in instances {
        inst.validate(mtpp.mark_count())?;
    }
    let full = full_log_perplexities(mtpp, instances, workers)?;
    let mut opt = Adam::new(config.lr, config.warmup as u64);
    let mut report = DistillTrainReport::default();
    let mut last_good = distiller.params().clone();
    let batch = config.batch.min(instances.len());
    let mut window = Vec::new();
    let mut bad_run = 0;
    for step in 0..config.steps {
        let mut r = rng::derived(config.seed, &[0x6261_7463, step as u64]);
        let picked: Vec<usize> = index::sample(&mut r, instances.len(), batch).into_vec();
        let model = &*distiller;
        let parts = workers.map(&picked, |_, &i| -> Result<InstanceGrad> {
            let g = Graph::new();
            let terms = instance_loss(
                &g,
                model,
                mtpp,
                &instances[i],
                full[i],
                config,
                &[step as u64, i as u64],
            )?;
            let loss = terms.loss.scale(1.0 / batch as f64);
            g.backward(loss)?;
            Ok(InstanceGrad {
                loss: loss.item(),
                left: terms.left_fraction,
                dppl: terms.dppl_left,
                grads: g.param_grads(model.params()),
            })
        });
        let mut loss = 0.0;
        let mut left = 0.0;
        let mut dppl = 0.0;
        let mut grads: Vec<Option<Tensor>> = vec![None; distiller.params().len()];
        for part in parts {
            let part = part?;
            loss += part.loss;
            left += part.left / batch as f64;
            dppl += part.dppl / batch as f64;
            for (acc, gr) in grads.iter_mut().zip(part.grads) {
                match (acc.as_mut(), gr) {
                    (Some(a), Some(gr)) => a.add_assign(&gr),
                    (None, Some(gr)) => *acc = Some(gr),
                    _ => {}
                }
            }
        }
        if loss.is_nan() {
            distiller.params_mut().load_from(&last_good)?;
            return Err(EhdError::Diverged {
                step: step as u64,
                loss,
            });
        }
        last_good = distiller.params().clone();
        match opt.step(distiller.params_mut(), &grads) {
            Ok(()) => bad_run = 0,
            Err(EhdError::NonFiniteGradient { .. }) => {
                report.skipped_steps += 1;
                bad_run += 1;
                log::warn!("step {step}: non-finite gradient, update skipped");
                if bad_run >= 10 {
                    return Err(EhdError::NonFiniteGradient { step: step as u64 });
                }
            }
            Err(e) => return Err(e),
        }
        report.losses.push(loss);
        report.left_fraction.push(left);
        report.dppl_left.push(dppl);
        window.push(left);
        if window.len() == config.log_every || step + 1 == config.steps {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            report.trace.push((step + 1, mean));
            log::info!("distiller step {} loss {loss:.5} left {mean:.4}", step + 1);
            window.clear();
        }
    }
    Ok(report)
}
