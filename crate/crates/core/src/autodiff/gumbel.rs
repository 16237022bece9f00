use rand::Rng;

use super::graph::Var;
use super::tensor::Tensor;
use crate::error::{EhdError, Result};

const U_MIN: f64 = 1e-12;
const U_MAX: f64 = 1.0 - 1e-12;

/// `[n, 2]` standard Gumbel noise.
pub fn gumbel_noise(n: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..2 * n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>().clamp(U_MIN, U_MAX);
            -(-u.ln()).ln()
        })
        .collect();
    Tensor::new(vec![n, 2], data).expect("numel matches")
}

/// Per-event one-hot selections with a tempered-softmax gradient proxy.
///
/// Column 0 is keep (`y = 0`), column 1 is distill (`y = 1`).
#[derive(Clone, Copy, Debug)]
pub struct SoftMask<'g> {
    pub values: Var<'g>,
    pub sample: usize,
}

impl<'g> SoftMask<'g> {
    /// Column of keep weights, `[n, 1]`.
    pub fn keep(&self) -> Result<Var<'g>> {
        self.values.slice_cols(0, 1)
    }

    /// Column of distill weights, `[n, 1]`.
    pub fn distill(&self) -> Result<Var<'g>> {
        self.values.slice_cols(1, 1)
    }

    /// Forward selection bits: `true` means distilled out.
    pub fn bits(&self) -> Vec<bool> {
        self.values.value().data().chunks(2).map(|r| r[1] > r[0]).collect()
    }
}

/// Straight-through Gumbel-Softmax over `[n, 2]` log-probabilities.
///
/// The forward value is the exact one-hot argmax of `logits + g`; gradients
/// flow through `softmax((logits + g) / temperature)`.
pub fn gumbel_softmax_st<'g>(
    logits: Var<'g>,
    temperature: f64,
    sample: usize,
    rng: &mut impl Rng,
) -> Result<SoftMask<'g>> {
    let n = check_logits(&logits)?;
    let noise = gumbel_noise(n, rng);
    gumbel_softmax_with_noise(logits, &noise, temperature, sample, true)
}

/// As [`gumbel_softmax_st`] with caller-supplied noise. With `hard = false`
/// the forward value is the tempered softmax itself, which makes the whole
/// path smooth (used for finite-difference checks of the proxy).
pub fn gumbel_softmax_with_noise<'g>(
    logits: Var<'g>,
    noise: &Tensor,
    temperature: f64,
    sample: usize,
    hard: bool,
) -> Result<SoftMask<'g>> {
    let n = check_logits(&logits)?;
    if !(temperature > 0.0) {
        return Err(EhdError::domain(
            "gumbel_softmax",
            format!("temperature must be positive, got {temperature}"),
        ));
    }
    if noise.shape() != [n, 2] {
        return Err(EhdError::shape(
            "gumbel_softmax",
            format!("noise {:?} for logits [{n}, 2]", noise.shape()),
        ));
    }
    let g = logits.graph();
    let perturbed = logits.add(g.constant(noise.clone()))?;
    let soft = perturbed.scale(1.0 / temperature).softmax();
    if !hard {
        return Ok(SoftMask { values: soft, sample });
    }
    let pv = perturbed.value();
    let mut hard_vals = vec![0.0; 2 * n];
    for (i, r) in pv.data().chunks(2).enumerate() {
        hard_vals[2 * i + usize::from(r[1] > r[0])] = 1.0;
    }
    let values = soft.straight_through(Tensor::new(vec![n, 2], hard_vals)?)?;
    Ok(SoftMask { values, sample })
}

fn check_logits(logits: &Var<'_>) -> Result<usize> {
    let v = logits.value();
    if v.rank() != 2 || v.shape()[1] != 2 {
        return Err(EhdError::shape(
            "gumbel_softmax",
            format!("logits must be [n, 2], got {:?}", v.shape()),
        ));
    }
    if !v.is_finite() {
        return Err(EhdError::domain("gumbel_softmax", "non-finite logits"));
    }
    Ok(v.shape()[0])
}
