//! Marked fully-neural compensator model.
//!
//! A recurrent encoder summarises the history into a state `s`. For each mark
//! `k` a monotone network gives `F_k(s, u)` on the scaled elapsed time `u`,
//! and the compensator is `Λ_k(u) = F_k(u) - F_k(0) + μ_k u` with a learned
//! base rate `μ_k > 0`. Monotonicity in `u` comes from non-negative weights on
//! every path from `u` (softplus-reparameterised) and increasing activations.
//! The intensity is the exact derivative, propagated alongside the forward
//! pass rather than taken numerically.

use std::path::Path;

use rand::Rng;

use super::model::{Evaluation, IntensityModel, SequenceInput};
use crate::autodiff::{checkpoint, glorot, uniform, Graph, ParamStore, Tensor, Var};
use crate::config::KvConfig;
use crate::error::{EhdError, Result};
use crate::rng;

pub const CHECKPOINT_KIND: &str = "fullynn";

const BASE_RATE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FullyNnConfig {
    pub marks: usize,
    /// Number of monotone hidden layers in the compensator network.
    pub layers: usize,
    /// Width of the mark embedding and of the recurrent history state.
    pub history: usize,
    /// Width of the compensator network's hidden layers.
    pub intensity: usize,
    /// Raw intervals are divided by this before entering the network.
    pub time_scale: f64,
}

impl FullyNnConfig {
    pub fn retweet() -> Self {
        FullyNnConfig {
            marks: 3,
            layers: 4,
            history: 32,
            intensity: 16,
            time_scale: 2574.0,
        }
    }

    pub fn stack_overflow() -> Self {
        FullyNnConfig {
            marks: 22,
            layers: 2,
            history: 32,
            intensity: 32,
            time_scale: 0.8747,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.marks == 0 || self.layers == 0 || self.history == 0 || self.intensity == 0 {
            return Err(EhdError::Config(format!("mtpp sizes must be positive: {self:?}")));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(EhdError::Config(format!(
                "mtpp.time_scale must be positive, got {}",
                self.time_scale
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut c = KvConfig::new();
        c.set("mtpp.marks", self.marks);
        c.set("mtpp.layers", self.layers);
        c.set("mtpp.history", self.history);
        c.set("mtpp.intensity", self.intensity);
        c.set_f64("mtpp.time_scale", self.time_scale);
        c
    }

    pub fn from_kv(c: &KvConfig) -> Result<Self> {
        let cfg = FullyNnConfig {
            marks: c.require("mtpp.marks")?,
            layers: c.require("mtpp.layers")?,
            history: c.require("mtpp.history")?,
            intensity: c.require("mtpp.intensity")?,
            time_scale: c.require("mtpp.time_scale")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
struct Indices {
    emb: usize,
    wx: usize,
    wh: usize,
    b: usize,
    h0: usize,
    ws: usize,
    wdt: usize,
    b1: usize,
    hidden: Vec<(usize, usize)>,
    wout: usize,
    bout: usize,
    base: usize,
}

#[derive(Clone, Debug)]
pub struct FullyNn {
    config: FullyNnConfig,
    params: ParamStore,
    idx: Indices,
}

impl FullyNn {
    pub fn new(config: FullyNnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::derived(seed, &[0x6d74_7070]);
        let (k, e, h, i) = (config.marks, config.history, config.history, config.intensity);
        let mut p = ParamStore::new();
        let raw = |shape: &[usize], r: &mut rng::Rng| {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.gen_range(-3.0..-1.0)).collect();
            Tensor::new(shape.to_vec(), data).expect("numel matches")
        };
        let idx = Indices {
            emb: p.add("mark_embedding", uniform(&[k, e], 0.5, &mut r), true)?,
            wx: p.add("rnn.w_input", glorot(e + 1, h, &mut r), true)?,
            wh: p.add("rnn.w_state", glorot(h, h, &mut r), true)?,
            b: p.add("rnn.bias", Tensor::zeros(&[h]), true)?,
            h0: p.add("rnn.initial_state", Tensor::zeros(&[h]), true)?,
            ws: p.add("comp.w_state", glorot(h, i, &mut r), true)?,
            wdt: p.add("comp.w_time_raw", uniform(&[i], 0.75, &mut r), true)?,
            b1: p.add("comp.bias_in", uniform(&[i], 1.0, &mut r), true)?,
            hidden: (0..config.layers - 1)
                .map(|l| {
                    let w = p.add(&format!("comp.hidden{l}.w_raw"), raw(&[i, i], &mut r), true)?;
                    let b = p.add(&format!("comp.hidden{l}.bias"), uniform(&[i], 0.5, &mut r), true)?;
                    Ok((w, b))
                })
                .collect::<Result<_>>()?,
            wout: p.add("comp.w_out_raw", raw(&[i, k], &mut r), true)?,
            bout: p.add("comp.bias_out", Tensor::zeros(&[k]), true)?,
            base: p.add("comp.base_rate_raw", Tensor::full(&[k], -1.0), true)?,
        };
        Ok(FullyNn { config, params: p, idx })
    }

    pub fn config(&self) -> &FullyNnConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Marks every weight untrainable; gradients still flow to inputs.
    pub fn freeze(&mut self) {
        self.params.set_trainable(false);
    }

    /// `[n + 1, H]` states: row 0 is the empty-history state, row `i + 1`
    /// the state after event `i`.
    pub fn encode<'g>(&self, g: &'g Graph, embeddings: Var<'g>, intervals: Var<'g>) -> Result<Var<'g>> {
        let h = self.config.history;
        let n = intervals.shape().first().copied().unwrap_or(0);
        let feat = intervals
            .scale(1.0 / self.config.time_scale)
            .add_scalar(1.0)
            .ln()?
            .reshape(&[n, 1])?;
        let x = g.concat_cols(&[embeddings, feat])?;
        let xw = x
            .matmul(g.param(&self.params, self.idx.wx))?
            .add(g.param(&self.params, self.idx.b))?;
        let wh = g.param(&self.params, self.idx.wh);
        let mut state = g.param(&self.params, self.idx.h0).reshape(&[1, h])?;
        let mut rows = Vec::with_capacity(n + 1);
        rows.push(state);
        for i in 0..n {
            state = xw.gather_rows(&[i])?.add(state.matmul(wh)?)?.tanh();
            rows.push(state);
        }
        g.concat_rows(&rows)
    }

    /// Per-mark compensator `[m, K]` and intensity `[m, K]` (its derivative in
    /// raw time units) for states `[m, H]` and raw elapsed times `[m]`.
    pub fn compensator<'g>(&self, g: &'g Graph, states: Var<'g>, dt: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
        let m = dt.shape().first().copied().unwrap_or(0);
        if let Some(bad) = dt.value().data().iter().find(|&&d| !(d >= 0.0)) {
            return Err(EhdError::domain("compensator", format!("negative elapsed time {bad}")));
        }
        let (i, k) = (self.config.intensity, self.config.marks);
        let p = |ix| g.param(&self.params, ix);
        let u = dt.scale(1.0 / self.config.time_scale).reshape(&[m, 1])?;
        let wdt = p(self.idx.wdt).softplus();
        let b1 = p(self.idx.b1);
        let sw = states.matmul(p(self.idx.ws))?;
        let mut z = sw.add(u.matmul(wdt.reshape(&[1, i])?)?)?.add(b1)?.tanh();
        let mut dz = one_minus_sq(z).mul(wdt)?;
        let mut z0 = sw.add(b1)?.tanh();
        for &(w_ix, b_ix) in &self.idx.hidden {
            let w = p(w_ix).softplus();
            let b = p(b_ix);
            z = z.matmul(w)?.add(b)?.tanh();
            dz = one_minus_sq(z).mul(dz.matmul(w)?)?;
            z0 = z0.matmul(w)?.add(b)?.tanh();
        }
        let wout = p(self.idx.wout).softplus();
        let bout = p(self.idx.bout);
        let o = z.matmul(wout)?.add(bout)?;
        let o0 = z0.matmul(wout)?.add(bout)?;
        let mu = p(self.idx.base).softplus().add_scalar(BASE_RATE_FLOOR);
        let lam = o.softplus().sub(o0.softplus())?.add(u.matmul(mu.reshape(&[1, k])?)?)?;
        let intensity = o
            .sigmoid()
            .mul(dz.matmul(wout)?)?
            .add(mu)?
            .scale(1.0 / self.config.time_scale);
        Ok((lam, intensity))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode(CHECKPOINT_KIND, &self.config.to_kv().to_text(), &self.params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_checkpoint(checkpoint::decode(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, CHECKPOINT_KIND, &self.config.to_kv().to_text(), &self.params)
    }

    /// As [`save`](Self::save) with extra keys (such as a run digest) stored
    /// alongside the architecture; they are ignored on load.
    pub fn save_tagged(&self, path: &Path, tags: &KvConfig) -> Result<()> {
        let mut c = self.config.to_kv();
        c.merge(tags);
        checkpoint::save(path, CHECKPOINT_KIND, &c.to_text(), &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(checkpoint::load(path)?)
    }

    fn from_checkpoint(ck: checkpoint::Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config = FullyNnConfig::from_kv(&KvConfig::parse(&ck.config)?)?;
        let mut model = FullyNn::new(config, 0)?;
        model.params.load_from(&ck.params)?;
        Ok(model)
    }
}

fn one_minus_sq(z: Var<'_>) -> Var<'_> {
    z.mul(z).expect("same shape").affine(-1.0, 1.0)
}

impl IntensityModel for FullyNn {
    fn mark_count(&self) -> usize {
        self.config.marks
    }

    fn embedding_dim(&self) -> usize {
        self.config.history
    }

    fn embedding_table<'g>(&self, g: &'g Graph) -> Var<'g> {
        g.param(&self.params, self.idx.emb)
    }

    fn evaluate<'g>(&self, g: &'g Graph, input: &SequenceInput<'g, '_>) -> Result<Evaluation<'g>> {
        let n = input.check("fullynn", self.config.history)?;
        let k = self.config.marks;
        let states = self.encode(g, input.embeddings, input.intervals)?;
        let scored: Vec<usize> = (input.score_from..n).collect();
        let m = scored.len();
        let (lam, intensity) =
            self.compensator(g, states.gather_rows(&scored)?, input.intervals.gather_rows(&scored)?)?;
        let own: Vec<usize> = scored
            .iter()
            .enumerate()
            .map(|(r, &i)| r * k + input.marks[i])
            .collect();
        let log_intensity = intensity.reshape(&[m * k])?.gather_rows(&own)?.ln()?;
        let ones = g.constant(Tensor::full(&[k, 1], 1.0));
        let compensator = lam.matmul(ones)?.reshape(&[m])?;
        let tail_compensator = match input.tail {
            None => None,
            Some(t) => {
                let (lam_t, _) = self.compensator(g, states.gather_rows(&[n])?, g.constant(Tensor::vector(vec![t])))?;
                Some(lam_t.sum())
            }
        };
        Ok(Evaluation {
            log_intensity,
            compensator,
            tail_compensator,
        })
    }
}
