use std::path::Path;

use super::config::DistillerConfig;
use super::encoder::{time_encoding, EncoderStack, Linear, StackShape};
use crate::autodiff::{checkpoint, uniform, Graph, ParamStore, Var};
use crate::config::KvConfig;
use crate::error::{EhdError, Result};
use crate::event::Event;
use crate::rng;

pub const CHECKPOINT_KIND: &str = "distiller";

/// Dual-encoder selection model giving keep/distill log-probabilities for
/// each history event conditioned on the future.
#[derive(Clone, Debug)]
pub struct Distiller {
    config: DistillerConfig,
    params: ParamStore,
    emb: usize,
    history: EncoderStack,
    future: EncoderStack,
    head: Linear,
    out: Linear,
}

impl Distiller {
    pub fn new(config: DistillerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::derived(seed, &[0x6469_7374]);
        let mut p = ParamStore::new();
        let emb = p.add(
            "mark_embedding",
            uniform(&[config.marks, config.input], 0.5, &mut r),
            true,
        )?;
        let shape = |depth| StackShape {
            input: config.input,
            hidden: config.hidden,
            qkv: config.qkv,
            heads: config.heads,
            ffn: config.ffn,
            depth,
        };
        let history = EncoderStack::new(&mut p, "history", &shape(config.history_depth), &mut r)?;
        let future = EncoderStack::new(&mut p, "future", &shape(config.future_depth), &mut r)?;
        let head = Linear::new(&mut p, "head.hidden", 2 * config.hidden, config.hidden, &mut r)?;
        let out = Linear::zeroed(&mut p, "head.out", config.hidden, 2)?;
        Ok(Distiller {
            config,
            params: p,
            emb,
            history,
            future,
            head,
            out,
        })
    }

    pub fn config(&self) -> &DistillerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn tokens<'g>(&self, g: &'g Graph, events: &[Event], origin: f64) -> Result<Var<'g>> {
        let marks: Vec<usize> = events.iter().map(|e| e.mark).collect();
        let pos: Vec<f64> = events
            .iter()
            .map(|e| 100.0 * (e.time - origin) / self.config.time_span)
            .collect();
        g.param(&self.params, self.emb)
            .gather_rows(&marks)?
            .add(g.constant(time_encoding(&pos, self.config.input)))
    }

    fn check(&self, what: &str, events: &[Event]) -> Result<()> {
        if events.is_empty() {
            return Err(EhdError::InvalidData(format!("empty {what}")));
        }
        if events.len() > self.config.max_len {
            return Err(EhdError::TooLarge {
                size: events.len(),
                max: self.config.max_len,
            });
        }
        if let Some(e) = events.iter().find(|e| e.mark >= self.config.marks) {
            return Err(EhdError::InvalidData(format!(
                "mark {} outside 0..{}",
                e.mark, self.config.marks
            )));
        }
        Ok(())
    }

    /// `([n, hidden], [m, hidden])` representations of history and future tokens.
    pub fn encode<'g>(
        &self,
        g: &'g Graph,
        history: &[Event],
        future: &[Event],
        origin: f64,
    ) -> Result<(Var<'g>, Var<'g>)> {
        self.check("history", history)?;
        self.check("future", future)?;
        let h = self
            .history
            .forward(g, &self.params, self.tokens(g, history, origin)?)?;
        let f = self.future.forward(g, &self.params, self.tokens(g, future, origin)?)?;
        Ok((h, f))
    }

    /// `[n, 2]` keep/distill log-probabilities from encoded representations.
    pub fn select<'g>(&self, g: &'g Graph, history: Var<'g>, future: Var<'g>) -> Result<Var<'g>> {
        let n = history.shape()[0];
        let pooled = future.mean_rows()?.reshape(&[1, self.config.hidden])?;
        let fused = g.concat_cols(&[history, pooled.gather_rows(&vec![0; n])?])?;
        let hidden = self.head.apply(g, &self.params, fused)?.relu();
        Ok(self.out.apply(g, &self.params, hidden)?.log_softmax())
    }

    /// Encode and select in one call.
    pub fn selection_distribution<'g>(
        &self,
        g: &'g Graph,
        history: &[Event],
        future: &[Event],
        origin: f64,
    ) -> Result<Var<'g>> {
        let (h, f) = self.encode(g, history, future, origin)?;
        self.select(g, h, f)
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
        let config = DistillerConfig::from_kv(&KvConfig::parse(&ck.config)?)?;
        let mut model = Distiller::new(config, 0)?;
        model.params.load_from(&ck.params)?;
        Ok(model)
    }
}
