use std::fmt;
use std::str::FromStr;

use crate::config::KvConfig;
use crate::error::{EhdError, Result};

/// Architecture of the selection model.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillerConfig {
    pub marks: usize,
    /// Token input width (mark embedding and time encoding).
    pub input: usize,
    /// Width of encoder representations.
    pub hidden: usize,
    /// Total query/key/value width, split across heads.
    pub qkv: usize,
    pub heads: usize,
    pub history_depth: usize,
    pub future_depth: usize,
    pub ffn: usize,
    /// Time span that maps to 100 units of the sinusoidal encoding.
    pub time_span: f64,
    /// Longest history or future accepted.
    pub max_len: usize,
}

impl DistillerConfig {
    pub fn new(marks: usize, time_span: f64) -> Self {
        DistillerConfig {
            marks,
            input: 32,
            hidden: 64,
            qkv: 32,
            heads: 4,
            history_depth: 4,
            future_depth: 4,
            ffn: 64,
            time_span,
            max_len: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.marks,
            self.input,
            self.hidden,
            self.qkv,
            self.heads,
            self.ffn,
            self.max_len,
        ];
        if sizes.contains(&0) {
            return Err(EhdError::Config(format!("distiller sizes must be positive: {self:?}")));
        }
        if self.qkv % self.heads != 0 {
            return Err(EhdError::Config(format!(
                "distiller.qkv {} is not divisible by distiller.heads {}",
                self.qkv, self.heads
            )));
        }
        if self.input % 2 != 0 {
            return Err(EhdError::Config("distiller.input must be even".into()));
        }
        if !(self.time_span > 0.0 && self.time_span.is_finite()) {
            return Err(EhdError::Config(format!(
                "distiller.time_span must be positive, got {}",
                self.time_span
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut c = KvConfig::new();
        c.set("distiller.marks", self.marks);
        c.set("distiller.input", self.input);
        c.set("distiller.hidden", self.hidden);
        c.set("distiller.qkv", self.qkv);
        c.set("distiller.heads", self.heads);
        c.set("distiller.history_depth", self.history_depth);
        c.set("distiller.future_depth", self.future_depth);
        c.set("distiller.ffn", self.ffn);
        c.set_f64("distiller.time_span", self.time_span);
        c.set("distiller.max_len", self.max_len);
        c
    }

    /// Reads an architecture; absent keys other than marks and time span take
    /// the defaults of [`DistillerConfig::new`].
    pub fn from_kv(c: &KvConfig) -> Result<Self> {
        let d = DistillerConfig::new(c.require("distiller.marks")?, c.require("distiller.time_span")?);
        let cfg = DistillerConfig {
            input: c.get_or("distiller.input", d.input)?,
            hidden: c.get_or("distiller.hidden", d.hidden)?,
            qkv: c.get_or("distiller.qkv", d.qkv)?,
            heads: c.get_or("distiller.heads", d.heads)?,
            history_depth: c.get_or("distiller.history_depth", d.history_depth)?,
            future_depth: c.get_or("distiller.future_depth", d.future_depth)?,
            ffn: c.get_or("distiller.ffn", d.ffn)?,
            max_len: c.get_or("distiller.max_len", d.max_len)?,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Which terms of `alpha * L_n + L_c` are optimised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    Full,
    ConstraintOnly,
    CardinalityOnly,
}

impl FromStr for LossMode {
    type Err = EhdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LossMode::Full),
            "lc-only" => Ok(LossMode::ConstraintOnly),
            "ln-only" => Ok(LossMode::CardinalityOnly),
            other => Err(EhdError::Config(format!(
                "unknown loss mode {other:?} (expected full, lc-only or ln-only)"
            ))),
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Full => "full",
            LossMode::ConstraintOnly => "lc-only",
            LossMode::CardinalityOnly => "ln-only",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub warmup: usize,
    pub alpha: f64,
    pub epsilon: f64,
    /// Mask samples per instance.
    pub samples: usize,
    pub temperature: f64,
    pub loss: LossMode,
    pub seed: u64,
    /// Steps between left-fraction trace points.
    pub log_every: usize,
}

impl Default for DistillTrainConfig {
    fn default() -> Self {
        DistillTrainConfig {
            steps: 100_000,
            batch: 128,
            lr: 0.001,
            warmup: 2000,
            alpha: 1.0,
            epsilon: 0.5,
            samples: 4,
            temperature: 1.0,
            loss: LossMode::Full,
            seed: 0,
            log_every: 10,
        }
    }
}

impl DistillTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.samples == 0 || self.log_every == 0 {
            return Err(EhdError::Config(format!("invalid distiller training config {self:?}")));
        }
        if !(self.lr > 0.0) || !(self.temperature > 0.0) || !(self.alpha >= 0.0) {
            return Err(EhdError::Config(format!("invalid distiller training config {self:?}")));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(EhdError::Config(format!(
                "distiller.epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut c = KvConfig::new();
        c.set("distiller.steps", self.steps);
        c.set("distiller.batch", self.batch);
        c.set_f64("distiller.lr", self.lr);
        c.set("distiller.warmup", self.warmup);
        c.set_f64("distiller.alpha", self.alpha);
        c.set_f64("distiller.epsilon", self.epsilon);
        c.set("distiller.samples", self.samples);
        c.set_f64("distiller.temperature", self.temperature);
        c.set("distiller.loss", self.loss);
        c.set("distiller.seed", self.seed);
        c.set("distiller.log_every", self.log_every);
        c
    }

    pub fn from_kv(c: &KvConfig) -> Result<Self> {
        let d = DistillTrainConfig::default();
        let cfg = DistillTrainConfig {
            steps: c.get_or("distiller.steps", d.steps)?,
            batch: c.get_or("distiller.batch", d.batch)?,
            lr: c.get_or("distiller.lr", d.lr)?,
            warmup: c.get_or("distiller.warmup", d.warmup)?,
            alpha: c.get_or("distiller.alpha", d.alpha)?,
            epsilon: c.get_or("distiller.epsilon", d.epsilon)?,
            samples: c.get_or("distiller.samples", d.samples)?,
            temperature: c.get_or("distiller.temperature", d.temperature)?,
            loss: c.get_or("distiller.loss", d.loss)?,
            seed: c.get_or("distiller.seed", d.seed)?,
            log_every: c.get_or("distiller.log_every", d.log_every)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
