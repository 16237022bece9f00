//! Post-LN self-attention encoder over event tokens.

use crate::autodiff::{glorot, Graph, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::rng::Rng;

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    w: usize,
    b: usize,
}

impl Linear {
    pub(crate) fn new(p: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, r: &mut Rng) -> Result<Self> {
        Ok(Linear {
            w: p.add(&format!("{name}.w"), glorot(fan_in, fan_out, r), true)?,
            b: p.add(&format!("{name}.b"), Tensor::zeros(&[fan_out]), true)?,
        })
    }

    pub(crate) fn zeroed(p: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        Ok(Linear {
            w: p.add(&format!("{name}.w"), Tensor::zeros(&[fan_in, fan_out]), true)?,
            b: p.add(&format!("{name}.b"), Tensor::zeros(&[fan_out]), true)?,
        })
    }

    pub(crate) fn apply<'g>(&self, g: &'g Graph, p: &ParamStore, x: Var<'g>) -> Result<Var<'g>> {
        x.matmul(g.param(p, self.w))?.add(g.param(p, self.b))
    }
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gain: usize,
    bias: usize,
}

impl Norm {
    fn new(p: &mut ParamStore, name: &str, width: usize) -> Result<Self> {
        Ok(Norm {
            gain: p.add(&format!("{name}.gain"), Tensor::full(&[width], 1.0), true)?,
            bias: p.add(&format!("{name}.bias"), Tensor::zeros(&[width]), true)?,
        })
    }

    fn apply<'g>(&self, g: &'g Graph, p: &ParamStore, x: Var<'g>) -> Result<Var<'g>> {
        x.layer_norm(LN_EPS)
            .mul(g.param(p, self.gain))?
            .add(g.param(p, self.bias))
    }
}

#[derive(Clone, Debug)]
struct Layer {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    norm1: Norm,
    ff1: Linear,
    ff2: Linear,
    norm2: Norm,
}

/// Input projection followed by `depth` encoder layers.
#[derive(Clone, Debug)]
pub(crate) struct EncoderStack {
    input: Linear,
    layers: Vec<Layer>,
    heads: usize,
    head_dim: usize,
}

pub(crate) struct StackShape {
    pub input: usize,
    pub hidden: usize,
    pub qkv: usize,
    pub heads: usize,
    pub ffn: usize,
    pub depth: usize,
}

impl EncoderStack {
    pub(crate) fn new(p: &mut ParamStore, name: &str, s: &StackShape, r: &mut Rng) -> Result<Self> {
        let input = Linear::new(p, &format!("{name}.input"), s.input, s.hidden, r)?;
        let layers = (0..s.depth)
            .map(|l| {
                let n = format!("{name}.layer{l}");
                Ok(Layer {
                    q: Linear::new(p, &format!("{n}.q"), s.hidden, s.qkv, r)?,
                    k: Linear::new(p, &format!("{n}.k"), s.hidden, s.qkv, r)?,
                    v: Linear::new(p, &format!("{n}.v"), s.hidden, s.qkv, r)?,
                    o: Linear::new(p, &format!("{n}.o"), s.qkv, s.hidden, r)?,
                    norm1: Norm::new(p, &format!("{n}.norm1"), s.hidden)?,
                    ff1: Linear::new(p, &format!("{n}.ff1"), s.hidden, s.ffn, r)?,
                    ff2: Linear::new(p, &format!("{n}.ff2"), s.ffn, s.hidden, r)?,
                    norm2: Norm::new(p, &format!("{n}.norm2"), s.hidden)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EncoderStack {
            input,
            layers,
            heads: s.heads,
            head_dim: s.qkv / s.heads,
        })
    }

    /// `[n, input]` tokens to `[n, hidden]` representations.
    pub(crate) fn forward<'g>(&self, g: &'g Graph, p: &ParamStore, tokens: Var<'g>) -> Result<Var<'g>> {
        let mut x = self.input.apply(g, p, tokens)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        for layer in &self.layers {
            let q = layer.q.apply(g, p, x)?;
            let k = layer.k.apply(g, p, x)?;
            let v = layer.v.apply(g, p, x)?;
            let heads = (0..self.heads)
                .map(|h| {
                    let (start, d) = (h * self.head_dim, self.head_dim);
                    let qh = q.slice_cols(start, d)?;
                    let kh = k.slice_cols(start, d)?;
                    let vh = v.slice_cols(start, d)?;
                    qh.matmul(kh.transpose()?)?.scale(scale).softmax().matmul(vh)
                })
                .collect::<Result<Vec<_>>>()?;
            let attn = layer.o.apply(g, p, g.concat_cols(&heads)?)?;
            x = layer.norm1.apply(g, p, x.add(attn)?)?;
            let ff = layer.ff2.apply(g, p, layer.ff1.apply(g, p, x)?.relu())?;
            x = layer.norm2.apply(g, p, x.add(ff)?)?;
        }
        Ok(x)
    }
}

/// Sinusoidal encoding of positions, `[positions.len(), width]`.
pub fn time_encoding(positions: &[f64], width: usize) -> Tensor {
    let mut data = Vec::with_capacity(positions.len() * width);
    for &pos in positions {
        for i in 0..width / 2 {
            let freq = 10000f64.powf(-(2.0 * i as f64) / width as f64);
            data.push((pos * freq).sin());
            data.push((pos * freq).cos());
        }
    }
    Tensor::new(vec![positions.len(), width], data).expect("numel matches")
}
