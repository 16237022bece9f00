//! Finite-difference self test over every primitive.

use rand::Rng;

use super::gradcheck::grad_check;
use super::graph::{Graph, Var};
use super::gumbel::{gumbel_noise, gumbel_softmax_with_noise};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

type Prim = for<'g> fn(&'g Graph, &[Var<'g>], &Case) -> Result<Var<'g>>;

/// Shapes and constants drawn for one trial.
pub struct Case {
    n: usize,
    d: usize,
    mask: Vec<f64>,
    index: Vec<usize>,
    noise: Tensor,
}

enum Domain {
    Any,
    Positive,
    AwayFromZero,
}

struct Spec {
    name: &'static str,
    inputs: fn(&Case) -> Vec<Vec<usize>>,
    domain: Domain,
    f: Prim,
}

fn nd(c: &Case) -> Vec<Vec<usize>> {
    vec![vec![c.n, c.d]]
}

fn nd2(c: &Case) -> Vec<Vec<usize>> {
    vec![vec![c.n, c.d], vec![c.n, c.d]]
}

fn specs() -> Vec<Spec> {
    vec![
        Spec {
            name: "add",
            inputs: nd2,
            domain: Domain::Any,
            f: |_, x, _| x[0].add(x[1]),
        },
        Spec {
            name: "add_row_broadcast",
            inputs: |c| vec![vec![c.n, c.d], vec![c.d]],
            domain: Domain::Any,
            f: |_, x, _| x[0].add(x[1]),
        },
        Spec {
            name: "sub",
            inputs: nd2,
            domain: Domain::Any,
            f: |_, x, _| x[0].sub(x[1]),
        },
        Spec {
            name: "mul",
            inputs: nd2,
            domain: Domain::Any,
            f: |_, x, _| x[0].mul(x[1]),
        },
        Spec {
            name: "mul_column_broadcast",
            inputs: |c| vec![vec![c.n, c.d], vec![c.n, 1]],
            domain: Domain::Any,
            f: |_, x, _| x[0].mul(x[1]),
        },
        Spec {
            name: "mul_scalar_broadcast",
            inputs: |c| vec![vec![c.n, c.d], vec![]],
            domain: Domain::Any,
            f: |_, x, _| x[0].mul(x[1]),
        },
        Spec {
            name: "affine",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].affine(-1.7, 0.3)),
        },
        Spec {
            name: "matmul",
            inputs: |c| vec![vec![c.n, c.d], vec![c.d, c.n + 1]],
            domain: Domain::Any,
            f: |_, x, _| x[0].matmul(x[1]),
        },
        Spec {
            name: "matmul_chain3",
            inputs: |c| vec![vec![c.n, c.d], vec![c.d, 3], vec![3, 2], vec![2, c.d]],
            domain: Domain::Any,
            f: |_, x, _| x[0].matmul(x[1])?.matmul(x[2])?.matmul(x[3]),
        },
        Spec {
            name: "softplus_matmul",
            inputs: |c| vec![vec![c.n, c.d], vec![c.d, 2]],
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].matmul(x[1])?.softplus()),
        },
        Spec {
            name: "transpose",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| x[0].transpose(),
        },
        Spec {
            name: "exp",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].exp()),
        },
        Spec {
            name: "log",
            inputs: nd,
            domain: Domain::Positive,
            f: |_, x, _| x[0].ln(),
        },
        Spec {
            name: "softplus",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].softplus()),
        },
        Spec {
            name: "sigmoid",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].sigmoid()),
        },
        Spec {
            name: "tanh",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].tanh()),
        },
        Spec {
            name: "relu",
            inputs: nd,
            domain: Domain::AwayFromZero,
            f: |_, x, _| Ok(x[0].relu()),
        },
        Spec {
            name: "softmax",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].softmax()),
        },
        Spec {
            name: "log_softmax",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].log_softmax()),
        },
        Spec {
            name: "layer_norm",
            inputs: |c| vec![vec![c.n, c.d + 1]],
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].layer_norm(1e-5)),
        },
        Spec {
            name: "cumsum",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| x[0].cumsum(),
        },
        Spec {
            name: "diff",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| x[0].diff(0.25),
        },
        Spec {
            name: "sum",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| Ok(x[0].sum()),
        },
        Spec {
            name: "mean",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| x[0].mean(),
        },
        Spec {
            name: "masked_sum",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, c| x[0].masked_sum(&c.mask),
        },
        Spec {
            name: "masked_mean",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, c| x[0].masked_mean(&c.mask),
        },
        Spec {
            name: "sum_rows",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| x[0].sum_rows(),
        },
        Spec {
            name: "mean_rows",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, _| x[0].mean_rows(),
        },
        Spec {
            name: "concat_rows",
            inputs: |c| vec![vec![c.n, c.d], vec![1, c.d]],
            domain: Domain::Any,
            f: |g, x, _| g.concat_rows(&[x[0], x[1]]),
        },
        Spec {
            name: "concat_cols",
            inputs: |c| vec![vec![c.n, c.d], vec![c.n, 2]],
            domain: Domain::Any,
            f: |g, x, _| g.concat_cols(&[x[0], x[1]]),
        },
        Spec {
            name: "gather_rows",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, c| x[0].gather_rows(&c.index),
        },
        Spec {
            name: "slice_cols",
            inputs: |c| vec![vec![c.n, c.d + 2]],
            domain: Domain::Any,
            f: |_, x, c| x[0].slice_cols(1, c.d),
        },
        Spec {
            name: "reshape",
            inputs: nd,
            domain: Domain::Any,
            f: |_, x, c| x[0].reshape(&[c.n * c.d]),
        },
        Spec {
            name: "gumbel_softmax_proxy",
            inputs: |c| vec![vec![c.n, 2]],
            domain: Domain::Any,
            f: |_, x, c| Ok(gumbel_softmax_with_noise(x[0], &c.noise, 1.0, 0, false)?.values),
        },
    ]
}

fn draw(shape: &[usize], domain: &Domain, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(-1.0..1.0);
            match domain {
                Domain::Any => u,
                Domain::Positive => 0.5 + u.abs() * 1.5,
                Domain::AwayFromZero => u.signum() * (0.1 + u.abs()),
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("numel matches")
}

/// Maximum relative gradient error per primitive over `trials` random shapes.
///
/// Each primitive's output is contracted with random constant weights so the
/// scalar being differentiated has no accidental symmetries.
pub fn primitive_suite(seed: u64, trials: usize, step: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut out = Vec::new();
    for (k, spec) in specs().into_iter().enumerate() {
        let mut worst = 0.0f64;
        for t in 0..trials {
            let mut r = rng::derived(seed, &[k as u64, t as u64]);
            let n = r.gen_range(1..=4);
            let d = r.gen_range(1..=3);
            let mut mask: Vec<f64> = (0..n * d).map(|_| f64::from(r.gen_range(0..2u8))).collect();
            mask[0] = 1.0;
            let index: Vec<usize> = (0..n + 2).map(|_| r.gen_range(0..n)).collect();
            let noise = gumbel_noise(n, &mut r);
            let case = Case {
                n,
                d,
                mask,
                index,
                noise,
            };
            let inputs: Vec<Tensor> = (spec.inputs)(&case)
                .iter()
                .map(|s| draw(s, &spec.domain, &mut r))
                .collect();
            let probe = {
                let g = Graph::new();
                let vars: Vec<Var> = inputs.iter().map(|x| g.constant(x.clone())).collect();
                (spec.f)(&g, &vars, &case)?.shape()
            };
            let weights = draw(&probe, &Domain::Any, &mut r);
            let f = spec.f;
            let err = grad_check(
                |g, x| {
                    let y = f(g, x, &case)?;
                    Ok(y.mul(g.constant(weights.clone()))?.sum())
                },
                &inputs,
                step,
            )?;
            worst = worst.max(err);
        }
        out.push((spec.name, worst));
    }
    Ok(out)
}
