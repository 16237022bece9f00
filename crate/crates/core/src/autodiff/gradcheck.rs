use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{EhdError, Result};

/// Compares reverse-mode gradients of a scalar function against finite
/// differences, returning the largest relative error over all input coordinates.
///
/// Relative error is `|a - fd| / max(|a|, |fd|, 1e-8)`. The finite difference
/// uses the fourth-order central stencil
/// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`, which keeps truncation
/// error well below the tolerance for the curved functions the models use.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let y = f(&g, &vars)?;
        scalar(&y)
    };

    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let y = f(&g, &vars)?;
    scalar(&y)?;
    g.backward(y)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| v.grad()).collect();

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let x0 = input.data()[j];
            let mut at = |d: f64| -> Result<f64> {
                probe[k].data_mut()[j] = x0 + d;
                let v = eval(&probe);
                probe[k].data_mut()[j] = x0;
                v
            };
            let near = at(step)? - at(-step)?;
            let far = at(2.0 * step)? - at(-2.0 * step)?;
            let fd = (8.0 * near - far) / (12.0 * step);
            let a = analytic[k].data()[j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn scalar(y: &Var<'_>) -> Result<f64> {
    let v = y.value();
    if v.len() != 1 {
        return Err(EhdError::shape("grad_check", format!("output shape {:?}", v.shape())));
    }
    Ok(v.item())
}
