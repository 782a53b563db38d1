use crate::error::{CsrmsError, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Compares reverse-mode gradients of a scalar computation against central
/// finite differences.
///
/// `f` rebuilds the computation on a fresh graph from the supplied leaves.
/// Returns the max over all input coordinates of
/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(CsrmsError::Contract(format!("eps must lie in (0, 1e-3], got {eps}")));
    }
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(out);
        if v.len() != 1 {
            return Err(CsrmsError::Contract(format!("grad_check needs scalar output, got {:?}", v.shape())));
        }
        Ok(v.item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v);
        for idx in 0..inputs[k].len() {
            let orig = inputs[k].data()[idx];
            probe[k].data_mut()[idx] = orig + eps;
            let up = eval(&probe)?;
            probe[k].data_mut()[idx] = orig - eps;
            let down = eval(&probe)?;
            probe[k].data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = (analytic.data()[idx] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
