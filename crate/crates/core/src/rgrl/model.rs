use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CsrmsError, Result};
use crate::numerics::{Graph, Tensor, Var};
use crate::rgrl::knn_adjacency;

/// Two-layer graph convolution (`d → hidden → d`) followed by a linear
/// classifier (`d → c`).
///
/// The first layer is the input-to-hidden map and the second the
/// hidden-to-output map, applied in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingModel {
    pub w_in: Tensor,
    pub w_out: Tensor,
    pub classifier_w: Tensor,
    pub classifier_b: Tensor,
    pub knn_k: usize,
    pub use_output_softmax: bool,
}

/// The model's parameters recorded as leaves of a graph.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub w_in: Var,
    pub w_out: Var,
    pub classifier_w: Var,
    pub classifier_b: Var,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (2.0 / (rows + cols) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

impl SmoothingModel {
    pub fn init(d: usize, hidden: usize, c: usize, knn_k: usize, use_output_softmax: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w_in: glorot(d, hidden, &mut rng),
            w_out: glorot(hidden, d, &mut rng),
            classifier_w: glorot(d, c, &mut rng),
            classifier_b: Tensor::zeros(1, c),
            knn_k,
            use_output_softmax,
        }
    }

    pub fn d(&self) -> usize {
        self.w_in.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_in.cols()
    }

    pub fn classes(&self) -> usize {
        self.classifier_w.cols()
    }

    pub fn bind(&self, g: &mut Graph) -> ParamVars {
        ParamVars {
            w_in: g.input(self.w_in.clone()),
            w_out: g.input(self.w_out.clone()),
            classifier_w: g.input(self.classifier_w.clone()),
            classifier_b: g.input(self.classifier_b.clone()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w_in.is_finite() && self.w_out.is_finite() && self.classifier_w.is_finite() && self.classifier_b.is_finite()
    }
}

/// `softmax(Â · ReLU(Â · X · W_in) · W_out)` (softmax optional) on a graph.
pub fn smooth(g: &mut Graph, p: &ParamVars, x: Var, adj: Var, output_softmax: bool) -> Result<Var> {
    let ax = g.matmul(adj, x)?;
    let h = g.matmul(ax, p.w_in)?;
    let h = g.relu(h);
    let ah = g.matmul(adj, h)?;
    let z = g.matmul(ah, p.w_out)?;
    if output_softmax {
        g.softmax_rows(z)
    } else {
        Ok(z)
    }
}

/// Rows `[anchor; positives]` as a matrix.
pub fn stack_anchor(anchor: &[f64], positives: &Tensor) -> Result<Tensor> {
    if positives.rows() > 0 && positives.cols() != anchor.len() {
        return Err(CsrmsError::dim(
            "graphical_smoothing",
            format!("anchor has {} features, positives {}", anchor.len(), positives.cols()),
        ));
    }
    let mut data = anchor.to_vec();
    data.extend_from_slice(positives.data());
    Tensor::matrix(1 + positives.rows(), anchor.len(), data)
}

/// Smooths an anchor over the KNN graph it forms with its positives.
/// Row 0 of the result is the anchor's smoothed representation.
pub fn graphical_smoothing(model: &SmoothingModel, anchor: &[f64], positives: &Tensor) -> Result<Tensor> {
    if anchor.len() != model.d() {
        return Err(CsrmsError::dim(
            "graphical_smoothing",
            format!("model expects {} features, anchor has {}", model.d(), anchor.len()),
        ));
    }
    let x = stack_anchor(anchor, positives)?;
    let adj = knn_adjacency(&x, model.knn_k);
    let mut g = Graph::new();
    let p = model.bind(&mut g);
    let xv = g.input(x);
    let av = g.input(adj);
    let out = smooth(&mut g, &p, xv, av, model.use_output_softmax)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::softmax_rows;

    fn model() -> SmoothingModel {
        SmoothingModel::init(3, 4, 2, 2, true, 11)
    }

    #[test]
    fn single_node_reduces_to_mlp() {
        let m = model();
        let x = [0.3, -0.7, 1.1];
        let out = graphical_smoothing(&m, &x, &Tensor::zeros(0, 3)).unwrap();
        let h = Tensor::row(&x).matmul(&m.w_in).unwrap().map(|v| v.max(0.0));
        let expected = softmax_rows(&h.matmul(&m.w_out).unwrap());
        for (a, b) in out.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rows_on_simplex() {
        let m = model();
        let pos = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -1.0, 0.5, 0.0]).unwrap();
        let out = graphical_smoothing(&m, &[1.0, 1.0, 1.0], &pos).unwrap();
        assert_eq!(out.rows(), 3);
        for r in 0..3 {
            let s: f64 = out.row_slice(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(out.row_slice(r).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = model();
        assert!(graphical_smoothing(&m, &[1.0, 2.0], &Tensor::zeros(0, 2)).is_err());
        let pos = Tensor::zeros(1, 4);
        assert!(graphical_smoothing(&m, &[1.0, 2.0, 3.0], &pos).is_err());
    }
}
