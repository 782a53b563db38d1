//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended to a [`Graph`] in evaluation order, so the node list
//! is already a topological order. [`Graph::backward`] walks it once in
//! reverse and sums the contributions of every consumer into each parent,
//! which is what makes shared sub-expressions work.

use crate::error::{CsrmsError, Result};
use crate::numerics::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Maps the upstream gradient to one gradient per parent.
type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

/// A single-owner computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], one slot per node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let s = &self.shapes[v.0];
                Tensor::new(s.clone(), vec![0.0; s.iter().product()]).expect("shape")
            }
        }
    }
}

fn ensure_2d(op: &'static str, t: &Tensor) -> Result<()> {
    if t.shape().len() != 2 {
        return Err(CsrmsError::dim(op, format!("expected rank 2, got shape {:?}", t.shape())));
    }
    Ok(())
}

/// How the right operand of an elementwise op lines up with the left one.
#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.same_shape(b) {
        Ok(Broadcast::Same)
    } else if b.rows() == 1 && b.cols() == a.cols() {
        Ok(Broadcast::Row)
    } else if b.len() == 1 {
        Ok(Broadcast::Scalar)
    } else {
        Err(CsrmsError::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn reduce_to(kind: Broadcast, g: &Tensor, b_shape: &[usize]) -> Tensor {
    match kind {
        Broadcast::Same => g.clone(),
        Broadcast::Scalar => Tensor::new(b_shape.to_vec(), vec![g.sum()]).expect("shape"),
        Broadcast::Row => {
            let cols = g.cols();
            let mut out = vec![0.0; cols];
            for r in 0..g.rows() {
                for (o, v) in out.iter_mut().zip(g.row_slice(r)) {
                    *o += v;
                }
            }
            Tensor::new(b_shape.to_vec(), out).expect("shape")
        }
    }
}

fn b_at(kind: Broadcast, b: &Tensor, idx: usize, cols: usize) -> f64 {
    match kind {
        Broadcast::Same => b.data()[idx],
        Broadcast::Row => b.data()[idx % cols],
        Broadcast::Scalar => b.data()[0],
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, backward: Option<BackwardFn>) -> Var {
        self.nodes.push(Node { value, parents, backward });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Gradients are tracked for every leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        ensure_2d("matmul", av)?;
        ensure_2d("matmul", bv)?;
        let out = av.matmul(bv)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|g, p, _| {
                let da = g.matmul(&p[1].transpose()).expect("shape");
                let db = p[0].transpose().matmul(g).expect("shape");
                vec![da, db]
            })),
        ))
    }

    /// Elementwise sum; `b` may be a `1 × cols` row or a `1 × 1` scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let kind = broadcast_kind("add", av, bv)?;
        let cols = av.cols();
        let data = (0..av.len()).map(|i| av.data()[i] + b_at(kind, bv, i, cols)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let b_shape = bv.shape().to_vec();
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g, _, _| vec![g.clone(), reduce_to(kind, g, &b_shape)])),
        ))
    }

    /// Elementwise difference with the same broadcasting as [`Graph::add`].
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let kind = broadcast_kind("sub", av, bv)?;
        let cols = av.cols();
        let data = (0..av.len()).map(|i| av.data()[i] - b_at(kind, bv, i, cols)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let b_shape = bv.shape().to_vec();
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g, _, _| {
                vec![g.clone(), reduce_to(kind, &g.map(|v| -v), &b_shape)]
            })),
        ))
    }

    /// Elementwise product; `b` may be a `1 × 1` scalar.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let kind = match broadcast_kind("mul", av, bv)? {
            Broadcast::Row if !av.same_shape(bv) && bv.len() != 1 => {
                return Err(CsrmsError::dim("mul", "row broadcasting is not supported for mul"))
            }
            k => k,
        };
        let cols = av.cols();
        let data = (0..av.len()).map(|i| av.data()[i] * b_at(kind, bv, i, cols)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let b_shape = bv.shape().to_vec();
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g, p, _| {
                let (a, b) = (p[0], p[1]);
                let cols = a.cols();
                let da: Vec<f64> =
                    (0..a.len()).map(|i| g.data()[i] * b_at(kind, b, i, cols)).collect();
                let gb = g.zip_map(a, |x, y| x * y);
                vec![
                    Tensor::new(a.shape().to_vec(), da).expect("shape"),
                    reduce_to(kind, &gb, &b_shape),
                ]
            })),
        ))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|v| v * k);
        self.push(out, vec![a.0], Some(Box::new(move |g, _, _| vec![g.map(|v| v * k)])))
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|v| v + k);
        self.push(out, vec![a.0], Some(Box::new(|g, _, _| vec![g.clone()])))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(
            out,
            vec![a.0],
            Some(Box::new(|g, p, _| {
                vec![g.zip_map(p[0], |gv, x| if x > 0.0 { gv } else { 0.0 })]
            })),
        )
    }

    /// Natural log; every element must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if let Some(bad) = av.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(CsrmsError::Domain { op: "log", detail: format!("non-positive input {bad}") });
        }
        let out = av.map(f64::ln);
        Ok(self.push(out, vec![a.0], Some(Box::new(|g, p, _| vec![g.zip_map(p[0], |gv, x| gv / x)]))))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.data().iter().any(|&v| v < 0.0) {
            return Err(CsrmsError::Domain { op: "sqrt", detail: "negative input".into() });
        }
        let out = av.map(f64::sqrt);
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(|g, _, y| {
                vec![g.zip_map(y, |gv, s| if s > 0.0 { gv / (2.0 * s) } else { 0.0 })]
            })),
        ))
    }

    /// Row-wise softmax, computed with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        ensure_2d("softmax_rows", av)?;
        let out = softmax_rows(av);
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(|g, _, y| {
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (gr, yr) = (g.row_slice(r), y.row_slice(r));
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        dx.set(r, c, yr[c] * (gr[c] - dot));
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        ensure_2d("log_softmax_rows", av)?;
        let sm = softmax_rows(av);
        let out = log_softmax(av);
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g, _, _| {
                let mut dx = Tensor::zeros(sm.rows(), sm.cols());
                for r in 0..sm.rows() {
                    let (gr, pr) = (g.row_slice(r), sm.row_slice(r));
                    let total: f64 = gr.iter().sum();
                    for c in 0..sm.cols() {
                        dx.set(r, c, gr[c] - pr[c] * total);
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Stacks the rows of `a` above the rows of `b`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(CsrmsError::dim("concat_rows", format!("{} vs {} columns", av.cols(), bv.cols())));
        }
        let (ra, cols) = (av.rows(), av.cols());
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let out = Tensor::matrix(ra + bv.rows(), cols, data)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g, p, _| {
                let split = ra * cols;
                vec![
                    Tensor::matrix(ra, cols, g.data()[..split].to_vec()).expect("shape"),
                    Tensor::matrix(p[1].rows(), cols, g.data()[split..].to_vec()).expect("shape"),
                ]
            })),
        ))
    }

    /// Column means: `r × c` to `1 × c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        ensure_2d("mean_rows", av)?;
        if av.rows() == 0 {
            return Err(CsrmsError::dim("mean_rows", "no rows"));
        }
        let (r, c) = (av.rows(), av.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(av.row_slice(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        Ok(self.push(
            Tensor::row(&out),
            vec![a.0],
            Some(Box::new(move |g, _, _| {
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        dx.set(i, j, g.data()[j] / r as f64);
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Sum of every element, as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        let out = Tensor::scalar(av.sum());
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g, _, _| {
                let n = shape.iter().product();
                vec![Tensor::new(shape.clone(), vec![g.item(); n]).expect("shape")]
            })),
        )
    }

    /// Euclidean norm of every row: `r × c` to `r × 1`.
    pub fn l2_norm_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        ensure_2d("l2_norm_rows", av)?;
        let norms: Vec<f64> =
            (0..av.rows()).map(|r| av.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let out = Tensor::matrix(av.rows(), 1, norms)?;
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(|g, p, y| {
                let x = p[0];
                let mut dx = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let n = y.data()[r];
                    if n > 0.0 {
                        for c in 0..x.cols() {
                            dx.set(r, c, g.data()[r] * x.get(r, c) / n);
                        }
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Row-wise Euclidean distance `‖a_r − b_r‖₂`; `b` may be a single row
    /// compared against every row of `a`. Returns `r × 1`.
    pub fn l2_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.sub(a, b)?;
        self.l2_norm_rows(diff)
    }

    /// Gathers rows by index (repeats allowed).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = self.value(a);
        ensure_2d("select_rows", av)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows()) {
            return Err(CsrmsError::dim("select_rows", format!("row {bad} of {}", av.rows())));
        }
        let rows: Vec<&[f64]> = idx.iter().map(|&i| av.row_slice(i)).collect();
        let out = if rows.is_empty() { Tensor::zeros(0, av.cols()) } else { Tensor::from_rows(&rows)? };
        let idx = idx.to_vec();
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g, p, _| {
                let mut dx = Tensor::zeros(p[0].rows(), p[0].cols());
                for (k, &i) in idx.iter().enumerate() {
                    for c in 0..g.cols() {
                        let v = dx.get(i, c) + g.get(k, c);
                        dx.set(i, c, v);
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Picks one column per row: `out[r] = a[r, cols[r]]`, shape `r × 1`.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let av = self.value(a);
        ensure_2d("pick", av)?;
        if cols.len() != av.rows() || cols.iter().any(|&c| c >= av.cols()) {
            return Err(CsrmsError::dim("pick", "one in-range column per row required"));
        }
        let vals: Vec<f64> = cols.iter().enumerate().map(|(r, &c)| av.get(r, c)).collect();
        let out = Tensor::matrix(av.rows(), 1, vals)?;
        let cols = cols.to_vec();
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g, p, _| {
                let mut dx = Tensor::zeros(p[0].rows(), p[0].cols());
                for (r, &c) in cols.iter().enumerate() {
                    dx.set(r, c, g.data()[r]);
                }
                vec![dx]
            })),
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(CsrmsError::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0])?);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(bw) = &node.backward {
                let parents: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
                let contribs = bw(&g, &parents, &node.value);
                for (&p, c) in node.parents.iter().zip(contribs) {
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&c),
                        slot @ None => *slot = Some(c),
                    }
                }
            }
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Numerically stable row softmax on a plain tensor.
pub fn softmax_rows(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for r in 0..t.rows() {
        let row = t.row_slice(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (c, e) in exps.iter().enumerate() {
            out.set(r, c, e / z);
        }
    }
    out
}

/// Row log-softmax via log-sum-exp.
pub fn log_softmax(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for r in 0..t.rows() {
        let row = t.row_slice(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (c, v) in row.iter().enumerate() {
            out.set(r, c, v - lse);
        }
    }
    out
}
