use serde::{Deserialize, Serialize};

use crate::cags::{AnchorPlan, Batch};
use crate::data_io::FeatureSet;
use crate::error::{CsrmsError, Result};
use crate::numerics::{Graph, Tensor, Var};
use crate::rgrl::losses::{cross_entropy_rows, interclass_loss_node, nega_loss_node, LossConfig};
use crate::rgrl::model::{smooth, ParamVars, SmoothingModel};
use crate::rgrl::{knn_adjacency, PrototypeBank};

/// Which parts of the method are switched on. All off is a linear
/// classifier on the raw features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub smoothing: bool,
    pub nega: bool,
    pub curriculum: bool,
    pub alignment: bool,
    pub inter: bool,
}

impl Components {
    pub const BASE: Components =
        Components { smoothing: false, nega: false, curriculum: false, alignment: false, inter: false };
    pub const FULL: Components =
        Components { smoothing: true, nega: true, curriculum: true, alignment: true, inter: true };

    /// Components added one at a time: smoothing, negative loss,
    /// curriculum, alignment, inter-class loss.
    pub fn ladder() -> [(&'static str, Components); 6] {
        let s = Components { smoothing: true, ..Self::BASE };
        let n = Components { nega: true, ..s };
        let c = Components { curriculum: true, ..n };
        let a = Components { alignment: true, ..c };
        [("base", Self::BASE), ("+smoothing", s), ("+nega", n), ("+curriculum", c), ("+alignment", a), ("+inter", Self::FULL)]
    }
}

impl Default for Components {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub loss: LossConfig,
    pub components: Components,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean unweighted cross-entropy over anchors.
    pub ce: f64,
    /// Mean unweighted negative-sample loss over anchors.
    pub nega: f64,
    pub inter: f64,
    /// The optimised objective.
    pub total: f64,
}

/// Graph nodes for one anchor's forward pass.
pub struct AnchorNodes {
    pub f_g: Var,
    pub f_a: Var,
    pub logits: Var,
}

/// Forward pass over `rows` (anchor first, then its positives): smoothing,
/// optional cluster alignment with `w_cu[cluster_class]`, optional class
/// alignment with `p_ca[class_class]`, and the classifier.
#[allow(clippy::too_many_arguments)]
pub fn forward_rows(
    g: &mut Graph,
    p: &ParamVars,
    model: &SmoothingModel,
    rows: Tensor,
    cluster_class: Option<usize>,
    class_class: Option<usize>,
    protos: Option<&PrototypeBank>,
    components: Components,
) -> Result<AnchorNodes> {
    let f_g = if components.smoothing {
        let adj = knn_adjacency(&rows, model.knn_k);
        let xv = g.input(rows);
        let av = g.input(adj);
        let out = smooth(g, p, xv, av, model.use_output_softmax)?;
        g.select_rows(out, &[0])?
    } else {
        let first = Tensor::row(rows.row_slice(0));
        g.input(first)
    };
    let mut f_a = f_g;
    if let Some(bank) = protos.filter(|_| components.alignment) {
        let c = bank.coefficients;
        if let Some(h) = cluster_class {
            let w = g.input(Tensor::row(&bank.cluster_prototypes[h]));
            let a = g.scale(f_a, c.alpha_u);
            let b = g.scale(w, c.beta_u);
            f_a = g.add(a, b)?;
        }
        if let Some(h) = class_class {
            let pc = g.input(Tensor::row(&bank.class_prototypes[h]));
            let a = g.scale(f_a, c.alpha_a);
            let b = g.scale(pc, c.beta_a);
            f_a = g.add(a, b)?;
        }
    }
    let z = g.matmul(f_a, p.classifier_w)?;
    let logits = g.add(z, p.classifier_b)?;
    Ok(AnchorNodes { f_g, f_a, logits })
}

/// Forward pass of one training anchor: both alignments use the prototypes
/// of `class`.
#[allow(clippy::too_many_arguments)]
pub fn anchor_forward(
    g: &mut Graph,
    p: &ParamVars,
    model: &SmoothingModel,
    fs: &FeatureSet,
    anchor: usize,
    positives: &[usize],
    class: usize,
    protos: Option<&PrototypeBank>,
    components: Components,
) -> Result<AnchorNodes> {
    let idx: Vec<usize> = std::iter::once(anchor).chain(positives.iter().copied()).collect();
    forward_rows(g, p, model, fs.rows_tensor(&idx), Some(class), Some(class), protos, components)
}

/// Smoothed representations of negatives, each as its own one-node graph.
fn negative_reprs(g: &mut Graph, p: &ParamVars, model: &SmoothingModel, fs: &FeatureSet, negs: &[usize], smoothing: bool) -> Result<Var> {
    let x = g.input(fs.rows_tensor(negs));
    if !smoothing {
        return Ok(x);
    }
    let h = g.matmul(x, p.w_in)?;
    let h = g.relu(h);
    let z = g.matmul(h, p.w_out)?;
    if model.use_output_softmax {
        g.softmax_rows(z)
    } else {
        Ok(z)
    }
}

/// Scalar nodes of the batch objective.
pub struct Objective {
    pub total: Var,
    pub ce: Vec<Var>,
    pub nega: Vec<Var>,
    pub inter: Option<Var>,
}

/// `mean_i w_i·(ce_i + γ_nega·nega_i) + γ_inter·inter` over a batch.
pub fn batch_objective(
    g: &mut Graph,
    p: &ParamVars,
    model: &SmoothingModel,
    fs: &FeatureSet,
    batch: &Batch,
    protos: Option<&PrototypeBank>,
    cfg: &TrainConfig,
) -> Result<Objective> {
    if batch.anchors.is_empty() {
        return Err(CsrmsError::Contract("empty batch".into()));
    }
    let comps = cfg.components;
    let mut weighted: Option<Var> = None;
    let mut ce_nodes = Vec::new();
    let mut nega_nodes = Vec::new();
    let mut by_class: Vec<(usize, Var)> = Vec::new();
    for plan in &batch.anchors {
        let AnchorPlan { index, positives, negatives, weight, .. } = plan;
        let y = fs.label(*index);
        let nodes = anchor_forward(g, p, model, fs, *index, positives, y, protos, comps)?;
        let ce = cross_entropy_rows(g, nodes.logits, &[y])?;
        ce_nodes.push(ce);
        let mut loss = ce;
        if comps.nega && !negatives.is_empty() {
            let reprs = negative_reprs(g, p, model, fs, negatives, comps.smoothing)?;
            let nl = nega_loss_node(g, nodes.f_g, reprs, &cfg.loss)?;
            nega_nodes.push(nl);
            let scaled = g.scale(nl, cfg.loss.gamma_nega);
            loss = g.add(loss, scaled)?;
        }
        let w = if comps.curriculum { *weight } else { 1.0 };
        let loss = g.scale(loss, w);
        weighted = Some(match weighted {
            Some(acc) => g.add(acc, loss)?,
            None => loss,
        });
        by_class.push((y, nodes.f_a));
    }
    let sum = weighted.expect("non-empty batch");
    let mut total = g.scale(sum, 1.0 / batch.anchors.len() as f64);
    let mut inter = None;
    if comps.inter {
        by_class.sort_by_key(|&(y, _)| y);
        let mut groups: Vec<Var> = Vec::new();
        let mut k = 0;
        while k < by_class.len() {
            let y = by_class[k].0;
            let mut group = by_class[k].1;
            k += 1;
            while k < by_class.len() && by_class[k].0 == y {
                group = g.concat_rows(group, by_class[k].1)?;
                k += 1;
            }
            groups.push(group);
        }
        if let Some(v) = interclass_loss_node(g, &groups, &cfg.loss)? {
            let scaled = g.scale(v, cfg.loss.gamma_inter);
            total = g.add(total, scaled)?;
            inter = Some(v);
        }
    }
    Ok(Objective { total, ce: ce_nodes, nega: nega_nodes, inter })
}

fn mean_of(g: &Graph, vs: &[Var]) -> f64 {
    if vs.is_empty() {
        0.0
    } else {
        vs.iter().map(|&v| g.value(v).item()).sum::<f64>() / vs.len() as f64
    }
}

/// One SGD step on the batch objective.
pub fn train_step(
    model: &mut SmoothingModel,
    fs: &FeatureSet,
    batch: &Batch,
    protos: Option<&PrototypeBank>,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let p = model.bind(&mut g);
    let obj = batch_objective(&mut g, &p, model, fs, batch, protos, cfg).map_err(|e| match e {
        CsrmsError::Domain { op, detail } => {
            CsrmsError::NonFinite(format!("loss undefined in {op} ({detail}); anchors {:?}", anchor_ids(batch)))
        }
        other => other,
    })?;
    let breakdown = LossBreakdown {
        ce: mean_of(&g, &obj.ce),
        nega: mean_of(&g, &obj.nega),
        inter: obj.inter.map_or(0.0, |v| g.value(v).item()),
        total: g.value(obj.total).item(),
    };
    if !breakdown.total.is_finite() {
        return Err(CsrmsError::NonFinite(format!("loss {breakdown:?} on anchors {:?}", anchor_ids(batch))));
    }
    let grads = g.backward(obj.total)?;
    let mut next = model.clone();
    next.w_in.axpy(-cfg.lr, &grads.get(p.w_in));
    next.w_out.axpy(-cfg.lr, &grads.get(p.w_out));
    next.classifier_w.axpy(-cfg.lr, &grads.get(p.classifier_w));
    next.classifier_b.axpy(-cfg.lr, &grads.get(p.classifier_b));
    if !next.is_finite() {
        return Err(CsrmsError::NonFinite(format!("parameters after step on anchors {:?}", anchor_ids(batch))));
    }
    *model = next;
    Ok(breakdown)
}

fn anchor_ids(batch: &Batch) -> Vec<usize> {
    batch.anchors.iter().map(|a| a.index).collect()
}

/// Forward-only aligned representation `F_a` of a training anchor.
pub fn aligned_representation(
    model: &SmoothingModel,
    fs: &FeatureSet,
    anchor: usize,
    positives: &[usize],
    protos: Option<&PrototypeBank>,
    components: Components,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let p = model.bind(&mut g);
    let nodes = anchor_forward(&mut g, &p, model, fs, anchor, positives, fs.label(anchor), protos, components)?;
    Ok(g.value(nodes.f_a).data().to_vec())
}
