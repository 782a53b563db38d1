use serde::{Deserialize, Serialize};

use crate::cags::Distance;
use crate::crm::{assign, RelationGraph};
use crate::data_io::FeatureSet;
use crate::error::{CsrmsError, Result};
use crate::numerics::{softmax_rows, Graph, Tensor};
use crate::rgrl::train::forward_rows;
use crate::rgrl::{Components, PrototypeBank, SmoothingModel};

/// How a test sample, whose label is unknown, gets its positives and
/// prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceProtocol {
    /// Pseudo-label `h` = the class dominating (else the plurality class of)
    /// the nearest cluster; positives, cluster prototype and class
    /// prototype are then chosen exactly as for a training anchor of class
    /// `h`.
    #[default]
    PseudoLabel,
    /// Positives are the `knn_k` nearest training members of the nearest
    /// cluster; cluster alignment only when that cluster is dominated; no
    /// class alignment.
    ClusterNeighbours,
}

impl std::str::FromStr for InferenceProtocol {
    type Err = CsrmsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pseudo-label" => Ok(Self::PseudoLabel),
            "cluster-neighbours" => Ok(Self::ClusterNeighbours),
            _ => Err(CsrmsError::config("inference", format!("unknown protocol `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    pub protocol: InferenceProtocol,
    pub components: Components,
    /// Positive count and distance, as used by the training sampler.
    pub n_pos: usize,
    pub metric: Distance,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self { protocol: InferenceProtocol::default(), components: Components::FULL, n_pos: 5, metric: Distance::Euclidean }
    }
}

/// Class scores for every test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub labels: Vec<usize>,
    /// Softmax class probabilities, one row per sample.
    pub scores: Vec<Vec<f64>>,
}

impl Predictions {
    /// Classes ordered by score, highest first (ties to the lower class),
    /// truncated to `k`.
    pub fn top_k(&self, i: usize, k: usize) -> Vec<usize> {
        rank_classes(&self.scores[i]).into_iter().take(k).collect()
    }
}

pub fn rank_classes(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Dominating class of cluster `k`, else its plurality class (lowest on
/// ties).
pub fn pseudo_label(graph: &RelationGraph, k: usize) -> usize {
    if let Some(h) = graph.dominance[k].class() {
        return h;
    }
    let counts = &graph.cluster(k).class_counts;
    (0..counts.len()).fold(0, |best, j| if counts[j] > counts[best] { j } else { best })
}

/// `members` ranked by distance to `x` (farthest or nearest first, ties by
/// index), truncated to `count`.
fn ranked(fs_train: &FeatureSet, x: &[f64], members: impl Iterator<Item = usize>, metric: Distance, farthest: bool, count: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = members.map(|m| (metric.eval(x, fs_train.row(m)), m)).collect();
    scored.sort_by(|a, b| {
        let by = if farthest { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) };
        by.then(a.1.cmp(&b.1))
    });
    scored.into_iter().take(count).map(|(_, m)| m).collect()
}

/// Positives for a sample treated as class `h`: the farthest members of
/// class `h` in its largest dominated cluster, else in the cluster holding
/// most of class `h`.
fn class_positives(graph: &RelationGraph, fs_train: &FeatureSet, x: &[f64], h: usize, opts: &InferOptions) -> Vec<usize> {
    let holds = |k: usize| graph.cluster(k).class_counts[h] > 0;
    let k = graph.dominant_by_class[h].iter().copied().find(|&k| holds(k)).or_else(|| {
        (0..graph.model.len())
            .filter(|&k| holds(k))
            .max_by(|&a, &b| graph.cluster(a).class_counts[h].cmp(&graph.cluster(b).class_counts[h]).then(b.cmp(&a)))
    });
    match k {
        Some(k) => {
            let members = graph.cluster(k).members.iter().copied().filter(|&m| fs_train.label(m) == h);
            ranked(fs_train, x, members, opts.metric, true, opts.n_pos)
        }
        None => Vec::new(),
    }
}

/// Class probabilities for one feature vector.
pub fn infer_one(
    x: &[f64],
    graph: &RelationGraph,
    fs_train: &FeatureSet,
    model: &SmoothingModel,
    protos: Option<&PrototypeBank>,
    opts: &InferOptions,
) -> Result<Vec<f64>> {
    if x.len() != model.d() {
        return Err(CsrmsError::dim("infer", format!("model expects {} features, got {}", model.d(), x.len())));
    }
    let k = assign(&graph.model, x);
    let (positives, cluster_class, class_class) = match opts.protocol {
        InferenceProtocol::PseudoLabel => {
            let h = pseudo_label(graph, k);
            (class_positives(graph, fs_train, x, h, opts), Some(h), Some(h))
        }
        InferenceProtocol::ClusterNeighbours => {
            let members = graph.cluster(k).members.iter().copied();
            (ranked(fs_train, x, members, Distance::Euclidean, false, model.knn_k), graph.dominance[k].class(), None)
        }
    };
    let mut rows = x.to_vec();
    for &m in &positives {
        rows.extend_from_slice(fs_train.row(m));
    }
    let rows = Tensor::matrix(1 + positives.len(), x.len(), rows)?;
    let mut g = Graph::new();
    let p = model.bind(&mut g);
    let nodes = forward_rows(&mut g, &p, model, rows, cluster_class, class_class, protos, opts.components)?;
    Ok(softmax_rows(g.value(nodes.logits)).data().to_vec())
}

pub fn infer(
    fs_test: &FeatureSet,
    graph: &RelationGraph,
    fs_train: &FeatureSet,
    model: &SmoothingModel,
    protos: Option<&PrototypeBank>,
    opts: &InferOptions,
) -> Result<Predictions> {
    let scores = (0..fs_test.n())
        .map(|i| infer_one(fs_test.row(i), graph, fs_train, model, protos, opts))
        .collect::<Result<Vec<_>>>()?;
    let labels = scores.iter().map(|s| rank_classes(s)[0]).collect();
    Ok(Predictions { labels, scores })
}
