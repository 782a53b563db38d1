//! Class-level relation modelling.
//!
//! An ART-style incremental clusterer partitions the training features into
//! patterns; combining cluster membership with labels yields the
//! class / pattern / instance relation graph and the three pathological
//! pair relations (intra-class diversity, inter-class similarity,
//! mixed-class clusters).

use std::fs;
use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::FeatureSet;
use crate::error::{CsrmsError, Result};

/// Match function used to compare a sample with a prototype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMetric {
    /// Cosine similarity on L2-normalised features; prototypes live in the
    /// normalised space.
    #[default]
    Cosine,
    /// `exp(−‖x − p‖² / 2h²)` on raw features.
    EuclideanGaussian,
}

impl std::str::FromStr for MatchMetric {
    type Err = CsrmsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(MatchMetric::Cosine),
            "euclidean-gaussian" => Ok(MatchMetric::EuclideanGaussian),
            _ => Err(CsrmsError::config("metric", format!("unknown match metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub prototype: Vec<f64>,
    pub members: Vec<usize>,
    pub class_counts: Vec<usize>,
}

impl Cluster {
    pub fn total(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub vigilance: f64,
    pub learning_rate: f64,
    pub metric: MatchMetric,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    pub clusters: Vec<Cluster>,
}

fn default_bandwidth() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtConfig {
    pub vigilance: f64,
    pub learning_rate: f64,
    /// Refinement passes after the initial presentation.
    pub max_epochs: usize,
    pub seed: u64,
    pub metric: MatchMetric,
    pub bandwidth: f64,
}

impl Default for ArtConfig {
    fn default() -> Self {
        Self {
            vigilance: 0.85,
            learning_rate: 0.1,
            max_epochs: 10,
            seed: 0,
            metric: MatchMetric::Cosine,
            bandwidth: 1.0,
        }
    }
}

/// One accepted presentation during fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    pub sample: usize,
    /// Id of the slot at fit time (before empty clusters are dropped).
    pub slot: usize,
    pub created: bool,
    pub score: f64,
    pub prototype_before: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub insertions: Vec<Insertion>,
    pub passes: usize,
    pub min_join_score: Option<f64>,
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter().map(|v| v / n).collect()
    } else {
        x.to_vec()
    }
}

impl MatchMetric {
    /// Representation used for matching and prototype learning.
    fn embed(self, x: &[f64]) -> Vec<f64> {
        match self {
            MatchMetric::Cosine => normalized(x),
            MatchMetric::EuclideanGaussian => x.to_vec(),
        }
    }

    fn score(self, bandwidth: f64, x: &[f64], proto: &[f64]) -> f64 {
        match self {
            MatchMetric::Cosine => {
                let dot: f64 = x.iter().zip(proto).map(|(a, b)| a * b).sum();
                let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let np = proto.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nx == 0.0 || np == 0.0 {
                    0.0
                } else {
                    dot / (nx * np)
                }
            }
            MatchMetric::EuclideanGaussian => {
                let d2: f64 = x.iter().zip(proto).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

/// Best-scoring prototype; ties resolve to the lowest index.
fn best_match<'a>(
    metric: MatchMetric,
    bandwidth: f64,
    x: &[f64],
    protos: impl Iterator<Item = &'a [f64]>,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in protos.enumerate() {
        let s = metric.score(bandwidth, x, p);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best
}

pub fn art_fit(fs: &FeatureSet, cfg: &ArtConfig) -> Result<ClusterModel> {
    art_fit_traced(fs, cfg).map(|(m, _)| m)
}

/// Fits the clusterer and records every accepted presentation.
pub fn art_fit_traced(fs: &FeatureSet, cfg: &ArtConfig) -> Result<(ClusterModel, FitTrace)> {
    if fs.n() == 0 {
        return Err(CsrmsError::Contract("cannot cluster an empty dataset".into()));
    }
    if !(cfg.vigilance > 0.0 && cfg.vigilance < 1.0) {
        return Err(CsrmsError::config("vigilance", "must lie in (0, 1)"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0) {
        return Err(CsrmsError::config("learning_rate", "must lie in (0, 1]"));
    }
    if cfg.metric == MatchMetric::EuclideanGaussian && (cfg.bandwidth.is_nan() || cfg.bandwidth <= 0.0) {
        return Err(CsrmsError::config("bandwidth", "must be positive"));
    }

    let points: Vec<Vec<f64>> = (0..fs.n()).map(|i| cfg.metric.embed(fs.row(i))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut protos: Vec<Vec<f64>> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut assignment: Vec<Option<usize>> = vec![None; fs.n()];
    let mut trace = FitTrace::default();
    let beta = cfg.learning_rate;

    for pass in 0..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..fs.n()).collect();
        order.shuffle(&mut rng);
        let mut changed = 0usize;
        for &i in &order {
            let x = &points[i];
            let prev = assignment[i].take();
            if let Some(p) = prev {
                sizes[p] -= 1;
            }
            let chosen = match best_match(cfg.metric, cfg.bandwidth, x, protos.iter().map(|p| p.as_slice())) {
                Some((k, s)) if s >= cfg.vigilance => {
                    trace.insertions.push(Insertion {
                        sample: i,
                        slot: k,
                        created: false,
                        score: s,
                        prototype_before: protos[k].clone(),
                    });
                    trace.min_join_score = Some(trace.min_join_score.map_or(s, |m: f64| m.min(s)));
                    for (pv, xv) in protos[k].iter_mut().zip(x) {
                        *pv = (1.0 - beta) * *pv + beta * xv;
                    }
                    k
                }
                _ => {
                    protos.push(x.clone());
                    sizes.push(0);
                    let k = protos.len() - 1;
                    trace.insertions.push(Insertion {
                        sample: i,
                        slot: k,
                        created: true,
                        score: 1.0,
                        prototype_before: x.clone(),
                    });
                    k
                }
            };
            sizes[chosen] += 1;
            assignment[i] = Some(chosen);
            if prev != Some(chosen) {
                changed += 1;
            }
        }
        trace.passes = pass + 1;
        debug_assert_eq!(sizes.iter().sum::<usize>(), fs.n(), "partition broken after pass {pass}");
        debug!("art pass {pass}: {changed} reassignments, {} slots", protos.len());
        if pass > 0 && changed == 0 {
            break;
        }
    }
    if let Some(m) = trace.min_join_score {
        assert!(m >= cfg.vigilance, "join below vigilance: {m} < {}", cfg.vigilance);
    }

    // Drop empty slots and renumber in creation order.
    let mut remap = vec![usize::MAX; protos.len()];
    let mut clusters: Vec<Cluster> = Vec::new();
    for (slot, proto) in protos.into_iter().enumerate() {
        if sizes[slot] > 0 {
            remap[slot] = clusters.len();
            clusters.push(Cluster {
                id: clusters.len(),
                prototype: proto,
                members: Vec::new(),
                class_counts: vec![0; fs.c()],
            });
        }
    }
    for (i, a) in assignment.iter().enumerate() {
        let k = remap[a.expect("every sample assigned")];
        clusters[k].members.push(i);
        clusters[k].class_counts[fs.label(i)] += 1;
    }
    let model = ClusterModel {
        vigilance: cfg.vigilance,
        learning_rate: cfg.learning_rate,
        metric: cfg.metric,
        bandwidth: cfg.bandwidth,
        clusters,
    };
    Ok((model, trace))
}

impl ClusterModel {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Checks ids, partition of `0..n`, and counts against `labels`.
    pub fn validate(&self, labels: &[u32], c: usize) -> Result<()> {
        let mut seen = vec![false; labels.len()];
        for (k, cl) in self.clusters.iter().enumerate() {
            if cl.id != k {
                return Err(CsrmsError::Contract(format!("cluster at position {k} has id {}", cl.id)));
            }
            let mut recount = vec![0; c];
            for &m in &cl.members {
                if m >= labels.len() || seen[m] {
                    return Err(CsrmsError::Contract(format!("member {m} out of range or repeated")));
                }
                seen[m] = true;
                recount[labels[m] as usize] += 1;
            }
            if recount != cl.class_counts {
                return Err(CsrmsError::Contract(format!("class counts of cluster {k} disagree with members")));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CsrmsError::Contract(format!("sample {i} belongs to no cluster")));
        }
        Ok(())
    }

    /// Sample → cluster id.
    pub fn assignment(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for cl in &self.clusters {
            for &m in &cl.members {
                out[m] = cl.id;
            }
        }
        out
    }
}

/// Best-matching cluster for a query feature, with no vigilance gate.
/// Ties go to the lowest id.
pub fn assign(model: &ClusterModel, feature: &[f64]) -> usize {
    let x = model.metric.embed(feature);
    best_match(model.metric, model.bandwidth, &x, model.clusters.iter().map(|c| c.prototype.as_slice()))
        .map(|(k, _)| k)
        .expect("assign on an empty cluster model")
}

/// `N_K^j / N_K` for cluster `cluster_id` and class `class`.
pub fn representativeness(model: &ClusterModel, cluster_id: usize, class: usize) -> Result<f64> {
    let cl = model
        .clusters
        .get(cluster_id)
        .ok_or_else(|| CsrmsError::Contract(format!("no cluster {cluster_id}")))?;
    if cl.total() == 0 {
        return Err(CsrmsError::Contract(format!("cluster {cluster_id} is empty")));
    }
    let count = *cl
        .class_counts
        .get(class)
        .ok_or_else(|| CsrmsError::Contract(format!("no class {class}")))?;
    Ok(count as f64 / cl.total() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Dominance {
    Dominated { class: usize, representativeness: f64 },
    Mixed { max_ratio: f64 },
}

impl Dominance {
    pub fn class(&self) -> Option<usize> {
        match *self {
            Dominance::Dominated { class, .. } => Some(class),
            Dominance::Mixed { .. } => None,
        }
    }
}

/// Dataset-level relation graph over classes, clusters and instances.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    pub model: ClusterModel,
    pub assignment: Vec<usize>,
    pub dominance: Vec<Dominance>,
    /// Per class, dominated clusters by size descending then id ascending.
    pub dominant_by_class: Vec<Vec<usize>>,
    pub rho2: f64,
    pub n_classes: usize,
    pub labels: Vec<u32>,
}

pub fn build_relation_graph(model: &ClusterModel, labels: &[u32], rho2: f64) -> Result<RelationGraph> {
    if !(rho2 > 0.0 && rho2 <= 1.0) {
        return Err(CsrmsError::config("rho2", "must lie in (0, 1]"));
    }
    let c = model.clusters.first().map(|cl| cl.class_counts.len()).unwrap_or(0);
    model.validate(labels, c)?;
    let dominance: Vec<Dominance> = model
        .clusters
        .iter()
        .map(|cl| {
            let total = cl.total() as f64;
            let (best, count) = cl
                .class_counts
                .iter()
                .enumerate()
                .fold((0, 0), |acc, (j, &k)| if k > acc.1 { (j, k) } else { acc });
            let ratio = count as f64 / total;
            if ratio > rho2 {
                Dominance::Dominated { class: best, representativeness: ratio }
            } else {
                Dominance::Mixed { max_ratio: ratio }
            }
        })
        .collect();
    let mut dominant_by_class = vec![Vec::new(); c];
    for (k, d) in dominance.iter().enumerate() {
        if let Some(j) = d.class() {
            dominant_by_class[j].push(k);
        }
    }
    for list in &mut dominant_by_class {
        list.sort_by(|&a, &b| model.clusters[b].total().cmp(&model.clusters[a].total()).then(a.cmp(&b)));
    }
    Ok(RelationGraph {
        model: model.clone(),
        assignment: model.assignment(labels.len()),
        dominance,
        dominant_by_class,
        rho2,
        n_classes: c,
        labels: labels.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    /// Same class, different dominant clusters.
    ID,
    /// Different classes sharing a dominant cluster.
    IS,
    /// Different classes sharing a mixed cluster.
    MC,
    None,
}

impl RelationGraph {
    pub fn cluster_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Dominant cluster (PC) of sample `i`, if its cluster is dominated.
    pub fn dominant_cluster(&self, i: usize) -> Option<usize> {
        let k = self.assignment[i];
        self.dominance[k].class().map(|_| k)
    }

    /// Mixed cluster (MC) of sample `i`, if its cluster is mixed.
    pub fn mixed_cluster(&self, i: usize) -> Option<usize> {
        let k = self.assignment[i];
        self.dominance[k].class().is_none().then_some(k)
    }

    pub fn cluster(&self, k: usize) -> &Cluster {
        &self.model.clusters[k]
    }

    pub fn n_samples(&self) -> usize {
        self.assignment.len()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }
}

pub fn classify_pair(graph: &RelationGraph, labels: &[u32], a: usize, b: usize) -> RelationKind {
    debug_assert_ne!(a, b);
    if labels[a] == labels[b] {
        match (graph.dominant_cluster(a), graph.dominant_cluster(b)) {
            (Some(pa), Some(pb)) if pa != pb => RelationKind::ID,
            _ => RelationKind::None,
        }
    } else if let (Some(pa), Some(pb)) = (graph.dominant_cluster(a), graph.dominant_cluster(b)) {
        if pa == pb {
            RelationKind::IS
        } else {
            RelationKind::None
        }
    } else {
        match (graph.mixed_cluster(a), graph.mixed_cluster(b)) {
            (Some(ma), Some(mb)) if ma == mb => RelationKind::MC,
            _ => RelationKind::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DominanceRecord {
    cluster: usize,
    class: Option<usize>,
    representativeness: f64,
}

/// On-disk form shared by cluster and graph artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphFile {
    vigilance: f64,
    learning_rate: f64,
    metric: MatchMetric,
    #[serde(default = "default_bandwidth")]
    bandwidth: f64,
    clusters: Vec<Cluster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho2: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dominance: Vec<DominanceRecord>,
}

impl From<&ClusterModel> for GraphFile {
    fn from(m: &ClusterModel) -> Self {
        GraphFile {
            vigilance: m.vigilance,
            learning_rate: m.learning_rate,
            metric: m.metric,
            bandwidth: m.bandwidth,
            clusters: m.clusters.clone(),
            rho2: None,
            dominance: Vec::new(),
        }
    }
}

impl GraphFile {
    fn into_model(self) -> ClusterModel {
        ClusterModel {
            vigilance: self.vigilance,
            learning_rate: self.learning_rate,
            metric: self.metric,
            bandwidth: self.bandwidth,
            clusters: self.clusters,
        }
    }
}

fn read_json(path: &Path) -> Result<GraphFile> {
    if !path.exists() {
        return Err(CsrmsError::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn save_cluster_model(model: &ClusterModel, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string(&GraphFile::from(model))?)?;
    Ok(())
}

pub fn load_cluster_model(path: &Path) -> Result<ClusterModel> {
    Ok(read_json(path)?.into_model())
}

pub fn save_relation_graph(graph: &RelationGraph, path: &Path) -> Result<()> {
    let mut file = GraphFile::from(&graph.model);
    file.rho2 = Some(graph.rho2);
    file.dominance = graph
        .dominance
        .iter()
        .enumerate()
        .map(|(k, d)| match *d {
            Dominance::Dominated { class, representativeness } => {
                DominanceRecord { cluster: k, class: Some(class), representativeness }
            }
            Dominance::Mixed { max_ratio } => DominanceRecord { cluster: k, class: None, representativeness: max_ratio },
        })
        .collect();
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

/// Loads a graph artifact and rebuilds the derived fields from `labels`.
pub fn load_relation_graph(path: &Path, labels: &[u32]) -> Result<RelationGraph> {
    let file = read_json(path)?;
    let rho2 = file
        .rho2
        .ok_or_else(|| CsrmsError::config("graph", "artifact has no rho2; run the graph stage"))?;
    let stored = file.dominance.clone();
    let graph = build_relation_graph(&file.clone().into_model(), labels, rho2)?;
    for rec in stored {
        if graph.dominance.get(rec.cluster).map(|d| d.class()) != Some(rec.class) {
            return Err(CsrmsError::Contract(format!("stored dominance of cluster {} is stale", rec.cluster)));
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(id: usize, members: &[usize], labels: &[u32], c: usize) -> Cluster {
        let mut class_counts = vec![0; c];
        for &m in members {
            class_counts[labels[m] as usize] += 1;
        }
        Cluster { id, prototype: vec![0.0; 2], members: members.to_vec(), class_counts }
    }

    fn model_of(clusters: Vec<Cluster>) -> ClusterModel {
        ClusterModel { vigilance: 0.5, learning_rate: 0.1, metric: MatchMetric::Cosine, bandwidth: 1.0, clusters }
    }

    #[test]
    fn single_sample_forms_one_cluster() {
        let fs = FeatureSet::new(2, 1, vec![0.6, 0.8], vec![0]).unwrap();
        let m = art_fit(&fs, &ArtConfig::default()).unwrap();
        assert_eq!(m.len(), 1);
        // cosine prototypes live on the unit sphere
        let x = fs.row(0);
        let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
        for (p, v) in m.clusters[0].prototype.iter().zip(x) {
            assert!((p - v / norm).abs() < 1e-15);
        }
        let e = ArtConfig { metric: MatchMetric::EuclideanGaussian, ..ArtConfig::default() };
        let m = art_fit(&fs, &e).unwrap();
        for (p, v) in m.clusters[0].prototype.iter().zip(fs.row(0)) {
            assert!((p - v).abs() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_vectors_split() {
        let fs = FeatureSet::new(2, 1, vec![1.0, 0.0, 0.0, 1.0], vec![0, 0]).unwrap();
        let m = art_fit(&fs, &ArtConfig { vigilance: 0.5, ..ArtConfig::default() }).unwrap();
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn empty_dataset_is_not_representable() {
        assert!(FeatureSet::new(2, 1, vec![], vec![]).is_err());
    }

    #[test]
    fn assign_exact_and_tie() {
        let mut m = model_of(vec![]);
        m.metric = MatchMetric::EuclideanGaussian;
        m.clusters = vec![
            Cluster { id: 0, prototype: vec![1.0, 0.0], members: vec![], class_counts: vec![] },
            Cluster { id: 1, prototype: vec![-1.0, 0.0], members: vec![], class_counts: vec![] },
            Cluster { id: 2, prototype: vec![3.0, 3.0], members: vec![], class_counts: vec![] },
        ];
        assert_eq!(assign(&m, &[3.0, 3.0]), 2);
        assert_eq!(assign(&m, &[0.0, 0.5]), 0);
    }

    #[test]
    fn dominance_examples() {
        let labels: Vec<u32> = [vec![0; 9], vec![1; 1], vec![0; 5], vec![1; 5]].concat();
        let m = model_of(vec![
            cluster(0, &(0..10).collect::<Vec<_>>(), &labels, 2),
            cluster(1, &(10..20).collect::<Vec<_>>(), &labels, 2),
        ]);
        let g = build_relation_graph(&m, &labels, 0.55).unwrap();
        assert_eq!(g.dominance[0], Dominance::Dominated { class: 0, representativeness: 0.9 });
        assert!(matches!(g.dominance[1], Dominance::Mixed { .. }));
        assert_eq!(g.dominant_by_class, vec![vec![0], vec![]]);
        assert_eq!(representativeness(&m, 0, 0).unwrap(), 0.9);
        assert_eq!(representativeness(&m, 0, 1).unwrap(), 0.1);
    }

    #[test]
    fn representativeness_errors() {
        let m = model_of(vec![Cluster { id: 0, prototype: vec![], members: vec![], class_counts: vec![0] }]);
        assert!(representativeness(&m, 0, 0).is_err());
        assert!(representativeness(&m, 3, 0).is_err());
    }

    #[test]
    fn absent_class_has_zero_representativeness() {
        let labels = vec![0u32, 0, 0];
        let m = model_of(vec![cluster(0, &[0, 1, 2], &labels, 3)]);
        assert_eq!(representativeness(&m, 0, 2).unwrap(), 0.0);
    }

    #[test]
    fn dominant_by_class_orders_by_size_then_id() {
        let labels = vec![0u32; 7];
        let m = model_of(vec![
            cluster(0, &[0, 1], &labels, 1),
            cluster(1, &[2, 3, 4], &labels, 1),
            cluster(2, &[5, 6], &labels, 1),
        ]);
        let g = build_relation_graph(&m, &labels, 0.5).unwrap();
        assert_eq!(g.dominant_by_class[0], vec![1, 0, 2]);
    }

    #[test]
    fn pair_examples() {
        let labels = vec![0u32, 0, 0, 1];
        let m = model_of(vec![cluster(0, &[0, 1], &labels, 2), cluster(1, &[2, 3], &labels, 2)]);
        let g = build_relation_graph(&m, &labels, 0.55).unwrap();
        assert_eq!(classify_pair(&g, &labels, 0, 1), RelationKind::None);
        assert_eq!(classify_pair(&g, &labels, 2, 3), RelationKind::MC);
        let g = build_relation_graph(&m, &labels, 0.4).unwrap();
        assert_eq!(classify_pair(&g, &labels, 0, 2), RelationKind::ID);
        assert_eq!(classify_pair(&g, &labels, 2, 3), RelationKind::IS);
    }

    #[test]
    fn json_roundtrip() {
        let labels = vec![0u32, 1, 1];
        let m = model_of(vec![cluster(0, &[0], &labels, 2), cluster(1, &[1, 2], &labels, 2)]);
        let g = build_relation_graph(&m, &labels, 0.55).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        save_relation_graph(&g, &p).unwrap();
        let back = load_relation_graph(&p, &labels).unwrap();
        assert_eq!(back, g);
        let text = fs::read_to_string(&p).unwrap();
        for key in ["vigilance", "learning_rate", "metric", "clusters", "rho2", "dominance", "class_counts"] {
            assert!(text.contains(key), "{key} missing");
        }
        let cm = dir.path().join("c.json");
        save_cluster_model(&m, &cm).unwrap();
        assert_eq!(load_cluster_model(&cm).unwrap(), m);
        assert!(load_relation_graph(&cm, &labels).is_err());
    }
}
