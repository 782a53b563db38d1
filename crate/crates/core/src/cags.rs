//! Class-aware graph sampling.
//!
//! Positives come from the largest cluster dominated by the anchor's class
//! (the farthest same-class members), negatives from the nearest cluster
//! dominated by another class (the closest members of that class). Each
//! anchor also gets a difficulty from its cluster's class shares and a
//! curriculum weight.
//!
//! Candidate clusters, in order of preference:
//!
//! * positives: the class's dominated clusters by size (desc) then id, then
//!   every cluster by its count of the class (desc) then id. The first one
//!   holding a same-class member other than the anchor is used.
//! * negatives: the cluster whose centroid is nearest to the anchor among
//!   those dominated by another class (ties to the lower id), taking members
//!   of the dominating class. With no such cluster, the nearest cluster
//!   holding any other-class sample, taking its largest other class (ties to
//!   the lower class).
//!
//! Within a cluster, positives sort by distance descending and negatives by
//! distance ascending; equal distances go to the lower sample index. Short
//! candidate lists are returned whole.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crm::RelationGraph;
use crate::data_io::FeatureSet;
use crate::error::{CsrmsError, Result};

/// Sample distance φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    #[default]
    Euclidean,
    /// `1 − cos(a, b)`
    Cosine,
}

impl std::str::FromStr for Distance {
    type Err = CsrmsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "cosine" => Ok(Distance::Cosine),
            _ => Err(CsrmsError::config("distance", format!("unknown distance `{s}`"))),
        }
    }
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_pos: usize,
    pub m_neg: usize,
    pub metric: Distance,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_pos: 5, m_neg: 5, metric: Distance::Euclidean }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pos == 0 {
            return Err(CsrmsError::config("n_pos", "must be at least 1"));
        }
        if self.m_neg == 0 {
            return Err(CsrmsError::config("m_neg", "must be at least 1"));
        }
        Ok(())
    }
}

/// Sampling view over a relation graph with cached cluster centroids.
pub struct ClassAwareSampler<'a> {
    graph: &'a RelationGraph,
    fs: &'a FeatureSet,
    centroids: Vec<Vec<f64>>,
}

impl<'a> ClassAwareSampler<'a> {
    pub fn new(graph: &'a RelationGraph, fs: &'a FeatureSet) -> Result<Self> {
        if graph.n_samples() != fs.n() {
            return Err(CsrmsError::dim(
                "ClassAwareSampler",
                format!("graph covers {} samples, feature set has {}", graph.n_samples(), fs.n()),
            ));
        }
        let centroids = graph
            .model
            .clusters
            .iter()
            .map(|cl| {
                let mut c = vec![0.0; fs.d()];
                for &m in &cl.members {
                    for (a, v) in c.iter_mut().zip(fs.row(m)) {
                        *a += v;
                    }
                }
                let k = cl.members.len().max(1) as f64;
                c.iter_mut().for_each(|a| *a /= k);
                c
            })
            .collect();
        Ok(Self { graph, fs, centroids })
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k]
    }

    fn members_of_class(&self, k: usize, class: usize, exclude: usize) -> Vec<usize> {
        self.graph
            .cluster(k)
            .members
            .iter()
            .copied()
            .filter(|&m| m != exclude && self.fs.label(m) == class)
            .collect()
    }

    fn ranked(&self, i: usize, mut cands: Vec<usize>, metric: Distance, farthest: bool, take: usize) -> Vec<usize> {
        let anchor = self.fs.row(i);
        let mut scored: Vec<(f64, usize)> =
            cands.drain(..).map(|m| (metric.eval(anchor, self.fs.row(m)), m)).collect();
        scored.sort_by(|a, b| {
            let by_dist = if farthest { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) };
            by_dist.then(a.1.cmp(&b.1))
        });
        scored.into_iter().take(take).map(|(_, m)| m).collect()
    }

    /// Cluster the positives of `i` are drawn from.
    pub fn positive_cluster(&self, i: usize) -> Result<usize> {
        let y = self.fs.label(i);
        let dominated = self.graph.dominant_by_class.get(y).map(Vec::as_slice).unwrap_or(&[]);
        if let Some(&k) = dominated.iter().find(|&&k| !self.members_of_class(k, y, i).is_empty()) {
            return Ok(k);
        }
        let mut by_count: Vec<usize> = (0..self.graph.model.clusters.len()).collect();
        by_count.sort_by(|&a, &b| {
            let (ca, cb) = (self.graph.cluster(a).class_counts[y], self.graph.cluster(b).class_counts[y]);
            cb.cmp(&ca).then(a.cmp(&b))
        });
        by_count
            .into_iter()
            .find(|&k| !self.members_of_class(k, y, i).is_empty())
            .ok_or_else(|| CsrmsError::Sampler(format!("no other sample of class {y} for anchor {i}")))
    }

    pub fn positives(&self, i: usize, n: usize, metric: Distance) -> Result<Vec<usize>> {
        let k = self.positive_cluster(i)?;
        let cands = self.members_of_class(k, self.fs.label(i), i);
        Ok(self.ranked(i, cands, metric, true, n))
    }

    /// Cluster and class the negatives of `i` are drawn from.
    pub fn negative_source(&self, i: usize, metric: Distance) -> Result<(usize, usize)> {
        let y = self.fs.label(i);
        let anchor = self.fs.row(i);
        let nearest = |ks: &mut dyn Iterator<Item = usize>| -> Option<usize> {
            let mut best: Option<(f64, usize)> = None;
            for k in ks {
                let d = metric.eval(anchor, &self.centroids[k]);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, k));
                }
            }
            best.map(|(_, k)| k)
        };
        let clusters = 0..self.graph.model.clusters.len();
        let mut dominated_other =
            clusters.clone().filter(|&k| matches!(self.graph.dominance[k].class(), Some(h) if h != y));
        if let Some(k) = nearest(&mut dominated_other) {
            let h = self.graph.dominance[k].class().expect("dominated");
            return Ok((k, h));
        }
        let mut with_other = clusters.filter(|&k| {
            self.graph.cluster(k).class_counts.iter().enumerate().any(|(j, &c)| j != y && c > 0)
        });
        let k = nearest(&mut with_other)
            .ok_or_else(|| CsrmsError::Sampler(format!("no sample outside class {y} for anchor {i}")))?;
        let counts = &self.graph.cluster(k).class_counts;
        let h = (0..counts.len())
            .filter(|&j| j != y)
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if counts[b] >= counts[j] => Some(b),
                _ => Some(j),
            })
            .expect("some other class present");
        Ok((k, h))
    }

    pub fn negatives(&self, i: usize, m: usize, metric: Distance) -> Result<Vec<usize>> {
        let (k, h) = self.negative_source(i, metric)?;
        let cands = self.members_of_class(k, h, i);
        Ok(self.ranked(i, cands, metric, false, m))
    }
}

pub fn sample_positives(graph: &RelationGraph, fs: &FeatureSet, i: usize, n: usize, metric: Distance) -> Result<Vec<usize>> {
    ClassAwareSampler::new(graph, fs)?.positives(i, n, metric)
}

pub fn sample_negatives(graph: &RelationGraph, fs: &FeatureSet, i: usize, m: usize, metric: Distance) -> Result<Vec<usize>> {
    ClassAwareSampler::new(graph, fs)?.negatives(i, m, metric)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

/// Easy when the anchor's class holds more than `rho1` of its cluster, hard
/// when another class does, medium otherwise.
pub fn difficulty_of(graph: &RelationGraph, i: usize, rho1: f64) -> Difficulty {
    debug_assert!(rho1 > 0.5 && rho1 <= 1.0);
    let cl = graph.cluster(graph.cluster_of(i));
    let total = cl.total() as f64;
    let y = graph.label(i);
    if cl.class_counts[y] as f64 / total > rho1 {
        Difficulty::Easy
    } else if cl.class_counts.iter().enumerate().any(|(h, &k)| h != y && k as f64 / total > rho1) {
        Difficulty::Hard
    } else {
        Difficulty::Medium
    }
}

pub fn validate_rho1(rho1: f64) -> Result<()> {
    if rho1 > 0.5 && rho1 <= 1.0 {
        Ok(())
    } else {
        Err(CsrmsError::config("rho1", "must lie in (0.5, 1]"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    FullEasy,
    DecayingAlphaI,
    DecayingAlphaF,
}

pub const CONVERGED_LOSS: f64 = 0.01;
pub const CONVERGED_DELTA: f64 = 1e-4;

/// Decay schedule over the easy / medium / hard loss weights.
///
/// The weights `α_i·λ_e`, `(1−α_i)·α_f·λ_m` and `(1−α_i)·(1−α_f)·λ_h` always
/// sum to one: the λ vector is rescaled after every change of α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub alpha_i: f64,
    pub alpha_f: f64,
    pub lambda_e: f64,
    pub lambda_m: f64,
    pub lambda_h: f64,
    pub phase: Phase,
    pub loss_history: Vec<f64>,
    pub decay_step: f64,
    pub alpha_floor: f64,
    /// Set once the convergence test has failed inside `DecayingAlphaI`, so
    /// the next success counts as converging again.
    #[serde(default)]
    pub unconverged_since_phase: bool,
}

impl Default for CurriculumState {
    fn default() -> Self {
        Self::new(0.95, 0.95, [1.0, 1.0, 1.0], 0.05, 0.2)
    }
}

impl CurriculumState {
    pub fn new(alpha_i: f64, alpha_f: f64, lambdas: [f64; 3], decay_step: f64, alpha_floor: f64) -> Self {
        let mut s = Self {
            alpha_i,
            alpha_f,
            lambda_e: lambdas[0],
            lambda_m: lambdas[1],
            lambda_h: lambdas[2],
            phase: Phase::FullEasy,
            loss_history: Vec::new(),
            decay_step,
            alpha_floor,
            unconverged_since_phase: false,
        };
        s.renormalize();
        s
    }

    /// `α_i·λ_e + (1−α_i)·(α_f·λ_m + (1−α_f)·λ_h)`
    pub fn mixture(&self) -> f64 {
        self.alpha_i * self.lambda_e
            + (1.0 - self.alpha_i) * (self.alpha_f * self.lambda_m + (1.0 - self.alpha_f) * self.lambda_h)
    }

    pub fn identity_residual(&self) -> f64 {
        (self.mixture() - 1.0).abs()
    }

    fn renormalize(&mut self) {
        let m = self.mixture();
        if m > 0.0 {
            self.lambda_e /= m;
            self.lambda_m /= m;
            self.lambda_h /= m;
        }
    }

    pub fn weight(&self, d: Difficulty) -> f64 {
        match d {
            Difficulty::Easy => self.alpha_i * self.lambda_e,
            Difficulty::Medium => (1.0 - self.alpha_i) * self.alpha_f * self.lambda_m,
            Difficulty::Hard => (1.0 - self.alpha_i) * (1.0 - self.alpha_f) * self.lambda_h,
        }
    }

    fn converged(&self) -> bool {
        match self.loss_history.as_slice() {
            [.., prev, last] => *last < CONVERGED_LOSS && (last - prev).abs() < CONVERGED_DELTA,
            _ => false,
        }
    }

    fn decay(alpha: f64, step: f64, floor: f64) -> f64 {
        if alpha <= floor {
            alpha
        } else {
            (alpha - step).max(floor)
        }
    }

    /// Feeds one epoch's mean loss and advances the schedule.
    pub fn update(&mut self, epoch_mean_loss: f64) {
        self.loss_history.push(epoch_mean_loss);
        let converged = self.converged();
        match self.phase {
            Phase::FullEasy => {
                if converged {
                    self.phase = Phase::DecayingAlphaI;
                    self.unconverged_since_phase = false;
                    self.alpha_i = Self::decay(self.alpha_i, self.decay_step, self.alpha_floor);
                }
            }
            Phase::DecayingAlphaI => {
                if converged && self.unconverged_since_phase {
                    self.phase = Phase::DecayingAlphaF;
                    self.alpha_f = Self::decay(self.alpha_f, self.decay_step, self.alpha_floor);
                } else {
                    if !converged {
                        self.unconverged_since_phase = true;
                    }
                    self.alpha_i = Self::decay(self.alpha_i, self.decay_step, self.alpha_floor);
                }
            }
            Phase::DecayingAlphaF => {
                self.alpha_f = Self::decay(self.alpha_f, self.decay_step, self.alpha_floor);
            }
        }
        self.renormalize();
    }
}

pub fn curriculum_weight(state: &CurriculumState, d: Difficulty) -> f64 {
    state.weight(d)
}

pub fn update_curriculum(mut state: CurriculumState, epoch_mean_loss: f64) -> CurriculumState {
    state.update(epoch_mean_loss);
    state
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPlan {
    pub index: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub difficulty: Difficulty,
    pub weight: f64,
}

/// Batch-level sub-graph: anchors with their sampled neighbourhoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub anchors: Vec<AnchorPlan>,
}

pub const DEFAULT_BATCH_SIZE: usize = 32;

/// Seed-shuffled anchor order for one epoch, cut into batches. The last
/// batch is short when `n` is not a multiple of `batch_size`.
pub fn epoch_batches<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Builds the batch for `anchors`. Without a curriculum every weight is 1.
pub fn build_batch(
    sampler: &ClassAwareSampler<'_>,
    cfg: &SamplerConfig,
    rho1: f64,
    curriculum: Option<&CurriculumState>,
    anchors: &[usize],
) -> Result<Batch> {
    let anchors = anchors
        .iter()
        .map(|&i| {
            let difficulty = difficulty_of(sampler.graph, i, rho1);
            Ok(AnchorPlan {
                index: i,
                positives: sampler.positives(i, cfg.n_pos, cfg.metric)?,
                negatives: sampler.negatives(i, cfg.m_neg, cfg.metric)?,
                difficulty,
                weight: curriculum.map_or(1.0, |c| c.weight(difficulty)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch { anchors })
}

/// Easy / medium / hard counts over every sample.
pub fn difficulty_counts(graph: &RelationGraph, rho1: f64) -> [usize; 3] {
    let mut counts = [0; 3];
    for i in 0..graph.n_samples() {
        counts[difficulty_of(graph, i, rho1) as usize] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crm::{build_relation_graph, Cluster, ClusterModel, MatchMetric};

    fn graph_of(fs: &FeatureSet, groups: &[&[usize]], rho2: f64) -> RelationGraph {
        let clusters = groups
            .iter()
            .enumerate()
            .map(|(id, g)| {
                let mut class_counts = vec![0; fs.c()];
                for &m in *g {
                    class_counts[fs.label(m)] += 1;
                }
                Cluster { id, prototype: vec![0.0; fs.d()], members: g.to_vec(), class_counts }
            })
            .collect();
        let model = ClusterModel { vigilance: 0.5, learning_rate: 0.1, metric: MatchMetric::Cosine, bandwidth: 1.0, clusters };
        build_relation_graph(&model, fs.labels(), rho2).unwrap()
    }

    #[test]
    fn equal_distance_positives_break_ties_by_index() {
        // anchor at origin, four class-0 members on the unit circle
        let feats = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0, 5.0, 5.0];
        let fs = FeatureSet::from_f64(2, 2, &feats, vec![0, 0, 0, 0, 0, 1]).unwrap();
        let g = graph_of(&fs, &[&[0, 1, 2, 3, 4], &[5]], 0.55);
        assert_eq!(sample_positives(&g, &fs, 0, 3, Distance::Euclidean).unwrap(), vec![1, 2, 3]);
        assert_eq!(sample_positives(&g, &fs, 0, 10, Distance::Euclidean).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn negatives_from_only_other_cluster() {
        let feats = vec![0.0, 0.0, 0.1, 0.0, 3.0, 0.0, 2.0, 0.0, 4.0, 0.0];
        let fs = FeatureSet::from_f64(2, 2, &feats, vec![0, 0, 1, 1, 1]).unwrap();
        let g = graph_of(&fs, &[&[0, 1], &[2, 3, 4]], 0.55);
        assert_eq!(sample_negatives(&g, &fs, 0, 2, Distance::Euclidean).unwrap(), vec![3, 2]);
        assert_eq!(sample_negatives(&g, &fs, 0, 9, Distance::Euclidean).unwrap(), vec![3, 2, 4]);
    }

    #[test]
    fn single_class_has_no_negatives() {
        let fs = FeatureSet::from_f64(1, 1, &[0.0, 1.0], vec![0, 0]).unwrap();
        let g = graph_of(&fs, &[&[0, 1]], 0.55);
        assert!(matches!(sample_negatives(&g, &fs, 0, 1, Distance::Euclidean), Err(CsrmsError::Sampler(_))));
    }

    #[test]
    fn lone_sample_of_class_has_no_positives() {
        let fs = FeatureSet::from_f64(1, 2, &[0.0, 1.0], vec![0, 1]).unwrap();
        let g = graph_of(&fs, &[&[0, 1]], 0.55);
        assert!(matches!(sample_positives(&g, &fs, 0, 1, Distance::Euclidean), Err(CsrmsError::Sampler(_))));
    }

    #[test]
    fn difficulty_examples() {
        let labels: Vec<u32> = [vec![0; 9], vec![1], vec![0; 5], vec![1; 5]].concat();
        let fs = FeatureSet::from_f64(1, 2, &[0.0; 20], labels).unwrap();
        let a: Vec<usize> = (0..10).collect();
        let b: Vec<usize> = (10..20).collect();
        let g = graph_of(&fs, &[&a, &b], 0.55);
        assert_eq!(difficulty_of(&g, 0, 0.8), Difficulty::Easy);
        assert_eq!(difficulty_of(&g, 9, 0.8), Difficulty::Hard);
        assert_eq!(difficulty_of(&g, 10, 0.8), Difficulty::Medium);
        assert_eq!(difficulty_of(&g, 15, 0.8), Difficulty::Medium);
        assert_eq!(difficulty_counts(&g, 0.8), [9, 10, 1]);
    }

    #[test]
    fn rho1_range() {
        assert!(validate_rho1(0.5).is_err());
        assert!(validate_rho1(0.75).is_ok());
        assert!(validate_rho1(1.0).is_ok());
    }

    #[test]
    fn weights_at_alpha_one() {
        let s = CurriculumState::new(1.0, 0.5, [1.0, 1.0, 1.0], 0.05, 0.2);
        assert_eq!(s.weight(Difficulty::Easy), 1.0);
        assert_eq!(s.weight(Difficulty::Medium), 0.0);
        assert_eq!(s.weight(Difficulty::Hard), 0.0);
    }

    #[test]
    fn weights_at_half() {
        let s = CurriculumState::new(0.5, 0.5, [1.0, 1.0, 1.0], 0.05, 0.2);
        let w = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard].map(|d| s.weight(d));
        assert_eq!(w, [0.5, 0.25, 0.25]);
    }

    #[test]
    fn unequal_lambdas_are_rescaled() {
        let s = CurriculumState::new(0.6, 0.3, [2.0, 0.5, 3.0], 0.05, 0.2);
        assert!(s.identity_residual() < 1e-12);
    }

    #[test]
    fn trigger_fires_on_converged_trace() {
        let mut s = CurriculumState::default();
        for l in [0.5, 0.2, 0.009] {
            s.update(l);
            assert_eq!(s.phase, Phase::FullEasy);
        }
        s.update(0.00895);
        assert_eq!(s.phase, Phase::DecayingAlphaI);
        assert!((s.alpha_i - 0.90).abs() < 1e-12);
    }

    #[test]
    fn no_trigger_above_threshold() {
        let mut s = CurriculumState::default();
        for k in 0..50 {
            s.update(0.5 + 1e-6 * k as f64);
        }
        assert_eq!(s.phase, Phase::FullEasy);
        assert_eq!(s.alpha_i, 0.95);
    }

    #[test]
    fn second_convergence_moves_to_alpha_f() {
        let mut s = CurriculumState::default();
        for l in [0.009, 0.00899] {
            s.update(l);
        }
        assert_eq!(s.phase, Phase::DecayingAlphaI);
        // still converged: keep decaying alpha_i
        s.update(0.00898);
        assert_eq!(s.phase, Phase::DecayingAlphaI);
        s.update(0.05);
        s.update(0.008);
        assert_eq!(s.phase, Phase::DecayingAlphaI);
        s.update(0.00801);
        assert_eq!(s.phase, Phase::DecayingAlphaF);
        let ai = s.alpha_i;
        s.update(0.00802);
        assert_eq!(s.alpha_i, ai);
        assert!(s.alpha_f < 0.95);
    }

    #[test]
    fn alphas_floor() {
        let mut s = CurriculumState::default();
        s.update(0.001);
        s.update(0.001);
        for _ in 0..100 {
            s.update(0.001);
        }
        assert_eq!(s.alpha_i, 0.2);
    }
}
