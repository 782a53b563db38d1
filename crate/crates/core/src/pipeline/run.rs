use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cags::{build_batch, difficulty_counts, epoch_batches, AnchorPlan, Batch, ClassAwareSampler, CurriculumState};
use crate::crm::{
    art_fit, build_relation_graph, load_cluster_model, load_relation_graph, save_cluster_model, save_relation_graph,
    RelationGraph,
};
use crate::data_io::{generate_synthetic, load_featureset, save_featureset, save_manifest, FeatureSet, Manifest};
use crate::error::{CsrmsError, Result};
use crate::rgrl::{
    aligned_representation, compute_prototypes, infer, load_checkpoint, save_checkpoint, train_step, Checkpoint,
    LossBreakdown, PrototypeBank, SmoothingModel,
};

use super::config::RunConfig;
use super::metrics::{
    evaluate, inter_class_distance, intra_class_distance, CurriculumSnapshot, MetricsRecord, MetricsWriter,
};

const SPLIT_SALT: u64 = 0x0005_b117;
const EPOCH_SALT: u64 = 0xe90c;

/// Per-class seeded shuffle; `round(fraction · count)` samples of each
/// class go to evaluation, always leaving at least one for training.
/// Both index lists come back sorted.
pub fn stratified_split(labels: &[u32], c: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for class in 0..c {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] as usize == class).collect();
        idx.shuffle(&mut rng);
        let k = ((fraction * idx.len() as f64).round() as usize).min(idx.len().saturating_sub(1));
        eval.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    (train, eval)
}

/// Training and evaluation sets with their ids in the source file(s).
#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: FeatureSet,
    pub train_ids: Vec<usize>,
    pub eval: FeatureSet,
    pub eval_ids: Vec<usize>,
}

pub fn split_datasets(fs_all: &FeatureSet, cfg: &RunConfig) -> Result<Datasets> {
    let (train_ids, eval_ids) = stratified_split(fs_all.labels(), fs_all.c(), cfg.eval_fraction, cfg.seed());
    Ok(Datasets { train: fs_all.subset(&train_ids)?, train_ids, eval: fs_all.subset(&eval_ids)?, eval_ids })
}

pub fn load_datasets(cfg: &RunConfig) -> Result<Datasets> {
    let fs_all = load_featureset(&cfg.features)?;
    match &cfg.eval_features {
        None => split_datasets(&fs_all, cfg),
        Some(p) => {
            let eval = load_featureset(p)?;
            if eval.d() != fs_all.d() || eval.c() != fs_all.c() {
                return Err(CsrmsError::config("eval_features", "dimension or class count differs from features"));
            }
            Ok(Datasets {
                train_ids: (0..fs_all.n()).collect(),
                eval_ids: (0..eval.n()).collect(),
                train: fs_all,
                eval,
            })
        }
    }
}

/// Offline stage: cluster the training features and derive the relation
/// graph.
pub fn offline(train: &FeatureSet, cfg: &RunConfig) -> Result<RelationGraph> {
    let model = art_fit(train, &cfg.art())?;
    info!("clustered {} samples into {} clusters", train.n(), model.len());
    build_relation_graph(&model, train.labels(), cfg.rho2)
}

/// Sampled neighbourhood of every training anchor. Sampling is
/// deterministic, so plans are drawn once and reused every epoch; only the
/// curriculum weights change. Empty when neither smoothing nor the negative
/// loss is on.
pub fn anchor_plans(cfg: &RunConfig, fs: &FeatureSet, graph: &RelationGraph) -> Result<Vec<AnchorPlan>> {
    let all: Vec<usize> = (0..fs.n()).collect();
    if !(cfg.components.smoothing || cfg.components.nega) {
        return Ok(all
            .into_iter()
            .map(|i| AnchorPlan {
                index: i,
                positives: Vec::new(),
                negatives: Vec::new(),
                difficulty: crate::cags::difficulty_of(graph, i, cfg.rho1),
                weight: 1.0,
            })
            .collect());
    }
    let sampler = ClassAwareSampler::new(graph, fs)?;
    Ok(build_batch(&sampler, &cfg.sampler(), cfg.rho1, None, &all)?.anchors)
}

/// Epoch-by-epoch trainer over a fixed training set and relation graph.
pub struct Trainer<'a> {
    cfg: &'a RunConfig,
    fs: &'a FeatureSet,
    graph: &'a RelationGraph,
    plans: Vec<AnchorPlan>,
    rng: ChaCha8Rng,
    counts: [usize; 3],
    pub model: SmoothingModel,
    pub protos: Option<PrototypeBank>,
    pub curriculum: Option<CurriculumState>,
    pub epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a RunConfig, fs: &'a FeatureSet, graph: &'a RelationGraph) -> Result<Self> {
        cfg.validate()?;
        if graph.n_samples() != fs.n() {
            return Err(CsrmsError::Contract(format!(
                "graph covers {} samples, training set has {}",
                graph.n_samples(),
                fs.n()
            )));
        }
        let comps = cfg.components;
        Ok(Self {
            cfg,
            fs,
            graph,
            plans: anchor_plans(cfg, fs, graph)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed() ^ EPOCH_SALT),
            counts: difficulty_counts(graph, cfg.rho1),
            model: SmoothingModel::init(fs.d(), cfg.hidden, fs.c(), cfg.knn_k, cfg.use_output_softmax, cfg.seed()),
            protos: if comps.alignment { Some(compute_prototypes(graph, fs, cfg.align())?) } else { None },
            curriculum: comps.curriculum.then(|| cfg.curriculum()),
            epoch: 0,
        })
    }

    /// One pass over every anchor; returns losses averaged over anchors.
    pub fn run_epoch(&mut self) -> Result<LossBreakdown> {
        let tcfg = self.cfg.train(self.epoch);
        let batches = epoch_batches(self.fs.n(), self.cfg.batch_size, &mut self.rng);
        let mut acc = LossBreakdown::default();
        for idx in &batches {
            let anchors = idx
                .iter()
                .map(|&i| {
                    let mut plan = self.plans[i].clone();
                    plan.weight = self.curriculum.as_ref().map_or(1.0, |c| c.weight(plan.difficulty));
                    plan
                })
                .collect();
            let b = train_step(&mut self.model, self.fs, &Batch { anchors }, self.protos.as_ref(), &tcfg)?;
            let w = idx.len() as f64 / self.fs.n() as f64;
            acc.ce += w * b.ce;
            acc.nega += w * b.nega;
            acc.inter += w * b.inter;
            acc.total += w * b.total;
        }
        if let Some(c) = self.curriculum.as_mut() {
            c.update(acc.ce);
        }
        self.epoch += 1;
        Ok(acc)
    }

    /// Aligned representation `F_a` of every training anchor.
    pub fn representations(&self) -> Result<Vec<Vec<f64>>> {
        self.plans
            .iter()
            .map(|p| {
                aligned_representation(&self.model, self.fs, p.index, &p.positives, self.protos.as_ref(), self.cfg.components)
            })
            .collect()
    }

    pub fn predict(&self, eval: &FeatureSet) -> Result<Vec<Vec<f64>>> {
        Ok(infer(eval, self.graph, self.fs, &self.model, self.protos.as_ref(), &self.cfg.infer_options())?.scores)
    }

    /// Metrics for the epoch just finished.
    pub fn record(&self, losses: LossBreakdown, eval: &FeatureSet) -> Result<MetricsRecord> {
        let (top1, top5) = evaluate(&self.predict(eval)?, eval.labels())?;
        let reprs = self.representations()?;
        Ok(MetricsRecord {
            epoch: self.epoch,
            lr: self.cfg.lr_at(self.epoch.saturating_sub(1)),
            losses,
            curriculum: self.curriculum.as_ref().map(|c| CurriculumSnapshot::of(c, self.counts)),
            top1,
            top5,
            intra_class_distance: intra_class_distance(&reprs, self.fs.labels()),
            inter_class_distance: inter_class_distance(&reprs, self.fs.labels()),
        })
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let prototypes = match &self.protos {
            Some(p) => p.clone(),
            None => compute_prototypes(self.graph, self.fs, self.cfg.align())?,
        };
        Ok(Checkpoint { model: self.model.clone(), prototypes, config: serde_json::to_value(self.cfg)? })
    }
}

/// Result of a full in-memory run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub top1: f64,
    pub top5: f64,
    pub clusters: usize,
    /// Statistics of the training anchors' `F_a` rows.
    pub intra_repr: f64,
    pub inter_repr: f64,
    /// The same statistics on the raw training features.
    pub intra_raw: f64,
    pub inter_raw: f64,
}

/// Split, cluster, train and evaluate without touching the filesystem.
pub fn run_in_memory(cfg: &RunConfig, fs_all: &FeatureSet) -> Result<RunOutcome> {
    cfg.validate()?;
    let data = split_datasets(fs_all, cfg)?;
    let graph = offline(&data.train, cfg)?;
    let mut trainer = Trainer::new(cfg, &data.train, &graph)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
    }
    let (top1, top5) = evaluate(&trainer.predict(&data.eval)?, data.eval.labels())?;
    let reprs = trainer.representations()?;
    let raw: Vec<Vec<f64>> = (0..data.train.n()).map(|i| data.train.row(i).to_vec()).collect();
    let labels = data.train.labels();
    Ok(RunOutcome {
        top1,
        top5,
        clusters: graph.model.len(),
        intra_repr: intra_class_distance(&reprs, labels),
        inter_repr: inter_class_distance(&reprs, labels),
        intra_raw: intra_class_distance(&raw, labels),
        inter_raw: inter_class_distance(&raw, labels),
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let fs_all = generate_synthetic(&cfg.synth_spec())?;
    ensure_parent(&cfg.features)?;
    save_featureset(&fs_all, &cfg.features)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = Manifest {
        source: format!(
            "synthetic: {} classes x {} modes, spread {}, overlap {}",
            cfg.classes, cfg.modes_per_class, cfg.mode_spread, cfg.overlap
        ),
        backbone: "none".into(),
        split: "all".into(),
        created: format!("unix:{created}"),
    };
    save_manifest(&manifest, &cfg.features)?;
    Ok(format!("wrote {} samples (d={}, c={}) to {}", fs_all.n(), fs_all.d(), fs_all.c(), cfg.features.display()))
}

pub fn cmd_cluster(cfg: &RunConfig) -> Result<String> {
    let data = load_datasets(cfg)?;
    let model = art_fit(&data.train, &cfg.art())?;
    ensure_parent(&cfg.clusters)?;
    save_cluster_model(&model, &cfg.clusters)?;
    Ok(format!("{} clusters over {} training samples -> {}", model.len(), data.train.n(), cfg.clusters.display()))
}

pub fn cmd_graph(cfg: &RunConfig) -> Result<String> {
    let data = load_datasets(cfg)?;
    let model = load_cluster_model(&cfg.clusters)?;
    model.validate(data.train.labels(), data.train.c())?;
    let graph = build_relation_graph(&model, data.train.labels(), cfg.rho2)?;
    ensure_parent(&cfg.graph)?;
    save_relation_graph(&graph, &cfg.graph)?;
    let dominated = graph.dominance.iter().filter(|d| d.class().is_some()).count();
    Ok(format!("{dominated} dominated and {} mixed clusters -> {}", graph.model.len() - dominated, cfg.graph.display()))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let data = load_datasets(cfg)?;
    let graph = load_relation_graph(&cfg.graph, data.train.labels())?;
    let mut trainer = Trainer::new(cfg, &data.train, &graph)?;
    let mut writer = MetricsWriter::create(&cfg.metrics)?;
    let mut last = None;
    for _ in 0..cfg.epochs {
        let losses = trainer.run_epoch()?;
        let rec = trainer.record(losses, &data.eval)?;
        info!("epoch {}: loss {:.4} top1 {:.4}", rec.epoch, rec.losses.total, rec.top1);
        writer.write(&rec)?;
        last = Some(rec);
    }
    ensure_parent(&cfg.checkpoint)?;
    save_checkpoint(&trainer.checkpoint()?, &cfg.checkpoint)?;
    Ok(match last {
        Some(r) => format!("trained {} epochs: top1 {:.4}, top5 {:.4} -> {}", r.epoch, r.top1, r.top5, cfg.checkpoint.display()),
        None => format!("no epochs run; initial model -> {}", cfg.checkpoint.display()),
    })
}

/// Evaluation report written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub top1: f64,
    pub top5: f64,
    pub ids: Vec<usize>,
    pub labels: Vec<u32>,
    pub scores: Vec<Vec<f64>>,
}

fn load_trained(cfg: &RunConfig) -> Result<(Datasets, RelationGraph, Checkpoint)> {
    let data = load_datasets(cfg)?;
    let graph = load_relation_graph(&cfg.graph, data.train.labels())?;
    let ck = load_checkpoint(&cfg.checkpoint)?;
    if ck.model.d() != data.train.d() || ck.model.classes() != data.train.c() {
        return Err(CsrmsError::Contract("checkpoint shape does not match the features".into()));
    }
    Ok((data, graph, ck))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String> {
    let (data, graph, ck) = load_trained(cfg)?;
    let protos = cfg.components.alignment.then_some(&ck.prototypes);
    let preds = infer(&data.eval, &graph, &data.train, &ck.model, protos, &cfg.infer_options())?;
    let (top1, top5) = evaluate(&preds.scores, data.eval.labels())?;
    let report = EvalReport {
        n: data.eval.n(),
        top1,
        top5,
        ids: data.eval_ids.clone(),
        labels: data.eval.labels().to_vec(),
        scores: preds.scores,
    };
    ensure_parent(&cfg.report)?;
    fs::write(&cfg.report, serde_json::to_string(&report)?)?;
    Ok(format!("top1 {top1:.4} top5 {top5:.4} over {} samples -> {}", report.n, cfg.report.display()))
}

/// Writes `id,label,f0..f{d-1}` rows of every training anchor's `F_a`.
pub fn cmd_export_repr(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let (data, graph, ck) = load_trained(cfg)?;
    let out = out.unwrap_or(&cfg.repr);
    let plans = anchor_plans(cfg, &data.train, &graph)?;
    let protos = cfg.components.alignment.then_some(&ck.prototypes);
    let d = ck.model.d();
    let mut csv = String::from("id,label");
    for j in 0..d {
        csv.push_str(&format!(",f{j}"));
    }
    csv.push('\n');
    for p in &plans {
        let row = aligned_representation(&ck.model, &data.train, p.index, &p.positives, protos, cfg.components)?;
        csv.push_str(&format!("{},{}", data.train_ids[p.index], data.train.label(p.index)));
        for v in row {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    ensure_parent(out)?;
    fs::write(out, csv)?;
    Ok(format!("wrote {} representations to {}", plans.len(), out.display()))
}
