//! Acceptance criteria P1–P8. Runs as a plain binary (no libtest harness) so
//! every criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csrms_core::cags::{
    build_batch, sample_negatives, sample_positives, ClassAwareSampler, CurriculumState, Distance, Phase, SamplerConfig,
};
use csrms_core::crm::{
    art_fit, art_fit_traced, build_relation_graph, classify_pair, ArtConfig, Cluster, ClusterModel, MatchMetric,
    RelationGraph, RelationKind,
};
use csrms_core::data_io::{generate_synthetic, FeatureSet};
use csrms_core::numerics::{grad_check, Graph, Tensor, Var};
use csrms_core::pipeline::{run_in_memory, RunConfig, RunOutcome};
use csrms_core::rgrl::{
    batch_objective, compute_prototypes, AlignCoefficients, Components, DispersionSign, LossConfig, ParamVars,
    SmoothingModel, TrainConfig,
};
use csrms_core::{CsrmsError, Result};

// ---------------------------------------------------------------- harness

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} {id} {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

type Criterion = (&'static str, fn(&mut Report));
type DistFn = fn(&[f64], &[f64]) -> f64;

fn main() {
    // `cargo test -- --list` and filters are passed to every test binary.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut report = Report { failures: 0 };
    let criteria: [Criterion; 6] =
        [("P1", p1), ("P2", p2), ("P3", p3), ("P4", p4), ("P5", p5), ("P6-P8", p6_p8)];
    for (id, run) in criteria {
        let start = Instant::now();
        run(&mut report);
        eprintln!("  ({id} took {:.1?})", start.elapsed());
    }
    if report.failures > 0 {
        println!("{} acceptance criteria failed", report.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

fn tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, so ReLU kinks are never straddled.
fn off_zero(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let data = (0..r * c)
        .map(|_| {
            let v = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::matrix(r, c, data).unwrap()
}

// ---------------------------------------------------------------- P1

const INSTANCES: usize = 100;
const EPS: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;

/// Reduces `out` to a scalar by a random fixed weighting.
fn weighted_sum(g: &mut Graph, out: Var, w: &Tensor) -> Result<Var> {
    let wv = g.input(w.clone());
    let m = g.mul(out, wv)?;
    Ok(g.sum(m))
}

type OpCase = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// One random instance of `op`: leaf tensors and the scalar computation.
fn op_instance(op: &str, rng: &mut ChaCha8Rng) -> (Vec<Tensor>, OpCase) {
    let r = rng.random_range(1..5);
    let c = rng.random_range(1..5);
    let k = rng.random_range(1..5);
    let w_rc = tensor(rng, r, c, -1.0, 1.0);
    let w_r1 = tensor(rng, r, 1, -1.0, 1.0);
    let w_1c = tensor(rng, 1, c, -1.0, 1.0);
    let a = tensor(rng, r, c, -2.0, 2.0);
    let scalar: f64 = rng.random_range(-3.0..3.0);
    // Broadcast operand: full, row, or 1×1.
    let b_shape = match rng.random_range(0..3) {
        0 => (r, c),
        1 => (1, c),
        _ => (1, 1),
    };
    let b = tensor(rng, b_shape.0, b_shape.1, -2.0, 2.0);
    match op {
        "matmul" => {
            let a = tensor(rng, r, k, -2.0, 2.0);
            let b = tensor(rng, k, c, -2.0, 2.0);
            (vec![a, b], Box::new(move |g, v| {
                let o = g.matmul(v[0], v[1])?;
                weighted_sum(g, o, &w_rc)
            }))
        }
        "add" => (vec![a, b], Box::new(move |g, v| {
            let o = g.add(v[0], v[1])?;
            weighted_sum(g, o, &w_rc)
        })),
        "sub" => (vec![a, b], Box::new(move |g, v| {
            let o = g.sub(v[0], v[1])?;
            weighted_sum(g, o, &w_rc)
        })),
        "mul" => {
            let b = if b_shape == (1, c) && c != 1 { tensor(rng, r, c, -2.0, 2.0) } else { b };
            (vec![a, b], Box::new(move |g, v| {
                let o = g.mul(v[0], v[1])?;
                weighted_sum(g, o, &w_rc)
            }))
        }
        "scale" => (vec![a], Box::new(move |g, v| {
            let o = g.scale(v[0], scalar);
            weighted_sum(g, o, &w_rc)
        })),
        "offset" => (vec![a], Box::new(move |g, v| {
            let o = g.offset(v[0], scalar);
            let o = g.mul(o, o)?;
            weighted_sum(g, o, &w_rc)
        })),
        "relu" => (vec![off_zero(rng, r, c)], Box::new(move |g, v| {
            let o = g.relu(v[0]);
            weighted_sum(g, o, &w_rc)
        })),
        "log" => (vec![tensor(rng, r, c, 0.2, 3.0)], Box::new(move |g, v| {
            let o = g.log(v[0])?;
            weighted_sum(g, o, &w_rc)
        })),
        "sqrt" => (vec![tensor(rng, r, c, 0.2, 3.0)], Box::new(move |g, v| {
            let o = g.sqrt(v[0])?;
            weighted_sum(g, o, &w_rc)
        })),
        "softmax_rows" => (vec![tensor(rng, r, c, -4.0, 4.0)], Box::new(move |g, v| {
            let o = g.softmax_rows(v[0])?;
            weighted_sum(g, o, &w_rc)
        })),
        "log_softmax_rows" => (vec![tensor(rng, r, c, -4.0, 4.0)], Box::new(move |g, v| {
            let o = g.log_softmax_rows(v[0])?;
            weighted_sum(g, o, &w_rc)
        })),
        "concat_rows" => {
            let r2 = rng.random_range(1..4);
            let b = tensor(rng, r2, c, -2.0, 2.0);
            let w = tensor(rng, r + r2, c, -1.0, 1.0);
            (vec![a, b], Box::new(move |g, v| {
                let o = g.concat_rows(v[0], v[1])?;
                weighted_sum(g, o, &w)
            }))
        }
        "mean_rows" => (vec![a], Box::new(move |g, v| {
            let o = g.mean_rows(v[0])?;
            weighted_sum(g, o, &w_1c)
        })),
        "sum" => (vec![a], Box::new(move |g, v| {
            let o = g.sum(v[0]);
            Ok(g.scale(o, scalar))
        })),
        "l2_norm_rows" => (vec![off_zero(rng, r, c)], Box::new(move |g, v| {
            let o = g.l2_norm_rows(v[0])?;
            weighted_sum(g, o, &w_r1)
        })),
        "l2_distance" => {
            let rows_b = if rng.random_bool(0.5) { r } else { 1 };
            let b = tensor(rng, rows_b, c, -2.0, 2.0);
            (vec![off_zero(rng, r, c), b], Box::new(move |g, v| {
                let o = g.l2_distance(v[0], v[1])?;
                weighted_sum(g, o, &w_r1)
            }))
        }
        "select_rows" => {
            let m = rng.random_range(1..6);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..r)).collect();
            let w = tensor(rng, m, c, -1.0, 1.0);
            (vec![a], Box::new(move |g, v| {
                let o = g.select_rows(v[0], &idx)?;
                weighted_sum(g, o, &w)
            }))
        }
        "pick" => {
            let cols: Vec<usize> = (0..r).map(|_| rng.random_range(0..c)).collect();
            (vec![a], Box::new(move |g, v| {
                let o = g.pick(v[0], &cols)?;
                weighted_sum(g, o, &w_r1)
            }))
        }
        other => unreachable!("unknown op {other}"),
    }
}

const OPS: [&str; 18] = [
    "matmul", "add", "sub", "mul", "scale", "offset", "relu", "log", "sqrt", "softmax_rows", "log_softmax_rows",
    "concat_rows", "mean_rows", "sum", "l2_norm_rows", "l2_distance", "select_rows", "pick",
];

/// Random small training problem; the model parameters are the checked leaves.
fn objective_instance(rng: &mut ChaCha8Rng) -> Result<f64> {
    let d = rng.random_range(2..5);
    let c = rng.random_range(2..4);
    let n = rng.random_range(18..30);
    let labels: Vec<u32> = (0..n).map(|i| (i % c) as u32).collect();
    let feats: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0f64..1.0)).collect();
    let fs = FeatureSet::from_f64(d, c, &feats, labels)?;
    let art = ArtConfig { vigilance: rng.random_range(0.5..0.9), seed: rng.random(), ..ArtConfig::default() };
    let graph = build_relation_graph(&art_fit(&fs, &art)?, fs.labels(), 0.5)?;
    let sampler = ClassAwareSampler::new(&graph, &fs)?;
    let scfg = SamplerConfig { n_pos: rng.random_range(1..4), m_neg: rng.random_range(1..4), metric: Distance::Euclidean };
    let mut cur = CurriculumState::default();
    for _ in 0..rng.random_range(0..4) {
        cur.update(0.001);
    }
    let mut anchors: Vec<usize> = (0..n).collect();
    anchors.shuffle(rng);
    anchors.truncate(rng.random_range(2..7));
    let batch = build_batch(&sampler, &scfg, 0.8, Some(&cur), &anchors)?;
    let protos = compute_prototypes(&graph, &fs, AlignCoefficients::default())?;
    let model = SmoothingModel::init(d, rng.random_range(2..6), c, rng.random_range(1..4), rng.random_bool(0.5), rng.random());
    let sign = if rng.random_bool(0.5) { DispersionSign::Repulsive } else { DispersionSign::Literal };
    let cfg = TrainConfig {
        lr: 0.1,
        loss: LossConfig {
            theta: rng.random_range(0.5..2.0),
            mu: rng.random_range(0.5..2.0),
            gamma_nega: rng.random_range(0.1..1.0),
            gamma_inter: rng.random_range(0.1..1.0),
            dispersion_sign: sign,
        },
        components: Components::FULL,
    };
    let leaves = [model.w_in.clone(), model.w_out.clone(), model.classifier_w.clone(), model.classifier_b.clone()];
    grad_check(
        |g, v| {
            let p = ParamVars { w_in: v[0], w_out: v[1], classifier_w: v[2], classifier_b: v[3] };
            Ok(batch_objective(g, &p, &model, &fs, &batch, Some(&protos), &cfg)?.total)
        },
        &leaves,
        EPS,
    )
}

fn p1(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: (f64, &str) = (0.0, "");
    let mut errors = Vec::new();
    for op in OPS {
        for _ in 0..INSTANCES {
            let (inputs, f) = op_instance(op, &mut rng);
            match grad_check(|g, v| f(g, v), &inputs, EPS) {
                Ok(e) if e > worst.0 => worst = (e, op),
                Ok(_) => {}
                Err(e) => errors.push(format!("{op}: {e}")),
            }
        }
    }
    // Instances where the repulsive loss is undefined at the base point
    // (collapsed representations, zero distance) are redrawn and counted.
    let (mut composite, mut checked, mut redrawn) = (0.0f64, 0usize, 0usize);
    while checked < INSTANCES && redrawn < INSTANCES {
        match objective_instance(&mut rng) {
            Ok(e) => {
                composite = composite.max(e);
                checked += 1;
            }
            Err(CsrmsError::Domain { .. }) => redrawn += 1,
            Err(e) => {
                errors.push(format!("objective: {e}"));
                checked += 1;
            }
        }
    }
    if checked < INSTANCES {
        errors.push(format!("only {checked} defined objective instances"));
    }
    let elapsed = start.elapsed();
    let ok = errors.is_empty() && worst.0 < GRAD_TOL && composite < GRAD_TOL && elapsed < Duration::from_secs(60);
    report.line(
        "P1",
        ok,
        format!(
            "gradient suite: {} ops + composite objective x {INSTANCES} instances; max rel err {:.2e} ({}) / objective {:.2e} (tol {GRAD_TOL:e}; {redrawn} undefined draws replaced); {:.1?} (< 60 s){}",
            OPS.len(),
            worst.0,
            worst.1,
            composite,
            elapsed,
            if errors.is_empty() { String::new() } else { format!("; errors: {errors:?}") }
        ),
    );
}

// ---------------------------------------------------------------- P2

fn p2(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut state = random_state(&mut rng);
    for step in 0..10_000 {
        if step % 200 == 0 {
            state = random_state(&mut rng);
        }
        let loss = match rng.random_range(0..3) {
            0 => rng.random_range(0.0..5.0),
            1 => rng.random_range(0.0..0.02),
            _ => state.loss_history.last().copied().unwrap_or(0.005) + rng.random_range(-5e-5..5e-5),
        };
        state.update(loss);
        worst = worst.max(state.identity_residual());
    }
    let traces = transition_traces();
    let ok = worst < 1e-9 && traces.is_ok();
    report.line(
        "P2",
        ok,
        format!(
            "curriculum identity: max residual {worst:.2e} over 10000 updates (tol 1e-9); constructed threshold traces: {}",
            traces.err().unwrap_or_else(|| "all transitions exact".into())
        ),
    );
}

fn random_state(rng: &mut ChaCha8Rng) -> CurriculumState {
    let lambdas = [rng.random_range(0.1..3.0), rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)];
    CurriculumState::new(
        rng.random_range(0.3..0.99),
        rng.random_range(0.3..0.99),
        lambdas,
        rng.random_range(0.01..0.2),
        rng.random_range(0.0..0.3),
    )
}

/// Feeds `losses` and returns the phase after each update.
fn phases(losses: &[f64]) -> (Vec<Phase>, CurriculumState) {
    let mut s = CurriculumState::default();
    let out = losses
        .iter()
        .map(|&l| {
            s.update(l);
            s.phase
        })
        .collect();
    (out, s)
}

fn transition_traces() -> std::result::Result<(), String> {
    use Phase::*;
    let check = |name: &str, losses: &[f64], want: &[Phase]| -> std::result::Result<(), String> {
        let (got, _) = phases(losses);
        if got == want {
            Ok(())
        } else {
            Err(format!("{name}: expected {want:?}, got {got:?}"))
        }
    };
    // Both conditions met at update 4 (0.005 < 0.01, |Δ| = 5e-5 < 1e-4).
    check("trigger", &[1.0, 0.5, 0.005, 0.00505], &[FullEasy, FullEasy, FullEasy, DecayingAlphaI])?;
    // Loss just above 0.01 never triggers however flat.
    check("loss threshold", &[0.0101, 0.0101, 0.0101], &[FullEasy; 3])?;
    // Δ just above 1e-4 never triggers however small the loss.
    check("delta threshold", &[0.005, 0.00489, 0.00478], &[FullEasy; 3])?;
    // Converging again: stays in Decaying-αi until the test fails then passes.
    check(
        "second convergence",
        &[0.005, 0.005, 0.005, 0.5, 0.004, 0.004, 0.004],
        &[FullEasy, DecayingAlphaI, DecayingAlphaI, DecayingAlphaI, DecayingAlphaI, DecayingAlphaF, DecayingAlphaF],
    )?;
    // α_i decrements by the step at the trigger epoch and every later one.
    let (_, s) = phases(&[0.005, 0.005, 0.005, 0.005]);
    let expected = 0.95 - 3.0 * 0.05;
    if (s.alpha_i - expected).abs() > 1e-12 {
        return Err(format!("alpha_i after three decaying epochs: {} != {expected}", s.alpha_i));
    }
    Ok(())
}

// ---------------------------------------------------------------- P3

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn cosine_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - dot / (na * nb)
    }
}

struct Instance {
    fs: FeatureSet,
    groups: Vec<Vec<usize>>,
    rho2: f64,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(2..=200);
    let d = rng.random_range(1..=8);
    let c = rng.random_range(2..=5usize).min(n);
    // Integer grids make distance ties common.
    let grid = rng.random_bool(0.5);
    let feats: Vec<f64> = (0..n * d)
        .map(|_| if grid { rng.random_range(-2..=2) as f64 } else { rng.random_range(-3.0..3.0) })
        .collect();
    // Skewed labels so that dominated clusters appear.
    // Every class is present.
    let mut labels: Vec<u32> = (0..n)
        .map(|i| if i < c { i as u32 } else if rng.random_bool(0.4) { 0 } else { rng.random_range(0..c) as u32 })
        .collect();
    labels.shuffle(rng);
    let k = rng.random_range(1..=n.min(12));
    let mut groups = vec![Vec::new(); k];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for (slot, &i) in order.iter().enumerate() {
        // Every cluster gets at least one member; the rest go by label bias.
        let g = if slot < k { slot } else if rng.random_bool(0.6) { labels[i] as usize % k } else { rng.random_range(0..k) };
        groups[g].push(i);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    Instance { fs: FeatureSet::from_f64(d, c, &feats, labels).unwrap(), groups, rho2: rng.random_range(0.4..0.8) }
}

fn graph_of(inst: &Instance) -> RelationGraph {
    let c = inst.fs.c();
    let clusters = inst
        .groups
        .iter()
        .enumerate()
        .map(|(id, members)| {
            let mut class_counts = vec![0; c];
            for &m in members {
                class_counts[inst.fs.label(m)] += 1;
            }
            Cluster { id, prototype: vec![0.0; inst.fs.d()], members: members.clone(), class_counts }
        })
        .collect();
    let model = ClusterModel { vigilance: 0.5, learning_rate: 0.1, metric: MatchMetric::Cosine, bandwidth: 1.0, clusters };
    build_relation_graph(&model, inst.fs.labels(), inst.rho2).unwrap()
}

/// Brute-force oracle over the raw partition, independent of the graph.
struct Oracle<'a> {
    inst: &'a Instance,
    dist: DistFn,
}

impl Oracle<'_> {
    fn count(&self, k: usize, class: usize) -> usize {
        self.inst.groups[k].iter().filter(|&&m| self.inst.fs.label(m) == class).count()
    }

    /// Class dominating cluster `k` (share strictly above ρ2, lowest class on ties).
    fn dominator(&self, k: usize) -> Option<usize> {
        let size = self.inst.groups[k].len() as f64;
        let mut best = 0;
        for j in 1..self.inst.fs.c() {
            if self.count(k, j) > self.count(k, best) {
                best = j;
            }
        }
        (self.count(k, best) as f64 / size > self.inst.rho2).then_some(best)
    }

    fn others_of_class(&self, k: usize, class: usize, i: usize) -> Vec<usize> {
        self.inst.groups[k].iter().copied().filter(|&m| m != i && self.inst.fs.label(m) == class).collect()
    }

    fn centroid(&self, k: usize) -> Vec<f64> {
        let fs = &self.inst.fs;
        let mut c = vec![0.0; fs.d()];
        for &m in &self.inst.groups[k] {
            for (a, v) in c.iter_mut().zip(fs.row(m)) {
                *a += v;
            }
        }
        let n = self.inst.groups[k].len() as f64;
        c.iter().map(|a| a / n).collect()
    }

    fn rank(&self, i: usize, cands: Vec<usize>, farthest: bool, take: usize) -> Vec<usize> {
        let x = self.inst.fs.row(i);
        let mut s: Vec<(f64, usize)> = cands.into_iter().map(|m| ((self.dist)(x, self.inst.fs.row(m)), m)).collect();
        s.sort_by(|a, b| {
            let o = a.0.partial_cmp(&b.0).unwrap();
            (if farthest { o.reverse() } else { o }).then(a.1.cmp(&b.1))
        });
        s.into_iter().take(take).map(|p| p.1).collect()
    }

    fn positives(&self, i: usize, n: usize) -> Option<Vec<usize>> {
        let y = self.inst.fs.label(i);
        let k = self.inst.groups.len();
        let mut dominated: Vec<usize> = (0..k).filter(|&q| self.dominator(q) == Some(y)).collect();
        dominated.sort_by_key(|&q| (std::cmp::Reverse(self.inst.groups[q].len()), q));
        let mut by_count: Vec<usize> = (0..k).collect();
        by_count.sort_by_key(|&q| (std::cmp::Reverse(self.count(q, y)), q));
        let q = dominated.into_iter().chain(by_count).find(|&q| !self.others_of_class(q, y, i).is_empty())?;
        Some(self.rank(i, self.others_of_class(q, y, i), true, n))
    }

    fn negatives(&self, i: usize, m: usize) -> Option<Vec<usize>> {
        let y = self.inst.fs.label(i);
        let x = self.inst.fs.row(i);
        let k = self.inst.groups.len();
        let nearest = |cands: Vec<usize>| {
            cands
                .into_iter()
                .map(|q| ((self.dist)(x, &self.centroid(q)), q))
                .fold(None, |best: Option<(f64, usize)>, p| match best {
                    Some(b) if b.0 <= p.0 => Some(b),
                    _ => Some(p),
                })
                .map(|p| p.1)
        };
        let dominated_other: Vec<usize> = (0..k).filter(|&q| matches!(self.dominator(q), Some(h) if h != y)).collect();
        let (q, h) = match nearest(dominated_other) {
            Some(q) => (q, self.dominator(q).unwrap()),
            None => {
                let with_other: Vec<usize> = (0..k)
                    .filter(|&q| self.inst.groups[q].iter().any(|&s| self.inst.fs.label(s) != y))
                    .collect();
                let q = nearest(with_other)?;
                let h = (0..self.inst.fs.c())
                    .filter(|&j| j != y)
                    .max_by_key(|&j| (self.count(q, j), std::cmp::Reverse(j)))
                    .unwrap();
                (q, h)
            }
        };
        Some(self.rank(i, self.others_of_class(q, h, i), false, m))
    }
}

fn p3(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut agree, mut total, mut errs) = (0usize, 0usize, 0usize);
    let mut first_mismatch = None;
    for inst_id in 0..1000 {
        let inst = random_instance(&mut rng);
        let graph = graph_of(&inst);
        let (metric, dist): (Distance, DistFn) =
            if rng.random_bool(0.5) { (Distance::Euclidean, euclid) } else { (Distance::Cosine, cosine_dist) };
        let oracle = Oracle { inst: &inst, dist };
        let n = rng.random_range(1..8);
        let m = rng.random_range(1..8);
        for i in 0..inst.fs.n() {
            let pos = sample_positives(&graph, &inst.fs, i, n, metric).ok();
            let neg = sample_negatives(&graph, &inst.fs, i, m, metric).ok();
            total += 2;
            errs += pos.is_none() as usize + neg.is_none() as usize;
            let ok_p = pos == oracle.positives(i, n);
            let ok_n = neg == oracle.negatives(i, m);
            agree += ok_p as usize + ok_n as usize;
            if (!ok_p || !ok_n) && first_mismatch.is_none() {
                first_mismatch = Some(format!("instance {inst_id}, anchor {i}"));
            }
        }
    }
    report.line(
        "P3",
        agree == total,
        format!(
            "sampler oracle: {agree}/{total} positive/negative queries agree over 1000 instances (N<=200, D<=8; {errs} documented errors matched){}",
            first_mismatch.map(|s| format!("; first mismatch at {s}")).unwrap_or_default()
        ),
    );
}

// ---------------------------------------------------------------- P4

fn gaussian_blobs(rng: &mut ChaCha8Rng, n: usize, d: usize, c: usize, spread: f64, scale: f64) -> FeatureSet {
    use rand_distr::{Distribution, StandardNormal};
    let centres: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..d).map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z }).collect::<Vec<f64>>())
        .collect();
    let labels: Vec<u32> = (0..n).map(|i| (i % c) as u32).collect();
    let feats: Vec<f64> = labels
        .iter()
        .flat_map(|&y| {
            let ctr = centres[y as usize].clone();
            (0..d).map(move |j| ctr[j]).collect::<Vec<_>>()
        })
        .map(|v| v + spread * { let z: f64 = StandardNormal.sample(rng); z })
        .collect();
    FeatureSet::from_f64(d, c, &feats, labels).unwrap()
}

fn embed(metric: MatchMetric, x: &[f64]) -> Vec<f64> {
    match metric {
        MatchMetric::Cosine => {
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 { x.iter().map(|v| v / n).collect() } else { x.to_vec() }
        }
        MatchMetric::EuclideanGaussian => x.to_vec(),
    }
}

fn match_score(metric: MatchMetric, h: f64, x: &[f64], p: &[f64]) -> f64 {
    match metric {
        MatchMetric::Cosine => 1.0 - cosine_dist(x, p),
        MatchMetric::EuclideanGaussian => (-euclid(x, p).powi(2) / (2.0 * h * h)).exp(),
    }
}

fn clustering_invariants(fs: &FeatureSet, cfg: &ArtConfig) -> std::result::Result<(), String> {
    let (model, trace) = art_fit_traced(fs, cfg).map_err(|e| e.to_string())?;
    // Partition.
    let mut seen = vec![0usize; fs.n()];
    for cl in &model.clusters {
        if cl.members.is_empty() {
            return Err(format!("cluster {} is empty", cl.id));
        }
        for &m in &cl.members {
            seen[m] += 1;
        }
    }
    if let Some(i) = seen.iter().position(|&s| s != 1) {
        return Err(format!("sample {i} appears {} times", seen[i]));
    }
    // Count consistency.
    for cl in &model.clusters {
        let mut counts = vec![0; fs.c()];
        for &m in &cl.members {
            counts[fs.label(m)] += 1;
        }
        if counts != cl.class_counts || counts.iter().sum::<usize>() != cl.members.len() {
            return Err(format!("cluster {} counts disagree with members", cl.id));
        }
    }
    // Vigilance at insertion, recomputed from the recorded prototype.
    for ins in &trace.insertions {
        let x = embed(cfg.metric, fs.row(ins.sample));
        if ins.created {
            if ins.prototype_before != x {
                return Err(format!("new cluster for sample {} not seeded with it", ins.sample));
            }
        } else {
            let s = match_score(cfg.metric, cfg.bandwidth, &x, &ins.prototype_before);
            if s < cfg.vigilance - 1e-12 {
                return Err(format!("sample {} joined at score {s} < {}", ins.sample, cfg.vigilance));
            }
        }
    }
    // Seed determinism.
    if art_fit(fs, cfg).map_err(|e| e.to_string())? != model {
        return Err("refit with the same seed differs".into());
    }
    Ok(())
}

fn p4(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    for ds in 0..100 {
        let n = rng.random_range(10..150);
        let d = rng.random_range(2..9);
        let c = rng.random_range(2..5);
        let spread = rng.random_range(0.1..1.5);
        let fs = gaussian_blobs(&mut rng, n, d, c, spread, 2.0);
        let metric = if ds % 2 == 0 { MatchMetric::Cosine } else { MatchMetric::EuclideanGaussian };
        let cfg = ArtConfig {
            vigilance: rng.random_range(0.3..0.97),
            learning_rate: rng.random_range(0.05..1.0),
            max_epochs: rng.random_range(0..6),
            seed: rng.random(),
            metric,
            bandwidth: rng.random_range(0.5..3.0),
        };
        if let Err(e) = clustering_invariants(&fs, &cfg) {
            failures.push(format!("dataset {ds}: {e}"));
        }
    }
    // Four well-separated Gaussians.
    let mut purities = Vec::new();
    for seed in 0..5u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let d = 8;
        let labels: Vec<u32> = (0..400).map(|i| (i % 4) as u32).collect();
        let feats: Vec<f64> = labels
            .iter()
            .flat_map(|&y| {
                let row: Vec<f64> = (0..d)
                    .map(|j| {
                        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
                        (if j == y as usize { 5.0 } else { 0.0 }) + 0.3 * z
                    })
                    .collect();
                row
            })
            .collect();
        let fs = FeatureSet::from_f64(d, 4, &feats, labels).unwrap();
        let model = art_fit(&fs, &ArtConfig { vigilance: 0.85, seed, ..ArtConfig::default() }).unwrap();
        let majority: usize = model.clusters.iter().map(|c| *c.class_counts.iter().max().unwrap()).sum();
        purities.push(majority as f64 / fs.n() as f64);
    }
    let min_purity = purities.iter().copied().fold(1.0, f64::min);
    report.line(
        "P4",
        failures.is_empty() && min_purity >= 0.95,
        format!(
            "clustering invariants: partition/vigilance/counts/determinism on 100 random datasets ({} failures{}); 4-Gaussian purity at vigilance 0.85 min {min_purity:.3} over 5 seeds (>= 0.95)",
            failures.len(),
            failures.first().map(|f| format!(": {f}")).unwrap_or_default()
        ),
    );
}

// ---------------------------------------------------------------- P5

/// Literal relation definitions over (label, cluster, cluster-dominated).
fn relation_oracle(la: u32, lb: u32, ka: usize, kb: usize, dom_a: bool, dom_b: bool) -> RelationKind {
    if la == lb && dom_a && dom_b && ka != kb {
        RelationKind::ID
    } else if la != lb && dom_a && dom_b && ka == kb {
        RelationKind::IS
    } else if la != lb && !dom_a && !dom_b && ka == kb {
        RelationKind::MC
    } else {
        RelationKind::None
    }
}

fn hand_built_graphs() -> Vec<(Vec<u32>, Vec<Vec<usize>>, f64)> {
    vec![
        // Class 0 split over two dominated clusters, a cluster dominated by
        // class 0 holding one class-1 sample, and a mixed cluster.
        (vec![0, 0, 0, 0, 0, 1, 0, 0, 1, 1, 2, 2], vec![vec![0, 1, 2], vec![3, 4, 5, 6, 7], vec![8, 9, 10, 11]], 0.55),
        // Two mixed clusters; singleton clusters.
        (vec![0, 1, 0, 1, 2, 2, 0], vec![vec![0, 1], vec![2, 3], vec![4], vec![5, 6]], 0.5),
        // Three classes in one mixed cluster plus pure clusters of each.
        (vec![0, 1, 2, 0, 0, 1, 1, 2, 2], vec![vec![0, 1, 2], vec![3, 4], vec![5, 6], vec![7, 8]], 0.55),
        // Everything in one dominated cluster.
        (vec![0, 0, 0, 1], vec![vec![0, 1, 2, 3]], 0.6),
    ]
}

fn p5(report: &mut Report) {
    let mut seen = std::collections::HashSet::new();
    let (mut pairs, mut agree) = (0usize, 0usize);
    for (labels, groups, rho2) in hand_built_graphs() {
        let c = *labels.iter().max().unwrap() as usize + 1;
        let clusters: Vec<Cluster> = groups
            .iter()
            .enumerate()
            .map(|(id, m)| {
                let mut counts = vec![0; c];
                m.iter().for_each(|&s| counts[labels[s] as usize] += 1);
                Cluster { id, prototype: vec![0.0], members: m.clone(), class_counts: counts }
            })
            .collect();
        let model = ClusterModel { vigilance: 0.5, learning_rate: 0.1, metric: MatchMetric::Cosine, bandwidth: 1.0, clusters };
        let graph = build_relation_graph(&model, &labels, rho2).unwrap();
        let cluster_of = |s: usize| groups.iter().position(|g| g.contains(&s)).unwrap();
        let dominated = |k: usize| {
            let counts = &model.clusters[k].class_counts;
            *counts.iter().max().unwrap() as f64 / groups[k].len() as f64 > rho2
        };
        for a in 0..labels.len() {
            for b in 0..labels.len() {
                if a == b {
                    continue;
                }
                let (ka, kb) = (cluster_of(a), cluster_of(b));
                let want = relation_oracle(labels[a], labels[b], ka, kb, dominated(ka), dominated(kb));
                let got = classify_pair(&graph, &labels, a, b);
                pairs += 1;
                agree += (want == got) as usize;
                seen.insert(got);
            }
        }
    }
    report.line(
        "P5",
        agree == pairs && seen.len() == 4,
        format!("relation taxonomy: {agree}/{pairs} ordered pairs agree; outcomes exercised {}/4 (ID, IS, MC, None)", seen.len()),
    );
}

// ---------------------------------------------------------------- P6–P8

const SEEDS: u64 = 5;

/// Benchmark: the pinned dataset shape plus the documented free choices.
fn bench_config(seed: u64, components: Components, vigilance: f64) -> RunConfig {
    let mut cfg = RunConfig::from_value(
        serde_json::json!({
            "seed": seed,
            "classes": 10, "modes_per_class": 2, "overlap": 0.3, "samples_per_mode": 100, "eval_fraction": 0.2,
            "d": 20, "mode_spread": 0.7,
            "lr": 0.1, "use_output_softmax": false, "gamma_inter": 0.01, "epochs": 30,
        }),
        &[],
    )
    .expect("benchmark config");
    cfg.components = components;
    cfg.vigilance = vigilance;
    cfg
}

#[derive(Clone, Copy)]
struct Mean {
    top1: f64,
    intra_ratio: f64,
    inter_ratio: f64,
    cpu: Duration,
}

fn run_seeds(components: Components, vigilance: f64) -> Mean {
    let mut outs: Vec<RunOutcome> = Vec::new();
    let start = Instant::now();
    for seed in 0..SEEDS {
        let cfg = bench_config(seed, components, vigilance);
        let fs = generate_synthetic(&cfg.synth_spec()).expect("synthetic data");
        outs.push(run_in_memory(&cfg, &fs).expect("benchmark run"));
    }
    let k = SEEDS as f64;
    Mean {
        top1: outs.iter().map(|o| o.top1).sum::<f64>() / k,
        intra_ratio: outs.iter().map(|o| o.intra_repr / o.intra_raw).sum::<f64>() / k,
        inter_ratio: outs.iter().map(|o| o.inter_repr / o.inter_raw).sum::<f64>() / k,
        cpu: start.elapsed(),
    }
}

fn p6_p8(report: &mut Report) {
    let full = run_seeds(Components::FULL, 0.85);
    let mut ladder = Vec::new();
    for (name, comps) in Components::ladder() {
        let m = if comps == Components::FULL { full } else { run_seeds(comps, 0.85) };
        ladder.push((name, m.top1));
    }
    let base = ladder[0].1;

    let gain = (full.top1 - base) * 100.0;
    report.line(
        "P6",
        gain >= 2.0 && full.intra_ratio <= 0.8 && full.inter_ratio > 1.0 && full.cpu < Duration::from_secs(300),
        format!(
            "end-to-end gain: top-1 {:.2}% vs linear baseline {:.2}% (+{gain:.2} pts, need >= +2.0); F_a intra/raw {:.3} (<= 0.8); inter/raw {:.3} (> 1); full method 5 seeds in {:.1?} (< 5 min)",
            full.top1 * 100.0,
            base * 100.0,
            full.intra_ratio,
            full.inter_ratio,
            full.cpu
        ),
    );

    let worst_drop = ladder.windows(2).map(|w| (w[0].1 - w[1].1) * 100.0).fold(f64::NEG_INFINITY, f64::max);
    let steps: Vec<String> = ladder.iter().map(|(n, t)| format!("{n} {:.2}", t * 100.0)).collect();
    report.line(
        "P7",
        worst_drop <= 0.5,
        format!("ablation ordering: {}; largest step decrease {worst_drop:.2} pts (<= 0.5)", steps.join(" -> ")),
    );

    let mut by_vigilance = Vec::new();
    for v in [0.5, 0.7, 0.85, 0.95] {
        let top1 = if v == 0.85 { full.top1 } else { run_seeds(Components::FULL, v).top1 };
        by_vigilance.push((v, top1));
    }
    let hi = by_vigilance.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = by_vigilance.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let spread = (hi - lo) * 100.0;
    let vals: Vec<String> = by_vigilance.iter().map(|(v, t)| format!("{v}: {:.2}", t * 100.0)).collect();
    report.line("P8", spread <= 1.0, format!("vigilance robustness: {}; spread {spread:.2} pts (<= 1.0)", vals.join(", ")));
}
