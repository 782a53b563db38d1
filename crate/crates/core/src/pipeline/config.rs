use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cags::{validate_rho1, CurriculumState, Distance, SamplerConfig};
use crate::crm::{ArtConfig, MatchMetric};
use crate::data_io::SynthSpec;
use crate::error::{CsrmsError, Result};
use crate::rgrl::{AlignCoefficients, Components, DispersionSign, InferOptions, InferenceProtocol, LossConfig, TrainConfig};

/// Flat run configuration. Every field can be overridden from the command
/// line with `--<field> <value>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // artifacts; relative paths resolve against the config file's directory
    pub features: PathBuf,
    /// Separate evaluation set; when absent the features are split.
    pub eval_features: Option<PathBuf>,
    pub clusters: PathBuf,
    pub graph: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub report: PathBuf,
    pub repr: PathBuf,

    pub seed: Option<u64>,
    pub eval_fraction: f64,

    // synthetic data
    pub classes: usize,
    pub modes_per_class: usize,
    pub d: usize,
    pub samples_per_mode: usize,
    pub mode_spread: f64,
    pub overlap: f64,

    // clustering and graph
    pub vigilance: f64,
    pub art_lr: f64,
    pub art_epochs: usize,
    pub match_metric: MatchMetric,
    pub bandwidth: f64,
    pub rho1: f64,
    pub rho2: f64,

    // sampling and curriculum
    pub n_pos: usize,
    pub m_neg: usize,
    pub metric: Distance,
    pub batch_size: usize,
    pub alpha_i: f64,
    pub alpha_f: f64,
    pub decay_step: f64,
    pub alpha_floor: f64,

    // model and losses
    pub knn_k: usize,
    pub hidden: usize,
    pub use_output_softmax: bool,
    pub theta: f64,
    pub mu: f64,
    pub gamma_nega: f64,
    pub gamma_inter: f64,
    pub dispersion_sign: DispersionSign,
    pub alpha_u: f64,
    pub beta_u: f64,
    pub alpha_a: f64,
    pub beta_a: f64,
    pub components: Components,
    pub inference: InferenceProtocol,

    // optimisation
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let art = ArtConfig::default();
        let loss = LossConfig::default();
        let align = AlignCoefficients::default();
        let sampler = SamplerConfig::default();
        let cur = CurriculumState::default();
        Self {
            features: "features.fsb".into(),
            eval_features: None,
            clusters: "clusters.json".into(),
            graph: "graph.json".into(),
            checkpoint: "checkpoint.json".into(),
            metrics: "metrics.jsonl".into(),
            report: "eval.json".into(),
            repr: "repr.csv".into(),
            seed: None,
            eval_fraction: 0.2,
            classes: 10,
            modes_per_class: 2,
            d: 32,
            samples_per_mode: 100,
            mode_spread: 0.5,
            overlap: 0.3,
            vigilance: art.vigilance,
            art_lr: art.learning_rate,
            art_epochs: art.max_epochs,
            match_metric: art.metric,
            bandwidth: art.bandwidth,
            rho1: 0.8,
            rho2: 0.5,
            n_pos: sampler.n_pos,
            m_neg: sampler.m_neg,
            metric: sampler.metric,
            batch_size: crate::cags::DEFAULT_BATCH_SIZE,
            alpha_i: cur.alpha_i,
            alpha_f: cur.alpha_f,
            decay_step: cur.decay_step,
            alpha_floor: cur.alpha_floor,
            knn_k: 5,
            hidden: 64,
            use_output_softmax: true,
            theta: loss.theta,
            mu: loss.mu,
            gamma_nega: loss.gamma_nega,
            gamma_inter: loss.gamma_inter,
            dispersion_sign: loss.dispersion_sign,
            alpha_u: align.alpha_u,
            beta_u: align.beta_u,
            alpha_a: align.alpha_a,
            beta_a: align.beta_a,
            components: Components::FULL,
            inference: InferenceProtocol::default(),
            epochs: 30,
            lr: 0.01,
            lr_decay: 0.1,
            lr_decay_every: 20,
        }
    }
}

/// Parses a command-line value: JSON when it parses, a bare string
/// otherwise (so `--metric cosine` and `--features out/x.fsb` both work).
fn parse_override(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl RunConfig {
    /// Builds a config from a flat JSON object plus `(key, value)` overrides.
    pub fn from_value(base: Value, overrides: &[(String, String)]) -> Result<Self> {
        let Value::Object(mut map) = base else {
            return Err(CsrmsError::config("<root>", "config must be a JSON object"));
        };
        for (k, v) in overrides {
            map.insert(k.clone(), parse_override(v));
        }
        let known = match serde_json::to_value(RunConfig::default())? {
            Value::Object(m) => m,
            _ => unreachable!("config serialises to an object"),
        };
        if let Some(k) = map.keys().find(|k| !known.contains_key(*k)) {
            return Err(CsrmsError::config(k, "unknown field"));
        }
        let cfg: RunConfig = match serde_json::from_value(Value::Object(map.clone())) {
            Ok(cfg) => cfg,
            Err(e) => return Err(blame_field(&known, &map, e)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative artifact paths are anchored at the
    /// file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        if !path.exists() {
            return Err(CsrmsError::MissingArtifact(path.to_path_buf()));
        }
        let base: Value = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| CsrmsError::config("<root>", format!("not valid JSON: {e}")))?;
        let mut cfg = Self::from_value(base, overrides)?;
        if let Some(dir) = path.parent() {
            cfg.anchor_paths(dir);
        }
        Ok(cfg)
    }

    fn anchor_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for p in [
            &mut self.features,
            &mut self.clusters,
            &mut self.graph,
            &mut self.checkpoint,
            &mut self.metrics,
            &mut self.report,
            &mut self.repr,
        ] {
            fix(p);
        }
        if let Some(p) = self.eval_features.as_mut() {
            fix(p);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config carries a seed")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(CsrmsError::config("seed", "is required"));
        }
        let unit = |name: &str, v: f64, lo_open: bool| -> Result<()> {
            let ok = if lo_open { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                Err(CsrmsError::config(name, format!("{v} out of range")))
            }
        };
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(CsrmsError::config("eval_fraction", "must lie in (0, 1)"));
        }
        unit("vigilance", self.vigilance, false)?;
        unit("art_lr", self.art_lr, true)?;
        unit("rho2", self.rho2, true)?;
        validate_rho1(self.rho1)?;
        for (name, v) in [("alpha_i", self.alpha_i), ("alpha_f", self.alpha_f), ("alpha_floor", self.alpha_floor)] {
            unit(name, v, false)?;
        }
        if !(self.decay_step > 0.0 && self.decay_step <= 1.0) {
            return Err(CsrmsError::config("decay_step", "must lie in (0, 1]"));
        }
        if self.bandwidth <= 0.0 || !self.bandwidth.is_finite() {
            return Err(CsrmsError::config("bandwidth", "must be positive"));
        }
        for (name, v) in [("batch_size", self.batch_size), ("knn_k", self.knn_k), ("hidden", self.hidden), ("lr_decay_every", self.lr_decay_every)] {
            if v == 0 {
                return Err(CsrmsError::config(name, "must be at least 1"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CsrmsError::config("lr", "must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(CsrmsError::config("lr_decay", "must lie in (0, 1]"));
        }
        for (name, v) in [("alpha_u", self.alpha_u), ("beta_u", self.beta_u), ("alpha_a", self.alpha_a), ("beta_a", self.beta_a)] {
            if !v.is_finite() {
                return Err(CsrmsError::config(name, "must be finite"));
            }
        }
        self.sampler().validate()?;
        self.loss().validate()?;
        self.synth_spec().validate()
    }

    pub fn art(&self) -> ArtConfig {
        ArtConfig {
            vigilance: self.vigilance,
            learning_rate: self.art_lr,
            max_epochs: self.art_epochs,
            seed: self.seed(),
            metric: self.match_metric,
            bandwidth: self.bandwidth,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { n_pos: self.n_pos, m_neg: self.m_neg, metric: self.metric }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            theta: self.theta,
            mu: self.mu,
            gamma_nega: self.gamma_nega,
            gamma_inter: self.gamma_inter,
            dispersion_sign: self.dispersion_sign,
        }
    }

    pub fn align(&self) -> AlignCoefficients {
        AlignCoefficients { alpha_u: self.alpha_u, beta_u: self.beta_u, alpha_a: self.alpha_a, beta_a: self.beta_a }
    }

    pub fn infer_options(&self) -> InferOptions {
        InferOptions { protocol: self.inference, components: self.components, n_pos: self.n_pos, metric: self.metric }
    }

    pub fn curriculum(&self) -> CurriculumState {
        CurriculumState::new(self.alpha_i, self.alpha_f, [1.0; 3], self.decay_step, self.alpha_floor)
    }

    /// Learning rate for a zero-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }

    pub fn train(&self, epoch: usize) -> TrainConfig {
        TrainConfig { lr: self.lr_at(epoch), loss: self.loss(), components: self.components }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            classes: self.classes,
            modes_per_class: self.modes_per_class,
            d: self.d,
            samples_per_mode: self.samples_per_mode,
            mode_spread: self.mode_spread,
            overlap: self.overlap,
            seed: self.seed.unwrap_or(0),
        }
    }
}

/// Names the first field whose value alone fails to deserialise.
fn blame_field(known: &Map<String, Value>, map: &Map<String, Value>, err: serde_json::Error) -> CsrmsError {
    for (k, v) in map {
        let mut probe = known.clone();
        probe.insert(k.clone(), v.clone());
        if let Err(e) = serde_json::from_value::<RunConfig>(Value::Object(probe)) {
            return CsrmsError::config(k, e.to_string());
        }
    }
    CsrmsError::config("<root>", err.to_string())
}
