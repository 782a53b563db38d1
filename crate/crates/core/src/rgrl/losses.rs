//! Cross-entropy, negative-sample dispersion and inter-class dispersion.
//!
//! Both dispersion losses share one term of a distance `s`:
//!
//! * literal: `−log(μθ / (s + θ))`, increasing in `s`;
//! * repulsive: `−log(s / (s + θ)) − log μ`, decreasing in `s`.

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{CsrmsError, Result};
use crate::numerics::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionSign {
    #[serde(alias = "paper-literal")]
    Literal,
    #[default]
    Repulsive,
}

impl std::str::FromStr for DispersionSign {
    type Err = CsrmsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" | "paper-literal" => Ok(DispersionSign::Literal),
            "repulsive" => Ok(DispersionSign::Repulsive),
            _ => Err(CsrmsError::config("dispersion_sign", format!("unknown sign convention `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub theta: f64,
    pub mu: f64,
    pub gamma_nega: f64,
    pub gamma_inter: f64,
    pub dispersion_sign: DispersionSign,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { theta: 1.0, mu: 1.0, gamma_nega: 1.0, gamma_inter: 1.0, dispersion_sign: DispersionSign::Repulsive }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta", self.theta), ("mu", self.mu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CsrmsError::config(name, "must be positive"));
            }
        }
        for (name, v) in [("gamma_nega", self.gamma_nega), ("gamma_inter", self.gamma_inter)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CsrmsError::config(name, "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Dispersion term of a `1 × 1` distance node.
pub fn dispersion(g: &mut Graph, s: Var, cfg: &LossConfig) -> Result<Var> {
    let shifted = g.offset(s, cfg.theta);
    let log_shifted = g.log(shifted)?;
    match cfg.dispersion_sign {
        DispersionSign::Literal => Ok(g.offset(log_shifted, -(cfg.mu * cfg.theta).ln())),
        DispersionSign::Repulsive => {
            let log_s = g.log(s)?;
            let d = g.sub(log_shifted, log_s)?;
            Ok(g.offset(d, -cfg.mu.ln()))
        }
    }
}

/// `−log softmax(logits)[label]` for every row, as an `r × 1` node.
pub fn cross_entropy_rows(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let lsm = g.log_softmax_rows(logits)?;
    let picked = g.pick(lsm, labels)?;
    Ok(g.scale(picked, -1.0))
}

/// Negative-sample loss of one anchor row against `m` negative rows.
pub fn nega_loss_node(g: &mut Graph, anchor: Var, negatives: Var, cfg: &LossConfig) -> Result<Var> {
    let dists = g.l2_distance(negatives, anchor)?;
    let s = g.sum(dists);
    dispersion(g, s, cfg)
}

/// Inter-class loss over per-class row groups: the class aggregates are row
/// means, and every ordered pair of distinct classes contributes one
/// dispersion term. Fewer than two groups gives `None`.
pub fn interclass_loss_node(g: &mut Graph, groups: &[Var], cfg: &LossConfig) -> Result<Option<Var>> {
    if groups.len() < 2 {
        return Ok(None);
    }
    let means = groups.iter().map(|&v| g.mean_rows(v)).collect::<Result<Vec<_>>>()?;
    let mut total: Option<Var> = None;
    for i in 0..means.len() {
        for j in 0..means.len() {
            if i == j {
                continue;
            }
            let d = g.l2_distance(means[i], means[j])?;
            let term = dispersion(g, d, cfg)?;
            total = Some(match total {
                Some(t) => g.add(t, term)?,
                None => term,
            });
        }
    }
    Ok(total)
}

pub fn ce_loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(CsrmsError::dim("ce_loss", format!("label {label} with {} logits", logits.len())));
    }
    let mut g = Graph::new();
    let l = g.input(Tensor::row(logits));
    let out = cross_entropy_rows(&mut g, l, &[label])?;
    Ok(g.value(out).item())
}

/// Value of the negative-sample loss; the repulsive form is `+∞` when the
/// distance sum is zero.
pub fn nega_loss(anchor: &[f64], negatives: &Tensor, cfg: &LossConfig) -> Result<f64> {
    if negatives.rows() == 0 {
        return Err(CsrmsError::Contract("nega_loss needs at least one negative".into()));
    }
    let mut g = Graph::new();
    let a = g.input(Tensor::row(anchor));
    let n = g.input(negatives.clone());
    let dists = g.l2_distance(n, a)?;
    let s = g.sum(dists);
    if g.value(s).item() == 0.0 && cfg.dispersion_sign == DispersionSign::Repulsive {
        return Ok(f64::INFINITY);
    }
    let out = dispersion(&mut g, s, cfg)?;
    Ok(g.value(out).item())
}

/// Value of the inter-class loss; zero (with a log line) for one class.
pub fn interclass_loss(groups: &[Tensor], cfg: &LossConfig) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = groups.iter().map(|t| g.input(t.clone())).collect();
    match interclass_loss_node(&mut g, &vars, cfg) {
        Ok(Some(v)) => Ok(g.value(v).item()),
        Ok(None) => {
            info!("inter-class loss skipped: fewer than two classes in batch");
            Ok(0.0)
        }
        Err(CsrmsError::Domain { .. }) if cfg.dispersion_sign == DispersionSign::Repulsive => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}
