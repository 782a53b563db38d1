use serde::{Deserialize, Serialize};

use crate::crm::RelationGraph;
use crate::data_io::FeatureSet;
use crate::error::{CsrmsError, Result};

/// Mixing coefficients for the two alignments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignCoefficients {
    pub alpha_u: f64,
    pub beta_u: f64,
    pub alpha_a: f64,
    pub beta_a: f64,
}

impl Default for AlignCoefficients {
    fn default() -> Self {
        Self { alpha_u: 0.7, beta_u: 0.3, alpha_a: 0.7, beta_a: 0.3 }
    }
}

/// Per-class cluster prototype (mean of the largest dominated cluster) and
/// class prototype (mean over every dominated cluster).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub cluster_prototypes: Vec<Vec<f64>>,
    pub class_prototypes: Vec<Vec<f64>>,
    pub coefficients: AlignCoefficients,
}

fn mean_of<'a>(fs: &FeatureSet, members: impl Iterator<Item = &'a usize>) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; fs.d()];
    let mut k = 0usize;
    for &m in members {
        for (a, v) in acc.iter_mut().zip(fs.row(m)) {
            *a += v;
        }
        k += 1;
    }
    (k > 0).then(|| acc.into_iter().map(|a| a / k as f64).collect())
}

/// Classes without a dominated cluster fall back to the mean of all their
/// samples for both prototypes.
pub fn compute_prototypes(graph: &RelationGraph, fs: &FeatureSet, coefficients: AlignCoefficients) -> Result<PrototypeBank> {
    if graph.n_samples() != fs.n() {
        return Err(CsrmsError::dim("compute_prototypes", "graph and feature set sizes differ"));
    }
    let mut cluster_prototypes = Vec::with_capacity(fs.c());
    let mut class_prototypes = Vec::with_capacity(fs.c());
    for class in 0..fs.c() {
        let dominated = graph.dominant_by_class.get(class).map(Vec::as_slice).unwrap_or(&[]);
        let fallback = || {
            let own: Vec<usize> = (0..fs.n()).filter(|&i| fs.label(i) == class).collect();
            mean_of(fs, own.iter()).unwrap_or_else(|| vec![0.0; fs.d()])
        };
        match dominated.first() {
            Some(&largest) => {
                cluster_prototypes.push(mean_of(fs, graph.cluster(largest).members.iter()).expect("non-empty"));
                let all = dominated.iter().flat_map(|&k| graph.cluster(k).members.iter());
                class_prototypes.push(mean_of(fs, all).expect("non-empty"));
            }
            None => {
                let f = fallback();
                cluster_prototypes.push(f.clone());
                class_prototypes.push(f);
            }
        }
    }
    Ok(PrototypeBank { cluster_prototypes, class_prototypes, coefficients })
}

fn mix(x: &[f64], proto: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>> {
    if x.len() != proto.len() {
        return Err(CsrmsError::dim("align", format!("{} vs {}", x.len(), proto.len())));
    }
    Ok(x.iter().zip(proto).map(|(a, b)| alpha * a + beta * b).collect())
}

/// `α_u·F_g + β_u·w_cu`
pub fn cluster_align(f_g: &[f64], w_cu: &[f64], alpha_u: f64, beta_u: f64) -> Result<Vec<f64>> {
    mix(f_g, w_cu, alpha_u, beta_u)
}

/// `α_a·F_u + β_a·p_ca`
pub fn class_align(f_u: &[f64], p_ca: &[f64], alpha_a: f64, beta_a: f64) -> Result<Vec<f64>> {
    mix(f_u, p_ca, alpha_a, beta_a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn align_identity_cases() {
        let x = [1.0, -2.0, 3.0];
        let p = [0.5, 0.5, -1.0];
        assert_eq!(cluster_align(&x, &p, 1.0, 0.0).unwrap(), x.to_vec());
        assert_eq!(cluster_align(&x, &p, 0.0, 1.0).unwrap(), p.to_vec());
        assert_eq!(class_align(&x, &p, 1.0, 0.0).unwrap(), x.to_vec());
        assert_eq!(class_align(&x, &p, 0.0, 1.0).unwrap(), p.to_vec());
        assert!(cluster_align(&x, &p[..2], 1.0, 0.0).is_err());
    }
}
