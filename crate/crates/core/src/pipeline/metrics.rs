use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cags::{CurriculumState, Phase};
use crate::error::{CsrmsError, Result};
use crate::rgrl::{rank_classes, LossBreakdown};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSnapshot {
    pub alpha_i: f64,
    pub alpha_f: f64,
    pub lambda_e: f64,
    pub lambda_m: f64,
    pub lambda_h: f64,
    pub phase: Phase,
    /// Easy / medium / hard anchor counts.
    pub counts: [usize; 3],
}

impl CurriculumSnapshot {
    pub fn of(state: &CurriculumState, counts: [usize; 3]) -> Self {
        Self {
            alpha_i: state.alpha_i,
            alpha_f: state.alpha_f,
            lambda_e: state.lambda_e,
            lambda_m: state.lambda_m,
            lambda_h: state.lambda_h,
            phase: state.phase,
            counts,
        }
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub lr: f64,
    pub losses: LossBreakdown,
    pub curriculum: Option<CurriculumSnapshot>,
    pub top1: f64,
    pub top5: f64,
    pub intra_class_distance: f64,
    pub inter_class_distance: f64,
}

/// Append-only JSON-lines writer; every record is flushed on write.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    /// Starts a fresh stream, truncating any previous run's file.
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        File::create(path)?;
        Ok(Self { file: OpenOptions::new().append(true).open(path)? })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        let mut line = serde_json::to_string(rec)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    if !path.exists() {
        return Err(CsrmsError::MissingArtifact(path.to_path_buf()));
    }
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

/// Top-1 and top-5 accuracy of per-sample class scores; k is clamped to
/// the class count.
pub fn evaluate(scores: &[Vec<f64>], labels: &[u32]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(CsrmsError::dim("evaluate", format!("{} score rows for {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut top1, mut top5) = (0usize, 0usize);
    for (s, &y) in scores.iter().zip(labels) {
        let rank = rank_classes(s);
        let pos = rank.iter().position(|&c| c == y as usize);
        top1 += usize::from(pos == Some(0));
        top5 += usize::from(pos.is_some_and(|p| p < 5));
    }
    let n = scores.len() as f64;
    Ok((top1 as f64 / n, top5 as f64 / n))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distance over all unordered same-class pairs.
pub fn intra_class_distance(rows: &[Vec<f64>], labels: &[u32]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if labels[i] == labels[j] {
                sum += dist(&rows[i], &rows[j]);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean Euclidean distance between the centroids of every pair of classes
/// present.
pub fn inter_class_distance(rows: &[Vec<f64>], labels: &[u32]) -> f64 {
    let Some(d) = rows.first().map(Vec::len) else { return 0.0 };
    let c = labels.iter().map(|&y| y as usize + 1).max().unwrap_or(0);
    let mut sums = vec![vec![0.0; d]; c];
    let mut counts = vec![0usize; c];
    for (r, &y) in rows.iter().zip(labels) {
        counts[y as usize] += 1;
        for (s, v) in sums[y as usize].iter_mut().zip(r) {
            *s += v;
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    let (mut sum, mut pairs) = (0.0, 0usize);
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            sum += dist(&centroids[i], &centroids[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}
