//! Feature-set storage (FSB1) and synthetic data generation.
//!
//! FSB1 layout, all little-endian:
//!
//! | bytes          | content                                  |
//! |----------------|------------------------------------------|
//! | 0..4           | ASCII `FSB1`                             |
//! | 4..16          | `u32` n, `u32` d, `u32` c                |
//! | 16..16+4nd     | n·d IEEE-754 `f32`, row-major            |
//! | ..+4n          | n `u32` labels                           |
//!
//! An optional sidecar `<stem>.manifest.json` records provenance.
//!
//! The synthetic generator uses `ChaCha8Rng` seeded with `seed_from_u64`
//! and `rand_distr::StandardNormal`, so datasets are reproducible across
//! platforms.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CsrmsError, Result};
use crate::numerics::Tensor;

pub const FSB1_MAGIC: &[u8; 4] = b"FSB1";
const HEADER_LEN: usize = 16;

/// `n × d` embeddings with integer labels in `[0, c)`.
///
/// Values are held as `f64` but are always exactly representable as `f32`,
/// which keeps save/load bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    n: usize,
    d: usize,
    c: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
}

impl FeatureSet {
    /// Validates every invariant: `n > 0`, labels below `c`, finite values,
    /// and at least one sample per class.
    pub fn new(d: usize, c: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        let fs = Self::unchecked_coverage(d, c, features.into_iter().map(f64::from).collect(), labels)?;
        let counts = fs.class_counts();
        if let Some(missing) = counts.iter().position(|&k| k == 0) {
            return Err(CsrmsError::Contract(format!("class {missing} has no samples")));
        }
        Ok(fs)
    }

    /// Like [`FeatureSet::new`] from `f64` input, rounding through `f32`.
    pub fn from_f64(d: usize, c: usize, features: &[f64], labels: Vec<u32>) -> Result<Self> {
        Self::new(d, c, features.iter().map(|&v| v as f32).collect(), labels)
    }

    fn unchecked_coverage(d: usize, c: usize, features: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(CsrmsError::Contract("feature set needs at least one sample".into()));
        }
        if d == 0 || features.len() != n * d {
            return Err(CsrmsError::dim("FeatureSet", format!("{} values for n={n}, d={d}", features.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
            return Err(CsrmsError::Contract(format!("label {bad} not below class count {c}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(CsrmsError::NonFinite("feature values".into()));
        }
        Ok(Self { n, d, c, features, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.c];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Rows `idx` as a matrix.
    pub fn rows_tensor(&self, idx: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor::matrix(idx.len(), self.d, data).expect("shape")
    }

    /// Restriction to `idx`, keeping the class count. Classes may end up
    /// empty in the subset.
    pub fn subset(&self, idx: &[usize]) -> Result<FeatureSet> {
        let mut features = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Self::unchecked_coverage(self.d, self.c, features, labels)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (self.n * self.d + self.n));
        out.extend_from_slice(FSB1_MAGIC);
        for v in [self.n, self.d, self.c] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for &v in &self.features {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, detail: &str| CsrmsError::Format { offset, detail: detail.to_string() };
        if bytes.len() < 4 {
            return Err(fmt(bytes.len(), "truncated magic"));
        }
        if &bytes[..4] != FSB1_MAGIC {
            return Err(fmt(0, "bad magic, expected FSB1"));
        }
        let read_u32 = |off: usize| -> Result<u32> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| fmt(bytes.len(), "truncated header"))
        };
        let n = read_u32(4)? as usize;
        let d = read_u32(8)? as usize;
        let c = read_u32(12)? as usize;
        if n == 0 {
            return Err(fmt(4, "n must be positive"));
        }
        if d == 0 {
            return Err(fmt(8, "d must be positive"));
        }
        let feat_end = HEADER_LEN + 4 * n * d;
        let label_end = feat_end + 4 * n;
        if bytes.len() < label_end {
            return Err(fmt(bytes.len(), &format!("truncated payload, expected {label_end} bytes")));
        }
        if bytes.len() > label_end {
            return Err(fmt(label_end, "trailing bytes after labels"));
        }
        let mut features = Vec::with_capacity(n * d);
        for k in 0..n * d {
            let off = HEADER_LEN + 4 * k;
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(fmt(off, "non-finite feature value"));
            }
            features.push(v);
        }
        let mut labels = Vec::with_capacity(n);
        for k in 0..n {
            let off = feat_end + 4 * k;
            let l = u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
            if l as usize >= c {
                return Err(fmt(off, &format!("label {l} not below class count {c}")));
            }
            labels.push(l);
        }
        FeatureSet::new(d, c, features, labels).map_err(|e| fmt(feat_end, &e.to_string()))
    }
}

pub fn load_featureset(path: &Path) -> Result<FeatureSet> {
    if !path.exists() {
        return Err(CsrmsError::MissingArtifact(path.to_path_buf()));
    }
    FeatureSet::from_bytes(&fs::read(path)?)
}

pub fn save_featureset(fs_: &FeatureSet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&fs_.to_bytes())?;
    f.flush()?;
    Ok(())
}

/// Provenance sidecar written next to an FSB1 file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub backbone: String,
    pub split: String,
    pub created: String,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn save_manifest(m: &Manifest, fsb_path: &Path) -> Result<()> {
    fs::write(manifest_path(fsb_path), serde_json::to_string_pretty(m)?)?;
    Ok(())
}

pub fn load_manifest(fsb_path: &Path) -> Result<Option<Manifest>> {
    let p = manifest_path(fsb_path);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(p)?)?))
}

/// Parameters for the mixture-of-modes generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub modes_per_class: usize,
    pub d: usize,
    pub samples_per_mode: usize,
    /// RMS radius of each mode (per-coordinate std is `mode_spread / √d`).
    pub mode_spread: f64,
    /// Fraction of the way the last mode of class `c` is pulled towards the
    /// first mode of class `c + 1`.
    pub overlap: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(CsrmsError::config("classes", "must be at least 1"));
        }
        if self.modes_per_class == 0 {
            return Err(CsrmsError::config("modes_per_class", "must be at least 1"));
        }
        if self.d == 0 {
            return Err(CsrmsError::config("d", "must be at least 1"));
        }
        if self.samples_per_mode == 0 {
            return Err(CsrmsError::config("samples_per_mode", "must be at least 1"));
        }
        if !(self.mode_spread >= 0.0 && self.mode_spread.is_finite()) {
            return Err(CsrmsError::config("mode_spread", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(CsrmsError::config("overlap", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Unit-norm mode centres: standard basis vectors (a scaled simplex) when
/// `d` has room for every mode, seeded random directions otherwise.
fn mode_centers(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = spec.classes * spec.modes_per_class;
    let mut centers: Vec<Vec<f64>> = (0..k)
        .map(|m| {
            if k <= spec.d {
                let mut e = vec![0.0; spec.d];
                e[m] = 1.0;
                e
            } else {
                let v: Vec<f64> = (0..spec.d).map(|_| StandardNormal.sample(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect();
    if spec.classes >= 2 && spec.overlap > 0.0 {
        let orig = centers.clone();
        for c in 0..spec.classes {
            let from = c * spec.modes_per_class + spec.modes_per_class - 1;
            let to = ((c + 1) % spec.classes) * spec.modes_per_class;
            for (x, (&a, &b)) in centers[from].iter_mut().zip(orig[from].iter().zip(&orig[to])) {
                *x = a + spec.overlap * (b - a);
            }
        }
    }
    centers
}

/// Generates the dataset together with the generative mode of every sample.
///
/// Samples are ordered by class, then mode, then draw.
pub fn generate_synthetic_with_modes(spec: &SynthSpec) -> Result<(FeatureSet, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = mode_centers(spec, &mut rng);
    let sd = spec.mode_spread / (spec.d as f64).sqrt();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut modes = Vec::new();
    for c in 0..spec.classes {
        for j in 0..spec.modes_per_class {
            let m = c * spec.modes_per_class + j;
            for _ in 0..spec.samples_per_mode {
                for &mu in &centers[m] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    features.push((mu + sd * z) as f32);
                }
                labels.push(c as u32);
                modes.push(m);
            }
        }
    }
    Ok((FeatureSet::new(spec.d, spec.classes, features, labels)?, modes))
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<FeatureSet> {
    generate_synthetic_with_modes(spec).map(|(fs, _)| fs)
}
