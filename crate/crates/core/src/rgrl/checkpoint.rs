//! Checkpoints: a JSON header plus one raw little-endian `f32` blob per
//! tensor, written next to the header as `<stem>.<name>.f32`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CsrmsError, Result};
use crate::numerics::Tensor;
use crate::rgrl::{AlignCoefficients, PrototypeBank, SmoothingModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobRef {
    file: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    w_in: BlobRef,
    w_out: BlobRef,
    classifier: BlobRef,
    classifier_bias: BlobRef,
    prototypes: PrototypeHeader,
    config: serde_json::Value,
    knn_k: usize,
    use_output_softmax: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PrototypeHeader {
    cluster: BlobRef,
    class: BlobRef,
    coefficients: AlignCoefficients,
}

/// A trained model with its prototypes and the run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SmoothingModel,
    pub prototypes: PrototypeBank,
    pub config: serde_json::Value,
}

fn blob_path(header: &Path, name: &str) -> PathBuf {
    let stem = header.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    header.with_file_name(format!("{stem}.{name}.f32"))
}

fn write_blob(header: &Path, name: &str, t: &Tensor) -> Result<BlobRef> {
    let path = blob_path(header, name);
    let mut bytes = Vec::with_capacity(4 * t.len());
    for &v in t.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&path, bytes)?;
    Ok(BlobRef {
        file: path.file_name().expect("file name").to_string_lossy().into_owned(),
        shape: t.shape().to_vec(),
    })
}

fn read_blob(header: &Path, blob: &BlobRef) -> Result<Tensor> {
    let path = header.with_file_name(&blob.file);
    if !path.exists() {
        return Err(CsrmsError::MissingArtifact(path));
    }
    let bytes = fs::read(&path)?;
    let expected: usize = blob.shape.iter().product();
    if bytes.len() != 4 * expected {
        return Err(CsrmsError::Format {
            offset: bytes.len().min(4 * expected),
            detail: format!("{} holds {} bytes, shape {:?} needs {}", blob.file, bytes.len(), blob.shape, 4 * expected),
        });
    }
    let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64).collect();
    Tensor::new(blob.shape.clone(), data)
}

fn rows_tensor(rows: &[Vec<f64>]) -> Result<Tensor> {
    Tensor::from_rows(rows)
}

fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let m = &ck.model;
    let header = Header {
        w_in: write_blob(path, "w_in", &m.w_in)?,
        w_out: write_blob(path, "w_out", &m.w_out)?,
        classifier: write_blob(path, "classifier", &m.classifier_w)?,
        classifier_bias: write_blob(path, "classifier_bias", &m.classifier_b)?,
        prototypes: PrototypeHeader {
            cluster: write_blob(path, "cluster_prototypes", &rows_tensor(&ck.prototypes.cluster_prototypes)?)?,
            class: write_blob(path, "class_prototypes", &rows_tensor(&ck.prototypes.class_prototypes)?)?,
            coefficients: ck.prototypes.coefficients,
        },
        config: ck.config.clone(),
        knn_k: m.knn_k,
        use_output_softmax: m.use_output_softmax,
    };
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(CsrmsError::MissingArtifact(path.to_path_buf()));
    }
    let h: Header = serde_json::from_str(&fs::read_to_string(path)?)?;
    let model = SmoothingModel {
        w_in: read_blob(path, &h.w_in)?,
        w_out: read_blob(path, &h.w_out)?,
        classifier_w: read_blob(path, &h.classifier)?,
        classifier_b: read_blob(path, &h.classifier_bias)?,
        knn_k: h.knn_k,
        use_output_softmax: h.use_output_softmax,
    };
    let prototypes = PrototypeBank {
        cluster_prototypes: tensor_rows(&read_blob(path, &h.prototypes.cluster)?),
        class_prototypes: tensor_rows(&read_blob(path, &h.prototypes.class)?),
        coefficients: h.prototypes.coefficients,
    };
    Ok(Checkpoint { model, prototypes, config: h.config })
}
