//! Versioned binary container for trained weights.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "TRINITMD" | version u32 | kind u8
//! label sets: u32 count, then per set u32 n and n length-prefixed UTF-8 names
//! feature_dimension u64
//! indexer reference: length-prefixed UTF-8 (SHA-256 of the indexer text)
//! matrices: u32 count, then per matrix u64 rows, u64 cols, rows*cols f64
//! ```
//!
//! A CRF file holds one label set and W^f, W^g. A correlation file holds the
//! source and target label sets and W^t, W^s. A stacked-model file holds the
//! target label set, the bottom layer, and the top CRF's two matrices; its
//! kind byte records the activation.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::baselines::{Activation, DeepCrfModel};
use crate::corpus::LabelSet;
use crate::crf::CrfModel;
use crate::error::{Error, Result};
use crate::features::FeatureIndexer;
use crate::matrix::Matrix;
use crate::transfer::CorrelationModel;

const MAGIC: &[u8; 8] = b"TRINITMD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Crf = 1,
    Correlation = 2,
    DeepHardTanh = 3,
    DeepLinear = 4,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The reference stored with a model: digest of the indexer's text form.
pub fn indexer_digest(indexer: &FeatureIndexer) -> String {
    sha256_hex(indexer.to_text().as_bytes())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn labels(&mut self, l: &LabelSet) {
        self.u32(l.len() as u32);
        for n in l.names() {
            self.str(n);
        }
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for v in m.as_slice() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("label name is not UTF-8".into()))
    }
    fn labels(&mut self) -> Result<LabelSet> {
        let n = self.u32()? as usize;
        let names = (0..n).map(|_| self.str()).collect::<Result<Vec<_>>>()?;
        LabelSet::new(names)
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| Error::Format(format!("matrix {rows}x{cols} exceeds file size")))?;
        let data = self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

fn encode(kind: ModelKind, labels: &[&LabelSet], dim: usize, indexer_ref: &str, matrices: &[&Matrix]) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.0.push(kind as u8);
    w.u32(labels.len() as u32);
    for l in labels {
        w.labels(l);
    }
    w.u64(dim as u64);
    w.str(indexer_ref);
    w.u32(matrices.len() as u32);
    for m in matrices {
        w.matrix(m);
    }
    w.0
}

struct Decoded {
    labels: Vec<LabelSet>,
    feature_dimension: usize,
    indexer_ref: String,
    matrices: Vec<Matrix>,
}

fn decode(bytes: &[u8], expected: &[ModelKind]) -> Result<(ModelKind, Decoded)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let byte = r.u8()?;
    let kind = *expected
        .iter()
        .find(|k| **k as u8 == byte)
        .ok_or_else(|| Error::Format(format!("unexpected model kind {byte}")))?;
    let n_labels = r.u32()? as usize;
    let labels = (0..n_labels).map(|_| r.labels()).collect::<Result<Vec<_>>>()?;
    let feature_dimension = r.u64()? as usize;
    let indexer_ref = r.str()?;
    let n_mats = r.u32()? as usize;
    let matrices = (0..n_mats).map(|_| r.matrix()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((
        kind,
        Decoded {
            labels,
            feature_dimension,
            indexer_ref,
            matrices,
        },
    ))
}

pub fn encode_crf(model: &CrfModel, indexer_ref: &str) -> Vec<u8> {
    encode(
        ModelKind::Crf,
        &[model.labels()],
        model.feature_dimension(),
        indexer_ref,
        &[model.emission(), model.transition()],
    )
}

/// Returns the model and its indexer reference.
pub fn decode_crf(bytes: &[u8]) -> Result<(CrfModel, String)> {
    let (_, d) = decode(bytes, &[ModelKind::Crf])?;
    let [labels]: [LabelSet; 1] = d
        .labels
        .try_into()
        .map_err(|_| Error::Format("CRF file must hold one label set".into()))?;
    let [emission, transition]: [Matrix; 2] = d
        .matrices
        .try_into()
        .map_err(|_| Error::Format("CRF file must hold two matrices".into()))?;
    if emission.cols() != d.feature_dimension {
        return Err(Error::Format(format!(
            "emission has {} columns, header says {}",
            emission.cols(),
            d.feature_dimension
        )));
    }
    Ok((CrfModel::new(labels, emission, transition)?, d.indexer_ref))
}

pub fn encode_correlation(model: &CorrelationModel, indexer_ref: &str) -> Vec<u8> {
    encode(
        ModelKind::Correlation,
        &[&model.source_labels, &model.target_labels],
        model.w_s.cols(),
        indexer_ref,
        &[&model.w_t, &model.w_s],
    )
}

pub fn decode_correlation(bytes: &[u8]) -> Result<(CorrelationModel, String)> {
    let (_, d) = decode(bytes, &[ModelKind::Correlation])?;
    let [source, target]: [LabelSet; 2] = d
        .labels
        .try_into()
        .map_err(|_| Error::Format("correlation file must hold two label sets".into()))?;
    let [w_t, w_s]: [Matrix; 2] = d
        .matrices
        .try_into()
        .map_err(|_| Error::Format("correlation file must hold two matrices".into()))?;
    if w_s.cols() != d.feature_dimension {
        return Err(Error::Format(format!(
            "w_s has {} columns, header says {}",
            w_s.cols(),
            d.feature_dimension
        )));
    }
    Ok((CorrelationModel::new(w_t, w_s, source, target)?, d.indexer_ref))
}

pub fn encode_deep(model: &DeepCrfModel, indexer_ref: &str) -> Vec<u8> {
    let kind = match model.activation {
        Activation::HardTanh => ModelKind::DeepHardTanh,
        Activation::None => ModelKind::DeepLinear,
    };
    encode(
        kind,
        &[model.top.labels()],
        model.bottom.cols(),
        indexer_ref,
        &[&model.bottom, model.top.emission(), model.top.transition()],
    )
}

pub fn decode_deep(bytes: &[u8]) -> Result<(DeepCrfModel, String)> {
    let (kind, d) = decode(bytes, &[ModelKind::DeepHardTanh, ModelKind::DeepLinear])?;
    let [labels]: [LabelSet; 1] = d
        .labels
        .try_into()
        .map_err(|_| Error::Format("stacked-model file must hold one label set".into()))?;
    let [bottom, emission, transition]: [Matrix; 3] = d
        .matrices
        .try_into()
        .map_err(|_| Error::Format("stacked-model file must hold three matrices".into()))?;
    if bottom.cols() != d.feature_dimension {
        return Err(Error::Format(format!(
            "bottom layer has {} columns, header says {}",
            bottom.cols(),
            d.feature_dimension
        )));
    }
    let activation = if kind == ModelKind::DeepHardTanh {
        Activation::HardTanh
    } else {
        Activation::None
    };
    let top = CrfModel::new(labels, emission, transition)?;
    Ok((DeepCrfModel::new(bottom, top, activation)?, d.indexer_ref))
}

/// Writes to a temporary sibling file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path.display().to_string(), e)
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn save_crf(path: &Path, model: &CrfModel, indexer: &FeatureIndexer) -> Result<()> {
    write_atomic(path, &encode_crf(model, &indexer_digest(indexer)))
}

pub fn load_crf(path: &Path) -> Result<(CrfModel, String)> {
    decode_crf(&read_file(path)?)
}

pub fn save_correlation(path: &Path, model: &CorrelationModel, indexer: &FeatureIndexer) -> Result<()> {
    write_atomic(path, &encode_correlation(model, &indexer_digest(indexer)))
}

pub fn load_correlation(path: &Path) -> Result<(CorrelationModel, String)> {
    decode_correlation(&read_file(path)?)
}

/// Loads an indexer and checks it against the reference stored in a model.
pub fn load_indexer(path: &Path, expected_ref: &str) -> Result<FeatureIndexer> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let indexer = FeatureIndexer::from_text(&text)?;
    let digest = indexer_digest(&indexer);
    if digest != expected_ref {
        return Err(Error::Format(format!(
            "indexer {} has digest {digest}, model expects {expected_ref}",
            path.display()
        )));
    }
    Ok(indexer)
}
