//! Little-endian binary formats.
//!
//! Feature file (`QVFT`, version 1):
//!
//! | bytes       | content                          |
//! |-------------|----------------------------------|
//! | 4           | magic `QVFT`                     |
//! | 4           | version, u32                     |
//! | 4           | row count, u32                   |
//! | 4           | dimension `d`, u32               |
//! | per row     | image id u64, then `d` f32       |
//!
//! Model file (`QSMD`, version 1): magic, version u32, then `d_img`, `d_t`,
//! `d_e`, `n_answers`, `vocab_size` as u32; then each answer as a u32 byte
//! length followed by UTF-8 bytes; then the target embedding, the extra
//! embedding, the fc weights and the fc bias as row-major f32.

use std::path::Path;

use super::{read_file, write_file, DataError};
use crate::model::{Dims, FeatureTable, LinearModel, Matrix};

pub const FEATURE_MAGIC: [u8; 4] = *b"QVFT";
pub const FEATURE_VERSION: u32 = 1;
pub const MODEL_MAGIC: [u8; 4] = *b"QSMD";
pub const MODEL_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(DataError::TruncatedFile {
                needed: self.pos.saturating_add(n),
                have: self.bytes.len(),
            }),
        }
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), DataError> {
        let found: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        if found != expected {
            return Err(DataError::BadMagic { expected, found });
        }
        Ok(())
    }

    fn version(&mut self, expected: u32) -> Result<(), DataError> {
        let found = self.u32()?;
        if found != expected {
            return Err(DataError::VersionMismatch { found, expected });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, DataError> {
        let raw = self.take(n.checked_mul(4).ok_or(DataError::TruncatedFile {
            needed: usize::MAX,
            have: self.bytes.len(),
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    fn finish(&self) -> Result<(), DataError> {
        if self.pos != self.bytes.len() {
            return Err(DataError::Invalid(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), DataError> {
    let v = u32::try_from(v).map_err(|_| DataError::Invalid(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Encode a feature table, rows in ascending id order. Values are stored
/// as f32.
pub fn encode_features(table: &FeatureTable) -> Result<Vec<u8>, DataError> {
    let dim = table.values().next().map_or(0, Vec::len);
    if let Some((id, _)) = table.iter().find(|(_, v)| v.len() != dim) {
        return Err(DataError::Invalid(format!(
            "feature row {id} does not have dimension {dim}"
        )));
    }
    let mut out = Vec::with_capacity(16 + table.len() * (8 + 4 * dim));
    out.extend_from_slice(&FEATURE_MAGIC);
    put_u32(&mut out, FEATURE_VERSION as usize)?;
    put_u32(&mut out, table.len())?;
    put_u32(&mut out, dim)?;
    for (id, row) in table {
        out.extend_from_slice(&id.to_le_bytes());
        put_f32s(&mut out, row);
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureTable, DataError> {
    let mut r = Reader::new(bytes);
    r.magic(FEATURE_MAGIC)?;
    r.version(FEATURE_VERSION)?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let needed = (8 + 4 * dim as u128) * count as u128 + 16;
    if (bytes.len() as u128) < needed {
        return Err(DataError::TruncatedFile {
            needed: usize::try_from(needed).unwrap_or(usize::MAX),
            have: bytes.len(),
        });
    }
    let mut table = FeatureTable::new();
    for _ in 0..count {
        let id = r.u64()?;
        let row = r.f32s(dim)?;
        if table.insert(id, row).is_some() {
            return Err(DataError::DuplicateId { kind: "feature", id });
        }
    }
    r.finish()?;
    Ok(table)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureTable, DataError> {
    decode_features(&read_file(path.as_ref())?)
}

pub fn save_features(path: impl AsRef<Path>, table: &FeatureTable) -> Result<(), DataError> {
    write_file(path.as_ref(), &encode_features(table)?)
}

pub fn encode_model(model: &LinearModel) -> Result<Vec<u8>, DataError> {
    model
        .validate()
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    let d = model.dims();
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION as usize)?;
    for v in [d.d_img, d.d_target, d.d_extra, d.n_answers, d.vocab_size] {
        put_u32(&mut out, v)?;
    }
    for a in &model.answer_vocab {
        put_u32(&mut out, a.len())?;
        out.extend_from_slice(a.as_bytes());
    }
    let params: Vec<f64> = model.parameters().collect();
    put_f32s(&mut out, &params);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<LinearModel, DataError> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    r.version(MODEL_VERSION)?;
    let mut dim = || r.u32().map(|v| v as usize);
    let dims = Dims {
        d_img: dim()?,
        d_target: dim()?,
        d_extra: dim()?,
        n_answers: dim()?,
        vocab_size: dim()?,
    };
    let mut answers = Vec::with_capacity(dims.n_answers.min(1 << 16));
    for _ in 0..dims.n_answers {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        let s = std::str::from_utf8(raw)
            .map_err(|e| DataError::Invalid(format!("answer is not UTF-8: {e}")))?;
        answers.push(s.to_string());
    }
    let mut matrix = |rows: usize, cols: usize| -> Result<Matrix, DataError> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| DataError::Invalid("matrix size overflows".into()))?;
        Ok(Matrix::from_vec(rows, cols, r.f32s(n)?))
    };
    let embed_target = matrix(dims.vocab_size, dims.d_target)?;
    let embed_extra = matrix(dims.vocab_size, dims.d_extra)?;
    let fc_weights = matrix(dims.n_answers, dims.input_dim())?;
    let fc_bias = matrix(1, dims.n_answers)?.as_slice().to_vec();
    r.finish()?;
    let model = LinearModel {
        embed_target,
        embed_extra,
        fc_weights,
        fc_bias,
        answer_vocab: answers,
        d_img: dims.d_img,
    };
    model
        .validate()
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &LinearModel) -> Result<(), DataError> {
    write_file(path.as_ref(), &encode_model(model)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel, DataError> {
    decode_model(&read_file(path.as_ref())?)
}
