//! Bag-of-words + image softmax model with an optional second text bag.
//!
//! Inputs are three blocks: the image feature vector, the embedded
//! bag-of-words of the target question and the embedded bag-of-words of
//! the extra questions. Each block is L2-normalized on its own (a zero
//! block stays zero), the blocks are concatenated and a single affine
//! layer followed by a softmax scores the answer vocabulary.

mod grad;
mod predict;
mod train;

use thiserror::Error;

use crate::vocab::BowVector;

pub use grad::{loss_and_grad, loss_and_grad_with, mean_loss, Gradients};
pub use predict::{
    predict, predict_batch, predict_multiple_choice, predict_sample, PredictRequest, Prediction,
};
pub use train::{exemplar_sample, train, AnswerVocab, TrainConfig, TrainReport, Trained};

/// Norms at or below this are treated as zero by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("no exemplar has an answer in the answer vocabulary")]
    NoTrainableExemplars,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no image features for feature_ref {0}")]
    MissingFeature(u64),
    #[error("label {label} out of range for {n_answers} answers")]
    BadLabel { label: usize, n_answers: usize },
    #[error("non-finite parameter after update")]
    NonFinite,
    #[error("multiple-choice question has no choices")]
    NoChoices,
}

/// Image features keyed by `feature_ref`.
pub type FeatureTable = std::collections::BTreeMap<u64, Vec<f64>>;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d_img: usize,
    pub d_target: usize,
    pub d_extra: usize,
    pub n_answers: usize,
    pub vocab_size: usize,
}

impl Dims {
    pub fn input_dim(&self) -> usize {
        self.d_img + self.d_target + self.d_extra
    }
}

/// Learned parameters plus the answer vocabulary they score.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub embed_target: Matrix,
    pub embed_extra: Matrix,
    pub fc_weights: Matrix,
    pub fc_bias: Vec<f64>,
    pub answer_vocab: Vec<String>,
    pub d_img: usize,
}

impl LinearModel {
    /// All-zero model.
    pub fn zeros(dims: Dims, answer_vocab: Vec<String>) -> Result<Self, ModelError> {
        if answer_vocab.len() != dims.n_answers {
            return Err(ModelError::DimMismatch(format!(
                "{} answers for n_answers = {}",
                answer_vocab.len(),
                dims.n_answers
            )));
        }
        let model = Self {
            embed_target: Matrix::zeros(dims.vocab_size, dims.d_target),
            embed_extra: Matrix::zeros(dims.vocab_size, dims.d_extra),
            fc_weights: Matrix::zeros(dims.n_answers, dims.input_dim()),
            fc_bias: vec![0.0; dims.n_answers],
            answer_vocab,
            d_img: dims.d_img,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            d_img: self.d_img,
            d_target: self.embed_target.cols(),
            d_extra: self.embed_extra.cols(),
            n_answers: self.fc_bias.len(),
            vocab_size: self.embed_target.rows(),
        }
    }

    /// Check shape consistency and answer uniqueness.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.dims();
        let mismatch = |m: String| Err(ModelError::DimMismatch(m));
        if self.embed_extra.rows() != d.vocab_size {
            return mismatch("embedding matrices have different row counts".into());
        }
        if self.fc_weights.rows() != d.n_answers || self.fc_weights.cols() != d.input_dim() {
            return mismatch(format!(
                "fc weights are {}x{}, expected {}x{}",
                self.fc_weights.rows(),
                self.fc_weights.cols(),
                d.n_answers,
                d.input_dim()
            ));
        }
        if self.answer_vocab.len() != d.n_answers {
            return mismatch("answer vocabulary length differs from n_answers".into());
        }
        let unique: std::collections::HashSet<_> = self.answer_vocab.iter().collect();
        if unique.len() != self.answer_vocab.len() {
            return mismatch("answer vocabulary has duplicates".into());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(|p| p.is_finite())
    }

    /// Every parameter in file order: target embedding, extra embedding,
    /// fc weights, fc bias.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.embed_target
            .as_slice()
            .iter()
            .chain(self.embed_extra.as_slice())
            .chain(self.fc_weights.as_slice())
            .chain(&self.fc_bias)
            .copied()
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.embed_target
            .as_mut_slice()
            .iter_mut()
            .chain(self.embed_extra.as_mut_slice())
            .chain(self.fc_weights.as_mut_slice())
            .chain(self.fc_bias.iter_mut())
    }

    /// Round every parameter to the nearest `f32`, the precision of the
    /// model file.
    pub fn round_to_f32(&mut self) {
        for p in self.parameters_mut() {
            *p = *p as f32 as f64;
        }
    }

    pub fn answer_index(&self, answer: &str) -> Option<usize> {
        self.answer_vocab.iter().position(|a| a == answer)
    }

    /// Embed and normalize the three input blocks of `sample`.
    pub fn features(&self, sample: &Sample) -> Result<FeatureBlock, ModelError> {
        let d = self.dims();
        if sample.image.len() != d.d_img {
            return Err(ModelError::DimMismatch(format!(
                "image feature has length {}, model expects {}",
                sample.image.len(),
                d.d_img
            )));
        }
        Ok(FeatureBlock {
            image: l2_normalize(&sample.image),
            target_q: l2_normalize(&embed_bow(&sample.target, &self.embed_target)?),
            extra_q: l2_normalize(&embed_bow(&sample.extra, &self.embed_extra)?),
        })
    }

    pub fn logits(&self, block: &FeatureBlock) -> Result<Vec<f64>, ModelError> {
        let d = self.dims();
        if block.image.len() != d.d_img
            || block.target_q.len() != d.d_target
            || block.extra_q.len() != d.d_extra
        {
            return Err(ModelError::DimMismatch(
                "feature block does not match model dimensions".into(),
            ));
        }
        let z: Vec<f64> = block.concat();
        Ok((0..d.n_answers)
            .map(|a| dot(self.fc_weights.row(a), &z) + self.fc_bias[a])
            .collect())
    }
}

/// Model input before embedding: image features and two word bags.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Vec<f64>,
    pub target: BowVector,
    /// Bag of the concatenated extra questions; empty for none.
    pub extra: BowVector,
}

/// The three normalized input blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub image: Vec<f64>,
    pub target_q: Vec<f64>,
    pub extra_q: Vec<f64>,
}

impl FeatureBlock {
    pub fn concat(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.image.len() + self.target_q.len() + self.extra_q.len());
        z.extend_from_slice(&self.image);
        z.extend_from_slice(&self.target_q);
        z.extend_from_slice(&self.extra_q);
        z
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sum of `count * embedding[word]` over the bag.
pub fn embed_bow(counts: &BowVector, embedding: &Matrix) -> Result<Vec<f64>, ModelError> {
    if counts.vocab_size() != embedding.rows() {
        return Err(ModelError::DimMismatch(format!(
            "bag over {} words, embedding has {} rows",
            counts.vocab_size(),
            embedding.rows()
        )));
    }
    let mut out = vec![0.0; embedding.cols()];
    for (word, count) in counts.entries() {
        let c = count as f64;
        for (o, e) in out.iter_mut().zip(embedding.row(word)) {
            *o += c * e;
        }
    }
    Ok(out)
}

/// `v / ||v||`; vectors with norm at most [`NORM_EPS`] are returned as is.
pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let norm = dot(v, v).sqrt();
    if norm > NORM_EPS {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Answer probabilities for one feature block.
pub fn forward(model: &LinearModel, block: &FeatureBlock) -> Result<Vec<f64>, ModelError> {
    Ok(softmax(&model.logits(block)?))
}
