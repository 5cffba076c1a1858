use std::collections::{BTreeSet, HashMap};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad_with, mean_loss, Dims, FeatureTable, LinearModel, Matrix, ModelError, Sample};
use crate::augment::Exemplar;
use crate::exec::Exec;
use crate::qparse::QuestionId;
use crate::vocab::{bow_featurize, bow_featurize_all, Vocabulary};

/// Gradient shard size for data-parallel training.
const PARALLEL_SHARD: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub answer_vocab_size: usize,
    /// Embeddings start uniform in `[-s, s]`.
    pub weight_init_scale: f64,
    /// Width of both text embeddings.
    pub embed_dim: usize,
    /// Heavy-ball momentum; 0 is plain SGD.
    pub momentum: f64,
    /// Record the full training loss after every epoch.
    pub track_loss: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            answer_vocab_size: 1000,
            weight_init_scale: 0.1,
            embed_dim: 256,
            momentum: 0.0,
            track_loss: false,
            exec: Exec::Sequential,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.answer_vocab_size == 0 {
            return bad("answer_vocab_size must be positive");
        }
        if !(self.weight_init_scale.is_finite() && self.weight_init_scale > 0.0) {
            return bad("weight_init_scale must be finite and positive");
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }
}

/// The `K` most frequent training answers, ties broken lexicographically.
///
/// Each target question is counted once however many exemplars it appears
/// in, so augmentation does not reweight the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerVocab {
    answers: Vec<String>,
    index: HashMap<String, usize>,
}

impl AnswerVocab {
    pub fn build<'a>(exemplars: impl IntoIterator<Item = &'a Exemplar>, k: usize) -> Self {
        let mut seen: BTreeSet<QuestionId> = BTreeSet::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for ex in exemplars {
            if seen.insert(ex.target.id) {
                *counts.entry(ex.answer.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_answers(ranked.into_iter().take(k).map(|(a, _)| a.to_string()).collect())
    }

    pub fn from_answers(answers: Vec<String>) -> Self {
        let index = answers.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Self { answers, index }
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn index_of(&self, answer: &str) -> Option<usize> {
        self.index.get(answer).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    pub exemplars_used: usize,
    /// Exemplars whose answer fell outside the answer vocabulary.
    pub dropped: usize,
    /// Mean training loss after each epoch; empty unless `track_loss`.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: LinearModel,
    pub report: TrainReport,
}

/// Model input for one exemplar.
pub fn exemplar_sample(
    exemplar: &Exemplar,
    features: &FeatureTable,
    vocab: &Vocabulary,
) -> Result<Sample, ModelError> {
    let image = features
        .get(&exemplar.feature_ref)
        .ok_or(ModelError::MissingFeature(exemplar.feature_ref))?;
    Ok(Sample {
        image: image.clone(),
        target: bow_featurize(&exemplar.target.text, vocab),
        extra: bow_featurize_all(exemplar.extra.iter().map(|q| q.text.as_str()), vocab),
    })
}

fn uniform_matrix(rows: usize, cols: usize, s: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-s..=s) as f32 as f64)
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Mini-batch SGD on mean cross-entropy.
///
/// Embeddings start uniform in `[-s, s]` and the output layer at zero, so
/// an untrained model predicts answer 0, the most frequent one. The
/// returned parameters are rounded to `f32`, which makes them exactly what
/// a saved model file holds. With `Exec::Sequential` the result is
/// bitwise reproducible for a fixed seed.
pub fn train<I>(
    exemplars: I,
    features: &FeatureTable,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<Trained, ModelError>
where
    I: IntoIterator<Item = Exemplar>,
{
    config.validate()?;
    let exemplars: Vec<Exemplar> = exemplars.into_iter().collect();
    let answers = AnswerVocab::build(&exemplars, config.answer_vocab_size);

    let mut data: Vec<(Sample, usize)> = Vec::with_capacity(exemplars.len());
    let mut dropped = 0;
    for ex in &exemplars {
        match answers.index_of(&ex.answer) {
            Some(label) => data.push((exemplar_sample(ex, features, vocab)?, label)),
            None => dropped += 1,
        }
    }
    drop(exemplars);
    if data.is_empty() {
        return Err(ModelError::NoTrainableExemplars);
    }
    if dropped > 0 {
        info!("dropped {dropped} exemplars with out-of-vocabulary answers");
    }

    let dims = Dims {
        d_img: data[0].0.image.len(),
        d_target: config.embed_dim,
        d_extra: config.embed_dim,
        n_answers: answers.len(),
        vocab_size: vocab.len(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LinearModel::zeros(dims, answers.answers().to_vec())?;
    let s = config.weight_init_scale;
    model.embed_target = uniform_matrix(dims.vocab_size, dims.d_target, s, &mut rng);
    model.embed_extra = uniform_matrix(dims.vocab_size, dims.d_extra, s, &mut rng);

    let mut velocity = (config.momentum > 0.0).then(|| model.clone());
    if let Some(v) = velocity.as_mut() {
        v.parameters_mut().for_each(|p| *p = 0.0);
    }

    let lr = config.learning_rate;
    let mut epoch_losses = Vec::new();
    for epoch in 0..config.epochs {
        data.shuffle(&mut rng);
        for batch in data.chunks(config.batch_size) {
            let (_, g) = loss_and_grad_with(&model, batch, config.exec, PARALLEL_SHARD)?;
            match velocity.as_mut() {
                None => {
                    for (r, gr) in &g.embed_target {
                        step(model.embed_target.row_mut(*r), gr, lr);
                    }
                    for (r, gr) in &g.embed_extra {
                        step(model.embed_extra.row_mut(*r), gr, lr);
                    }
                    step(model.fc_weights.as_mut_slice(), g.fc_weights.as_slice(), lr);
                    step(&mut model.fc_bias, &g.fc_bias, lr);
                }
                Some(v) => {
                    let mu = config.momentum;
                    v.parameters_mut().for_each(|p| *p *= mu);
                    for (r, gr) in &g.embed_target {
                        add(v.embed_target.row_mut(*r), gr);
                    }
                    for (r, gr) in &g.embed_extra {
                        add(v.embed_extra.row_mut(*r), gr);
                    }
                    add(v.fc_weights.as_mut_slice(), g.fc_weights.as_slice());
                    add(&mut v.fc_bias, &g.fc_bias);
                    for (p, vp) in model.parameters_mut().zip(v.parameters()) {
                        *p -= lr * vp;
                    }
                }
            }
            if !model.is_finite() {
                return Err(ModelError::NonFinite);
            }
        }
        if config.track_loss {
            let loss = mean_loss(&model, &data)?;
            info!("epoch {}: loss {loss:.6}", epoch + 1);
            epoch_losses.push(loss);
        }
    }

    model.round_to_f32();
    Ok(Trained {
        model,
        report: TrainReport {
            exemplars_used: data.len(),
            dropped,
            epoch_losses,
        },
    })
}

fn step(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

fn add(acc: &mut [f64], grad: &[f64]) {
    for (a, g) in acc.iter_mut().zip(grad) {
        *a += g;
    }
}
