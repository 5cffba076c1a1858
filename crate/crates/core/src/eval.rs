//! Evaluation statistics: extraction precision/recall, max fusion with
//! classifier scores, mean average precision, VQA accuracy by answer type
//! and percentile bootstrap intervals.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::qparse::{ImageId, LabelSet, ObjectVocabulary};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("empty answer string")]
    EmptyAnswer,
    #[error("empty input vector")]
    EmptyVector,
    #[error("confidence {0} is outside (0, 1)")]
    InvalidConfidence(f64),
    #[error("{0} resamples requested; at least {MIN_RESAMPLES} are required")]
    TooFewResamples(usize),
}

pub const MIN_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPr {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    /// Images whose truth contains the class.
    pub support: usize,
    pub true_positives: usize,
    pub false_positives: usize,
}

/// Per-class precision and recall with unweighted means over all classes.
///
/// Precision is 0 for a class that is never predicted, recall is 0 for a
/// class that never occurs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrReport {
    pub per_class: Vec<ClassPr>,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

impl PrReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,support,true_positives,false_positives\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{},{}\n",
                c.class, c.precision, c.recall, c.support, c.true_positives, c.false_positives
            ));
        }
        out
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Compare predicted label sets against ground truth, image by image.
pub fn per_class_pr(
    predicted: &[LabelSet],
    truth: &[LabelSet],
    vocab: &ObjectVocabulary,
) -> Result<PrReport, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), truth.len()));
    }
    let n = vocab.len();
    let mut tp = vec![0usize; n];
    let mut fp = vec![0usize; n];
    let mut support = vec![0usize; n];
    for (p, t) in predicted.iter().zip(truth) {
        if p.vector.len() != n || t.vector.len() != n {
            return Err(EvalError::DimMismatch(format!(
                "label vectors must have {n} entries"
            )));
        }
        for c in 0..n {
            let (pc, tc) = (p.vector[c] != 0, t.vector[c] != 0);
            support[c] += tc as usize;
            tp[c] += (pc && tc) as usize;
            fp[c] += (pc && !tc) as usize;
        }
    }
    let per_class: Vec<ClassPr> = (0..n)
        .map(|c| ClassPr {
            class: vocab.name(c).to_string(),
            precision: ratio(tp[c], tp[c] + fp[c]),
            recall: ratio(tp[c], support[c]),
            support: support[c],
            true_positives: tp[c],
            false_positives: fp[c],
        })
        .collect();
    let mean = |f: fn(&ClassPr) -> f64| per_class.iter().map(f).sum::<f64>() / n.max(1) as f64;
    Ok(PrReport {
        mean_precision: mean(|c| c.precision),
        mean_recall: mean(|c| c.recall),
        per_class,
    })
}

/// Elementwise `max(x_o, x_c)`.
pub fn fuse_max(x_o: &[u8], x_c: &[f64]) -> Result<Vec<f64>, EvalError> {
    if x_o.len() != x_c.len() {
        return Err(EvalError::DimMismatch(format!(
            "object vector has {} entries, scores have {}",
            x_o.len(),
            x_c.len()
        )));
    }
    Ok(x_o.iter().zip(x_c).map(|(&o, &c)| c.max(o as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    /// `None` for classes without positives.
    pub per_class: Vec<Option<f64>>,
    /// Mean over classes with at least one positive; `None` if there are none.
    pub map: Option<f64>,
}

/// Non-interpolated average precision of one ranking.
///
/// Images are ranked by descending score, ties by ascending image id.
pub fn average_precision(image_ids: &[ImageId], scores: &[f64], truth: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(image_ids[a].cmp(&image_ids[b]))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if truth[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Per-class AP and their mean. `scores[i]` and `truth[i]` are the class
/// vectors of image `image_ids[i]`.
pub fn mean_average_precision(
    image_ids: &[ImageId],
    scores: &[Vec<f64>],
    truth: &[Vec<u8>],
) -> Result<MapReport, EvalError> {
    if image_ids.len() != scores.len() {
        return Err(EvalError::LengthMismatch(image_ids.len(), scores.len()));
    }
    if image_ids.len() != truth.len() {
        return Err(EvalError::LengthMismatch(image_ids.len(), truth.len()));
    }
    let classes = scores.first().map_or(0, Vec::len);
    if scores.iter().any(|s| s.len() != classes) || truth.iter().any(|t| t.len() != classes) {
        return Err(EvalError::DimMismatch(
            "every image needs a score and a label for every class".into(),
        ));
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|v| v[c]).collect();
            let t: Vec<bool> = truth.iter().map(|v| v[c] != 0).collect();
            average_precision(image_ids, &s, &t)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(MapReport { per_class, map })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnswerType {
    YesNo,
    Number,
    Word,
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::YesNo => "yes/no",
            Self::Number => "number",
            Self::Word => "word",
        })
    }
}

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Yes/no, number (digits or zero to ten spelled out) or anything else.
pub fn classify_answer_type(answer: &str) -> Result<AnswerType, EvalError> {
    if answer.is_empty() {
        return Err(EvalError::EmptyAnswer);
    }
    let a = answer.trim().to_lowercase();
    Ok(if a == "yes" || a == "no" {
        AnswerType::YesNo
    } else if (!a.is_empty() && a.bytes().all(|b| b.is_ascii_digit()))
        || NUMBER_WORDS.contains(&a.as_str())
    {
        AnswerType::Number
    } else {
        AnswerType::Word
    })
}

/// Trim, lowercase and drop a leading article.
pub fn normalize_answer(answer: &str) -> String {
    let a = answer.trim().to_lowercase();
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = a.strip_prefix(article) {
            return rest.trim_start().to_string();
        }
    }
    a
}

pub fn answers_match(predicted: &str, truth: &str) -> bool {
    normalize_answer(predicted) == normalize_answer(truth)
}

/// `min(#matching human answers / 3, 1)`.
pub fn consensus_score(predicted: &str, human: &[String]) -> f64 {
    let p = normalize_answer(predicted);
    let matches = human.iter().filter(|h| normalize_answer(h) == p).count();
    (matches as f64 / 3.0).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub overall: f64,
    pub n: usize,
    pub by_type: BTreeMap<AnswerType, Cell>,
    pub interval: Option<(f64, f64)>,
    /// Per-example scores in input order (1/0 for exact match).
    #[serde(skip)]
    pub scores: Vec<f64>,
}

impl AccuracyReport {
    fn from_scores(types: &[AnswerType], scores: Vec<f64>) -> Self {
        let mut sums: BTreeMap<AnswerType, (f64, usize)> = BTreeMap::new();
        for t in [AnswerType::Number, AnswerType::YesNo, AnswerType::Word] {
            sums.insert(t, (0.0, 0));
        }
        for (t, s) in types.iter().zip(&scores) {
            let e = sums.get_mut(t).expect("all types present");
            e.0 += s;
            e.1 += 1;
        }
        let by_type = sums
            .into_iter()
            .map(|(t, (s, n))| (t, Cell { accuracy: if n == 0 { 0.0 } else { s / n as f64 }, n }))
            .collect();
        Self {
            overall: scores.iter().sum::<f64>() / scores.len() as f64,
            n: scores.len(),
            by_type,
            interval: None,
            scores,
        }
    }

    /// Attach a bootstrap interval of the overall accuracy.
    pub fn with_interval(
        mut self,
        confidence: f64,
        resamples: usize,
        seed: u64,
        exec: Exec,
    ) -> Result<Self, EvalError> {
        self.interval = Some(bootstrap_ci(&self.scores, confidence, resamples, seed, exec)?);
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("answer_type,accuracy,n\n");
        for (t, c) in &self.by_type {
            out.push_str(&format!("{t},{:.6},{}\n", c.accuracy, c.n));
        }
        out.push_str(&format!("overall,{:.6},{}\n", self.overall, self.n));
        out
    }
}

/// Exact-match accuracy over `(predicted, truth)` pairs, split by the type
/// of the ground-truth answer.
pub fn vqa_accuracy<S: AsRef<str>, T: AsRef<str>>(
    pairs: &[(S, T)],
) -> Result<AccuracyReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyVector);
    }
    let mut types = Vec::with_capacity(pairs.len());
    let mut scores = Vec::with_capacity(pairs.len());
    for (p, t) in pairs {
        types.push(classify_answer_type(t.as_ref())?);
        scores.push(answers_match(p.as_ref(), t.as_ref()) as u8 as f64);
    }
    Ok(AccuracyReport::from_scores(&types, scores))
}

/// Consensus accuracy against several human answers per question. The
/// answer type is that of the most common human answer (ties go to the
/// lexicographically smallest).
pub fn vqa_accuracy_consensus<S: AsRef<str>>(
    pairs: &[(S, Vec<String>)],
) -> Result<AccuracyReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyVector);
    }
    let mut types = Vec::with_capacity(pairs.len());
    let mut scores = Vec::with_capacity(pairs.len());
    for (p, human) in pairs {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for h in human {
            *counts.entry(normalize_answer(h)).or_default() += 1;
        }
        let top = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(a, _)| a.clone())
            .ok_or(EvalError::EmptyAnswer)?;
        types.push(classify_answer_type(&top)?);
        scores.push(consensus_score(p.as_ref(), human));
    }
    Ok(AccuracyReport::from_scores(&types, scores))
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap interval of the mean of `correct`.
///
/// Resample `i` draws `n` indices with replacement from a generator seeded
/// with `seed + i`, so the result does not depend on `exec`.
pub fn bootstrap_ci(
    correct: &[f64],
    confidence: f64,
    resamples: usize,
    seed: u64,
    exec: Exec,
) -> Result<(f64, f64), EvalError> {
    if correct.is_empty() {
        return Err(EvalError::EmptyVector);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EvalError::InvalidConfidence(confidence));
    }
    if resamples < MIN_RESAMPLES {
        return Err(EvalError::TooFewResamples(resamples));
    }
    let n = correct.len();
    let mut means = exec.map_range(resamples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let total: f64 = (0..n).map(|_| correct[rng.gen_range(0..n)]).sum();
        total / n as f64
    });
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    Ok((percentile(&means, alpha), percentile(&means, 1.0 - alpha)))
}
