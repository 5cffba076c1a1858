//! Training exemplars built from the questions attached to an image.
//!
//! Every image carries answered questions and, optionally, unanswered ones.
//! The plain baseline trains on `(image, question, answer)` triples; the
//! two-bag model additionally receives a set `E` of other questions about
//! the same image. With powerset augmentation each answered question is
//! paired with every subset of the image's questions, answered first and
//! then unanswered, enumerated in binary-counter order.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::qparse::{ImageId, Question, QuestionId};

/// Largest question set the powerset modes will enumerate.
pub const MAX_POWERSET_QUESTIONS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("image {0} has no answered questions")]
    NoAnswered(ImageId),
    #[error("image {image} has {count} questions; powerset modes allow at most {MAX_POWERSET_QUESTIONS}")]
    TooManyQuestions { image: ImageId, count: usize },
    #[error("answered question {0} has no answer")]
    MissingAnswer(QuestionId),
    #[error("fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
    #[error("unknown augmentation mode {0:?} (expected plain, powerset, concat or powerset-no-empty)")]
    UnknownMode(String),
}

/// All questions about one image, split by whether an answer is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: ImageId,
    /// Key into the image feature table.
    pub feature_ref: u64,
    /// Questions with `answer` set.
    pub answered: Vec<Question>,
    pub unanswered: Vec<Question>,
}

impl ImageRecord {
    pub fn new(image_id: ImageId) -> Self {
        Self {
            image_id,
            feature_ref: image_id,
            answered: Vec::new(),
            unanswered: Vec::new(),
        }
    }

    /// Answered questions followed by unanswered ones.
    pub fn all_questions(&self) -> impl Iterator<Item = &Question> {
        self.answered.iter().chain(&self.unanswered)
    }

    pub fn num_questions(&self) -> usize {
        self.answered.len() + self.unanswered.len()
    }

    fn strip_answers(&mut self) {
        let mut moved: Vec<Question> = self.answered.drain(..).collect();
        for q in &mut moved {
            q.answer = None;
            q.human_answers.clear();
        }
        moved.append(&mut self.unanswered);
        self.unanswered = moved;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    /// One exemplar per answered question, no extra questions.
    Plain,
    /// One exemplar per answered question and subset of all questions.
    Powerset,
    /// One exemplar per answered question with every other question as extras.
    ConcatOnly,
    /// `Powerset` without the empty-extras exemplars.
    PowersetNoEmpty,
}

impl FromStr for AugmentMode {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(Self::Plain),
            "powerset" => Ok(Self::Powerset),
            "concat" | "concat-only" | "concatonly" => Ok(Self::ConcatOnly),
            "powerset-no-empty" | "powersetnoempty" => Ok(Self::PowersetNoEmpty),
            _ => Err(AugmentError::UnknownMode(s.to_string())),
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plain => "plain",
            Self::Powerset => "powerset",
            Self::ConcatOnly => "concat-only",
            Self::PowersetNoEmpty => "powerset-no-empty",
        })
    }
}

/// One training instance: image, target question, extra questions, answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub image_id: ImageId,
    pub feature_ref: u64,
    pub target: Question,
    /// The extra-question set `E`; may include the target itself.
    pub extra: Vec<Question>,
    pub answer: String,
}

impl Exemplar {
    pub fn record(&self) -> ExemplarRecord {
        ExemplarRecord {
            image_id: self.image_id,
            feature_ref: self.feature_ref,
            target: self.target.id,
            extra: self.extra.iter().map(|q| q.id).collect(),
            answer: self.answer.clone(),
        }
    }
}

/// Exemplar by question ids, the on-disk form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarRecord {
    pub image_id: ImageId,
    pub feature_ref: u64,
    pub target: QuestionId,
    pub extra: Vec<QuestionId>,
    pub answer: String,
}

/// Streaming exemplar generator for one image record.
#[derive(Debug, Clone)]
pub struct ExemplarIter<'a> {
    record: &'a ImageRecord,
    questions: Vec<&'a Question>,
    mode: AugmentMode,
    target: usize,
    mask: u64,
    mask_end: u64,
}

impl<'a> ExemplarIter<'a> {
    fn mask_start(&self) -> u64 {
        match self.mode {
            AugmentMode::PowersetNoEmpty => 1,
            _ => 0,
        }
    }

    fn per_target(&self) -> u64 {
        match self.mode {
            AugmentMode::Plain | AugmentMode::ConcatOnly => 1,
            AugmentMode::Powerset => self.mask_end,
            AugmentMode::PowersetNoEmpty => self.mask_end - 1,
        }
    }
}

impl Iterator for ExemplarIter<'_> {
    type Item = Exemplar;

    fn next(&mut self) -> Option<Exemplar> {
        if self.target >= self.record.answered.len() {
            return None;
        }
        let target = &self.record.answered[self.target];
        let extra: Vec<Question> = match self.mode {
            AugmentMode::Plain => Vec::new(),
            AugmentMode::ConcatOnly => self
                .questions
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != self.target)
                .map(|(_, q)| (*q).clone())
                .collect(),
            AugmentMode::Powerset | AugmentMode::PowersetNoEmpty => self
                .questions
                .iter()
                .enumerate()
                .filter(|(i, _)| self.mask >> i & 1 == 1)
                .map(|(_, q)| (*q).clone())
                .collect(),
        };
        let exemplar = Exemplar {
            image_id: self.record.image_id,
            feature_ref: self.record.feature_ref,
            target: target.clone(),
            extra,
            answer: target.answer.clone().unwrap_or_default(),
        };
        let single = matches!(self.mode, AugmentMode::Plain | AugmentMode::ConcatOnly);
        self.mask += 1;
        if single || self.mask >= self.mask_end {
            self.target += 1;
            self.mask = self.mask_start();
        }
        Some(exemplar)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let remaining_targets = self.record.answered.len().saturating_sub(self.target) as u64;
        if remaining_targets == 0 {
            return (0, Some(0));
        }
        let done_in_current = match self.mode {
            AugmentMode::Plain | AugmentMode::ConcatOnly => 0,
            _ => self.mask - self.mask_start(),
        };
        let n = (remaining_targets * self.per_target() - done_in_current) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for ExemplarIter<'_> {}

/// Exemplars for one image record, generated lazily.
///
/// `Powerset` yields `m * 2^n` exemplars for `m` answered and `n` total
/// questions.
pub fn generate_exemplars(
    record: &ImageRecord,
    mode: AugmentMode,
) -> Result<ExemplarIter<'_>, AugmentError> {
    if record.answered.is_empty() {
        return Err(AugmentError::NoAnswered(record.image_id));
    }
    if let Some(q) = record.answered.iter().find(|q| q.answer.is_none()) {
        return Err(AugmentError::MissingAnswer(q.id));
    }
    let n = record.num_questions();
    let powerset = matches!(mode, AugmentMode::Powerset | AugmentMode::PowersetNoEmpty);
    if powerset && n > MAX_POWERSET_QUESTIONS {
        return Err(AugmentError::TooManyQuestions {
            image: record.image_id,
            count: n,
        });
    }
    let mut iter = ExemplarIter {
        record,
        questions: record.all_questions().collect(),
        mode,
        target: 0,
        mask: 0,
        mask_end: if powerset { 1u64 << n } else { 1 },
    };
    iter.mask = iter.mask_start();
    Ok(iter)
}

/// Exemplars for a whole dataset, records processed independently.
///
/// Output order is record order, then generation order within a record.
pub fn generate_all(
    records: &[ImageRecord],
    mode: AugmentMode,
    exec: Exec,
) -> Result<Vec<Exemplar>, AugmentError> {
    let per_record = exec.map(records, |r| {
        generate_exemplars(r, mode).map(|it| it.collect::<Vec<_>>())
    });
    let mut out = Vec::new();
    for chunk in per_record {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Keep `keep_per_image` randomly chosen answers per image and move the
/// rest of the answered questions, answers removed, to the unanswered set.
pub fn simulate_unanswered(
    dataset: &[ImageRecord],
    keep_per_image: usize,
    seed: u64,
) -> Vec<ImageRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset
        .iter()
        .map(|record| {
            let mut out = record.clone();
            if record.answered.len() <= keep_per_image {
                return out;
            }
            let mut chosen = index::sample(&mut rng, record.answered.len(), keep_per_image).into_vec();
            chosen.sort_unstable();
            let mut kept = Vec::with_capacity(keep_per_image);
            let mut moved = Vec::new();
            for (i, q) in record.answered.iter().enumerate() {
                if chosen.binary_search(&i).is_ok() {
                    kept.push(q.clone());
                } else {
                    let mut q = q.clone();
                    q.answer = None;
                    moved.push(q);
                }
            }
            out.answered = kept;
            out.unanswered = moved;
            out.unanswered.extend(record.unanswered.iter().cloned());
            out
        })
        .collect()
}

/// Split images into a subset that keeps its answers and a subset whose
/// answers are all removed.
///
/// The answered subset has `floor(fraction * N)` images (a 1e-9 slack
/// absorbs products like `0.29 * 100` that land just below an integer).
pub fn simulate_answered_fraction(
    dataset: &[ImageRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>), AugmentError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AugmentError::InvalidFraction(fraction));
    }
    let n = dataset.len();
    let count = ((fraction * n as f64) + 1e-9).floor().min(n as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    let mut answered = Vec::with_capacity(count);
    let mut stripped = Vec::with_capacity(n - count);
    for (i, record) in dataset.iter().enumerate() {
        if chosen.binary_search(&i).is_ok() {
            answered.push(record.clone());
        } else {
            let mut r = record.clone();
            r.strip_answers();
            stripped.push(r);
        }
    }
    Ok((answered, stripped))
}
