//! Question parsing: tokenization, question-type classification and
//! extraction of object-class labels from visual questions.

mod extract;
mod lemma;
mod objects;
mod types;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_objects, extract_objects_multi, ExtractOptions, Extractor};
pub use lemma::{normalize_token, tokenize};
pub use objects::{LabelSet, ObjectClass, ObjectVocabulary, NUM_CLASSES};
pub use types::{QuestionType, QuestionTypeTable};

pub type QuestionId = u64;
pub type ImageId = u64;

/// A visual question about one image, optionally with its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: QuestionId,
    pub image_id: ImageId,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    /// Individual human answers, when the source data carries them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub human_answers: Vec<String>,
}

impl Question {
    pub fn new(id: QuestionId, image_id: ImageId, text: impl Into<String>) -> Self {
        Self {
            id,
            image_id,
            text: text.into(),
            answer: None,
            choices: None,
            human_answers: Vec::new(),
        }
    }

    pub fn with_answer(mut self, answer: impl Into<String>) -> Self {
        self.answer = Some(answer.into());
        self
    }

    pub fn with_choices<S: Into<String>>(mut self, choices: impl IntoIterator<Item = S>) -> Self {
        self.choices = Some(choices.into_iter().map(Into::into).collect());
        self
    }
}

/// Classify a question by the longest matching type prefix.
pub fn classify_question_type(question: &Question, table: &QuestionTypeTable) -> QuestionType {
    table.classify_text(&question.text)
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid table: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("question {0} has empty text")]
    MalformedQuestion(QuestionId),
    #[error("questions belong to different images ({0} and {1})")]
    MixedImages(ImageId, ImageId),
}
