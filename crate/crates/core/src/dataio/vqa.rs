//! Adapter for the official VQA question/annotation JSON layout.
//!
//! Questions come from `{"questions": [{"question_id", "image_id",
//! "question", "multiple_choices"?}]}`; the optional annotation file
//! `{"annotations": [{"question_id", "image_id", "multiple_choice_answer",
//! "answers": [{"answer"}]}]}` supplies answers. Other fields are ignored.
//! Images appear in order of first mention and use their id as feature key.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::{read_file, DataError, DatasetManifest, ImageEntry};
use crate::qparse::Question;

#[derive(Deserialize)]
struct VqaQuestions {
    questions: Vec<VqaQuestion>,
}

#[derive(Deserialize)]
struct VqaQuestion {
    question_id: u64,
    image_id: u64,
    question: String,
    #[serde(default)]
    multiple_choices: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct VqaAnnotations {
    annotations: Vec<VqaAnnotation>,
}

#[derive(Deserialize)]
struct VqaAnnotation {
    question_id: u64,
    image_id: u64,
    multiple_choice_answer: String,
    #[serde(default)]
    answers: Vec<VqaAnswer>,
}

#[derive(Deserialize)]
struct VqaAnswer {
    answer: String,
}

pub fn parse_vqa(questions: &str, annotations: Option<&str>) -> Result<DatasetManifest, DataError> {
    let qs: VqaQuestions =
        serde_json::from_str(questions).map_err(|e| DataError::json("questions", e))?;
    let mut answers: HashMap<u64, VqaAnnotation> = HashMap::new();
    if let Some(text) = annotations {
        let anns: VqaAnnotations =
            serde_json::from_str(text).map_err(|e| DataError::json("annotations", e))?;
        for a in anns.annotations {
            let id = a.question_id;
            if answers.insert(id, a).is_some() {
                return Err(DataError::DuplicateId {
                    kind: "annotation",
                    id,
                });
            }
        }
    }

    let mut seen = HashSet::new();
    let mut manifest = DatasetManifest::default();
    for q in qs.questions {
        if seen.insert(q.image_id) {
            manifest.images.push(ImageEntry::new(q.image_id));
        }
        let mut question = Question::new(q.question_id, q.image_id, q.question);
        question.choices = q.multiple_choices;
        if let Some(a) = answers.remove(&q.question_id) {
            if a.image_id != q.image_id {
                return Err(DataError::Invalid(format!(
                    "annotation for question {} names image {}, question names {}",
                    q.question_id, a.image_id, q.image_id
                )));
            }
            question.answer = Some(a.multiple_choice_answer);
            question.human_answers = a.answers.into_iter().map(|h| h.answer).collect();
        }
        manifest.questions.push(question);
    }
    if let Some(orphan) = answers.keys().min() {
        return Err(DataError::Invalid(format!(
            "annotation for unknown question {orphan}"
        )));
    }
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_vqa(
    questions: impl AsRef<Path>,
    annotations: Option<&Path>,
) -> Result<DatasetManifest, DataError> {
    let text = |p: &Path| {
        String::from_utf8(read_file(p)?)
            .map_err(|e| DataError::Invalid(format!("{}: {e}", p.display())))
    };
    let q = text(questions.as_ref())?;
    let a = annotations.map(text).transpose()?;
    parse_vqa(&q, a.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::parse_dataset;

    const QUESTIONS: &str = r#"{"task_type": "Multiple-Choice", "questions": [
        {"question_id": 11, "image_id": 1, "question": "What is the man holding?",
         "multiple_choices": ["kite", "bat", "cup"]},
        {"question_id": 21, "image_id": 2, "question": "How many dogs?",
         "multiple_choices": ["1", "2", "3"]},
        {"question_id": 12, "image_id": 1, "question": "Is it sunny?",
         "multiple_choices": ["yes", "no"]},
        {"question_id": 31, "image_id": 3, "question": "What color is the bus?",
         "multiple_choices": ["red", "blue"]}]}"#;

    const ANNOTATIONS: &str = r#"{"annotations": [
        {"question_id": 11, "image_id": 1, "answer_type": "other",
         "multiple_choice_answer": "kite", "answers": [{"answer": "kite", "answer_id": 1}]},
        {"question_id": 21, "image_id": 2, "multiple_choice_answer": "2",
         "answers": [{"answer": "2"}, {"answer": "two"}]},
        {"question_id": 31, "image_id": 3, "multiple_choice_answer": "red"}]}"#;

    const NATIVE: &str = r#"{"images": [{"image_id": 1}, {"image_id": 2}, {"image_id": 3}],
        "questions": [
        {"id": 11, "image_id": 1, "text": "What is the man holding?", "answer": "kite",
         "choices": ["kite", "bat", "cup"], "human_answers": ["kite"]},
        {"id": 21, "image_id": 2, "text": "How many dogs?", "answer": "2",
         "choices": ["1", "2", "3"], "human_answers": ["2", "two"]},
        {"id": 12, "image_id": 1, "text": "Is it sunny?", "choices": ["yes", "no"]},
        {"id": 31, "image_id": 3, "text": "What color is the bus?", "answer": "red",
         "choices": ["red", "blue"]}]}"#;

    #[test]
    fn adapter_matches_native() {
        let adapted = parse_vqa(QUESTIONS, Some(ANNOTATIONS)).unwrap();
        let native = parse_dataset(NATIVE, "native.json").unwrap();
        assert_eq!(adapted, native);
        assert_eq!(parse_dataset(&adapted.to_json(), "rt.json").unwrap(), adapted);
    }

    #[test]
    fn questions_only() {
        let m = parse_vqa(QUESTIONS, None).unwrap();
        assert!(m.questions.iter().all(|q| q.answer.is_none()));
        assert_eq!(m.images.len(), 3);
    }

    #[test]
    fn orphan_annotation_rejected() {
        let anns = r#"{"annotations": [{"question_id": 99, "image_id": 1, "multiple_choice_answer": "x"}]}"#;
        assert!(matches!(parse_vqa(QUESTIONS, Some(anns)), Err(DataError::Invalid(_))));
    }
}
