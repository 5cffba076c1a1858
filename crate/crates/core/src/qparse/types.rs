use std::path::Path;

use serde::Deserialize;

use super::lemma::tokenize;
use super::TableError;

const DEFAULT_TABLE: &str = include_str!("../../data/question_types.toml");

/// Whether a question type presupposes the objects the question mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Confirmed,
    Unconfirmed,
}

#[derive(Debug, Deserialize)]
struct RawTable {
    confirmed: Vec<String>,
    unconfirmed: Vec<String>,
}

/// The confirmed and unconfirmed question-type prefixes.
#[derive(Debug, Clone)]
pub struct QuestionTypeTable {
    confirmed: Vec<String>,
    unconfirmed: Vec<String>,
    // (prefix tokens, type), sorted by descending token count
    prefixes: Vec<(Vec<String>, QuestionType)>,
}

impl QuestionTypeTable {
    pub fn new(confirmed: Vec<String>, unconfirmed: Vec<String>) -> Result<Self, TableError> {
        let mut seen = std::collections::HashSet::new();
        let mut prefixes = Vec::with_capacity(confirmed.len() + unconfirmed.len());
        for (entries, kind) in [
            (&confirmed, QuestionType::Confirmed),
            (&unconfirmed, QuestionType::Unconfirmed),
        ] {
            for entry in entries {
                if entry.is_empty() || entry.trim() != entry || entry.to_lowercase() != *entry {
                    return Err(TableError::Invalid(format!(
                        "question type {entry:?} must be non-empty, trimmed and lowercase"
                    )));
                }
                if !seen.insert(entry.clone()) {
                    return Err(TableError::Invalid(format!(
                        "question type {entry:?} is listed twice"
                    )));
                }
                prefixes.push((tokenize(entry), kind));
            }
        }
        // stable sort keeps the file order among equal lengths
        prefixes.sort_by_key(|p| std::cmp::Reverse(p.0.len()));
        Ok(Self {
            confirmed,
            unconfirmed,
            prefixes,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TableError> {
        let raw: RawTable = toml::from_str(text).map_err(|e| TableError::Parse(e.to_string()))?;
        Self::new(raw.confirmed, raw.unconfirmed)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TableError::Io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_TABLE).expect("bundled question-type table is valid")
    }

    pub fn confirmed(&self) -> &[String] {
        &self.confirmed
    }

    pub fn unconfirmed(&self) -> &[String] {
        &self.unconfirmed
    }

    /// Longest listed prefix of `tokens`, compared word by word.
    pub fn longest_match(&self, tokens: &[String]) -> Option<(&[String], QuestionType)> {
        self.prefixes
            .iter()
            .find(|(prefix, _)| tokens.starts_with(prefix))
            .map(|(prefix, kind)| (prefix.as_slice(), *kind))
    }

    /// Classify question text; unmatched questions are `Unconfirmed`.
    pub fn classify_text(&self, text: &str) -> QuestionType {
        self.classify_tokens(&tokenize(text))
    }

    pub fn classify_tokens(&self, tokens: &[String]) -> QuestionType {
        self.longest_match(tokens)
            .map(|(_, kind)| kind)
            .unwrap_or(QuestionType::Unconfirmed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_is_disjoint_and_complete() {
        let table = QuestionTypeTable::builtin();
        assert_eq!(table.confirmed().len() + table.unconfirmed().len(), 64);
        for c in table.confirmed() {
            assert!(!table.unconfirmed().contains(c), "{c}");
        }
    }

    #[test]
    fn longest_prefix_wins() {
        let table = QuestionTypeTable::builtin();
        assert_eq!(
            table.classify_text("What is the man wearing?"),
            QuestionType::Confirmed
        );
        assert_eq!(
            table.classify_text("What is the weather like?"),
            QuestionType::Unconfirmed
        );
        assert_eq!(
            table.classify_text("Is there a zebra in the photo?"),
            QuestionType::Unconfirmed
        );
        assert_eq!(
            table.classify_text("How many different flowers are on the table?"),
            QuestionType::Confirmed
        );
        // "is" must match whole words only
        assert_eq!(
            table.classify_text("Isn't this a cat?"),
            QuestionType::Unconfirmed
        );
    }

    #[test]
    fn unmatched_is_unconfirmed() {
        let table = QuestionTypeTable::builtin();
        assert_eq!(table.classify_text("Zebras?"), QuestionType::Unconfirmed);
        assert_eq!(table.classify_text(""), QuestionType::Unconfirmed);
    }

    #[test]
    fn rejects_overlapping_lists() {
        let err = QuestionTypeTable::new(vec!["how many".into()], vec!["how many".into()]);
        assert!(err.is_err());
        let err = QuestionTypeTable::new(vec!["How".into()], vec![]);
        assert!(err.is_err());
    }
}
