use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lemma::{normalize_token, tokenize};
use super::TableError;

const DEFAULT_VOCABULARY: &str = include_str!("../../data/objects.toml");

/// Number of object classes every vocabulary must define.
pub const NUM_CLASSES: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectClass {
    pub name: String,
    #[serde(default)]
    pub synonyms: BTreeSet<String>,
    #[serde(default)]
    pub subterms: BTreeSet<String>,
    #[serde(skip)]
    pub is_phrase: bool,
}

#[derive(Debug, Deserialize)]
struct RawVocabulary {
    class: Vec<ObjectClass>,
}

/// The 80 target classes plus the lookup tables that drive extraction.
#[derive(Debug, Clone)]
pub struct ObjectVocabulary {
    classes: Vec<ObjectClass>,
    by_name: HashMap<String, usize>,
    /// lemmatized single word -> class
    words: HashMap<String, usize>,
    /// lemmatized multi-word forms -> class, longest first
    phrases: Vec<(Vec<String>, usize)>,
    /// for each phrase class, the classes it excludes from a label set
    collisions: Vec<BTreeSet<usize>>,
}

fn lemmas(form: &str) -> Vec<String> {
    tokenize(form).iter().map(|t| normalize_token(t)).collect()
}

impl ObjectVocabulary {
    pub fn new(mut classes: Vec<ObjectClass>) -> Result<Self, TableError> {
        if classes.len() != NUM_CLASSES {
            return Err(TableError::Invalid(format!(
                "object vocabulary must have {NUM_CLASSES} classes, found {}",
                classes.len()
            )));
        }
        let mut by_name = HashMap::new();
        let mut words: HashMap<String, usize> = HashMap::new();
        let mut phrase_map: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for (idx, class) in classes.iter_mut().enumerate() {
            if by_name.insert(class.name.clone(), idx).is_some() {
                return Err(TableError::Invalid(format!(
                    "duplicate class name {:?}",
                    class.name
                )));
            }
            let name_tokens = lemmas(&class.name);
            if name_tokens.is_empty() {
                return Err(TableError::Invalid("empty class name".into()));
            }
            class.is_phrase = name_tokens.len() > 1;
            let forms = std::iter::once(&class.name)
                .chain(&class.synonyms)
                .chain(&class.subterms);
            for form in forms {
                let tokens = lemmas(form);
                let owner = match tokens.len() {
                    0 => return Err(TableError::Invalid(format!("empty form in {:?}", class.name))),
                    1 => *words.entry(tokens[0].clone()).or_insert(idx),
                    _ => *phrase_map.entry(tokens).or_insert(idx),
                };
                if owner != idx {
                    return Err(TableError::Invalid(format!(
                        "form {form:?} of {:?} is already claimed by another class",
                        class.name
                    )));
                }
            }
        }

        let mut phrases: Vec<_> = phrase_map.into_iter().collect();
        phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));

        // single-word canonical names, lemmatized
        let canonical: HashMap<String, usize> = classes
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_phrase)
            .map(|(i, c)| (lemmas(&c.name).remove(0), i))
            .collect();
        let mut collisions = vec![BTreeSet::new(); classes.len()];
        for (tokens, owner) in &phrases {
            if !classes[*owner].is_phrase {
                continue;
            }
            for token in tokens {
                if let Some(&other) = canonical.get(token) {
                    if other != *owner {
                        collisions[*owner].insert(other);
                    }
                }
            }
        }

        Ok(Self {
            classes,
            by_name,
            words,
            phrases,
            collisions,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TableError> {
        let raw: RawVocabulary =
            toml::from_str(text).map_err(|e| TableError::Parse(e.to_string()))?;
        Self::new(raw.class)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TableError::Io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    /// The vocabulary shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_VOCABULARY).expect("bundled object vocabulary is valid")
    }

    pub fn classes(&self) -> &[ObjectClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.classes[idx].name
    }

    pub(crate) fn word_class(&self, lemma: &str) -> Option<usize> {
        self.words.get(lemma).copied()
    }

    pub(crate) fn phrases(&self) -> &[(Vec<String>, usize)] {
        &self.phrases
    }

    /// Classes that may not co-occur with phrase class `idx` in one label set.
    pub fn collisions(&self, idx: usize) -> &BTreeSet<usize> {
        &self.collisions[idx]
    }

    pub fn label_set(&self, indices: impl IntoIterator<Item = usize>) -> LabelSet {
        let mut vector = vec![0u8; self.classes.len()];
        let mut present = BTreeSet::new();
        for idx in indices {
            vector[idx] = 1;
            present.insert(self.classes[idx].name.clone());
        }
        LabelSet { present, vector }
    }

    /// Build a label set from class names; unknown names are rejected.
    pub fn label_set_from_names<S: AsRef<str>>(
        &self,
        names: impl IntoIterator<Item = S>,
    ) -> Result<LabelSet, TableError> {
        let mut indices = Vec::new();
        for name in names {
            let name = name.as_ref();
            let idx = self
                .index_of(name)
                .ok_or_else(|| TableError::Invalid(format!("unknown object class {name:?}")))?;
            indices.push(idx);
        }
        Ok(self.label_set(indices))
    }
}

/// A set of object classes, kept both by name and as a binary class vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub present: BTreeSet<String>,
    pub vector: Vec<u8>,
}

impl LabelSet {
    pub fn empty(num_classes: usize) -> Self {
        Self {
            present: BTreeSet::new(),
            vector: vec![0; num_classes],
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.present.contains(name)
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.vector
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        LabelSet {
            present: self.present.union(&other.present).cloned().collect(),
            vector: self
                .vector
                .iter()
                .zip(&other.vector)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }
}
