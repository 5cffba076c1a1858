use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, write_file, DataError};
use crate::augment::ImageRecord;
use crate::qparse::{ImageId, Question};
use crate::vocab::ImageQuestions;

/// One image of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub image_id: ImageId,
    /// Key into the feature file; defaults to the image id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_ref: Option<u64>,
    /// Ground-truth object class names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_labels: Option<Vec<String>>,
}

impl ImageEntry {
    pub fn new(image_id: ImageId) -> Self {
        Self {
            image_id,
            feature_ref: None,
            gt_labels: None,
        }
    }

    pub fn feature_key(&self) -> u64 {
        self.feature_ref.unwrap_or(self.image_id)
    }
}

/// The native dataset format: a JSON object with `images` and `questions`.
///
/// ```json
/// {
///   "images": [{"image_id": 1, "feature_ref": 1, "gt_labels": ["dog"]}],
///   "questions": [{"id": 10, "image_id": 1, "text": "What is the dog doing?",
///                  "answer": "sleeping", "choices": ["sleeping", "eating"]}]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub images: Vec<ImageEntry>,
    pub questions: Vec<Question>,
}

impl DatasetManifest {
    /// Unique ids, no dangling image references, and a multiple-choice
    /// list that contains the answer when both are given.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut images = HashSet::new();
        for img in &self.images {
            if !images.insert(img.image_id) {
                return Err(DataError::DuplicateId {
                    kind: "image",
                    id: img.image_id,
                });
            }
        }
        let mut questions = HashSet::new();
        for q in &self.questions {
            if !questions.insert(q.id) {
                return Err(DataError::DuplicateId {
                    kind: "question",
                    id: q.id,
                });
            }
            if !images.contains(&q.image_id) {
                return Err(DataError::DanglingReference {
                    question: q.id,
                    image: q.image_id,
                });
            }
            if let (Some(a), Some(c)) = (&q.answer, &q.choices) {
                if !c.contains(a) {
                    return Err(DataError::Invalid(format!(
                        "question {}: answer {a:?} is not among its choices",
                        q.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Questions grouped by image, in image order; images without questions
    /// are included with an empty list.
    pub fn groups(&self) -> Vec<ImageQuestions> {
        let mut by_image: BTreeMap<ImageId, Vec<Question>> = BTreeMap::new();
        for q in &self.questions {
            by_image.entry(q.image_id).or_default().push(q.clone());
        }
        self.images
            .iter()
            .map(|img| (img.image_id, by_image.remove(&img.image_id).unwrap_or_default()))
            .collect()
    }

    /// One record per image; questions with an answer are the answered set.
    pub fn records(&self) -> Vec<ImageRecord> {
        self.images
            .iter()
            .zip(self.groups())
            .map(|(img, (_, qs))| {
                let (answered, unanswered) = qs.into_iter().partition(|q| q.answer.is_some());
                ImageRecord {
                    image_id: img.image_id,
                    feature_ref: img.feature_key(),
                    answered,
                    unanswered,
                }
            })
            .collect()
    }

    /// Rebuild a manifest from records, keeping the image entries of `self`
    /// for images that are present in `records`.
    pub fn with_records(&self, records: &[ImageRecord]) -> DatasetManifest {
        let entries: BTreeMap<ImageId, &ImageEntry> =
            self.images.iter().map(|e| (e.image_id, e)).collect();
        DatasetManifest {
            images: records
                .iter()
                .map(|r| {
                    entries.get(&r.image_id).map_or_else(
                        || ImageEntry {
                            feature_ref: Some(r.feature_ref),
                            ..ImageEntry::new(r.image_id)
                        },
                        |e| (*e).clone(),
                    )
                })
                .collect(),
            questions: records
                .iter()
                .flat_map(|r| r.all_questions().cloned())
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn parse_dataset(text: &str, name: &str) -> Result<DatasetManifest, DataError> {
    let manifest: DatasetManifest = serde_json::from_str(text).map_err(|e| DataError::json(name, e))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetManifest, DataError> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
    parse_dataset(&text, &path.display().to_string())
}

pub fn save_dataset(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<(), DataError> {
    write_file(path.as_ref(), format!("{}\n", manifest.to_json()).as_bytes())
}
