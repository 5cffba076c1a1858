use std::collections::BTreeSet;

use super::lemma::{normalize_token, tokenize};
use super::{
    ExtractError, LabelSet, ObjectVocabulary, Question, QuestionType, QuestionTypeTable,
};

/// Function words that never count as the noun an adjective modifies.
const CLOSED_CLASS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "is", "are", "was", "were", "be", "been",
    "am", "do", "does", "did", "has", "have", "had", "can", "could", "will", "would", "should",
    "may", "might", "must", "and", "or", "but", "nor", "of", "in", "on", "at", "to", "for",
    "with", "from", "by", "about", "into", "onto", "over", "under", "near", "behind", "above",
    "below", "next", "between", "through", "up", "down", "out", "off", "it", "its", "he", "she",
    "they", "them", "his", "her", "their", "there", "here", "what", "which", "who", "whom",
    "whose", "where", "when", "why", "how", "not", "no", "yes", "very", "so", "too", "also",
    "made", "like", "than", "as", "if", "then", "all", "any", "some", "each", "other", "one",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    /// Drop a class word that directly precedes another noun
    /// ("orange cones"), approximating an adjective check without a tagger.
    pub adjective_filter: bool,
}

/// Object extraction bound to a vocabulary and question-type table.
#[derive(Debug, Clone, Copy)]
pub struct Extractor<'a> {
    vocab: &'a ObjectVocabulary,
    table: &'a QuestionTypeTable,
    options: ExtractOptions,
}

fn looks_like_noun(token: &str) -> bool {
    token.chars().all(|c| c.is_alphabetic() || c == '-')
        && !CLOSED_CLASS.contains(&token)
        && !token.ends_with("ing")
        && !token.ends_with("ed")
        && !token.ends_with("ly")
}

impl<'a> Extractor<'a> {
    pub fn new(vocab: &'a ObjectVocabulary, table: &'a QuestionTypeTable) -> Self {
        Self {
            vocab,
            table,
            options: ExtractOptions::default(),
        }
    }

    pub fn with_options(mut self, options: ExtractOptions) -> Self {
        self.options = options;
        self
    }

    pub fn vocabulary(&self) -> &ObjectVocabulary {
        self.vocab
    }

    pub fn extract(&self, question: &Question) -> Result<LabelSet, ExtractError> {
        if question.text.trim().is_empty() {
            return Err(ExtractError::MalformedQuestion(question.id));
        }
        let tokens = tokenize(&question.text);
        if self.table.classify_tokens(&tokens) == QuestionType::Unconfirmed {
            return Ok(LabelSet::empty(self.vocab.len()));
        }
        Ok(self.vocab.label_set(self.match_classes(&tokens)))
    }

    fn match_classes(&self, tokens: &[String]) -> BTreeSet<usize> {
        let lemmas: Vec<String> = tokens.iter().map(|t| normalize_token(t)).collect();
        let mut consumed = vec![false; lemmas.len()];
        let mut found = BTreeSet::new();

        // Multi-word forms first; exact in-order n-grams, longest first at
        // each position. Covered tokens cannot signal anything else.
        for start in 0..lemmas.len() {
            if consumed[start] {
                continue;
            }
            for (phrase, class) in self.vocab.phrases() {
                let end = start + phrase.len();
                if end <= lemmas.len() && lemmas[start..end] == phrase[..] {
                    consumed[start..end].iter_mut().for_each(|c| *c = true);
                    found.insert(*class);
                    break;
                }
            }
        }

        for (i, lemma) in lemmas.iter().enumerate() {
            if consumed[i] {
                continue;
            }
            let Some(class) = self.vocab.word_class(lemma) else {
                continue;
            };
            if self.options.adjective_filter
                && tokens.get(i + 1).is_some_and(|next| looks_like_noun(next))
            {
                continue;
            }
            found.insert(class);
        }

        // a phrase class and its colliding single-word class never co-occur
        for class in found.clone() {
            if self.vocab.classes()[class].is_phrase {
                for other in self.vocab.collisions(class) {
                    found.remove(other);
                }
            }
        }
        found
    }

    /// Union of the label sets of questions about one image.
    pub fn extract_multi<'q>(
        &self,
        questions: impl IntoIterator<Item = &'q Question>,
    ) -> Result<LabelSet, ExtractError> {
        let mut image = None;
        let mut labels = LabelSet::empty(self.vocab.len());
        for q in questions {
            match image {
                None => image = Some(q.image_id),
                Some(id) if id != q.image_id => {
                    return Err(ExtractError::MixedImages(id, q.image_id))
                }
                _ => {}
            }
            labels = labels.union(&self.extract(q)?);
        }
        Ok(labels)
    }
}

pub fn extract_objects(
    question: &Question,
    vocab: &ObjectVocabulary,
    table: &QuestionTypeTable,
) -> Result<LabelSet, ExtractError> {
    Extractor::new(vocab, table).extract(question)
}

pub fn extract_objects_multi(
    questions: &[Question],
    vocab: &ObjectVocabulary,
    table: &QuestionTypeTable,
) -> Result<LabelSet, ExtractError> {
    Extractor::new(vocab, table).extract_multi(questions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(text: &str) -> Vec<String> {
        let vocab = ObjectVocabulary::builtin();
        let table = QuestionTypeTable::builtin();
        let q = Question::new(1, 1, text);
        extract_objects(&q, &vocab, &table)
            .unwrap()
            .present
            .into_iter()
            .collect()
    }

    #[test]
    fn table_two_questions() {
        assert_eq!(labels("What color is the bus?"), ["bus"]);
        assert_eq!(
            labels("Are people waiting for the food truck?"),
            ["person", "truck"]
        );
        assert_eq!(labels("How many umbrellas are in the image?"), ["umbrella"]);
        assert_eq!(
            labels("Is the bird sitting on a plant?"),
            ["bird", "potted plant"]
        );
    }

    #[test]
    fn phrase_exclusivity() {
        assert_eq!(
            labels("What does this teddy bear have on its neck?"),
            ["teddy bear"]
        );
        assert_eq!(labels("Does the bear love you?"), ["bear"]);
        assert_eq!(
            labels("Does the teddy bear look like a real bear?"),
            ["teddy bear"]
        );
        assert_eq!(labels("How many hot dogs are there?"), ["hot dog"]);
        assert_eq!(labels("What color is the dog?"), ["dog"]);
    }

    #[test]
    fn phrase_order_matters() {
        // permuted phrase words are not matched as the phrase
        assert_eq!(labels("What color is the bear teddy?"), ["bear"]);
        assert_eq!(labels("How many dog hots are there?"), ["dog"]);
    }

    #[test]
    fn super_categories_and_synonyms() {
        assert_eq!(labels("Which foot will kick the soccer ball?"), ["sports ball"]);
        assert_eq!(
            labels("Are the men playing rugby or football?"),
            ["person", "sports ball"]
        );
        assert_eq!(labels("What color is the jet plane?"), ["airplane"]);
        assert_eq!(labels("How many private planes are there?"), ["airplane"]);
        assert_eq!(labels("What color is the traffic signal?"), ["traffic light"]);
        assert_eq!(labels("Where is the hair dryer?"), ["hair drier"]);
        assert_eq!(labels("Where is the microwave oven?"), ["microwave"]);
    }

    #[test]
    fn unconfirmed_questions_are_empty() {
        assert!(labels("Is there a zebra in the photo?").is_empty());
        assert!(labels("Is this a cat?").is_empty());
        assert!(labels("Zebra?").is_empty());
    }

    #[test]
    fn adjective_filter_suppresses_modifiers() {
        let vocab = ObjectVocabulary::builtin();
        let table = QuestionTypeTable::builtin();
        let ex = Extractor::new(&vocab, &table).with_options(ExtractOptions {
            adjective_filter: true,
        });
        let q = Question::new(1, 1, "How many orange cones are there?");
        assert!(ex.extract(&q).unwrap().is_empty());
        let plain = Extractor::new(&vocab, &table).extract(&q).unwrap();
        assert!(plain.contains("orange"));
        let q = Question::new(2, 1, "How many oranges are in the bowl?");
        let set = ex.extract(&q).unwrap();
        assert!(set.contains("orange") && set.contains("bowl"));
    }

    #[test]
    fn empty_text_is_malformed() {
        let vocab = ObjectVocabulary::builtin();
        let table = QuestionTypeTable::builtin();
        let q = Question::new(7, 1, "   ");
        assert_eq!(
            extract_objects(&q, &vocab, &table),
            Err(ExtractError::MalformedQuestion(7))
        );
    }

    #[test]
    fn multi_unions_and_checks_images() {
        let vocab = ObjectVocabulary::builtin();
        let table = QuestionTypeTable::builtin();
        let qs = [
            Question::new(1, 5, "What color is the bus?"),
            Question::new(2, 5, "Is there a zebra?"),
        ];
        let set = extract_objects_multi(&qs, &vocab, &table).unwrap();
        assert_eq!(set.present.iter().collect::<Vec<_>>(), ["bus"]);
        assert!(extract_objects_multi(&[], &vocab, &table).unwrap().is_empty());
        let mixed = [qs[0].clone(), Question::new(3, 6, "What color is the cat?")];
        assert_eq!(
            extract_objects_multi(&mixed, &vocab, &table),
            Err(ExtractError::MixedImages(5, 6))
        );
    }
}
