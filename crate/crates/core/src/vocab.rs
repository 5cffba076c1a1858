//! Word vocabularies, bag-of-words features, tf-idf ranking and the
//! multi-label word targets used to train a question-aware image model.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qparse::{tokenize, Extractor, ImageId, Question};

/// Number of words kept by [`WordTargetMode::Tfidf1024`].
pub const TFIDF_TARGET_WORDS: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("requested top {k} words from a vocabulary of {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("unknown word-target mode {0:?} (expected full, tfidf1024 or classes80)")]
    UnknownMode(String),
    #[error("word {0:?} appears twice in the vocabulary")]
    DuplicateWord(String),
    #[error("vocabulary line {0} is empty")]
    EmptyLine(usize),
    #[error(transparent)]
    Extract(#[from] crate::qparse::ExtractError),
}

/// An ordered list of unique words; a word's position is its feature index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Result<Self, VocabError> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(VocabError::DuplicateWord(w.clone()));
            }
        }
        Ok(Self { words, index })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// One word per line; the line number is the word's position.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let mut words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                return Err(VocabError::EmptyLine(i + 1));
            }
            words.push(line.to_string());
        }
        Self::from_words(words)
    }
}

fn token_counts<'a>(texts: impl IntoIterator<Item = &'a str>) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for text in texts {
        for tok in tokenize(text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    counts
}

/// Build a vocabulary of every token seen at least `min_count` times,
/// ordered by descending frequency and then lexicographically.
pub fn build_vocabulary(corpus: &[Question], min_count: usize) -> Result<Vocabulary, VocabError> {
    if min_count == 0 {
        return Err(VocabError::InvalidMinCount);
    }
    if corpus.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let counts = token_counts(corpus.iter().map(|q| q.text.as_str()));
    let mut entries: Vec<(String, usize)> =
        counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_words(entries.into_iter().map(|(w, _)| w).collect())
}

/// Sparse token counts over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BowVector {
    entries: BTreeMap<usize, u32>,
    vocab_size: usize,
}

impl BowVector {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            vocab_size,
        }
    }

    /// Panics if `position` is outside the vocabulary.
    pub fn add(&mut self, position: usize, count: u32) {
        assert!(position < self.vocab_size, "position {position} out of range");
        if count > 0 {
            *self.entries.entry(position).or_insert(0) += count;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().map(|(&p, &c)| (p, c))
    }

    pub fn get(&self, position: usize) -> u32 {
        self.entries.get(&position).copied().unwrap_or(0)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().map(|&c| c as u64).sum()
    }

    /// Elementwise sum; both vectors must share a vocabulary size.
    pub fn merged(&self, other: &BowVector) -> BowVector {
        assert_eq!(self.vocab_size, other.vocab_size);
        let mut out = self.clone();
        for (p, c) in other.entries() {
            out.add(p, c);
        }
        out
    }
}

/// Count in-vocabulary tokens of `text`; unknown tokens are dropped.
pub fn bow_featurize(text: &str, vocab: &Vocabulary) -> BowVector {
    let mut bow = BowVector::new(vocab.len());
    for tok in tokenize(text) {
        if let Some(p) = vocab.position(&tok) {
            bow.add(p, 1);
        }
    }
    bow
}

/// Featurize several questions as one concatenated string.
pub fn bow_featurize_all<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
) -> BowVector {
    let mut bow = BowVector::new(vocab.len());
    for text in texts {
        for tok in tokenize(text) {
            if let Some(p) = vocab.position(&tok) {
                bow.add(p, 1);
            }
        }
    }
    bow
}

/// tf-idf score of every vocabulary word, in vocabulary order.
///
/// A document is the concatenation of all questions of one image. `tf` is
/// the word's total count in the corpus and `idf = ln(N / (1 + df))`.
pub fn tfidf_scores(corpus: &[Question], vocab: &Vocabulary) -> Vec<f64> {
    let mut docs: BTreeMap<ImageId, HashSet<usize>> = BTreeMap::new();
    let mut tf = vec![0usize; vocab.len()];
    for q in corpus {
        let doc = docs.entry(q.image_id).or_default();
        for tok in tokenize(&q.text) {
            if let Some(p) = vocab.position(&tok) {
                tf[p] += 1;
                doc.insert(p);
            }
        }
    }
    let mut df = vec![0usize; vocab.len()];
    for doc in docs.values() {
        for &p in doc {
            df[p] += 1;
        }
    }
    let n_docs = docs.len() as f64;
    tf.iter()
        .zip(&df)
        .map(|(&tf, &df)| tf as f64 * (n_docs / (1.0 + df as f64)).ln())
        .collect()
}

/// The `k` highest-scoring words by tf-idf, ties broken lexicographically.
pub fn tfidf_rank(
    corpus: &[Question],
    vocab: &Vocabulary,
    k: usize,
) -> Result<Vec<String>, VocabError> {
    if k > vocab.len() {
        return Err(VocabError::KTooLarge {
            k,
            size: vocab.len(),
        });
    }
    let scores = tfidf_scores(corpus, vocab);
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| vocab.words[a].cmp(&vocab.words[b]))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| vocab.words[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordTargetMode {
    /// Presence of every vocabulary word.
    Full,
    /// Presence of the top-1024 tf-idf words.
    Tfidf1024,
    /// The 80-class object vector extracted from the questions.
    Classes80,
}

impl FromStr for WordTargetMode {
    type Err = VocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "tfidf1024" | "tfidf-1024" | "tfidf" => Ok(Self::Tfidf1024),
            "classes80" | "classes-80" | "classes" => Ok(Self::Classes80),
            _ => Err(VocabError::UnknownMode(s.to_string())),
        }
    }
}

impl fmt::Display for WordTargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Tfidf1024 => "tfidf1024",
            Self::Classes80 => "classes80",
        })
    }
}

/// Binary multi-label target for one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordTarget {
    pub image_id: ImageId,
    pub labels: Vec<u8>,
}

impl WordTarget {
    pub fn indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn record(&self) -> WordTargetRecord {
        WordTargetRecord {
            image_id: self.image_id,
            indices: self.indices(),
        }
    }
}

/// Serialized form of a [`WordTarget`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordTargetRecord {
    pub image_id: ImageId,
    pub indices: Vec<usize>,
}

/// Questions of one image.
pub type ImageQuestions = (ImageId, Vec<Question>);

/// The label space of a word-target mode: word list (or class names).
pub fn target_space(
    groups: &[ImageQuestions],
    mode: WordTargetMode,
    vocab: &Vocabulary,
    extractor: &Extractor<'_>,
) -> Result<Vec<String>, VocabError> {
    Ok(match mode {
        WordTargetMode::Full => vocab.words().to_vec(),
        WordTargetMode::Tfidf1024 => {
            let corpus: Vec<Question> = groups.iter().flat_map(|(_, qs)| qs.clone()).collect();
            tfidf_rank(&corpus, vocab, TFIDF_TARGET_WORDS.min(vocab.len()))?
        }
        WordTargetMode::Classes80 => extractor
            .vocabulary()
            .classes()
            .iter()
            .map(|c| c.name.clone())
            .collect(),
    })
}

/// Multi-label word targets, one per image group, in input order.
///
/// `Tfidf1024` keeps at most 1024 words; smaller vocabularies are used whole.
pub fn word_targets(
    groups: &[ImageQuestions],
    mode: WordTargetMode,
    vocab: &Vocabulary,
    extractor: &Extractor<'_>,
) -> Result<Vec<WordTarget>, VocabError> {
    match mode {
        WordTargetMode::Classes80 => groups
            .iter()
            .map(|(image_id, qs)| {
                let set = extractor.extract_multi(qs)?;
                Ok(WordTarget {
                    image_id: *image_id,
                    labels: set.vector,
                })
            })
            .collect(),
        WordTargetMode::Full | WordTargetMode::Tfidf1024 => {
            let space = target_space(groups, mode, vocab, extractor)?;
            let sub = Vocabulary::from_words(space)?;
            Ok(groups
                .iter()
                .map(|(image_id, qs)| {
                    let mut labels = vec![0u8; sub.len()];
                    for q in qs {
                        for tok in tokenize(&q.text) {
                            if let Some(p) = sub.position(&tok) {
                                labels[p] = 1;
                            }
                        }
                    }
                    WordTarget {
                        image_id: *image_id,
                        labels,
                    }
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qparse::{ObjectVocabulary, QuestionTypeTable};
    use proptest::prelude::*;

    fn q(id: u64, image: u64, text: &str) -> Question {
        Question::new(id, image, text)
    }

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_words(words.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn build_orders_by_frequency_then_word() {
        let corpus = [q(1, 1, "is the cat red"), q(2, 2, "is the cat big")];
        let v = build_vocabulary(&corpus, 2).unwrap();
        assert_eq!(v.words(), ["cat", "is", "the"]);
        let v = build_vocabulary(&corpus, 1).unwrap();
        assert_eq!(v.words(), ["cat", "is", "the", "big", "red"]);
    }

    #[test]
    fn build_edge_cases() {
        let v = build_vocabulary(&[q(1, 1, "a")], 2).unwrap();
        assert!(v.is_empty());
        assert_eq!(build_vocabulary(&[], 1), Err(VocabError::EmptyCorpus));
        assert_eq!(
            build_vocabulary(&[q(1, 1, "a")], 0),
            Err(VocabError::InvalidMinCount)
        );
    }

    #[test]
    fn text_round_trip_and_validation() {
        let v = vocab(&["cat", "is", "the"]);
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert_eq!(
            Vocabulary::from_text("a\na\n"),
            Err(VocabError::DuplicateWord("a".into()))
        );
        assert_eq!(Vocabulary::from_text("a\n\nb\n"), Err(VocabError::EmptyLine(2)));
    }

    #[test]
    fn featurize_counts_and_drops_oov() {
        let v = vocab(&["the", "cat"]);
        let bow = bow_featurize("the cat the", &v);
        assert_eq!(bow.get(0), 2);
        assert_eq!(bow.get(1), 1);
        assert_eq!(bow.total(), 3);
        assert!(bow_featurize("zebra", &v).is_empty());
    }

    #[test]
    fn idf_of_ubiquitous_word_is_negative() {
        let corpus = [q(1, 1, "the cat"), q(2, 2, "the dog"), q(3, 3, "the cow")];
        let v = vocab(&["cat", "dog", "the"]);
        let scores = tfidf_scores(&corpus, &v);
        assert!(scores[2] < 0.0);
        assert!((scores[2] - 3.0 * (3.0f64 / 4.0).ln()).abs() < 1e-12);
        let ranked = tfidf_rank(&corpus, &v, 3).unwrap();
        assert_eq!(ranked.last().unwrap(), "the");
        assert_eq!(
            tfidf_rank(&corpus, &v, 4),
            Err(VocabError::KTooLarge { k: 4, size: 3 })
        );
    }

    #[test]
    fn tfidf_matches_brute_force_on_toy_corpus() {
        // three documents (images); image 1 has two questions
        let corpus = [
            q(1, 1, "what color is the bus"),
            q(2, 1, "is the bus red"),
            q(3, 2, "what is the dog eating"),
            q(4, 3, "is the dog red or brown"),
        ];
        let v = build_vocabulary(&corpus, 1).unwrap();
        // independent computation: explicit document strings
        let docs = [
            "what color is the bus is the bus red",
            "what is the dog eating",
            "is the dog red or brown",
        ];
        let mut brute: Vec<(String, f64)> = v
            .words()
            .iter()
            .map(|w| {
                let tf: usize = docs
                    .iter()
                    .map(|d| d.split(' ').filter(|t| t == w).count())
                    .sum();
                let df = docs.iter().filter(|d| d.split(' ').any(|t| t == w)).count();
                (w.clone(), tf as f64 * (3.0 / (1.0 + df as f64)).ln())
            })
            .collect();
        brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expected: Vec<String> = brute.into_iter().map(|(w, _)| w).collect();
        assert_eq!(tfidf_rank(&corpus, &v, v.len()).unwrap(), expected);
        // bus: tf 2, df 1 -> 2 ln 1.5, the top word
        assert_eq!(expected[0], "bus");
    }

    #[test]
    fn word_targets_modes() {
        let objects = ObjectVocabulary::builtin();
        let table = QuestionTypeTable::builtin();
        let ex = Extractor::new(&objects, &table);
        let v = vocab(&["cat", "red", "dog"]);
        let groups = vec![(7, vec![q(1, 7, "is the cat red")]), (8, vec![])];
        let full = word_targets(&groups, WordTargetMode::Full, &v, &ex).unwrap();
        assert_eq!(full[0].labels, [1, 1, 0]);
        assert_eq!(full[1].labels, [0, 0, 0]);
        assert_eq!(full[0].record().indices, [0, 1]);

        let groups = vec![(9, vec![q(1, 9, "What color is the bus?")])];
        let cls = word_targets(&groups, WordTargetMode::Classes80, &v, &ex).unwrap();
        assert_eq!(cls[0].labels.len(), 80);
        assert_eq!(cls[0].indices(), [objects.index_of("bus").unwrap()]);

        let tf = word_targets(&groups, WordTargetMode::Tfidf1024, &v, &ex).unwrap();
        assert_eq!(tf[0].labels.len(), 3);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("full".parse::<WordTargetMode>().unwrap(), WordTargetMode::Full);
        assert_eq!(
            "tfidf1024".parse::<WordTargetMode>().unwrap(),
            WordTargetMode::Tfidf1024
        );
        assert_eq!(
            "bogus".parse::<WordTargetMode>(),
            Err(VocabError::UnknownMode("bogus".into()))
        );
    }

    fn word_strategy() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["the", "cat", "dog", "red", "is", "zebra", "what"])
            .prop_map(str::to_string)
    }

    proptest! {
        #[test]
        fn featurize_is_additive(a in prop::collection::vec(word_strategy(), 0..12),
                                 b in prop::collection::vec(word_strategy(), 0..12)) {
            let v = vocab(&["the", "cat", "dog", "red", "is"]);
            let (a, b) = (a.join(" "), b.join(" "));
            let joined = bow_featurize(&format!("{a} {b}"), &v);
            prop_assert_eq!(joined, bow_featurize(&a, &v).merged(&bow_featurize(&b, &v)));
        }

        #[test]
        fn featurize_ignores_order(mut words in prop::collection::vec(word_strategy(), 0..12)) {
            let v = vocab(&["the", "cat", "dog", "red", "is"]);
            let fwd = bow_featurize(&words.join(" "), &v);
            words.reverse();
            prop_assert_eq!(fwd, bow_featurize(&words.join(" "), &v));
        }

        #[test]
        fn tfidf_top_k_is_prefix(texts in prop::collection::vec(
            prop::collection::vec(word_strategy(), 1..6), 1..8), k in 0usize..5) {
            let corpus: Vec<Question> = texts.iter().enumerate()
                .map(|(i, ws)| q(i as u64, (i % 3) as u64, &ws.join(" ")))
                .collect();
            let v = build_vocabulary(&corpus, 1).unwrap();
            prop_assume!(k < v.len());
            let small = tfidf_rank(&corpus, &v, k).unwrap();
            let big = tfidf_rank(&corpus, &v, k + 1).unwrap();
            prop_assert_eq!(&big[..k], &small[..]);
        }

        #[test]
        fn vocabulary_build_is_deterministic(texts in prop::collection::vec(
            prop::collection::vec(word_strategy(), 1..6), 1..8)) {
            let corpus: Vec<Question> = texts.iter().enumerate()
                .map(|(i, ws)| q(i as u64, 0, &ws.join(" ")))
                .collect();
            let v1 = build_vocabulary(&corpus, 1).unwrap();
            let mut rev = corpus.clone();
            rev.reverse();
            prop_assert_eq!(v1, build_vocabulary(&rev, 1).unwrap());
        }
    }
}
