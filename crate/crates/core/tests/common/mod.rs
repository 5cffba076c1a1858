#![allow(dead_code)]

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsup::augment::{Exemplar, ImageRecord};
use qsup::dataio::{save_dataset, save_features, DatasetManifest, ImageEntry};
use qsup::model::FeatureTable;
use qsup::qparse::Question;
use qsup::vocab::{build_vocabulary, Vocabulary};

pub const NOISE: [&str; 12] = [
    "big", "small", "old", "new", "left", "right", "near", "far", "wet", "dry", "round", "flat",
];

fn noise_words(rng: &mut ChaCha8Rng, k: usize) -> String {
    (0..k)
        .map(|_| *NOISE.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn image_noise(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0f32) as f64).collect()
}

/// `n` single-question images whose answer is fixed by one word: "alpha"
/// means "yes", "beta" means "no". About 60% are "yes".
pub fn separable(seed: u64, n: usize) -> (Vec<Exemplar>, FeatureTable, Vocabulary) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = FeatureTable::new();
    let mut exemplars = Vec::new();
    let mut questions = Vec::new();
    for i in 0..n as u64 {
        let yes = rng.gen_bool(0.6);
        let (word, answer) = if yes { ("alpha", "yes") } else { ("beta", "no") };
        let k = rng.gen_range(1..4);
        let text = format!("is the {} {word} {}", noise_words(&mut rng, k), noise_words(&mut rng, 1));
        let q = Question::new(i, i, text).with_answer(answer);
        features.insert(i, image_noise(&mut rng, 8));
        questions.push(q.clone());
        exemplars.push(Exemplar {
            image_id: i,
            feature_ref: i,
            target: q,
            extra: Vec::new(),
            answer: answer.into(),
        });
    }
    let vocab = build_vocabulary(&questions, 1).unwrap();
    (exemplars, features, vocab)
}

/// Images whose answer combines a group read from the image features with a
/// colour word that only the unanswered questions mention. The answered
/// question itself is generic.
pub struct ExtrasWorld {
    pub train: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
    pub features: FeatureTable,
    pub vocab: Vocabulary,
}

pub fn extras_world(seed: u64, n_train: usize, n_test: usize) -> ExtrasWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = FeatureTable::new();
    let mut records = Vec::new();
    let mut corpus = Vec::new();
    let mut qid = 0u64;
    for img in 0..(n_train + n_test) as u64 {
        let group = rng.gen_range(0..2usize);
        let bit = rng.gen_range(0..2usize);
        let colour = ["red", "blue"][bit];
        let mut x = image_noise(&mut rng, 6);
        for v in x.iter_mut() {
            *v *= 0.3;
        }
        x[group] += 1.0;
        features.insert(img, x);

        let target = ["what is it", "what is shown", "what do you see"]
            .choose(&mut rng)
            .unwrap();
        let answer = format!("{}-{colour}", ["cat", "dog"][group]);
        let mut record = ImageRecord::new(img);
        qid += 1;
        record
            .answered
            .push(Question::new(qid, img, *target).with_answer(answer));
        for template in ["is the {} ball {}", "where is the {} box {}"] {
            qid += 1;
            let noise = noise_words(&mut rng, 1);
            let text = template.replacen("{}", colour, 1).replacen("{}", &noise, 1);
            record.unanswered.push(Question::new(qid, img, text));
        }
        corpus.extend(record.all_questions().cloned());
        records.push(record);
    }
    let test = records.split_off(n_train);
    ExtrasWorld {
        train: records,
        test,
        features,
        vocab: build_vocabulary(&corpus, 1).unwrap(),
    }
}

/// A small native dataset with features and a run config in `dir`.
/// Returns the config path.
pub fn write_run_fixture(dir: &Path, seed: u64) -> std::path::PathBuf {
    let world = extras_world(seed, 40, 20);
    let to_manifest = |records: &[ImageRecord]| DatasetManifest {
        images: records.iter().map(|r| ImageEntry::new(r.image_id)).collect(),
        questions: records.iter().flat_map(|r| r.all_questions().cloned()).collect(),
    };
    let mut test = to_manifest(&world.test);
    for q in &mut test.questions {
        if let Some(a) = &q.answer {
            let other = if a.starts_with("cat") { "dog-red" } else { "cat-red" };
            let mut choices = vec![a.clone(), other.to_string(), "maybe".to_string()];
            choices.dedup();
            q.choices = Some(choices);
        }
    }
    save_dataset(dir.join("train.json"), &to_manifest(&world.train)).unwrap();
    save_dataset(dir.join("test.json"), &test).unwrap();
    save_features(dir.join("features.qvft"), &world.features).unwrap();
    let cfg = format!(
        r#"seed = {seed}

[paths]
dataset = "train.json"
features = "features.qvft"
test_dataset = "test.json"
test_features = "features.qvft"
output_dir = "out"

[modes]
augment = "powerset"
test_extras = true

[train]
learning_rate = 0.5
epochs = 5
batch_size = 16
embed_dim = 16
"#
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}
