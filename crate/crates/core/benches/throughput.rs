use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsup::augment::{generate_all, AugmentMode, ImageRecord};
use qsup::eval::bootstrap_ci;
use qsup::model::{loss_and_grad_with, predict_batch, LinearModel, PredictRequest, Sample};
use qsup::qparse::{Extractor, ObjectVocabulary, Question, QuestionTypeTable};
use qsup::vocab::{bow_featurize, build_vocabulary, Vocabulary};
use qsup::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

const TEMPLATES: [&str; 6] = [
    "What color is the {} next to the table?",
    "How many {}s are in the picture?",
    "Is there a {} in the photo?",
    "Where is the {} sitting?",
    "Are the people looking at the {}?",
    "What is the {} doing near the teddy bear?",
];
const NOUNS: [&str; 8] = ["dog", "bus", "umbrella", "hot dog", "plant", "jet plane", "football", "cat"];

fn corpus(n_images: u64, per_image: u64) -> Vec<ImageRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..n_images)
        .map(|img| {
            let mut r = ImageRecord::new(img);
            for k in 0..per_image {
                let text = TEMPLATES[rng.gen_range(0..TEMPLATES.len())]
                    .replace("{}", NOUNS[rng.gen_range(0..NOUNS.len())]);
                let q = Question::new(img * 100 + k, img, text);
                if k < 2 {
                    r.answered.push(q.with_answer(["yes", "no", "2", "red"][rng.gen_range(0..4)]));
                } else {
                    r.unanswered.push(q);
                }
            }
            r
        })
        .collect()
}

fn questions(records: &[ImageRecord]) -> Vec<Question> {
    records.iter().flat_map(|r| r.all_questions().cloned()).collect()
}

fn random_model(vocab: &Vocabulary, d_img: usize, dim: usize, answers: usize) -> LinearModel {
    let dims = qsup::model::Dims {
        d_img,
        d_target: dim,
        d_extra: dim,
        n_answers: answers,
        vocab_size: vocab.len(),
    };
    let names = (0..answers).map(|i| format!("a{i}")).collect();
    let mut m = LinearModel::zeros(dims, names).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in m.parameters_mut() {
        *p = rng.gen_range(-0.1..0.1);
    }
    m
}

fn extraction(c: &mut Criterion) {
    let qs = questions(&corpus(2000, 5));
    let objects = ObjectVocabulary::builtin();
    let types = QuestionTypeTable::builtin();
    let ex = Extractor::new(&objects, &types);
    let mut g = c.benchmark_group("extract_10k_questions");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| exec.map(&qs, |q| ex.extract(q).unwrap())));
    }
    g.finish();
}

fn augmentation(c: &mut Criterion) {
    let records = corpus(2000, 5);
    let mut g = c.benchmark_group("powerset_2k_images");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| generate_all(black_box(&records), AugmentMode::Powerset, exec).unwrap())
        });
    }
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scores: Vec<f64> = (0..5000).map(|_| rng.gen_bool(0.6) as u8 as f64).collect();
    let mut g = c.benchmark_group("bootstrap_5k_x_2k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| bootstrap_ci(&scores, 0.999, 2000, 3, exec).unwrap()));
    }
    g.finish();
}

fn model(c: &mut Criterion) {
    let records = corpus(500, 5);
    let qs = questions(&records);
    let vocab = build_vocabulary(&qs, 1).unwrap();
    let d_img = 512;
    let m = random_model(&vocab, d_img, 256, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let images: Vec<Vec<f64>> = (0..qs.len())
        .map(|_| (0..d_img).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let reqs: Vec<PredictRequest> = qs
        .iter()
        .zip(&images)
        .map(|(q, image)| PredictRequest {
            image,
            target: q,
            extra: None,
        })
        .collect();
    let mut g = c.benchmark_group("predict_2500");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| predict_batch(&m, &vocab, &reqs, exec).unwrap()));
    }
    g.finish();

    let batch: Vec<(Sample, usize)> = qs
        .iter()
        .zip(&images)
        .take(512)
        .enumerate()
        .map(|(i, (q, image))| {
            let s = Sample {
                image: image.clone(),
                target: bow_featurize(&q.text, &vocab),
                extra: bow_featurize(&qs[(i + 1) % qs.len()].text, &vocab),
            };
            (s, i % 1000)
        })
        .collect();
    let mut g = c.benchmark_group("gradient_batch_512");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, 64), &batch, |b, batch| {
            b.iter(|| loss_and_grad_with(&m, batch, exec, 64).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, extraction, augmentation, bootstrap, model);
criterion_main!(benches);
