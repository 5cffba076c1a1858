mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsup::augment::{generate_all, AugmentMode};
use qsup::dataio::{load_features, load_model, save_features, save_model};
use qsup::model::{predict, train, PredictRequest, TrainConfig};
use qsup::qparse::Question;
use qsup::Exec;

#[test]
fn loaded_model_predicts_like_in_memory_model() {
    let world = common::extras_world(21, 80, 0);
    let exemplars = generate_all(&world.train, AugmentMode::Powerset, Exec::Sequential).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        embed_dim: 12,
        ..TrainConfig::default()
    };
    let model = train(exemplars, &world.features, &world.vocab, &cfg).unwrap().model;

    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path().join("m.qsmd"), &model).unwrap();
    save_features(dir.path().join("f.qvft"), &world.features).unwrap();
    let loaded = load_model(dir.path().join("m.qsmd")).unwrap();
    assert_eq!(loaded, model);
    let stored = load_features(dir.path().join("f.qvft")).unwrap();
    for (id, row) in &world.features {
        let rounded: Vec<f64> = row.iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(stored[id], rounded);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let words = world.vocab.words();
    for i in 0..10 {
        let image: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut sentence = |k: usize| {
            (0..k)
                .map(|_| words[rng.gen_range(0..words.len())].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let target = Question::new(i, 0, sentence(4));
        let extra = vec![Question::new(100 + i, 0, sentence(5))];
        let req = PredictRequest {
            image: &image,
            target: &target,
            extra: Some(&extra),
        };
        let a = predict(&model, &world.vocab, &req).unwrap();
        let b = predict(&loaded, &world.vocab, &req).unwrap();
        assert_eq!(a.answer, b.answer);
        let bits = |p: &[f64]| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.probabilities), bits(&b.probabilities));
    }
}

#[test]
fn epoch_loss_does_not_increase_early_on() {
    let (exemplars, features, vocab) = common::separable(12, 500);
    let cfg = TrainConfig {
        epochs: 5,
        track_loss: true,
        ..TrainConfig::default()
    };
    let report = train(exemplars, &features, &vocab, &cfg).unwrap().report;
    let losses = &report.epoch_losses;
    assert_eq!(losses.len(), 5);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0], "{losses:?}");
    }
}

#[test]
fn parallel_and_sequential_training_agree() {
    let (exemplars, features, vocab) = common::separable(13, 300);
    let mut cfg = TrainConfig {
        epochs: 3,
        batch_size: 200,
        embed_dim: 16,
        ..TrainConfig::default()
    };
    cfg.exec = Exec::Sequential;
    let seq = train(exemplars.clone(), &features, &vocab, &cfg).unwrap().model;
    cfg.exec = Exec::available();
    let par = train(exemplars, &features, &vocab, &cfg).unwrap().model;
    for (a, b) in seq.parameters().zip(par.parameters()) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}
