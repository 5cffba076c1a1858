use serde::Serialize;

use super::{softmax, LinearModel, ModelError, Sample};
use crate::exec::Exec;
use crate::qparse::Question;
use crate::vocab::{bow_featurize, bow_featurize_all, BowVector, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub answer: String,
    pub index: usize,
    pub probabilities: Vec<f64>,
}

/// One question to answer.
#[derive(Debug, Clone, Copy)]
pub struct PredictRequest<'a> {
    pub image: &'a [f64],
    pub target: &'a Question,
    /// `None` and `Some(&[])` both give a zero extra block.
    pub extra: Option<&'a [Question]>,
}

fn sample(req: &PredictRequest<'_>, vocab: &Vocabulary) -> Sample {
    let extra = match req.extra {
        Some(qs) => bow_featurize_all(qs.iter().map(|q| q.text.as_str()), vocab),
        None => BowVector::new(vocab.len()),
    };
    Sample {
        image: req.image.to_vec(),
        target: bow_featurize(&req.target.text, vocab),
        extra,
    }
}

/// Lowest index among the maxima.
fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Answer probabilities for a prepared sample.
pub fn predict_sample(model: &LinearModel, sample: &Sample) -> Result<Prediction, ModelError> {
    let probabilities = softmax(&model.logits(&model.features(sample)?)?);
    let index = argmax(&probabilities);
    Ok(Prediction {
        answer: model.answer_vocab[index].clone(),
        index,
        probabilities,
    })
}

/// Most probable answer for one question.
pub fn predict(
    model: &LinearModel,
    vocab: &Vocabulary,
    req: &PredictRequest<'_>,
) -> Result<Prediction, ModelError> {
    predict_sample(model, &sample(req, vocab))
}

pub fn predict_batch(
    model: &LinearModel,
    vocab: &Vocabulary,
    reqs: &[PredictRequest<'_>],
    exec: Exec,
) -> Result<Vec<Prediction>, ModelError> {
    exec.map(reqs, |r| predict(model, vocab, r)).into_iter().collect()
}

/// Pick among `choices` by model probability.
///
/// Choices outside the answer vocabulary never win unless none is in it,
/// in which case the first choice is returned. Ties go to the earlier
/// choice.
pub fn predict_multiple_choice(
    model: &LinearModel,
    vocab: &Vocabulary,
    req: &PredictRequest<'_>,
    choices: &[String],
) -> Result<String, ModelError> {
    if choices.is_empty() {
        return Err(ModelError::NoChoices);
    }
    let p = predict(model, vocab, req)?.probabilities;
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in choices.iter().enumerate() {
        if let Some(a) = model.answer_index(c) {
            if best.is_none_or(|(_, bp)| p[a] > bp) {
                best = Some((i, p[a]));
            }
        }
    }
    Ok(choices[best.map_or(0, |(i, _)| i)].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, Matrix};

    fn vocab() -> Vocabulary {
        Vocabulary::from_words(["cat", "dog", "what", "is"].map(String::from).to_vec()).unwrap()
    }

    /// Extra word "dog" pushes answer 1 above answer 0.
    fn hand_model() -> LinearModel {
        let dims = Dims { d_img: 2, d_target: 2, d_extra: 2, n_answers: 2, vocab_size: 4 };
        let mut m = LinearModel::zeros(dims, vec!["no".into(), "yes".into()]).unwrap();
        m.embed_extra = Matrix::from_vec(4, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        m.fc_bias = vec![0.5, 0.0];
        m.fc_weights.set(1, 4, 2.0);
        m
    }

    #[test]
    fn extras_flip_argmax() {
        let m = hand_model();
        let q = Question::new(1, 1, "what is it");
        let extra = [Question::new(2, 1, "is the dog big")];
        let base = PredictRequest { image: &[1.0, 0.0], target: &q, extra: None };
        assert_eq!(predict(&m, &vocab(), &base).unwrap().answer, "no");
        let with = PredictRequest { extra: Some(&extra), ..base };
        assert_eq!(predict(&m, &vocab(), &with).unwrap().answer, "yes");
    }

    #[test]
    fn empty_extras_equal_absent() {
        let m = hand_model();
        let q = Question::new(1, 1, "what is the cat");
        let a = PredictRequest { image: &[0.3, 0.4], target: &q, extra: None };
        let b = PredictRequest { extra: Some(&[]), ..a };
        assert_eq!(predict(&m, &vocab(), &a).unwrap(), predict(&m, &vocab(), &b).unwrap());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let dims = Dims { d_img: 1, d_target: 1, d_extra: 1, n_answers: 3, vocab_size: 4 };
        let m = LinearModel::zeros(dims, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let q = Question::new(1, 1, "cat");
        let r = PredictRequest { image: &[1.0], target: &q, extra: None };
        assert_eq!(predict(&m, &vocab(), &r).unwrap().index, 0);
        let choices = ["c".to_string(), "b".to_string()];
        assert_eq!(predict_multiple_choice(&m, &vocab(), &r, &choices).unwrap(), "c");
    }

    #[test]
    fn multiple_choice_rules() {
        let m = hand_model();
        let q = Question::new(1, 1, "what");
        let extra = [Question::new(2, 1, "dog")];
        let r = PredictRequest { image: &[1.0, 0.0], target: &q, extra: Some(&extra) };
        let v = vocab();
        let oov = ["maybe".to_string(), "never".to_string()];
        assert_eq!(predict_multiple_choice(&m, &v, &r, &oov).unwrap(), "maybe");
        let one = ["no".to_string()];
        assert_eq!(predict_multiple_choice(&m, &v, &r, &one).unwrap(), "no");
        let mixed = ["maybe".to_string(), "no".to_string(), "yes".to_string()];
        assert_eq!(predict_multiple_choice(&m, &v, &r, &mixed).unwrap(), "yes");
        assert_eq!(predict_multiple_choice(&m, &v, &r, &[]), Err(ModelError::NoChoices));
    }

    #[test]
    fn batch_matches_single() {
        let m = hand_model();
        let q = Question::new(1, 1, "what is the dog");
        let reqs: Vec<_> = (0..10)
            .map(|i| PredictRequest { image: if i % 2 == 0 { &[1.0, 0.0] } else { &[0.0, 1.0] }, target: &q, extra: None })
            .collect();
        let seq = predict_batch(&m, &vocab(), &reqs, Exec::Sequential).unwrap();
        let par = predict_batch(&m, &vocab(), &reqs, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
    }
}
