use std::collections::BTreeMap;

use super::{dot, embed_bow, LinearModel, Matrix, ModelError, Sample, NORM_EPS};
use crate::exec::Exec;
use crate::vocab::BowVector;

/// Gradients of the mean loss; embedding gradients are stored sparsely by
/// vocabulary row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embed_target: BTreeMap<usize, Vec<f64>>,
    pub embed_extra: BTreeMap<usize, Vec<f64>>,
    pub fc_weights: Matrix,
    pub fc_bias: Vec<f64>,
}

impl Gradients {
    fn zeros(model: &LinearModel) -> Self {
        Self {
            embed_target: BTreeMap::new(),
            embed_extra: BTreeMap::new(),
            fc_weights: Matrix::zeros(model.fc_weights.rows(), model.fc_weights.cols()),
            fc_bias: vec![0.0; model.fc_bias.len()],
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self
            .fc_weights
            .as_mut_slice()
            .iter_mut()
            .zip(other.fc_weights.as_slice())
        {
            *a += b;
        }
        for (a, b) in self.fc_bias.iter_mut().zip(&other.fc_bias) {
            *a += b;
        }
        for (mine, theirs) in [
            (&mut self.embed_target, &other.embed_target),
            (&mut self.embed_extra, &other.embed_extra),
        ] {
            for (row, g) in theirs {
                match mine.get_mut(row) {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    None => {
                        mine.insert(*row, g.clone());
                    }
                }
            }
        }
    }

    fn scale(&mut self, s: f64) {
        self.fc_weights.as_mut_slice().iter_mut().for_each(|g| *g *= s);
        self.fc_bias.iter_mut().for_each(|g| *g *= s);
        for rows in [&mut self.embed_target, &mut self.embed_extra] {
            rows.values_mut().flatten().for_each(|g| *g *= s);
        }
    }

    /// Dense `vocab_size x d` copy of a sparse embedding gradient.
    pub fn dense(rows: &BTreeMap<usize, Vec<f64>>, vocab_size: usize, dim: usize) -> Matrix {
        let mut m = Matrix::zeros(vocab_size, dim);
        for (r, g) in rows {
            m.row_mut(*r).copy_from_slice(g);
        }
        m
    }
}

/// Backward pass through `l2_normalize`: `(I - u u^T) g / ||v||` where
/// `u = v / ||v||`; identity when the norm is at or below the threshold.
fn normalize_backward(v: &[f64], upstream: &[f64]) -> Vec<f64> {
    let norm = dot(v, v).sqrt();
    if norm <= NORM_EPS {
        return upstream.to_vec();
    }
    let u: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let proj = dot(&u, upstream);
    upstream
        .iter()
        .zip(&u)
        .map(|(g, ui)| (g - ui * proj) / norm)
        .collect()
}

fn scatter(rows: &mut BTreeMap<usize, Vec<f64>>, bow: &BowVector, grad: &[f64]) {
    for (word, count) in bow.entries() {
        let c = count as f64;
        let acc = rows.entry(word).or_insert_with(|| vec![0.0; grad.len()]);
        acc.iter_mut().zip(grad).for_each(|(a, g)| *a += c * g);
    }
}

/// Summed (not averaged) loss and gradients over `batch`.
fn accumulate(
    model: &LinearModel,
    batch: &[(Sample, usize)],
) -> Result<(f64, Gradients), ModelError> {
    let d = model.dims();
    let mut grads = Gradients::zeros(model);
    let mut loss = 0.0;
    for (sample, label) in batch {
        if *label >= d.n_answers {
            return Err(ModelError::BadLabel {
                label: *label,
                n_answers: d.n_answers,
            });
        }
        let raw_t = embed_bow(&sample.target, &model.embed_target)?;
        let raw_e = embed_bow(&sample.extra, &model.embed_extra)?;
        let block = model.features(sample)?;
        let z = block.concat();
        let logits = model.logits(&block)?;

        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        loss += max + sum_exp.ln() - logits[*label];

        let mut delta: Vec<f64> = logits.iter().map(|l| (l - max).exp() / sum_exp).collect();
        delta[*label] -= 1.0;

        let mut dz = vec![0.0; z.len()];
        for (a, &da) in delta.iter().enumerate() {
            grads.fc_bias[a] += da;
            let w = model.fc_weights.row(a);
            for ((g, zi), (dzi, wi)) in grads
                .fc_weights
                .row_mut(a)
                .iter_mut()
                .zip(&z)
                .zip(dz.iter_mut().zip(w))
            {
                *g += da * zi;
                *dzi += da * wi;
            }
        }

        let t_range = d.d_img..d.d_img + d.d_target;
        let e_range = d.d_img + d.d_target..d.input_dim();
        if !sample.target.is_empty() {
            let g = normalize_backward(&raw_t, &dz[t_range]);
            scatter(&mut grads.embed_target, &sample.target, &g);
        }
        if !sample.extra.is_empty() {
            let g = normalize_backward(&raw_e, &dz[e_range]);
            scatter(&mut grads.embed_extra, &sample.extra, &g);
        }
    }
    Ok((loss, grads))
}

/// Mean cross-entropy over `batch` and its gradient with respect to every
/// parameter, including through the per-block normalization.
pub fn loss_and_grad(
    model: &LinearModel,
    batch: &[(Sample, usize)],
) -> Result<(f64, Gradients), ModelError> {
    loss_and_grad_with(model, batch, Exec::Sequential, 0)
}

/// [`loss_and_grad`] with the batch split into fixed-size shards.
///
/// With `Exec::Parallel` and `shard_size > 0`, shards are processed
/// concurrently and reduced in shard order, so the result is independent
/// of the thread count but may differ from the sequential sum in the last
/// bits.
pub fn loss_and_grad_with(
    model: &LinearModel,
    batch: &[(Sample, usize)],
    exec: Exec,
    shard_size: usize,
) -> Result<(f64, Gradients), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let (mut loss, mut grads) = if exec == Exec::Parallel && shard_size > 0 {
        let shards: Vec<&[(Sample, usize)]> = batch.chunks(shard_size).collect();
        let parts = exec.map(&shards, |shard| accumulate(model, shard));
        let mut total_loss = 0.0;
        let mut total = Gradients::zeros(model);
        for part in parts {
            let (l, g) = part?;
            total_loss += l;
            total.add_assign(&g);
        }
        (total_loss, total)
    } else {
        accumulate(model, batch)?
    };
    let inv = 1.0 / batch.len() as f64;
    loss *= inv;
    grads.scale(inv);
    Ok((loss, grads))
}

/// Mean cross-entropy without gradients.
pub fn mean_loss(model: &LinearModel, batch: &[(Sample, usize)]) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut total = 0.0;
    for (sample, label) in batch {
        let logits = model.logits(&model.features(sample)?)?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        total += max + sum_exp.ln() - logits[*label];
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(seed: u64) -> LinearModel {
        let dims = Dims {
            d_img: 4,
            d_target: 3,
            d_extra: 3,
            n_answers: 3,
            vocab_size: 5,
        };
        let mut m = LinearModel::zeros(dims, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in m.parameters_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        m
    }

    fn bow(entries: &[(usize, u32)]) -> BowVector {
        let mut b = BowVector::new(5);
        for &(p, c) in entries {
            b.add(p, c);
        }
        b
    }

    fn batch() -> Vec<(Sample, usize)> {
        vec![
            (
                Sample {
                    image: vec![0.3, -0.2, 0.9, 0.1],
                    target: bow(&[(0, 1), (2, 2)]),
                    extra: bow(&[(1, 1), (4, 1)]),
                },
                2,
            ),
            (
                Sample {
                    image: vec![-0.5, 0.4, 0.0, 0.7],
                    target: bow(&[(3, 1)]),
                    extra: BowVector::new(5),
                },
                0,
            ),
        ]
    }

    #[test]
    fn uniform_model_loss_is_log_n() {
        let dims = Dims {
            d_img: 4,
            d_target: 3,
            d_extra: 3,
            n_answers: 3,
            vocab_size: 5,
        };
        let m = LinearModel::zeros(dims, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let (loss, _) = loss_and_grad(&m, &batch()).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_batch_is_invariant() {
        let m = random_model(1);
        let b = batch();
        let mut doubled = b.clone();
        doubled.extend(b.clone());
        let (l1, g1) = loss_and_grad(&m, &b).unwrap();
        let (l2, g2) = loss_and_grad(&m, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.fc_weights.as_slice().iter().zip(g2.fc_weights.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
        for (row, g) in &g1.embed_target {
            for (a, b) in g.iter().zip(&g2.embed_target[row]) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_batch_and_bad_label() {
        let m = random_model(2);
        assert_eq!(loss_and_grad(&m, &[]).unwrap_err(), ModelError::EmptyBatch);
        let mut b = batch();
        b[0].1 = 3;
        assert!(matches!(
            loss_and_grad(&m, &b),
            Err(ModelError::BadLabel { .. })
        ));
    }

    #[test]
    fn sharded_matches_sequential() {
        let m = random_model(3);
        let mut b = batch();
        b.extend(batch());
        b.extend(batch());
        let (l1, g1) = loss_and_grad(&m, &b).unwrap();
        let (l2, g2) = loss_and_grad_with(&m, &b, Exec::Parallel, 2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.fc_bias.iter().zip(&g2.fc_bias) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(
            g1.embed_target.keys().collect::<Vec<_>>(),
            g2.embed_target.keys().collect::<Vec<_>>()
        );
    }

    #[test]
    fn mean_loss_agrees() {
        let m = random_model(4);
        let b = batch();
        let (l, _) = loss_and_grad(&m, &b).unwrap();
        assert!((l - mean_loss(&m, &b).unwrap()).abs() < 1e-14);
    }
}
