//! Small deterministic learners wrapped as environments, standing in for
//! heavyweight targets at desk scale.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng;

use crate::data::{SplitPair, TabularDataset};
use crate::error::{Error, Result};
use crate::seed;

use super::{Environment, HyperparamSpec, HyperparamVector, Scale};

/// Which learner an environment trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyLearner {
    /// Multiclass logistic regression with L2 penalty, full-batch gradient
    /// descent. Hyperparameters: learning_rate, l2, epochs.
    RidgeLogistic,
    /// One-vs-rest least-squares boosting of depth-1 stumps.
    /// Hyperparameters: n_rounds, learning_rate, max_bins.
    BoostedStumps,
}

/// A [`ToyLearner`] with its hyperparameter schema and a seed for the
/// learner's own randomness (weight initialization).
#[derive(Debug, Clone)]
pub struct LearnerEnv {
    kind: ToyLearner,
    specs: Vec<HyperparamSpec>,
    seed: u64,
}

/// Build the environment for a toy learner.
pub fn toy_learner_env(kind: ToyLearner, seed: u64) -> LearnerEnv {
    let specs = match kind {
        ToyLearner::RidgeLogistic => vec![
            HyperparamSpec::real("learning_rate", 1e-4, 1.0, Scale::Log10),
            HyperparamSpec::real("l2", 1e-6, 10.0, Scale::Log10),
            HyperparamSpec::integer("epochs", 1.0, 200.0),
        ],
        ToyLearner::BoostedStumps => vec![
            HyperparamSpec::integer("n_rounds", 1.0, 300.0),
            HyperparamSpec::real("learning_rate", 1e-3, 1.0, Scale::Log10),
            HyperparamSpec::integer("max_bins", 2.0, 64.0),
        ],
    };
    LearnerEnv { kind, specs, seed }
}

impl Environment for LearnerEnv {
    fn specs(&self) -> &[HyperparamSpec] {
        &self.specs
    }

    fn evaluate(&self, p: &HyperparamVector, split: &SplitPair<TabularDataset>) -> Result<f64> {
        p.validate_against(&self.specs)?;
        let train = &split.train;
        if train.n_rows() == 0 || split.test.n_rows() == 0 {
            return Err(Error::EmptyInput("split side is empty".into()));
        }
        let first = train.labels[0];
        if train.labels.iter().all(|&l| l == first) {
            return Err(Error::DegenerateSplit);
        }
        match self.kind {
            ToyLearner::RidgeLogistic => {
                let lr = p.values[0];
                let l2 = p.values[1];
                let epochs = p.values[2] as usize;
                ridge_logistic(train, &split.test, lr, l2, epochs, self.seed)
            }
            ToyLearner::BoostedStumps => {
                let rounds = p.values[0] as usize;
                let lr = p.values[1];
                let bins = p.values[2] as usize;
                boosted_stumps(train, &split.test, rounds, lr, bins)
            }
        }
    }
}

fn accuracy(scores: impl Iterator<Item = usize>, labels: &[usize]) -> f64 {
    let correct = scores.zip(labels).filter(|(p, l)| p == *l).count();
    correct as f64 / labels.len() as f64
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn ridge_logistic(
    train: &TabularDataset,
    test: &TabularDataset,
    lr: f64,
    l2: f64,
    epochs: usize,
    rng_seed: u64,
) -> Result<f64> {
    let f = train.n_features;
    let k = train.n_classes;
    let n = train.n_rows();

    let mut rng = seed::rng(rng_seed);
    let mut weights: Vec<f64> = (0..k * f).map(|_| rng.gen_range(-0.01..=0.01)).collect();
    let mut bias = vec![0.0; k];

    let mut grad_w = vec![0.0; k * f];
    let mut grad_b = vec![0.0; k];
    let mut probs = vec![0.0; k];
    for _ in 0..epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        grad_b.iter_mut().for_each(|g| *g = 0.0);
        for row in 0..n {
            let x = train.row(row);
            softmax_into(&weights, &bias, x, &mut probs);
            for c in 0..k {
                let delta = probs[c] - f64::from(u8::from(train.labels[row] == c));
                grad_b[c] += delta;
                for (g, xv) in grad_w[c * f..(c + 1) * f].iter_mut().zip(x) {
                    *g += delta * xv;
                }
            }
        }
        let scale = 1.0 / n as f64;
        let mut ok = true;
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= lr * (g * scale + l2 * *w);
            ok &= w.is_finite();
        }
        for (b, g) in bias.iter_mut().zip(&grad_b) {
            *b -= lr * g * scale;
            ok &= b.is_finite();
        }
        if !ok {
            // Divergence guard: report chance-level fit rather than NaN.
            return Ok(0.0);
        }
    }

    let mut p = vec![0.0; k];
    Ok(accuracy(
        (0..test.n_rows()).map(|row| {
            softmax_into(&weights, &bias, test.row(row), &mut p);
            argmax(&p)
        }),
        &test.labels,
    ))
}

fn softmax_into(weights: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let f = x.len();
    for (c, o) in out.iter_mut().enumerate() {
        let mut z = bias[c];
        for (w, xv) in weights[c * f..(c + 1) * f].iter().zip(x) {
            z += w * xv;
        }
        *o = z;
    }
    let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// One regression stump: predicts `left` below the threshold, `right` above.
struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

fn boosted_stumps(
    train: &TabularDataset,
    test: &TabularDataset,
    rounds: usize,
    lr: f64,
    bins: usize,
) -> Result<f64> {
    let f = train.n_features;
    let k = train.n_classes;
    let n = train.n_rows();

    // Candidate thresholds: interior edges of `bins` uniform bins per feature.
    let mut thresholds: Vec<Vec<f64>> = Vec::with_capacity(f);
    for j in 0..f {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in 0..n {
            let v = train.row(row)[j];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let mut edges = Vec::new();
        if hi > lo {
            for b in 1..bins {
                edges.push(lo + (hi - lo) * b as f64 / bins as f64);
            }
        }
        thresholds.push(edges);
    }

    // One additive model per class on 0/1 targets.
    let mut base = vec![0.0; k];
    let mut models: Vec<Vec<Stump>> = (0..k).map(|_| Vec::new()).collect();
    let mut scores = vec![0.0; n * k];
    for c in 0..k {
        let pos = train.labels.iter().filter(|&&l| l == c).count();
        base[c] = pos as f64 / n as f64;
        for row in 0..n {
            scores[row * k + c] = base[c];
        }
    }

    let mut residual = vec![0.0; n];
    for _ in 0..rounds {
        for c in 0..k {
            for row in 0..n {
                let y = f64::from(u8::from(train.labels[row] == c));
                residual[row] = y - scores[row * k + c];
            }
            let Some(stump) = best_stump(train, &thresholds, &residual) else {
                continue;
            };
            for row in 0..n {
                let v = train.row(row)[stump.feature];
                let pred = if v <= stump.threshold {
                    stump.left
                } else {
                    stump.right
                };
                scores[row * k + c] += lr * pred;
            }
            models[c].push(stump);
        }
    }

    Ok(accuracy(
        (0..test.n_rows()).map(|row| {
            let x = test.row(row);
            let mut best_c = 0;
            let mut best_v = f64::NEG_INFINITY;
            for c in 0..k {
                let mut s = base[c];
                for st in &models[c] {
                    s += lr * if x[st.feature] <= st.threshold {
                        st.left
                    } else {
                        st.right
                    };
                }
                if s > best_v {
                    best_v = s;
                    best_c = c;
                }
            }
            best_c
        }),
        &test.labels,
    ))
}

/// Least-squares best stump over all (feature, threshold) candidates;
/// ties keep the first candidate in (feature, threshold) order.
fn best_stump(train: &TabularDataset, thresholds: &[Vec<f64>], residual: &[f64]) -> Option<Stump> {
    let n = train.n_rows();
    let total: f64 = residual.iter().sum();
    let mut best: Option<(f64, Stump)> = None;
    for (j, edges) in thresholds.iter().enumerate() {
        for &t in edges {
            let (mut sum_l, mut n_l) = (0.0, 0usize);
            for row in 0..n {
                if train.row(row)[j] <= t {
                    sum_l += residual[row];
                    n_l += 1;
                }
            }
            let n_r = n - n_l;
            if n_l == 0 || n_r == 0 {
                continue;
            }
            let mean_l = sum_l / n_l as f64;
            let mean_r = (total - sum_l) / n_r as f64;
            // SSE reduction = n_l * mean_l^2 + n_r * mean_r^2 (up to const).
            let gain = n_l as f64 * mean_l * mean_l + n_r as f64 * mean_r * mean_r;
            if best.as_ref().map_or(true, |(g, _)| gain > *g) {
                best = Some((
                    gain,
                    Stump {
                        feature: j,
                        threshold: t,
                        left: mean_l,
                        right: mean_r,
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth};

    fn separable_split() -> SplitPair<TabularDataset> {
        split(&synth::gaussian_blobs(60, 3, 6.0, 21), 0.9, 3).unwrap()
    }

    #[test]
    fn ridge_logistic_separates_blobs() {
        let env = toy_learner_env(ToyLearner::RidgeLogistic, 5);
        let p = HyperparamVector::new(vec![0.1, 1e-4, 120.0]);
        let acc = env.evaluate(&p, &separable_split()).unwrap();
        assert!(acc > 0.95, "accuracy = {acc}");
    }

    #[test]
    fn boosted_stumps_separate_blobs() {
        let env = toy_learner_env(ToyLearner::BoostedStumps, 5);
        let p = HyperparamVector::new(vec![40.0, 0.3, 16.0]);
        let acc = env.evaluate(&p, &separable_split()).unwrap();
        assert!(acc > 0.95, "accuracy = {acc}");
    }

    #[test]
    fn evaluate_is_deterministic() {
        let env = toy_learner_env(ToyLearner::RidgeLogistic, 5);
        let s = separable_split();
        let p = HyperparamVector::new(vec![0.05, 1e-3, 50.0]);
        assert_eq!(env.evaluate(&p, &s).unwrap(), env.evaluate(&p, &s).unwrap());
    }

    #[test]
    fn epochs_below_bound_is_a_precondition_error() {
        let env = toy_learner_env(ToyLearner::RidgeLogistic, 5);
        let p = HyperparamVector::new(vec![0.05, 1e-3, 0.0]);
        assert!(matches!(
            env.evaluate(&p, &separable_split()),
            Err(Error::OutOfBounds { index: 2, .. })
        ));
    }

    #[test]
    fn single_class_training_side_is_rejected() {
        let env = toy_learner_env(ToyLearner::RidgeLogistic, 5);
        let mut s = separable_split();
        s.train.labels.iter_mut().for_each(|l| *l = 0);
        let p = HyperparamVector::new(vec![0.05, 1e-3, 10.0]);
        assert!(matches!(env.evaluate(&p, &s), Err(Error::DegenerateSplit)));
    }

    #[test]
    fn accuracy_stays_in_unit_interval() {
        let env = toy_learner_env(ToyLearner::BoostedStumps, 1);
        let s = split(&synth::gaussian_blobs(30, 2, 0.2, 9), 0.9, 4).unwrap();
        for p in [
            HyperparamVector::new(vec![1.0, 0.001, 2.0]),
            HyperparamVector::new(vec![300.0, 1.0, 64.0]),
        ] {
            let acc = env.evaluate(&p, &s).unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
    }
}
