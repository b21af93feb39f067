//! Label production and the invertible label transform.
//!
//! A training label is a near-optimal hyperparameter vector for one sampled
//! dataset, found by seeded random search plus local refinement. Labels are
//! regressed in a transformed space: per coordinate, the value moves to its
//! working scale (log10 where declared), then an affine map sends the bounds
//! to `[-0.95, +0.95]` so a tanh output head can fit them without
//! saturating.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split, SplitPair, TabularDataset};
use crate::encode::EncodedMeta;
use crate::env::{Environment, HyperparamSpec, HyperparamVector};
use crate::error::{Error, Result};
use crate::lopt::{lopt, LoptConfig};
use crate::seed;

/// Transformed labels live in `[-TANH_CEILING, +TANH_CEILING]`.
pub const TANH_CEILING: f64 = 0.95;

/// One meta-training example: a dataset's encoding with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub meta: EncodedMeta,
    pub raw_label: HyperparamVector,
    pub transformed_label: Vec<f64>,
    pub achieved_accuracy: f64,
}

/// Budgets and seeds for [`label_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Total environment-evaluation budget (random search + refinement).
    pub budget: usize,
    pub seed: u64,
    /// Refinement settings; its `eval_budget` is overridden with whatever
    /// the random-search phase leaves over.
    pub lopt: LoptConfig,
}

/// Map a raw vector into tanh-friendly space: working scale, then affine
/// `[min, max] -> [-0.95, +0.95]` per coordinate.
pub fn transform_label(p: &HyperparamVector, specs: &[HyperparamSpec]) -> Result<Vec<f64>> {
    p.validate_against(specs)?;
    Ok(p.values
        .iter()
        .zip(specs)
        .map(|(&v, spec)| {
            let u = spec.to_u(v);
            let ratio = (u - spec.u_min()) / (spec.u_max() - spec.u_min());
            TANH_CEILING * (2.0 * ratio - 1.0)
        })
        .collect())
}

/// Total inverse of [`transform_label`]: clamps into the ceiling band,
/// inverts the affine map and the scale, and rounds integer coordinates to
/// the nearest in-bounds value.
pub fn inverse_transform(z: &[f64], specs: &[HyperparamSpec]) -> HyperparamVector {
    let values = z
        .iter()
        .zip(specs)
        .map(|(&zv, spec)| {
            let clamped = zv.clamp(-TANH_CEILING, TANH_CEILING);
            let ratio = (clamped / TANH_CEILING + 1.0) / 2.0;
            let u = spec.u_min() + ratio * (spec.u_max() - spec.u_min());
            spec.from_u(u)
        })
        .collect();
    HyperparamVector::new(values)
}

/// Uniform draw in u-space, mapped back to a legal raw vector.
pub fn random_vector(
    specs: &[HyperparamSpec],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> HyperparamVector {
    let values = specs
        .iter()
        .map(|spec| {
            let u = rng.gen_range(spec.u_min()..=spec.u_max());
            spec.from_u(u)
        })
        .collect();
    HyperparamVector::new(values)
}

/// Find a near-optimal hyperparameter vector for one dataset: seeded random
/// search over the scale-aware box keeps an incumbent, then local
/// refinement spends the remaining budget. Never returns a vector scoring
/// below the best random probe.
pub fn label_dataset(
    env: &dyn Environment,
    d: &TabularDataset,
    cfg: &LabelConfig,
) -> Result<(HyperparamVector, f64)> {
    let dim = env.specs().len();
    if cfg.budget < dim + 1 {
        return Err(Error::BudgetTooSmall {
            budget: cfg.budget,
            min: dim + 1,
        });
    }
    let inner = split(d, 0.9, seed::mix(cfg.seed, 0))?;
    label_on_split(env, &inner, cfg)
}

/// [`label_dataset`] on a caller-provided split.
pub fn label_on_split(
    env: &dyn Environment,
    split: &SplitPair<TabularDataset>,
    cfg: &LabelConfig,
) -> Result<(HyperparamVector, f64)> {
    let specs = env.specs();
    let dim = specs.len();
    if cfg.budget < dim + 1 {
        return Err(Error::BudgetTooSmall {
            budget: cfg.budget,
            min: dim + 1,
        });
    }
    // Half the budget to exploration, at least dim + 1 probes.
    let n_random = (cfg.budget / 2).max(dim + 1).min(cfg.budget);
    let mut rng = seed::rng(seed::mix(cfg.seed, 1));
    let mut incumbent: Option<(HyperparamVector, f64)> = None;
    for _ in 0..n_random {
        let candidate = random_vector(specs, &mut rng);
        let acc = env.evaluate(&candidate, split)?;
        if incumbent.as_ref().map_or(true, |(_, best)| acc > *best) {
            incumbent = Some((candidate, acc));
        }
    }
    let (best, best_acc) = incumbent.expect("n_random >= 1");

    let remaining = cfg.budget - n_random;
    if remaining == 0 {
        return Ok((best, best_acc));
    }
    let mut lopt_cfg = cfg.lopt.clone();
    lopt_cfg.eval_budget = Some(remaining);
    let refined = lopt(&best, env, split, &lopt_cfg)?;
    debug_assert!(refined.accuracy >= best_acc);
    Ok((refined.vector, refined.accuracy))
}
