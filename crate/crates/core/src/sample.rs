//! Dissimilar sub-dataset sampling.
//!
//! Many equally sized row subsets are drawn from one corpus; a subset is kept
//! only while its Jaccard similarity to every kept subset stays below a
//! threshold `delta`. [`plan_draws`] sizes the draw budget analytically: with
//! `p0` the probability that two independent draws are already dissimilar,
//! the expected number of mutually dissimilar subsets among `m` draws is
//! `m * p0^(m-1)`, and the smallest `m` pushing that expectation over the
//! requested count is chosen.

use alloc::string::String;
use alloc::vec::Vec;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Sized sampling plan for one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Corpus row count.
    pub corpus_size: usize,
    /// Rows per subset.
    pub subset_size: usize,
    /// Minimum number of mutually dissimilar subsets required.
    pub min_subsets: usize,
    /// Pairwise Jaccard similarity threshold in `(0, 1)`.
    pub delta: f64,
    /// Planned number of draws.
    pub draws: usize,
    /// Probability that two independent draws have similarity below `delta`.
    pub p0: f64,
}

/// Subsets retained by [`sample_independent`]: sorted row-index sets that are
/// pairwise dissimilar under `delta`. Serializes to a JSON document of index
/// arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub subsets: Vec<Vec<usize>>,
    pub source: String,
    pub delta: f64,
}

/// Jaccard similarity `|a n b| / |a u b|` of two index sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::EmptyInput("jaccard of two empty sets".into()));
    }
    let mut sa: Vec<usize> = a.to_vec();
    let mut sb: Vec<usize> = b.to_vec();
    sa.sort_unstable();
    sa.dedup();
    sb.sort_unstable();
    sb.dedup();
    Ok(jaccard_sorted(&sa, &sb))
}

/// Two-pointer Jaccard over strictly increasing slices.
fn jaccard_sorted(a: &[usize], b: &[usize]) -> f64 {
    let mut inter = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

fn ln_choose(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    libm::lgamma((n + 1) as f64) - libm::lgamma((k + 1) as f64) - libm::lgamma((n - k + 1) as f64)
}

/// Probability that two independent uniform `s`-subsets of an `n`-row corpus
/// have Jaccard similarity strictly below `delta`.
///
/// The overlap of two such subsets is hypergeometric:
/// `P(O = o) = C(s, o) * C(n - s, s - o) / C(n, s)`, and the similarity of a
/// pair with overlap `o` is `o / (2s - o)`. The tail above the threshold is
/// accumulated in log space and subtracted from one.
pub fn compute_p0(n: usize, s: usize, delta: f64) -> Result<f64> {
    if s == 0 || s >= n {
        return Err(Error::InvalidConfig(alloc::format!(
            "subset size {s} must satisfy 0 < s < corpus size {n}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "delta {delta} outside (0, 1]"
        )));
    }
    let o_min = (2 * s).saturating_sub(n);
    let ln_denom = ln_choose(n, s);
    let mut tail = 0.0;
    for o in o_min..=s {
        let sim = o as f64 / (2 * s - o) as f64;
        if sim < delta {
            continue;
        }
        let ln_p = ln_choose(s, o) + ln_choose(n - s, s - o) - ln_denom;
        tail += ln_p.exp();
    }
    Ok((1.0 - tail).clamp(0.0, 1.0))
}

/// `ln(m * p0^(m-1))`.
fn ln_expected(m: usize, ln_p0: f64) -> f64 {
    (m as f64).ln() + (m as f64 - 1.0) * ln_p0
}

/// Smallest draw count `m` whose expected dissimilar-subset count
/// `m * p0^(m-1)` reaches `k`; errors with the best achievable expectation
/// when no `m` works.
pub fn plan_draws(n: usize, s: usize, k: usize, delta: f64) -> Result<SamplePlan> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one subset".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    let p0 = compute_p0(n, s, delta)?;
    let plan = |draws: usize| SamplePlan {
        corpus_size: n,
        subset_size: s,
        min_subsets: k,
        delta,
        draws,
        p0,
    };
    if p0 >= 1.0 {
        return Ok(plan(k));
    }
    if p0 <= 0.0 {
        return Err(Error::InfeasiblePlan { max_expected: 0.0 });
    }
    let ln_p0 = p0.ln();
    let ln_k = (k as f64).ln();
    // The expectation rises to its peak at m* = -1/ln(p0) and falls after.
    let peak = (-1.0 / ln_p0).floor().max(1.0);
    let peak_m = if peak > usize::MAX as f64 {
        usize::MAX
    } else {
        peak as usize
    };
    let best = ln_expected(peak_m, ln_p0).max(ln_expected(peak_m + 1, ln_p0));
    if best < ln_k {
        return Err(Error::InfeasiblePlan {
            max_expected: best.exp(),
        });
    }
    // Binary search the rising flank for the first m with E[m] >= k.
    let (mut lo, mut hi) = (1usize, peak_m + 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ln_expected(mid, ln_p0) >= ln_k {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(plan(lo))
}

/// Draw up to `plan.draws` uniform subsets, keeping each draw only if it is
/// dissimilar (Jaccard below `plan.delta`) to everything kept so far; stops
/// once `plan.min_subsets` are retained. Reproducible for a given seed.
pub fn sample_independent(plan: &SamplePlan, seed: u64) -> Result<SampleSet> {
    let mut rng = seed::rng(seed);
    let mut retained: Vec<Vec<usize>> = Vec::with_capacity(plan.min_subsets);
    for _ in 0..plan.draws {
        let mut draw = rand::seq::index::sample(&mut rng, plan.corpus_size, plan.subset_size)
            .into_vec();
        draw.sort_unstable();
        if retained
            .iter()
            .all(|kept| jaccard_sorted(kept, &draw) < plan.delta)
        {
            retained.push(draw);
            if retained.len() >= plan.min_subsets {
                break;
            }
        }
    }
    if retained.len() < plan.min_subsets {
        return Err(Error::TooFewRetained {
            retained: retained.len(),
            required: plan.min_subsets,
        });
    }
    Ok(SampleSet {
        subsets: retained,
        source: String::new(),
        delta: plan.delta,
    })
}

/// Exhaustive post-check of the pairwise dissimilarity contract.
pub fn verify_pairwise(set: &SampleSet) -> bool {
    for (i, a) in set.subsets.iter().enumerate() {
        for b in &set.subsets[i + 1..] {
            if jaccard_sorted(a, b) >= set.delta {
                return false;
            }
        }
    }
    true
}
