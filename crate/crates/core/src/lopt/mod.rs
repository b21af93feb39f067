//! Local refinement of a hyperparameter vector: recursive divide-and-conquer
//! over coordinates with single-coordinate stride-halving hill climbing (MC),
//! two-coordinate alternation (DMC), and a segment tree of per-coordinate
//! last-update magnitudes driving O(log n) convergence checks.
//!
//! All probing happens in u-space (log10 for log-scaled coordinates), and a
//! coordinate only moves on a strict accuracy improvement, so the refined
//! vector never scores below the input.

mod segtree;

pub use segtree::{check_over, SegmentTree};

use alloc::vec::Vec;
use crate::data::{SplitPair, TabularDataset};
use crate::env::{Environment, HyperparamVector};
use crate::error::{Error, Result};

/// Leaf value before a coordinate's first pass; large enough that no fresh
/// range ever reads as converged.
pub const UPDATE_SENTINEL: f64 = 1e30;

/// Thresholds and caps for one refinement run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LoptConfig {
    /// Initial probe stride in u-space units.
    pub epsilon: f64,
    /// Movement/stride threshold ending a single-coordinate climb.
    pub epsilon_stop: f64,
    /// Range-sum threshold under which a coordinate range counts as
    /// converged.
    pub epsilon_total: f64,
    /// Cap on probe iterations within one climb.
    pub max_mc_iters: usize,
    /// Cap on loop sweeps at each recursion level.
    pub max_sweeps: usize,
    /// Total environment-evaluation budget; `None` is unlimited.
    pub eval_budget: Option<usize>,
}

impl Default for LoptConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            epsilon_stop: 1e-3,
            epsilon_total: 1e-2,
            max_mc_iters: 60,
            max_sweeps: 8,
            eval_budget: None,
        }
    }
}

impl LoptConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("epsilon_stop", self.epsilon_stop),
            ("epsilon_total", self.epsilon_total),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_mc_iters == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One probe evaluation, reported through the optional trace hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// Evaluation counter within the run (1-based).
    pub step: usize,
    /// Coordinate being probed; the initial scoring reports the vector
    /// dimension.
    pub coordinate: usize,
    /// Raw-space value probed at that coordinate.
    pub probe: f64,
    pub accuracy: f64,
}

/// Result of a refinement run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoptOutcome {
    pub vector: HyperparamVector,
    pub accuracy: f64,
    /// Environment evaluations spent.
    pub evals: usize,
    /// True when the eval budget ran out before convergence; the incumbent
    /// is returned.
    pub budget_exhausted: bool,
}

struct Run<'a, 'b> {
    env: &'a dyn Environment,
    split: &'a SplitPair<TabularDataset>,
    cfg: &'a LoptConfig,
    evals: usize,
    exhausted: bool,
    trace: Option<&'b mut dyn FnMut(TraceRow)>,
}

impl<'a, 'b> Run<'a, 'b> {
    /// Evaluate the incumbent vector, with coordinate `x` (when given) set
    /// to `value`; `None` once the budget is exhausted.
    fn eval(&mut self, p: &mut Vec<f64>, x: Option<usize>, value: f64) -> Result<Option<f64>> {
        if let Some(budget) = self.cfg.eval_budget {
            if self.evals >= budget {
                self.exhausted = true;
                return Ok(None);
            }
        }
        let prev = x.map(|x| {
            let old = p[x];
            p[x] = value;
            old
        });
        let result = self
            .env
            .evaluate(&HyperparamVector::new(p.clone()), self.split);
        if let (Some(x), Some(old)) = (x, prev) {
            p[x] = old;
        }
        let acc = result?;
        self.evals += 1;
        if let Some(hook) = self.trace.as_deref_mut() {
            hook(TraceRow {
                step: self.evals,
                // Whole-vector scorings report the vector dimension and NaN.
                coordinate: x.unwrap_or(p.len()),
                probe: if x.is_some() { value } else { f64::NAN },
                accuracy: acc,
            });
        }
        Ok(Some(acc))
    }
}

/// Single-coordinate hill climbing with stride halving.
///
/// Probes `v - stride` and `v + stride` around the incumbent `v` in u-space
/// (clamped to bounds, rounded for integer coordinates) and moves only on a
/// strict improvement; otherwise the stride halves. The climb ends when a
/// move is no larger than `epsilon_stop`, when the stride is that small and
/// brings no improvement, or at the iteration cap. The absolute u-space
/// displacement is written to the coordinate's tree leaf.
fn mc_inner(
    run: &mut Run<'_, '_>,
    tree: &mut SegmentTree,
    p: &mut Vec<f64>,
    acc: &mut f64,
    x: usize,
) -> Result<()> {
    let spec = &run.env.specs()[x];
    let (u_lo, u_hi) = (spec.u_min(), spec.u_max());
    let start_u = spec.to_u(p[x]);
    let mut stride = run.cfg.epsilon;

    for _ in 0..run.cfg.max_mc_iters {
        if run.exhausted {
            break;
        }
        let v = spec.to_u(p[x]);
        let raw_b = p[x];
        let raw_a = spec.from_u((v - stride).clamp(u_lo, u_hi));
        let raw_c = spec.from_u((v + stride).clamp(u_lo, u_hi));

        if raw_a == raw_b && raw_c == raw_b {
            // The stride rounds/clamps to no movement at all.
            if stride <= run.cfg.epsilon_stop {
                break;
            }
            stride /= 2.0;
            continue;
        }

        let acc_a = if raw_a == raw_b {
            *acc
        } else {
            match run.eval(p, Some(x), raw_a)? {
                Some(a) => a,
                None => break,
            }
        };
        let acc_c = if raw_c == raw_b {
            *acc
        } else {
            match run.eval(p, Some(x), raw_c)? {
                Some(a) => a,
                None => break,
            }
        };

        // Strict improvement moves; ties keep the center and halve.
        let moved = if acc_a > *acc {
            p[x] = raw_a;
            *acc = acc_a;
            true
        } else if acc_c > *acc {
            p[x] = raw_c;
            *acc = acc_c;
            true
        } else {
            if stride <= run.cfg.epsilon_stop {
                break;
            }
            stride /= 2.0;
            false
        };
        if moved && (spec.to_u(p[x]) - v).abs() <= run.cfg.epsilon_stop {
            break;
        }
    }

    let delta = (spec.to_u(p[x]) - start_u).abs();
    tree.update(x, delta)?;
    Ok(())
}

/// Alternate climbs on the coordinate pair `(l, r)` until their joint
/// last-update sum converges or the sweep cap is hit.
fn dmc_inner(
    run: &mut Run<'_, '_>,
    tree: &mut SegmentTree,
    p: &mut Vec<f64>,
    acc: &mut f64,
    l: usize,
    r: usize,
) -> Result<()> {
    debug_assert_eq!(r, l + 1);
    let mut sweeps = 0;
    while !check_over(tree, l, r, run.cfg.epsilon_total)
        && sweeps < run.cfg.max_sweeps
        && !run.exhausted
    {
        mc_inner(run, tree, p, acc, l)?;
        mc_inner(run, tree, p, acc, r)?;
        sweeps += 1;
    }
    Ok(())
}

/// Quick-sort style recursion: split the coordinate range, refine the halves,
/// repeat while the range's last-update sum stays above threshold.
fn func_inner(
    run: &mut Run<'_, '_>,
    tree: &mut SegmentTree,
    p: &mut Vec<f64>,
    acc: &mut f64,
    l: usize,
    r: usize,
) -> Result<()> {
    if l == r {
        return mc_inner(run, tree, p, acc, l);
    }
    if r == l + 1 {
        return dmc_inner(run, tree, p, acc, l, r);
    }
    let mid = (l + r) / 2;
    let mut sweeps = 0;
    while !check_over(tree, l, r, run.cfg.epsilon_total)
        && sweeps < run.cfg.max_sweeps
        && !run.exhausted
    {
        func_inner(run, tree, p, acc, l, mid)?;
        func_inner(run, tree, p, acc, mid + 1, r)?;
        sweeps += 1;
    }
    Ok(())
}

fn start_run<'a, 'b>(
    env: &'a dyn Environment,
    split: &'a SplitPair<TabularDataset>,
    cfg: &'a LoptConfig,
    p0: &HyperparamVector,
    trace: Option<&'b mut dyn FnMut(TraceRow)>,
) -> Result<(Run<'a, 'b>, Vec<f64>, f64)> {
    cfg.validate()?;
    p0.validate_against(env.specs())?;
    if p0.is_empty() {
        return Err(Error::EmptyInput("no coordinates to refine".into()));
    }
    let mut run = Run {
        env,
        split,
        cfg,
        evals: 0,
        exhausted: false,
        trace,
    };
    let mut p = p0.values.clone();
    let acc = match run.eval(&mut p, None, 0.0)? {
        Some(a) => a,
        None => {
            return Err(Error::BudgetTooSmall {
                budget: cfg.eval_budget.unwrap_or(0),
                min: 1,
            })
        }
    };
    Ok((run, p, acc))
}

/// One climb on coordinate `x`, sharing `tree` with the caller.
pub fn mc(
    p0: &HyperparamVector,
    x: usize,
    env: &dyn Environment,
    split: &SplitPair<TabularDataset>,
    cfg: &LoptConfig,
    tree: &mut SegmentTree,
) -> Result<LoptOutcome> {
    let (mut run, mut p, mut acc) = start_run(env, split, cfg, p0, None)?;
    mc_inner(&mut run, tree, &mut p, &mut acc, x)?;
    Ok(LoptOutcome {
        vector: HyperparamVector::new(p),
        accuracy: acc,
        evals: run.evals,
        budget_exhausted: run.exhausted,
    })
}

/// Alternating climbs on the adjacent pair `(l, r = l + 1)`.
pub fn dmc(
    p0: &HyperparamVector,
    l: usize,
    r: usize,
    env: &dyn Environment,
    split: &SplitPair<TabularDataset>,
    cfg: &LoptConfig,
    tree: &mut SegmentTree,
) -> Result<LoptOutcome> {
    if r != l + 1 {
        return Err(Error::InvalidConfig(alloc::format!(
            "dmc needs adjacent coordinates, got ({l}, {r})"
        )));
    }
    let (mut run, mut p, mut acc) = start_run(env, split, cfg, p0, None)?;
    dmc_inner(&mut run, tree, &mut p, &mut acc, l, r)?;
    Ok(LoptOutcome {
        vector: HyperparamVector::new(p),
        accuracy: acc,
        evals: run.evals,
        budget_exhausted: run.exhausted,
    })
}

/// Refine a full vector; see the module docs. Deterministic in
/// `(p0, environment, config)`.
pub fn lopt(
    p0: &HyperparamVector,
    env: &dyn Environment,
    split: &SplitPair<TabularDataset>,
    cfg: &LoptConfig,
) -> Result<LoptOutcome> {
    lopt_traced(p0, env, split, cfg, None)
}

/// [`lopt`] with a per-evaluation trace hook.
pub fn lopt_traced(
    p0: &HyperparamVector,
    env: &dyn Environment,
    split: &SplitPair<TabularDataset>,
    cfg: &LoptConfig,
    trace: Option<&mut dyn FnMut(TraceRow)>,
) -> Result<LoptOutcome> {
    let (mut run, mut p, mut acc) = start_run(env, split, cfg, p0, trace)?;
    let n = p.len();
    let mut tree = SegmentTree::new(n, UPDATE_SENTINEL);
    func_inner(&mut run, &mut tree, &mut p, &mut acc, 0, n - 1)?;
    Ok(LoptOutcome {
        vector: HyperparamVector::new(p),
        accuracy: acc,
        evals: run.evals,
        budget_exhausted: run.exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth};
    use crate::env::{HyperparamSpec, QuadraticEnv, RotatedQuadraticEnv, Scale};
    use alloc::vec;
    use alloc::vec::Vec;

    fn dummy_split() -> SplitPair<TabularDataset> {
        split(&synth::gaussian_blobs(10, 2, 3.0, 0), 0.9, 0).unwrap()
    }

    fn unit_specs(d: usize) -> Vec<HyperparamSpec> {
        (0..d)
            .map(|i| HyperparamSpec::real(&alloc::format!("p{i}"), -10.0, 10.0, Scale::Linear))
            .collect()
    }

    fn cfg() -> LoptConfig {
        LoptConfig {
            epsilon: 0.1,
            epsilon_stop: 1e-4,
            epsilon_total: 1e-3,
            max_mc_iters: 200,
            max_sweeps: 60,
            eval_budget: None,
        }
    }

    #[test]
    fn mc_converges_from_offset_start() {
        let env = QuadraticEnv::new(unit_specs(1), vec![1.0], vec![1.0]).unwrap();
        let s = dummy_split();
        let mut tree = SegmentTree::new(1, UPDATE_SENTINEL);
        let out = mc(
            &HyperparamVector::new(vec![1.3]),
            0,
            &env,
            &s,
            &cfg(),
            &mut tree,
        )
        .unwrap();
        assert!(
            (out.vector.values[0] - 1.0).abs() < 1e-2,
            "ended at {}",
            out.vector.values[0]
        );
        // The leaf now carries this coordinate's displacement.
        assert!((tree.leaf(0) - 0.3).abs() < 2e-2);
    }

    #[test]
    fn mc_on_flat_landscape_does_not_move() {
        let env = QuadraticEnv::new(unit_specs(1), vec![0.0], vec![0.0]).unwrap();
        let s = dummy_split();
        let mut tree = SegmentTree::new(1, UPDATE_SENTINEL);
        let out = mc(
            &HyperparamVector::new(vec![2.5]),
            0,
            &env,
            &s,
            &cfg(),
            &mut tree,
        )
        .unwrap();
        assert_eq!(out.vector.values[0], 2.5);
        assert_eq!(tree.leaf(0), 0.0);
    }

    #[test]
    fn mc_never_reduces_accuracy() {
        let env = QuadraticEnv::new(unit_specs(1), vec![-2.0], vec![0.3]).unwrap();
        let s = dummy_split();
        let mut state = 9u64;
        for _ in 0..100 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(7);
            let start = -10.0 + (state % 2000) as f64 / 100.0;
            let p0 = HyperparamVector::new(vec![start]);
            let before = env.evaluate(&p0, &s).unwrap();
            let mut tree = SegmentTree::new(1, UPDATE_SENTINEL);
            let out = mc(&p0, 0, &env, &s, &cfg(), &mut tree).unwrap();
            assert!(out.accuracy >= before);
        }
    }

    #[test]
    fn dmc_handles_rotated_coupling() {
        let angle = core::f64::consts::FRAC_PI_4;
        let env =
            RotatedQuadraticEnv::new(unit_specs(2), [1.0, -1.0], [1.0, 0.2], angle).unwrap();
        let s = dummy_split();
        let mut tree = SegmentTree::new(2, UPDATE_SENTINEL);
        // Start inside the positive basin; the clipped flat region carries
        // no climbing signal.
        let out = dmc(
            &HyperparamVector::new(vec![1.5, -0.6]),
            0,
            1,
            &env,
            &s,
            &cfg(),
            &mut tree,
        )
        .unwrap();
        assert!((out.vector.values[0] - 1.0).abs() < 1e-2, "{:?}", out.vector);
        assert!((out.vector.values[1] + 1.0).abs() < 1e-2, "{:?}", out.vector);
    }

    #[test]
    fn dmc_on_separable_env_equals_two_independent_climbs() {
        let env = QuadraticEnv::new(unit_specs(2), vec![0.5, -0.75], vec![1.0, 1.0]).unwrap();
        let s = dummy_split();
        let p0 = HyperparamVector::new(vec![2.0, 2.0]);
        // Generous epsilon_total: dmc exits after one sweep, which is
        // exactly mc on l then mc on r.
        let mut one_sweep = cfg();
        one_sweep.epsilon_total = 1e9;
        let mut tree = SegmentTree::new(2, UPDATE_SENTINEL);
        let joint = dmc(&p0, 0, 1, &env, &s, &one_sweep, &mut tree).unwrap();

        let mut tree_a = SegmentTree::new(2, UPDATE_SENTINEL);
        let first = mc(&p0, 0, &env, &s, &cfg(), &mut tree_a).unwrap();
        let second = mc(&first.vector, 1, &env, &s, &cfg(), &mut tree_a).unwrap();
        assert_eq!(joint.vector, second.vector);
    }

    #[test]
    fn dmc_with_converged_tree_returns_input() {
        let env = QuadraticEnv::new(unit_specs(2), vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let s = dummy_split();
        let mut tree = SegmentTree::new(2, UPDATE_SENTINEL);
        tree.update(0, 0.0).unwrap();
        tree.update(1, 0.0).unwrap();
        let p0 = HyperparamVector::new(vec![3.0, -2.0]);
        let out = dmc(&p0, 0, 1, &env, &s, &cfg(), &mut tree).unwrap();
        assert_eq!(out.vector, p0);
        assert_eq!(out.evals, 1); // only the initial scoring
    }

    #[test]
    fn lopt_single_coordinate_is_one_climb() {
        let env = QuadraticEnv::new(unit_specs(1), vec![0.25], vec![1.0]).unwrap();
        let s = dummy_split();
        let out = lopt(&HyperparamVector::new(vec![1.0]), &env, &s, &cfg()).unwrap();
        assert!((out.vector.values[0] - 0.25).abs() < 1e-2);
    }

    #[test]
    fn lopt_refines_every_coordinate_of_a_separable_objective() {
        // Curvature keeps the surface positive near the start; hill climbing
        // has no signal on the clipped flat region.
        let opt = vec![1.0, -2.0, 0.5, 3.0];
        let env = QuadraticEnv::new(unit_specs(4), opt.clone(), vec![0.05; 4]).unwrap();
        let s = dummy_split();
        let p0 = HyperparamVector::new(vec![2.0, -0.5, 1.5, 1.8]);
        let before = env.evaluate(&p0, &s).unwrap();
        let out = lopt(&p0, &env, &s, &cfg()).unwrap();
        for (got, want) in out.vector.values.iter().zip(&opt) {
            assert!((got - want).abs() < 1e-2, "{got} vs {want}");
        }
        assert!(out.accuracy >= before);
    }

    #[test]
    fn lopt_respects_bounds_under_integer_rounding() {
        let specs = vec![
            HyperparamSpec::integer("steps", 1.0, 9.0),
            HyperparamSpec::real("rate", 0.001, 10.0, Scale::Log10),
        ];
        let env = QuadraticEnv::new(specs, vec![7.0, 0.1], vec![0.01, 0.4]).unwrap();
        let s = dummy_split();
        let p0 = HyperparamVector::new(vec![2.0, 1.0]);
        let mut wide = cfg();
        wide.epsilon = 1.0;
        let out = lopt(&p0, &env, &s, &wide).unwrap();
        out.vector.validate_against(env.specs()).unwrap();
        assert_eq!(out.vector.values[0], 7.0);
        assert!(out.accuracy >= env.evaluate(&p0, &s).unwrap());
    }

    #[test]
    fn lopt_budget_exhaustion_returns_incumbent_with_flag() {
        let env = QuadraticEnv::new(unit_specs(3), vec![0.0; 3], vec![1.0; 3]).unwrap();
        let s = dummy_split();
        let mut tight = cfg();
        tight.eval_budget = Some(5);
        let p0 = HyperparamVector::new(vec![4.0, 4.0, 4.0]);
        let before = env.evaluate(&p0, &s).unwrap();
        let out = lopt(&p0, &env, &s, &tight).unwrap();
        assert!(out.budget_exhausted);
        assert_eq!(out.evals, 5);
        assert!(out.accuracy >= before);
    }

    #[test]
    fn lopt_is_deterministic() {
        let env = QuadraticEnv::new(unit_specs(3), vec![1.0, 2.0, 3.0], vec![0.1; 3]).unwrap();
        let s = dummy_split();
        let p0 = HyperparamVector::new(vec![0.0, 0.0, 0.0]);
        let a = lopt(&p0, &env, &s, &cfg()).unwrap();
        let b = lopt(&p0, &env, &s, &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_hook_sees_every_evaluation() {
        let env = QuadraticEnv::new(unit_specs(2), vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let s = dummy_split();
        let mut rows = Vec::new();
        let mut hook = |row: TraceRow| rows.push(row);
        let out = lopt_traced(
            &HyperparamVector::new(vec![1.0, -1.0]),
            &env,
            &s,
            &cfg(),
            Some(&mut hook),
        )
        .unwrap();
        assert_eq!(rows.len(), out.evals);
        assert!(rows.iter().enumerate().all(|(i, r)| r.step == i + 1));
    }
}
