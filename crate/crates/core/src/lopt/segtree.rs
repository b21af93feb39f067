//! Range-sum segment tree with point replacement, used to track
//! per-coordinate last-update magnitudes in O(log n).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Fixed-size sum tree over `n` leaves; internal nodes hold subtree sums.
#[derive(Debug, Clone)]
pub struct SegmentTree {
    n: usize,
    size: usize,
    nodes: Vec<f64>,
}

impl SegmentTree {
    /// Build a tree with every leaf set to `init`.
    pub fn new(n: usize, init: f64) -> Self {
        let size = n.next_power_of_two().max(1);
        let mut tree = Self {
            n,
            size,
            nodes: vec![0.0; 2 * size],
        };
        for i in 0..n {
            tree.nodes[size + i] = init;
        }
        for i in (1..size).rev() {
            tree.nodes[i] = tree.nodes[2 * i] + tree.nodes[2 * i + 1];
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn leaf(&self, index: usize) -> f64 {
        self.nodes[self.size + index]
    }

    /// Replace (not accumulate) the leaf value and repair its ancestors.
    pub fn update(&mut self, index: usize, value: f64) -> Result<()> {
        if index >= self.n {
            return Err(Error::InvalidConfig(alloc::format!(
                "segment tree index {index} out of range for {} leaves",
                self.n
            )));
        }
        let mut i = self.size + index;
        self.nodes[i] = value;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
        Ok(())
    }

    /// Sum of leaves in the inclusive range `[l, r]`, visiting O(log n)
    /// nodes.
    pub fn range_sum(&self, l: usize, r: usize) -> f64 {
        debug_assert!(l <= r && r < self.n);
        let (mut lo, mut hi) = (self.size + l, self.size + r + 1);
        let (mut left, mut right) = (0.0, 0.0);
        while lo < hi {
            if lo & 1 == 1 {
                left += self.nodes[lo];
                lo += 1;
            }
            if hi & 1 == 1 {
                hi -= 1;
                right += self.nodes[hi];
            }
            lo /= 2;
            hi /= 2;
        }
        left + right
    }
}

/// True when the summed last-update magnitudes over `[l, r]` have fallen to
/// `epsilon_total` or below.
pub fn check_over(tree: &SegmentTree, l: usize, r: usize, epsilon_total: f64) -> bool {
    tree.range_sum(l, r) <= epsilon_total
}
