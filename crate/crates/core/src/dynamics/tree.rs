//! Complete binary sum tree over clock rates.

use alloc::vec;
use alloc::vec::Vec;

/// Leaves hold rates; each internal node holds the sum of its children.
///
/// Updates recompute ancestors from their children rather than adding
/// deltas, so the stored sums never drift from a full rebuild.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    base: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(leaves: usize) -> Self {
        let base = leaves.max(1).next_power_of_two();
        Self {
            leaves,
            base,
            nodes: vec![0.0; 2 * base],
        }
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.base + i]
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn set(&mut self, i: usize, rate: f64) {
        let mut k = self.base + i;
        if self.nodes[k] == rate {
            return;
        }
        self.nodes[k] = rate;
        while k > 1 {
            k >>= 1;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Writes all leaves and rebuilds every internal node.
    pub fn rebuild(&mut self, rates: &[f64]) {
        self.nodes.iter_mut().for_each(|x| *x = 0.0);
        self.nodes[self.base..self.base + rates.len()].copy_from_slice(rates);
        for k in (1..self.base).rev() {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf `i` such that the prefix sum before `i` is `≤ target` and the
    /// prefix through `i` exceeds it. Never returns a zero-rate leaf when the
    /// total is positive.
    pub fn find(&self, target: f64) -> usize {
        let mut k = 1;
        let mut t = target;
        while k < self.base {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if (t < left && left > 0.0) || right <= 0.0 {
                k *= 2;
            } else {
                t -= left;
                k = 2 * k + 1;
            }
        }
        k - self.base
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.base..self.base + self.leaves]
    }
}
