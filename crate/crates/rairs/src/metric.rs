//! Distance metrics and the internal score convention.
//!
//! Everything that ranks candidates works on a *score*, where smaller is
//! always better: squared L2 distance as-is, inner product negated. Public
//! results report the metric's natural value (squared L2 ascending, inner
//! product descending); [`Metric::score_to_value`] converts back at the API
//! boundary.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Squared Euclidean distance, smaller is closer.
    L2,
    /// Inner product, larger is closer.
    Ip,
}

impl Metric {
    /// Internal score for ranking: smaller is always better.
    #[inline]
    pub fn score(&self, a: &[f32], b: &[f32]) -> f32 {
        match self {
            Metric::L2 => l2_sqr(a, b),
            Metric::Ip => -dot(a, b),
        }
    }

    /// Converts an internal score back to the metric's natural value.
    #[inline]
    pub fn score_to_value(&self, score: f32) -> f32 {
        match self {
            Metric::L2 => score,
            Metric::Ip => -score,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Ip => "ip",
        }
    }

    pub fn parse(s: &str) -> Result<Metric> {
        match s {
            "l2" => Ok(Metric::L2),
            "ip" => Ok(Metric::Ip),
            other => Err(Error::InvalidConfig(format!(
                "unknown metric {other:?}; expected \"l2\" or \"ip\""
            ))),
        }
    }
}

/// Squared L2 distance between two equal-length slices.
#[inline]
pub fn l2_sqr(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Inner product of two equal-length slices.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Squared norm of a slice.
#[inline]
pub fn norm_sqr(a: &[f32]) -> f32 {
    dot(a, a)
}

/// A scored candidate. Total order: ascending score, ties broken by the
/// smaller vector ID, so every ranking in the crate is deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub score: f32,
    pub id: u64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    #[inline]
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    #[inline]
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded selector keeping the `k` best (smallest) [`Neighbor`]s seen.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    heap: std::collections::BinaryHeap<Neighbor>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            // Preallocate for the usual bounded case; a huge k (keep
            // everything) grows on demand instead.
            heap: std::collections::BinaryHeap::with_capacity(k.saturating_add(1).min(4096)),
        }
    }

    #[inline]
    pub fn push(&mut self, n: Neighbor) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(n);
        } else if n < *self.heap.peek().expect("non-empty heap") {
            self.heap.pop();
            self.heap.push(n);
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Current worst kept entry, if the selector is full.
    pub fn threshold(&self) -> Option<Neighbor> {
        if self.heap.len() == self.k {
            self.heap.peek().copied()
        } else {
            None
        }
    }

    /// Consumes the selector and returns the kept entries sorted best-first.
    pub fn into_sorted(self) -> Vec<Neighbor> {
        let mut v = self.heap.into_vec();
        v.sort_unstable();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_orders_both_metrics_the_same_way() {
        let q = [1.0, 0.0];
        let near = [1.0, 0.1];
        let far = [-1.0, 0.0];
        assert!(Metric::L2.score(&q, &near) < Metric::L2.score(&q, &far));
        assert!(Metric::Ip.score(&q, &near) < Metric::Ip.score(&q, &far));
        assert_eq!(Metric::Ip.score_to_value(Metric::Ip.score(&q, &near)), dot(&q, &near));
    }

    #[test]
    fn topk_keeps_smallest_and_breaks_ties_by_id() {
        let mut top = TopK::new(3);
        for (score, id) in [(5.0, 1), (1.0, 9), (1.0, 2), (3.0, 4), (0.5, 7), (5.0, 0)] {
            top.push(Neighbor { score, id });
        }
        let got: Vec<(f32, u64)> = top.into_sorted().iter().map(|n| (n.score, n.id)).collect();
        assert_eq!(got, vec![(0.5, 7), (1.0, 2), (1.0, 9)]);
    }

    #[test]
    fn topk_zero_capacity_keeps_nothing() {
        let mut top = TopK::new(0);
        top.push(Neighbor { score: 1.0, id: 1 });
        assert!(top.into_sorted().is_empty());
    }
}
