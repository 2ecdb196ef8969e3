//! Single-pass top-k and threshold selection.
//!
//! Ranking is by descending score, ties going to the smaller entry id. The
//! running list is a bounded min-heap whose root is the current worst
//! member, so each incoming score costs one comparison unless it displaces
//! that member.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::memory::{RelevancyScores, RetrievedSet};

#[derive(Debug, Clone, Copy)]
struct Ranked {
    id: usize,
    score: f32,
}

impl Ranked {
    /// `Greater` means ranked higher.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    // reversed so BinaryHeap's max is the lowest-ranked member
    fn cmp(&self, other: &Self) -> Ordering {
        other.rank_cmp(self)
    }
}

/// Bounded running top-k list.
#[derive(Debug, Clone)]
pub struct RunningTopK {
    k: usize,
    heap: BinaryHeap<Ranked>,
    seen: usize,
}

impl RunningTopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16)),
            seen: 0,
        }
    }

    pub fn push(&mut self, id: usize, score: f32) {
        self.seen += 1;
        if self.k == 0 {
            return;
        }
        let cand = Ranked { id, score };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if cand.rank_cmp(&worst) == Ordering::Greater {
                *worst = cand;
            }
        }
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Current admission bar: the lowest retained score once the list is full.
    pub fn threshold(&self) -> Option<f32> {
        if self.k > 0 && self.heap.len() == self.k {
            self.heap.peek().map(|r| r.score)
        } else {
            None
        }
    }

    /// Members in rank order with their scores.
    pub fn into_sorted(self) -> Vec<(usize, f32)> {
        // ascending under the reversed Ord is descending rank
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| (r.id, r.score))
            .collect()
    }

    pub fn finish(self) -> RetrievedSet {
        RetrievedSet::from_ids(self.into_sorted().into_iter().map(|(id, _)| id).collect())
    }
}

/// Ids of the `k` highest scores, best first.
pub fn streaming_topk<I>(scores: I, k: usize) -> RetrievedSet
where
    I: IntoIterator<Item = (usize, f32)>,
{
    let mut top = RunningTopK::new(k);
    for (id, s) in scores {
        top.push(id, s);
    }
    top.finish()
}

/// Ids with `score > theta`, ascending.
///
/// The comparison happens at score precision, so a score stored as `5e-4`
/// does not pass `theta = 5e-4`.
pub fn threshold_select(scores: &RelevancyScores, theta: f64) -> RetrievedSet {
    let theta = theta as f32;
    let mut ids: Vec<usize> = scores
        .scores
        .iter()
        .filter(|(_, s)| *s > theta)
        .map(|(id, _)| *id)
        .collect();
    ids.sort_unstable();
    RetrievedSet::from_ids(ids)
}
