//! Tree-comparison metrics: normalized quartet distance and normalized
//! height difference.
//!
//! The quartet distance enumerates every four-leaf subset and compares the
//! induced unrooted quartet topologies, read topologically from pairwise
//! MRCA depths (edge counts from the root). Brute force is adequate at the
//! 80-leaf experiment scale: C(80,4) is about 1.6 million subsets.

use std::collections::HashMap;

use thiserror::Error;

use crate::num::Real;
use crate::tree::{NodeId, Tree};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trees must share one leaf label set")]
    LeafSetMismatch,
    #[error("quartet distance needs at least 4 leaves, got {0}")]
    TooFewLeaves(usize),
    #[error("reference tree has zero height")]
    ZeroHeight,
}

/// Pairwise MRCA depth table over a fixed leaf order, depths counted in
/// edges from the root so the quartet split is branch-length free.
struct MrcaDepths {
    n: usize,
    depth: Vec<u32>,
}

impl MrcaDepths {
    fn build<F: Real>(tree: &Tree<F>, order: &[&str]) -> Self {
        let n = order.len();
        let label_rank: HashMap<&str, usize> =
            order.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut node_depth = vec![0u32; tree.len()];
        let mut stack = vec![tree.root()];
        while let Some(v) = stack.pop() {
            for &c in &tree.node(v).children {
                node_depth[c] = node_depth[v] + 1;
                stack.push(c);
            }
        }
        // Ancestor chains per leaf, root first.
        let mut chains: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for leaf in tree.leaves() {
            let rank = label_rank[tree.node(leaf).label.as_deref().expect("leaf label")];
            let mut chain = vec![leaf];
            while let Some(p) = tree.node(*chain.last().unwrap()).parent {
                chain.push(p);
            }
            chain.reverse();
            chains[rank] = chain;
        }
        let mut depth = vec![0u32; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (&chains[i], &chains[j]);
                let mut k = 0;
                while k < a.len() && k < b.len() && a[k] == b[k] {
                    k += 1;
                }
                let mrca = a[k - 1];
                depth[i * n + j] = node_depth[mrca];
                depth[j * n + i] = node_depth[mrca];
            }
        }
        Self { n, depth }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> u32 {
        self.depth[i * self.n + j]
    }

    /// Unrooted quartet split for leaves i<j<k<l: the partner of i, encoded
    /// 0/1/2 for j/k/l. The deepest pairwise MRCA identifies a cherry of
    /// the induced quartet.
    fn split(&self, i: usize, j: usize, k: usize, l: usize) -> u8 {
        let pairs = [
            (self.get(i, j), 0u8),
            (self.get(i, k), 1),
            (self.get(i, l), 2),
            (self.get(k, l), 0),
            (self.get(j, l), 1),
            (self.get(j, k), 2),
        ];
        let mut best = pairs[0];
        for &p in &pairs[1..] {
            if p.0 > best.0 {
                best = p;
            }
        }
        best.1
    }
}

/// Fraction of 4-leaf subsets on which the two trees induce different
/// unrooted quartet topologies.
pub fn quartet_distance<F: Real>(t1: &Tree<F>, t2: &Tree<F>) -> Result<F, MetricsError> {
    let mut order: Vec<&str> = t1.taxa();
    order.sort_unstable();
    let mut other: Vec<&str> = t2.taxa();
    other.sort_unstable();
    if order != other {
        return Err(MetricsError::LeafSetMismatch);
    }
    let n = order.len();
    if n < 4 {
        return Err(MetricsError::TooFewLeaves(n));
    }
    let d1 = MrcaDepths::build(t1, &order);
    let d2 = MrcaDepths::build(t2, &order);
    let mut differing = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                for l in (k + 1)..n {
                    total += 1;
                    if d1.split(i, j, k, l) != d2.split(i, j, k, l) {
                        differing += 1;
                    }
                }
            }
        }
    }
    Ok(F::of(differing as f64 / total as f64))
}

/// Signed normalized height difference: (height(reference) - height(other))
/// / height(reference); positive means `other` underestimates.
pub fn height_difference<F: Real>(reference: &Tree<F>, other: &Tree<F>) -> Result<F, MetricsError> {
    let h = reference.height();
    if h <= F::zero() {
        return Err(MetricsError::ZeroHeight);
    }
    Ok((h - other.height()) / h)
}
