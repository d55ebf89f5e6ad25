//! Independent oracles for the integration tests. Everything here
//! deliberately avoids the library's optimized code paths: quartet
//! topologies come from branch-length path matrices instead of MRCA
//! depths, and the reference borrowing simulator recomputes every rate by
//! scanning plain trait sets.

// Each integration test target uses its own slice of this module.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use langsim_core::num::exp_draw;
use langsim_core::tree::{NodeId, Tree};
use langsim_core::Scalar;

/// Leaf-to-leaf path-length matrix over sorted taxon order.
fn path_matrix(tree: &Tree<Scalar>) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut order: Vec<String> = tree.taxa().iter().map(|s| s.to_string()).collect();
    order.sort();
    let index: HashMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let leaves = tree.leaves();
    let n = leaves.len();
    let mut dist = vec![vec![0.0; n]; n];
    for (a_pos, &a) in leaves.iter().enumerate() {
        for &b in &leaves[a_pos + 1..] {
            // Walk both ancestor chains; the first shared node is the MRCA.
            let mut ancestors = HashSet::new();
            let mut v = Some(a);
            while let Some(x) = v {
                ancestors.insert(x);
                v = tree.node(x).parent;
            }
            let mut m = b;
            while !ancestors.contains(&m) {
                m = tree.node(m).parent.expect("shared root");
            }
            let d = (tree.node(m).age - tree.node(a).age) + (tree.node(m).age - tree.node(b).age);
            let ia = index[tree.node(a).label.as_deref().unwrap()];
            let ib = index[tree.node(b).label.as_deref().unwrap()];
            dist[ia][ib] = d;
            dist[ib][ia] = d;
        }
    }
    (order, dist)
}

/// Quartet split by the four-point condition: of the three pairings, the
/// one with the strictly smallest path-length sum names the split.
fn four_point_split(d: &[Vec<f64>], i: usize, j: usize, k: usize, l: usize) -> u8 {
    let sums = [
        d[i][j] + d[k][l], // ij|kl
        d[i][k] + d[j][l], // ik|jl
        d[i][l] + d[j][k], // il|jk
    ];
    let mut best = 0u8;
    for c in 1..3 {
        if sums[c as usize] < sums[best as usize] {
            best = c;
        }
    }
    best
}

/// Normalized quartet distance computed entirely from branch-length path
/// matrices; the independent cross-check for the MRCA-depth implementation.
pub fn quartet_distance_path_oracle(t1: &Tree<Scalar>, t2: &Tree<Scalar>) -> f64 {
    let (order1, d1) = path_matrix(t1);
    let (order2, d2) = path_matrix(t2);
    assert_eq!(order1, order2, "oracle needs matching leaf sets");
    let n = order1.len();
    let mut differing = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                for l in (k + 1)..n {
                    total += 1;
                    if four_point_split(&d1, i, j, k, l) != four_point_split(&d2, i, j, k, l) {
                        differing += 1;
                    }
                }
            }
        }
    }
    differing as f64 / total as f64
}

/// Plain-set reference simulator for stochastic-Dollo evolution with global
/// borrowing. No cached counts, no alive-index sets: every rate is
/// recomputed by scanning, and the event dispatch mirrors the process
/// definition directly (births per language, deaths and donations per
/// alive (language, trait) pair, recipient uniform among the others).
pub struct NaiveSdBorrowing {
    pub birth_rate: f64,
    pub death_rate: f64,
    pub borrow_rate: f64,
}

impl NaiveSdBorrowing {
    /// Leaf trait counts after evolving `root_traits` all-present traits
    /// down the tree.
    pub fn leaf_counts(
        &self,
        tree: &Tree<Scalar>,
        root_traits: usize,
        rng: &mut ChaCha12Rng,
    ) -> Vec<usize> {
        let mut sets: Vec<HashSet<usize>> = vec![HashSet::new(); tree.len()];
        let mut next_trait = root_traits;
        let root_set: HashSet<usize> = (0..root_traits).collect();
        for &c in &tree.node(tree.root()).children {
            sets[c] = root_set.clone();
        }
        // Internal split ages, oldest first, then a terminal stop at 0.
        let mut splits: Vec<NodeId> = tree
            .nodes()
            .filter(|(_, n)| !n.is_leaf())
            .map(|(id, _)| id)
            .collect();
        splits.sort_by(|&a, &b| {
            tree.node(b)
                .age
                .partial_cmp(&tree.node(a).age)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut alive: Vec<NodeId> = tree.node(tree.root()).children.clone();
        let mut age = tree.height();
        for step in 1..=splits.len() {
            let (stop, split) = if step < splits.len() {
                (tree.node(splits[step]).age, Some(splits[step]))
            } else {
                (0.0, None)
            };
            loop {
                let total_alive: usize = alive.iter().map(|&l| sets[l].len()).sum();
                let birth = self.birth_rate * alive.len() as f64;
                let death = self.death_rate * total_alive as f64;
                let borrow = self.borrow_rate * self.death_rate * total_alive as f64;
                let total = birth + death + borrow;
                if total <= 0.0 {
                    break;
                }
                let step_time = exp_draw(rng, total);
                if age - step_time <= stop {
                    break;
                }
                age -= step_time;
                let u: f64 = rng.random();
                if u < birth / total {
                    let owner = alive[rng.random_range(0..alive.len())];
                    sets[owner].insert(next_trait);
                    next_trait += 1;
                } else {
                    // Uniform alive (language, trait) pair by flattening.
                    let mut pairs = Vec::with_capacity(total_alive);
                    for &l in &alive {
                        let mut traits: Vec<usize> = sets[l].iter().copied().collect();
                        traits.sort_unstable();
                        for t in traits {
                            pairs.push((l, t));
                        }
                    }
                    let (lang, trait_id) = pairs[rng.random_range(0..pairs.len())];
                    if u < (birth + death) / total {
                        sets[lang].remove(&trait_id);
                    } else if alive.len() >= 2 {
                        let mut recipient = alive[rng.random_range(0..alive.len())];
                        while recipient == lang {
                            recipient = alive[rng.random_range(0..alive.len())];
                        }
                        sets[recipient].insert(trait_id);
                    }
                }
            }
            age = stop;
            if let Some(v) = split {
                let copy = sets[v].clone();
                for &c in &tree.node(v).children {
                    sets[c] = copy.clone();
                }
                alive.retain(|&x| x != v);
                alive.extend_from_slice(&tree.node(v).children);
            }
        }
        tree.leaves().into_iter().map(|l| sets[l].len()).collect()
    }
}
