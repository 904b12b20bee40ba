//! Trees of depth at most two from pairwise cost tuples.
//!
//! One pass over the instances accumulates the tuple `X` of the whole set,
//! `X(f_i)` per feature and `X(f_i, f_j)` per feature pair, touching only the
//! features an instance holds. Every leaf of a depth-two tree is then an
//! inclusion-exclusion combination of those tuples, so the split search never
//! revisits the data. Features held by more than half of the instances are
//! flipped before counting to keep rows sparse.

use crate::bits::{xor_ones_into, BitVector};
use crate::error::Result;
use crate::loss::{leaf_loss, leaf_theta, CostTuple};
use crate::model::{Dataset, SurvivalTree};

/// The tuples `X`, `X(f_i)` and `X(f_i, f_j)` for `i < j`.
#[derive(Clone, Debug)]
pub struct PairwiseSums {
    feature_count: usize,
    total: CostTuple,
    single: Vec<CostTuple>,
    pair: Vec<CostTuple>,
    pair_visits: u64,
    max_held: usize,
}

impl PairwiseSums {
    fn new(feature_count: usize) -> Self {
        Self {
            feature_count,
            total: CostTuple::ZERO,
            single: vec![CostTuple::ZERO; feature_count],
            pair: vec![CostTuple::ZERO; feature_count * feature_count.saturating_sub(1) / 2],
            pair_visits: 0,
            max_held: 0,
        }
    }

    fn reset(&mut self, feature_count: usize) {
        if feature_count != self.feature_count {
            *self = Self::new(feature_count);
            return;
        }
        self.total = CostTuple::ZERO;
        self.single.fill(CostTuple::ZERO);
        self.pair.fill(CostTuple::ZERO);
        self.pair_visits = 0;
        self.max_held = 0;
    }

    #[inline]
    fn tri(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * (2 * self.feature_count - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn add(&mut self, c: CostTuple, held: &[usize]) {
        self.total += c;
        self.max_held = self.max_held.max(held.len());
        for (a, &fi) in held.iter().enumerate() {
            self.single[fi] += c;
            for &fj in &held[a + 1..] {
                let k = self.tri(fi, fj);
                self.pair[k] += c;
            }
        }
        let h = held.len() as u64;
        self.pair_visits += h * h.saturating_sub(1) / 2;
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// `X`.
    pub fn total(&self) -> CostTuple {
        self.total
    }

    /// `X(f_i)`.
    pub fn single(&self, i: usize) -> CostTuple {
        self.single[i]
    }

    /// `X(f_i, f_j)`; symmetric, and `X(f_i, f_i) = X(f_i)`.
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> CostTuple {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.pair[self.tri(i, j)],
            std::cmp::Ordering::Greater => self.pair[self.tri(j, i)],
            std::cmp::Ordering::Equal => self.single[i],
        }
    }

    /// Number of pair-tuple updates made during accumulation.
    pub fn pair_visits(&self) -> u64 {
        self.pair_visits
    }

    /// Largest number of features held by one instance (after flipping).
    pub fn max_held(&self) -> usize {
        self.max_held
    }
}

/// The four leaves under a split on `f_i` then `f_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplementSums {
    /// `X(f_i, f_j)`
    pub both: CostTuple,
    /// `X(f_i, f̄_j)`
    pub only_i: CostTuple,
    /// `X(f̄_i, f_j)`
    pub only_j: CostTuple,
    /// `X(f̄_i, f̄_j)`
    pub neither: CostTuple,
}

pub fn complement_sums(sums: &PairwiseSums, i: usize, j: usize) -> ComplementSums {
    let both = sums.pair(i, j);
    let (xi, xj) = (sums.single(i), sums.single(j));
    ComplementSums { both, only_i: xi - both, only_j: xj - both, neither: sums.total - xi + both - xj }
}

/// Pairwise sums in the dataset's own feature polarity.
pub fn precompute(data: &Dataset) -> Result<PairwiseSums> {
    precompute_flipped(data, &vec![false; data.feature_count()])
}

/// Pairwise sums with the features marked in `flips` negated.
pub fn precompute_flipped(data: &Dataset, flips: &[bool]) -> Result<PairwiseSums> {
    let contributions = (0..data.len()).map(|i| data.contribution(i)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<&BitVector> = data.instances().iter().map(|i| i.features()).collect();
    let mut ws = Workspace::new(data.feature_count());
    ws.set_flips(flips);
    ws.accumulate((0..data.len() as u32).map(|i| (contributions[i as usize], rows[i as usize].words())));
    Ok(ws.sums)
}

/// Features held by more than half of `n` instances, given support `counts`.
pub fn sparsity_flips(counts: &[usize], n: usize) -> Vec<bool> {
    counts.iter().map(|&c| 2 * c > n).collect()
}

/// A depth-two optimum for one node budget, in the original feature polarity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Depth2Choice {
    pub value: f64,
    pub root: Option<RootSplit>,
}

/// Root feature, child node budgets, and the feature each child splits on
/// (`None` for a leaf child).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootSplit {
    pub feature: usize,
    pub left_nodes: u32,
    pub right_nodes: u32,
    pub left_split: Option<usize>,
    pub right_split: Option<usize>,
}

/// Optima for node budgets 1, 2 and 3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Depth2Solution {
    pub by_nodes: [Depth2Choice; 3],
}

/// Reusable buffers for repeated depth-two solves.
#[derive(Debug)]
pub(crate) struct Workspace {
    pub sums: PairwiseSums,
    pub flips: Vec<bool>,
    flip_words: Vec<u64>,
    counts: Vec<usize>,
    held: Vec<usize>,
}

impl Workspace {
    pub fn new(feature_count: usize) -> Self {
        Self {
            sums: PairwiseSums::new(feature_count),
            flips: vec![false; feature_count],
            flip_words: vec![0; feature_count.div_ceil(64)],
            counts: vec![0; feature_count],
            held: Vec::new(),
        }
    }

    pub fn set_flips(&mut self, flips: &[bool]) {
        self.flips.clear();
        self.flips.extend_from_slice(flips);
        self.flip_words.fill(0);
        for (f, _) in flips.iter().enumerate().filter(|(_, b)| **b) {
            self.flip_words[f / 64] |= 1 << (f % 64);
        }
    }

    /// Chooses flips from feature support over the given rows.
    pub fn choose_flips<'a>(&mut self, rows: impl Iterator<Item = &'a BitVector>) {
        self.counts.fill(0);
        let mut n = 0;
        for row in rows {
            n += 1;
            for f in row.iter_ones() {
                self.counts[f] += 1;
            }
        }
        let flips = sparsity_flips(&self.counts, n);
        self.set_flips(&flips);
    }

    pub fn accumulate<'a>(&mut self, rows: impl Iterator<Item = (CostTuple, &'a [u64])>) {
        let f = self.sums.feature_count;
        self.sums.reset(f);
        for (c, words) in rows {
            xor_ones_into(words, &self.flip_words, &mut self.held);
            self.sums.add(c, &self.held);
        }
    }

    /// Searches every depth-two tree over the accumulated sums. Leaves with
    /// fewer than `min_leaf` instances are not allowed; ties keep the earlier
    /// candidate, and a leaf beats any split of equal loss.
    pub fn search(&self, min_leaf: usize) -> Depth2Solution {
        let sums = &self.sums;
        let nf = sums.feature_count;
        let total = sums.total;
        let root_leaf = leaf_loss(&total);
        let mut best = [Depth2Choice { value: root_leaf, root: None }; 3];
        let ml = min_leaf.max(1);

        for i in 0..nf {
            let pos = sums.single[i];
            let neg = total - pos;
            if pos.count < ml || neg.count < ml {
                continue;
            }
            let leaf_pos = leaf_loss(&pos);
            let leaf_neg = leaf_loss(&neg);
            let (mut best_pos, mut best_neg) = ((leaf_pos, None), (leaf_neg, None));
            for j in 0..nf {
                if j == i {
                    continue;
                }
                let pij = sums.pair(i, j);
                let pos_j = pij;
                let pos_nj = pos - pij;
                if pos_j.count >= ml && pos_nj.count >= ml {
                    let v = leaf_loss(&pos_nj) + leaf_loss(&pos_j);
                    if v < best_pos.0 {
                        best_pos = (v, Some(j));
                    }
                }
                let neg_j = sums.single[j] - pij;
                let neg_nj = neg - neg_j;
                if neg_j.count >= ml && neg_nj.count >= ml {
                    let v = leaf_loss(&neg_nj) + leaf_loss(&neg_j);
                    if v < best_neg.0 {
                        best_neg = (v, Some(j));
                    }
                }
            }
            // Original polarity: left is where the raw feature is false.
            let (left_leaf, right_leaf, left_best, right_best) =
                if self.flips[i] { (leaf_pos, leaf_neg, best_pos, best_neg) } else { (leaf_neg, leaf_pos, best_neg, best_pos) };

            let stump = left_leaf + right_leaf;
            if stump < best[0].value {
                best[0] = Depth2Choice { value: stump, root: Some(root(i, 0, 0, None, None)) };
            }

            let mut two = (left_leaf + right_best.0, root(i, 0, 1, None, right_best.1));
            let other = left_best.0 + right_leaf;
            if other < two.0 {
                two = (other, root(i, 1, 0, left_best.1, None));
            }
            if two.0 < best[1].value {
                best[1] = Depth2Choice { value: two.0, root: Some(two.1) };
            }

            let three = left_best.0 + right_best.0;
            if three < best[2].value {
                best[2] = Depth2Choice { value: three, root: Some(root(i, 1, 1, left_best.1, right_best.1)) };
            }
        }
        Depth2Solution { by_nodes: best }
    }
}

fn root(feature: usize, left_nodes: u32, right_nodes: u32, left_split: Option<usize>, right_split: Option<usize>) -> RootSplit {
    RootSplit { feature, left_nodes, right_nodes, left_split, right_split }
}

/// Optimal tree of depth at most two with at most `nodes` branching nodes
/// (clamped into `1..=3`).
pub fn best_depth2(data: &Dataset, nodes: u32) -> Result<(SurvivalTree, f64)> {
    best_depth2_with(data, nodes, 1)
}

pub fn best_depth2_with(data: &Dataset, nodes: u32, min_leaf: usize) -> Result<(SurvivalTree, f64)> {
    let contributions = (0..data.len()).map(|i| data.contribution(i)).collect::<Result<Vec<_>>>()?;
    let mut ws = Workspace::new(data.feature_count());
    ws.choose_flips(data.instances().iter().map(|i| i.features()));
    ws.accumulate(data.instances().iter().zip(&contributions).map(|(inst, c)| (*c, inst.features().words())));
    let solution = ws.search(min_leaf);
    let choice = solution.by_nodes[(nodes.clamp(1, 3) - 1) as usize];
    let tree = match choice.root {
        None => SurvivalTree::leaf(leaf_theta(&ws.sums.total)),
        Some(r) => build_tree(data, &contributions, &r),
    };
    Ok((tree, choice.value))
}

fn build_tree(data: &Dataset, contributions: &[CostTuple], r: &RootSplit) -> SurvivalTree {
    let side = |value: bool, sub: Option<usize>| {
        let members: Vec<usize> =
            (0..data.len()).filter(|&k| data.instances()[k].features().get(r.feature) == value).collect();
        let tuple_where = |pred: &dyn Fn(usize) -> bool| members.iter().filter(|&&k| pred(k)).map(|&k| contributions[k]).sum::<CostTuple>();
        match sub {
            None => SurvivalTree::leaf(leaf_theta(&tuple_where(&|_| true))),
            Some(j) => {
                let feat = |k: usize| data.instances()[k].features().get(j);
                SurvivalTree::split(
                    j,
                    SurvivalTree::leaf(leaf_theta(&tuple_where(&|k| !feat(k)))),
                    SurvivalTree::leaf(leaf_theta(&tuple_where(&|k| feat(k)))),
                )
            }
        }
    };
    SurvivalTree::split(r.feature, side(false, r.left_split), side(true, r.right_split))
}
