//! Dynamic programming over dataset subsets.
//!
//! `T(D, d, n)` is the least total leaf loss of a tree over `D` with depth at
//! most `d` and at most `n` branching nodes. A branching node tries every
//! feature and every split of the remaining node budget between its children,
//! and each child is again a subproblem. Solved subproblems are memoized by
//! subset identity; failed bounded searches leave lower bounds behind, which
//! later searches use to skip candidates early.

pub mod cache;
pub mod depth2;

use std::time::{Duration, Instant};

use crate::bits::BitVector;
use crate::error::{Error, Incumbent, Result};
use crate::loss::{leaf_loss, leaf_theta, CostTuple};
use crate::model::{Dataset, SurvivalTree};

pub use cache::{normalize_budgets, Cache, CacheEntry, EntryStatus, SplitRecord, SubproblemKey, SubsetId};
pub use depth2::{best_depth2, complement_sums, precompute, precompute_flipped, ComplementSums, PairwiseSums};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_depth: u32,
    pub max_nodes: u32,
    pub min_leaf_size: usize,
    pub use_depth2: bool,
    /// Upper/lower-bound pruning of the split search.
    pub use_bounds: bool,
    pub time_limit: Option<Duration>,
}

impl SolverConfig {
    pub fn new(max_depth: u32, max_nodes: u32) -> Self {
        Self { max_depth, max_nodes, min_leaf_size: 1, use_depth2: true, use_bounds: true, time_limit: None }
    }

    /// Full node budget `2^d − 1` for the given depth.
    pub fn full(max_depth: u32) -> Self {
        Self::new(max_depth, u32::MAX)
    }

    pub fn normalized_budgets(&self) -> (u32, u32) {
        normalize_budgets(self.max_depth, self.max_nodes)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub searches: u64,
    pub cache_hits: u64,
    pub depth2_calls: u64,
    pub pair_visits: u64,
}

/// Solves `data` at the configured budgets.
pub fn solve(data: &Dataset, config: &SolverConfig) -> Result<(SurvivalTree, f64)> {
    Solver::new(data, config.clone())?.solve()
}

/// A solver bound to one dataset; the cache persists across calls, so solving
/// several budgets in sequence reuses earlier work.
pub struct Solver<'a> {
    data: &'a Dataset,
    config: SolverConfig,
    contributions: Vec<CostTuple>,
    columns: Vec<BitVector>,
    cache: Cache,
    stats: SolverStats,
    deadline: Option<Instant>,
    workspace: depth2::Workspace,
    root_best: Option<(f64, SplitRecord)>,
}

const SLACK: f64 = 1e-9;

impl<'a> Solver<'a> {
    pub fn new(data: &'a Dataset, config: SolverConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if config.min_leaf_size == 0 {
            return Err(Error::Config("min_leaf_size must be at least 1".into()));
        }
        if data.len() > u32::MAX as usize {
            return Err(Error::Config("dataset too large".into()));
        }
        let contributions = (0..data.len()).map(|i| data.contribution(i)).collect::<Result<Vec<_>>>()?;
        let mut columns = vec![BitVector::zeros(data.len()); data.feature_count()];
        for (k, inst) in data.instances().iter().enumerate() {
            for f in inst.features().iter_ones() {
                columns[f].set(k, true);
            }
        }
        Ok(Self {
            data,
            workspace: depth2::Workspace::new(data.feature_count()),
            config,
            contributions,
            columns,
            cache: Cache::new(),
            stats: SolverStats::default(),
            deadline: None,
            root_best: None,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Changes budgets (and other settings) while keeping the cache.
    pub fn set_config(&mut self, config: SolverConfig) {
        self.config = config;
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }

    pub fn root_key(&self) -> SubproblemKey {
        let (d, n) = self.config.normalized_budgets();
        SubproblemKey::new(SubsetId::all(self.data.len()), d, n)
    }

    /// Solves the root subproblem and rebuilds the optimal tree.
    ///
    /// When the time limit runs out, the error carries the best tree found
    /// so far at the root, flagged as not optimal.
    pub fn solve(&mut self) -> Result<(SurvivalTree, f64)> {
        let key = self.root_key();
        self.deadline = self.config.time_limit.map(|t| Instant::now() + t);
        self.root_best = None;
        let outcome = self.search(&key.subset, key.depth, key.nodes, f64::INFINITY, true);
        self.deadline = None;
        match outcome {
            Ok(entry) => {
                debug_assert!(entry.is_optimal());
                let tree = self.reconstruct(&key)?;
                Ok((tree, entry.value))
            }
            Err(Error::TimeLimit(_)) => {
                let leaf_tuple = self.tuple(key.subset.indices());
                let mut incumbent = Incumbent { tree: SurvivalTree::leaf(leaf_theta(&leaf_tuple)), loss: leaf_loss(&leaf_tuple), optimal: false };
                if let Some((value, split)) = self.root_best {
                    incumbent.tree = self.build_split(&key.subset, key.depth, split)?;
                    incumbent.loss = value;
                }
                Err(Error::TimeLimit(Box::new(incumbent)))
            }
            Err(e) => Err(e),
        }
    }

    /// Solves one subproblem under an upper bound. The result is optimal when
    /// the optimum lies below `upper_bound`; otherwise it may be a lower bound
    /// at least `upper_bound`.
    pub fn solve_subproblem(&mut self, key: &SubproblemKey, upper_bound: f64) -> Result<CacheEntry> {
        self.search(&key.subset, key.depth, key.nodes, upper_bound, false)
    }

    fn tuple(&self, subset: &[u32]) -> CostTuple {
        subset.iter().map(|&i| self.contributions[i as usize]).sum()
    }

    fn check_time(&self) -> Result<()> {
        match self.deadline {
            Some(deadline) if Instant::now() >= deadline => Err(Error::TimeLimit(Box::new(Incumbent {
                tree: SurvivalTree::leaf(1.0),
                loss: f64::INFINITY,
                optimal: false,
            }))),
            _ => Ok(()),
        }
    }

    fn search(&mut self, subset: &SubsetId, depth: u32, nodes: u32, upper_bound: f64, is_root: bool) -> Result<CacheEntry> {
        let (depth, nodes) = normalize_budgets(depth, nodes);
        if nodes == 0 {
            return Ok(CacheEntry::optimal(leaf_loss(&self.tuple(subset.indices())), None));
        }
        if let Some(entry) = self.cache.get(subset, depth, nodes) {
            if entry.is_optimal() || entry.value >= upper_bound {
                self.stats.cache_hits += 1;
                return Ok(*entry);
            }
        }
        if self.config.use_bounds {
            let lb = self.cache.lower_bound(subset, depth, nodes);
            if lb >= upper_bound {
                return Ok(CacheEntry::lower_bound(lb));
            }
        }
        self.check_time()?;

        if depth <= 2 && self.config.use_depth2 {
            return Ok(self.depth2(subset, depth, nodes));
        }
        self.stats.searches += 1;

        let ml = self.config.min_leaf_size;
        let parent = self.tuple(subset.indices());
        let mut best_value = leaf_loss(&parent);
        let mut best_split: Option<SplitRecord> = None;
        let bounded = self.config.use_bounds;
        let ub = if bounded { upper_bound } else { f64::INFINITY };

        let mut left_idx = Vec::with_capacity(subset.len());
        let mut right_idx = Vec::with_capacity(subset.len());
        let mut seen: Vec<(u32, u32)> = Vec::with_capacity(nodes as usize);
        for f in 0..self.data.feature_count() {
            if bounded && best_value.min(ub) <= 0.0 {
                break;
            }
            left_idx.clear();
            right_idx.clear();
            let column = &self.columns[f];
            for &i in subset.indices() {
                if column.get(i as usize) {
                    right_idx.push(i);
                } else {
                    left_idx.push(i);
                }
            }
            if left_idx.len() < ml || right_idx.len() < ml {
                continue;
            }
            let left_id = SubsetId::new(left_idx.clone());
            let right_id = SubsetId::new(right_idx.clone());

            seen.clear();
            for left_nodes in 0..nodes {
                let (ld, ln) = normalize_budgets(depth - 1, left_nodes);
                let (rd, rn) = normalize_budgets(depth - 1, nodes - 1 - left_nodes);
                if seen.contains(&(ln, rn)) {
                    continue;
                }
                seen.push((ln, rn));

                let threshold = best_value.min(ub);
                let (lb_left, lb_right) = if bounded {
                    (self.cache.lower_bound(&left_id, ld, ln), self.cache.lower_bound(&right_id, rd, rn))
                } else {
                    (0.0, 0.0)
                };
                if bounded && lb_left + lb_right >= threshold {
                    continue;
                }
                let slack = SLACK * threshold.abs().max(1.0);
                let child_ub = |other: f64| if bounded { threshold - other + slack } else { f64::INFINITY };

                // Smaller child first; its value tightens the bound on the other.
                let left_first = left_idx.len() <= right_idx.len();
                let (first, second) = if left_first {
                    let a = self.search(&left_id, ld, ln, child_ub(lb_right), false)?;
                    if !a.is_optimal() {
                        continue;
                    }
                    let b = self.search(&right_id, rd, rn, child_ub(a.value), false)?;
                    (a, b)
                } else {
                    let b = self.search(&right_id, rd, rn, child_ub(lb_left), false)?;
                    if !b.is_optimal() {
                        continue;
                    }
                    let a = self.search(&left_id, ld, ln, child_ub(b.value), false)?;
                    (a, b)
                };
                if !first.is_optimal() || !second.is_optimal() {
                    continue;
                }
                let total = first.value + second.value;
                if total < best_value {
                    best_value = total;
                    let split = SplitRecord { feature: f, left_nodes: ln, right_nodes: rn };
                    best_split = Some(split);
                    if is_root {
                        self.root_best = Some((total, split));
                    }
                }
            }
        }

        let entry = if best_value < ub {
            CacheEntry::optimal(best_value, best_split)
        } else {
            CacheEntry::lower_bound(ub)
        };
        self.cache.store(subset, depth, nodes, entry);
        Ok(entry)
    }

    fn depth2(&mut self, subset: &SubsetId, depth: u32, nodes: u32) -> CacheEntry {
        self.stats.depth2_calls += 1;
        let rows = self.data.instances();
        self.workspace.choose_flips(subset.indices().iter().map(|&i| rows[i as usize].features()));
        let contributions = &self.contributions;
        self.workspace
            .accumulate(subset.indices().iter().map(|&i| (contributions[i as usize], rows[i as usize].features().words())));
        self.stats.pair_visits += self.workspace.sums.pair_visits();
        let solution = self.workspace.search(self.config.min_leaf_size);

        let mut result = None;
        for (k, choice) in solution.by_nodes.iter().enumerate() {
            let n = k as u32 + 1;
            let (d, n) = normalize_budgets(2, n);
            let split = choice.root.map(|r| SplitRecord { feature: r.feature, left_nodes: r.left_nodes, right_nodes: r.right_nodes });
            let entry = CacheEntry::optimal(choice.value, split);
            self.cache.store(subset, d, n, entry);
            if (d, n) == (depth, nodes) {
                result = Some(entry);
            }
        }
        result.expect("depth-two budgets cover every normalized key with depth <= 2")
    }

    /// Rebuilds the tree of an optimally solved subproblem from its split
    /// records. Children without a cached optimum are solved on demand.
    pub fn reconstruct(&mut self, key: &SubproblemKey) -> Result<SurvivalTree> {
        let (depth, nodes) = normalize_budgets(key.depth, key.nodes);
        if nodes == 0 {
            return Ok(SurvivalTree::leaf(leaf_theta(&self.tuple(key.subset.indices()))));
        }
        let entry = match self.cache.get(&key.subset, depth, nodes) {
            Some(e) if e.is_optimal() => *e,
            _ => return Err(Error::CacheMiss { depth, nodes }),
        };
        match entry.split {
            None => Ok(SurvivalTree::leaf(leaf_theta(&self.tuple(key.subset.indices())))),
            Some(split) => self.build_split(&key.subset, depth, split),
        }
    }

    fn build_split(&mut self, subset: &SubsetId, depth: u32, split: SplitRecord) -> Result<SurvivalTree> {
        let column = &self.columns[split.feature];
        let (right, left): (Vec<u32>, Vec<u32>) = subset.indices().iter().partition(|&&i| column.get(i as usize));
        let left = SubproblemKey::new(SubsetId::new(left), depth - 1, split.left_nodes);
        let right = SubproblemKey::new(SubsetId::new(right), depth - 1, split.right_nodes);
        let left_tree = self.child_tree(&left)?;
        let right_tree = self.child_tree(&right)?;
        Ok(SurvivalTree::split(split.feature, left_tree, right_tree))
    }

    fn child_tree(&mut self, key: &SubproblemKey) -> Result<SurvivalTree> {
        if key.nodes > 0 && !self.cache.get(&key.subset, key.depth, key.nodes).is_some_and(|e| e.is_optimal()) {
            let saved = self.deadline.take();
            let entry = self.search(&key.subset, key.depth, key.nodes, f64::INFINITY, false);
            self.deadline = saved;
            entry?;
        }
        self.reconstruct(key)
    }
}
