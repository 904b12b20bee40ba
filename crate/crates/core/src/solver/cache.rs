//! Subproblem identity and the memo table.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// Canonical identity of an instance subset: the sorted index sequence and
/// its 64-bit digest. Equality compares the digest first and then the full
/// sequence, so digest collisions never merge distinct subsets.
#[derive(Clone, Debug)]
pub struct SubsetId {
    indices: Arc<[u32]>,
    digest: u64,
}

impl SubsetId {
    /// `indices` must be strictly increasing.
    pub fn new(indices: Vec<u32>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        let digest = digest(&indices);
        Self { indices: indices.into(), digest }
    }

    pub fn all(n: usize) -> Self {
        Self::new((0..n as u32).collect())
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }
}

fn digest(indices: &[u32]) -> u64 {
    // splitmix64 finalizer folded over the sequence
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15 ^ indices.len() as u64;
    for &i in indices {
        h = h.wrapping_add(i as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

impl PartialEq for SubsetId {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest && (Arc::ptr_eq(&self.indices, &other.indices) || self.indices == other.indices)
    }
}

impl Eq for SubsetId {}

impl Hash for SubsetId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.digest);
    }
}

/// Clamps budgets so that `nodes ≤ 2^depth − 1` and `depth ≤ nodes`.
pub fn normalize_budgets(depth: u32, nodes: u32) -> (u32, u32) {
    let max_nodes = if depth >= 31 { u32::MAX } else { (1u32 << depth) - 1 };
    let nodes = nodes.min(max_nodes);
    (depth.min(nodes), nodes)
}

/// A subproblem `⟨D, d, n⟩` with normalized budgets.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubproblemKey {
    pub subset: SubsetId,
    pub depth: u32,
    pub nodes: u32,
}

impl SubproblemKey {
    pub fn new(subset: SubsetId, depth: u32, nodes: u32) -> Self {
        let (depth, nodes) = normalize_budgets(depth, nodes);
        Self { subset, depth, nodes }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryStatus {
    Optimal,
    LowerBound,
}

/// Branching decision of an optimal entry: feature and the (normalized) node
/// budgets handed to the left and right child.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitRecord {
    pub feature: usize,
    pub left_nodes: u32,
    pub right_nodes: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CacheEntry {
    pub value: f64,
    pub status: EntryStatus,
    /// `None` on an optimal entry means the optimum is a single leaf.
    pub split: Option<SplitRecord>,
}

impl CacheEntry {
    pub fn optimal(value: f64, split: Option<SplitRecord>) -> Self {
        Self { value, status: EntryStatus::Optimal, split }
    }

    pub fn lower_bound(value: f64) -> Self {
        Self { value, status: EntryStatus::LowerBound, split: None }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == EntryStatus::Optimal
    }
}

/// Solved subproblems grouped by subset. Optimal entries are write-once;
/// a lower bound is only ever raised or replaced by an optimal entry.
#[derive(Default, Debug)]
pub struct Cache {
    map: HashMap<SubsetId, Vec<(u32, u32, CacheEntry)>>,
    entries: usize,
}

impl Cache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    pub fn clear(&mut self) {
        self.map.clear();
        self.entries = 0;
    }

    pub fn get(&self, subset: &SubsetId, depth: u32, nodes: u32) -> Option<&CacheEntry> {
        self.map.get(subset)?.iter().find(|(d, n, _)| *d == depth && *n == nodes).map(|(_, _, e)| e)
    }

    /// Best known lower bound for `(depth, nodes)`: any entry with budgets at
    /// least as large bounds this one from below, since smaller budgets admit
    /// fewer trees. Losses are nonnegative, so the default is 0.
    pub fn lower_bound(&self, subset: &SubsetId, depth: u32, nodes: u32) -> f64 {
        let Some(list) = self.map.get(subset) else { return 0.0 };
        list.iter()
            .filter(|(d, n, _)| *d >= depth && *n >= nodes)
            .map(|(_, _, e)| e.value)
            .fold(0.0, f64::max)
    }

    pub fn store(&mut self, subset: &SubsetId, depth: u32, nodes: u32, entry: CacheEntry) {
        let list = self.map.entry(subset.clone()).or_default();
        match list.iter_mut().find(|(d, n, _)| *d == depth && *n == nodes) {
            Some((_, _, existing)) => {
                if existing.is_optimal() {
                    return;
                }
                if entry.is_optimal() || entry.value > existing.value {
                    *existing = entry;
                }
            }
            None => {
                list.push((depth, nodes, entry));
                self.entries += 1;
            }
        }
    }
}
