#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surtree::loss::{leaf_loss, CostTuple};
use surtree::{fit_baseline, BitVector, Dataset, Instance};

/// A random binary dataset with a self-fit baseline. Times are drawn from a
/// small integer range so ties are frequent.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, nf: usize) -> Dataset {
    let density: f64 = rng.random_range(0.15..0.85);
    let instances: Vec<Instance> = (0..n)
        .map(|_| {
            let bits: Vec<bool> = (0..nf).map(|_| rng.random_bool(density)).collect();
            let shift = bits.iter().take(2).filter(|&&b| b).count() as f64 * 3.0;
            let t = 1.0 + rng.random_range(0..12) as f64 + shift;
            Instance::new(t, rng.random_bool(0.7), BitVector::from_bools(&bits)).unwrap()
        })
        .collect();
    let d = Dataset::new(instances, nf).unwrap();
    let b = fit_baseline(&d).unwrap();
    d.with_baseline(&b)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tuple(data: &Dataset, idx: &[usize]) -> CostTuple {
    idx.iter().map(|&i| data.contribution(i).unwrap()).sum()
}

/// Exhaustive minimum over every tree shape and feature assignment with
/// depth at most `d` and at most `n` branching nodes.
pub fn brute_force(data: &Dataset, d: u32, n: u32) -> f64 {
    let idx: Vec<usize> = (0..data.len()).collect();
    enumerate(data, &idx, d, n)
}

fn enumerate(data: &Dataset, idx: &[usize], d: u32, n: u32) -> f64 {
    let mut best = leaf_loss(&tuple(data, idx));
    if d == 0 || n == 0 {
        return best;
    }
    for f in 0..data.feature_count() {
        let (right, left): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| data.instances()[i].features().get(f));
        if left.is_empty() || right.is_empty() {
            continue;
        }
        for ln in 0..n {
            let v = enumerate(data, &left, d - 1, ln) + enumerate(data, &right, d - 1, n - 1 - ln);
            best = best.min(v);
        }
    }
    best
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
