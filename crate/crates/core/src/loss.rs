//! Proportional-hazard leaf loss and its sufficient statistics.
//!
//! A leaf's loss is the gap between the saturated and the fitted
//! log-likelihood. With `θ̂ = ES/HS` substituted it depends on the leaf's data
//! only through the sums `(ES, HS, NLHS)`, which is what makes the
//! precomputation in the depth-two solver possible.

use std::ops::{Add, AddAssign, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::model::{Dataset, SurvivalTree};

/// Event sum, hazard sum and negative log hazard sum, plus the instance count.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostTuple {
    pub count: usize,
    pub es: f64,
    pub hs: f64,
    pub nlhs: f64,
}

impl CostTuple {
    pub const ZERO: CostTuple = CostTuple { count: 0, es: 0.0, hs: 0.0, nlhs: 0.0 };

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

impl Add for CostTuple {
    type Output = CostTuple;

    #[inline]
    fn add(self, o: CostTuple) -> CostTuple {
        CostTuple { count: self.count + o.count, es: self.es + o.es, hs: self.hs + o.hs, nlhs: self.nlhs + o.nlhs }
    }
}

impl Sub for CostTuple {
    type Output = CostTuple;

    #[inline]
    fn sub(self, o: CostTuple) -> CostTuple {
        CostTuple { count: self.count - o.count, es: self.es - o.es, hs: self.hs - o.hs, nlhs: self.nlhs - o.nlhs }
    }
}

impl AddAssign for CostTuple {
    #[inline]
    fn add_assign(&mut self, o: CostTuple) {
        *self = *self + o;
    }
}

impl SubAssign for CostTuple {
    #[inline]
    fn sub_assign(&mut self, o: CostTuple) {
        *self = *self - o;
    }
}

impl std::iter::Sum for CostTuple {
    fn sum<I: Iterator<Item = CostTuple>>(iter: I) -> CostTuple {
        iter.fold(CostTuple::ZERO, |a, b| a + b)
    }
}

/// Maximum-likelihood leaf coefficient `ES/HS`, or `1/(2·HS)` for a leaf
/// without events.
pub fn theta_hat(tuple: &CostTuple) -> Result<f64> {
    if tuple.hs <= 0.0 {
        return Err(Error::DegenerateLeaf);
    }
    if tuple.es > 0.0 {
        Ok(tuple.es / tuple.hs)
    } else {
        Ok(1.0 / (2.0 * tuple.hs))
    }
}

/// The coefficient reported in a tree leaf: [`theta_hat`], or 1 when the leaf
/// carries no hazard mass.
pub fn leaf_theta(tuple: &CostTuple) -> f64 {
    theta_hat(tuple).unwrap_or(1.0)
}

/// `NLHS − ES·log(ES/HS)`, evaluated as `NLHS + ES·log(HS/ES)` so that a
/// single-event leaf cancels to exactly zero.
///
/// The event-free case is 0 (the limit of the loss as `θ → 0`), as are an
/// empty tuple and a single instance (saturated by its own `θ̂`). Rounding can push a saturated leaf a few ulps below zero;
/// the result is clamped at zero so losses stay exact lower bounds of 0.
#[inline]
pub fn leaf_loss(tuple: &CostTuple) -> f64 {
    if tuple.count <= 1 || tuple.es <= 0.0 || tuple.hs <= 0.0 {
        return 0.0;
    }
    let loss = tuple.nlhs + tuple.es * (tuple.hs / tuple.es).ln();
    loss.max(0.0)
}

/// One instance's term `Λ̂θ − δ·log Λ̂ − δ·log θ − δ`.
#[inline]
pub fn instance_loss(hazard: f64, event: bool, theta: f64) -> f64 {
    if event {
        hazard * theta - hazard.ln() - theta.ln() - 1.0
    } else {
        hazard * theta
    }
}

/// The leaf loss evaluated term by term at a supplied `theta`.
pub fn leaf_loss_direct(data: &Dataset, theta: f64) -> Result<f64> {
    if !data.has_baseline() {
        return Err(Error::MissingBaseline);
    }
    Ok(data
        .instances()
        .iter()
        .enumerate()
        .map(|(i, inst)| instance_loss(data.hazard(i).unwrap_or(0.0), inst.event(), theta))
        .sum())
}

/// Component-wise sums over the dataset.
pub fn tuple_of(data: &Dataset) -> Result<CostTuple> {
    (0..data.len()).map(|i| data.contribution(i)).sum()
}

/// `1 − tree_loss/root_leaf_loss`: 0 for a single leaf, 1 for zero loss.
pub fn normalized_loss(tree_loss: f64, root_leaf_loss: f64) -> Result<f64> {
    if root_leaf_loss <= 0.0 {
        return Err(Error::UndefinedMetric("normalized loss", "single-leaf loss is zero".into()));
    }
    Ok(1.0 - tree_loss / root_leaf_loss)
}

/// Tree loss recomputed from scratch: every leaf refits its own `θ̂` on the
/// instances routed to it.
pub fn tree_loss(tree: &SurvivalTree, data: &Dataset) -> Result<f64> {
    let mut tuples = vec![CostTuple::ZERO; tree.leaf_count()];
    for (i, inst) in data.instances().iter().enumerate() {
        tuples[tree.leaf_index(inst.features())?] += data.contribution(i)?;
    }
    Ok(tuples.iter().map(leaf_loss).sum())
}
