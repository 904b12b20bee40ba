//! Data model: instances, datasets, the nonparametric baseline estimators and
//! the survival tree itself.

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::format::{ser_f64, ser_vec_f64};
use crate::loss::CostTuple;

/// One observation: time, event flag and binarized features.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    time: f64,
    event: bool,
    features: BitVector,
}

impl Instance {
    pub fn new(time: f64, event: bool, features: BitVector) -> Result<Self> {
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::InvalidInstance { index: 0, reason: format!("time {time} must be positive and finite") });
        }
        Ok(Self { time, event, features })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn event(&self) -> bool {
        self.event
    }

    pub fn features(&self) -> &BitVector {
        &self.features
    }
}

#[derive(Clone, Debug)]
struct HazardValues {
    hazard: Vec<f64>,
    neg_log_hazard: Vec<f64>,
}

/// An ordered collection of instances over a common binary feature space.
///
/// After [`Dataset::with_baseline`] each instance also carries its baseline
/// cumulative hazard `Λ̂(t_i)` and `−δ_i·log Λ̂(t_i)`, which every leaf loss
/// downstream is built from.
#[derive(Clone, Debug)]
pub struct Dataset {
    instances: Vec<Instance>,
    feature_count: usize,
    hazard: Option<HazardValues>,
}

impl Dataset {
    pub fn new(instances: Vec<Instance>, feature_count: usize) -> Result<Self> {
        for (index, inst) in instances.iter().enumerate() {
            if inst.features.len() != feature_count {
                return Err(Error::InvalidInstance {
                    index,
                    reason: format!("{} features, expected {feature_count}", inst.features.len()),
                });
            }
        }
        Ok(Self { instances, feature_count, hazard: None })
    }

    /// Builds a dataset from parallel columns.
    pub fn from_parts(times: &[f64], events: &[bool], rows: Vec<BitVector>, feature_count: usize) -> Result<Self> {
        if times.len() != events.len() || times.len() != rows.len() {
            return Err(Error::Config("times, events and feature rows differ in length".into()));
        }
        let instances = times
            .iter()
            .zip(events)
            .zip(rows)
            .enumerate()
            .map(|(index, ((&t, &e), f))| {
                Instance::new(t, e, f).map_err(|err| match err {
                    Error::InvalidInstance { reason, .. } => Error::InvalidInstance { index, reason },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(instances, feature_count)
    }

    /// Attaches per-instance baseline values evaluated on `baseline`.
    pub fn with_baseline(mut self, baseline: &BaselineHazard) -> Self {
        let hazard: Vec<f64> = self.instances.iter().map(|i| baseline.cumulative_hazard(i.time)).collect();
        let neg_log_hazard = self
            .instances
            .iter()
            .zip(&hazard)
            .map(|(inst, &h)| if inst.event { -h.ln() } else { 0.0 })
            .collect();
        self.hazard = Some(HazardValues { hazard, neg_log_hazard });
        self
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn times(&self) -> Vec<f64> {
        self.instances.iter().map(|i| i.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.instances.iter().map(|i| i.event).collect()
    }

    pub fn has_baseline(&self) -> bool {
        self.hazard.is_some()
    }

    /// Cached `Λ̂(t_i)`, if a baseline is attached.
    pub fn hazard(&self, index: usize) -> Option<f64> {
        self.hazard.as_ref().map(|h| h.hazard[index])
    }

    /// Cached `−δ_i·log Λ̂(t_i)`, if a baseline is attached.
    pub fn neg_log_hazard(&self, index: usize) -> Option<f64> {
        self.hazard.as_ref().map(|h| h.neg_log_hazard[index])
    }

    /// The cost-tuple contribution of one instance.
    pub fn contribution(&self, index: usize) -> Result<CostTuple> {
        let h = self.hazard.as_ref().ok_or(Error::MissingBaseline)?;
        Ok(CostTuple {
            count: 1,
            es: if self.instances[index].event { 1.0 } else { 0.0 },
            hs: h.hazard[index],
            nlhs: h.neg_log_hazard[index],
        })
    }

    /// Instances at `indices`, in that order; cached baseline values follow.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let instances = indices.iter().map(|&i| self.instances[i].clone()).collect();
        let hazard = self.hazard.as_ref().map(|h| HazardValues {
            hazard: indices.iter().map(|&i| h.hazard[i]).collect(),
            neg_log_hazard: indices.iter().map(|&i| h.neg_log_hazard[i]).collect(),
        });
        Dataset { instances, feature_count: self.feature_count, hazard }
    }

    /// Concatenation of two datasets over the same feature space.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_count != other.feature_count {
            return Err(Error::Config("feature counts differ".into()));
        }
        let instances = self.instances.iter().chain(&other.instances).cloned().collect();
        let hazard = match (&self.hazard, &other.hazard) {
            (Some(a), Some(b)) => Some(HazardValues {
                hazard: a.hazard.iter().chain(&b.hazard).copied().collect(),
                neg_log_hazard: a.neg_log_hazard.iter().chain(&b.neg_log_hazard).copied().collect(),
            }),
            _ => None,
        };
        Ok(Dataset { instances, feature_count: self.feature_count, hazard })
    }
}

/// Splits into `(D(f̄), D(f))`, preserving input order within each part.
pub fn split_dataset(data: &Dataset, feature: usize) -> Result<(Dataset, Dataset)> {
    if feature >= data.feature_count {
        return Err(Error::FeatureOutOfRange { feature, count: data.feature_count });
    }
    let (right, left): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| data.instances[i].features.get(feature));
    Ok((data.subset(&left), data.subset(&right)))
}

/// Right-continuous step function: `initial` before the first knot, then the
/// value of the last knot at or before `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub initial: f64,
}

impl StepFunction {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 { self.initial } else { self.values[k - 1] }
    }

    /// Left limit at `t`: the value just before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x < t);
        if k == 0 { self.initial } else { self.values[k - 1] }
    }
}

/// Nelson-Aalen cumulative hazard and Kaplan-Meier survival, tabulated at
/// every distinct observed time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    #[serde(serialize_with = "ser_vec_f64")]
    event_times: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    cumulative_hazard: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    survival: Vec<f64>,
}

impl BaselineHazard {
    /// Fits both estimators on `(time, event)` pairs.
    ///
    /// Ties share one jump: at each distinct time `t`, `d(t)` counts events at
    /// `t` and `n(t)` counts observations with time `≥ t`.
    pub fn fit(times: &[f64], events: &[bool]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if times.len() != events.len() {
            return Err(Error::Config("times and events differ in length".into()));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

        let n = times.len();
        let mut event_times = Vec::new();
        let mut cumulative_hazard = Vec::new();
        let mut survival = Vec::new();
        let (mut hazard, mut surv) = (0.0, 1.0);
        let mut start = 0;
        while start < n {
            let t = times[order[start]];
            let mut end = start;
            let mut deaths = 0usize;
            while end < n && times[order[end]] == t {
                deaths += events[order[end]] as usize;
                end += 1;
            }
            let at_risk = (n - start) as f64;
            let ratio = deaths as f64 / at_risk;
            hazard += ratio;
            surv *= 1.0 - ratio;
            event_times.push(t);
            cumulative_hazard.push(hazard);
            survival.push(surv);
            start = end;
        }
        Ok(Self { event_times, cumulative_hazard, survival })
    }

    pub fn times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn cumulative_hazards(&self) -> &[f64] {
        &self.cumulative_hazard
    }

    pub fn survivals(&self) -> &[f64] {
        &self.survival
    }

    /// `Λ̂(t)`: zero before the first tabulated time, held after the last.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let k = self.event_times.partition_point(|&x| x <= t);
        if k == 0 { 0.0 } else { self.cumulative_hazard[k - 1] }
    }

    /// Kaplan-Meier `Ŝ(t)`.
    pub fn survival(&self, t: f64) -> f64 {
        let k = self.event_times.partition_point(|&x| x <= t);
        if k == 0 { 1.0 } else { self.survival[k - 1] }
    }

    pub fn hazard_curve(&self) -> StepFunction {
        StepFunction { times: self.event_times.clone(), values: self.cumulative_hazard.clone(), initial: 0.0 }
    }

    pub fn survival_curve(&self) -> StepFunction {
        StepFunction { times: self.event_times.clone(), values: self.survival.clone(), initial: 1.0 }
    }
}

/// Fits the baseline estimators on a dataset.
pub fn fit_baseline(data: &Dataset) -> Result<BaselineHazard> {
    BaselineHazard::fit(&data.times(), &data.events())
}

/// Step evaluation of `Λ̂` at an arbitrary time.
pub fn eval_cumulative_hazard(baseline: &BaselineHazard, t: f64) -> f64 {
    baseline.cumulative_hazard(t)
}

/// A binary survival tree. Internal nodes send instances whose feature is
/// false to `left` and true to `right`; leaves carry the hazard multiplier.
///
/// Serializes as `{"feature": i, "left": .., "right": ..}` or `{"theta": x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurvivalTree {
    Split { feature: usize, left: Box<SurvivalTree>, right: Box<SurvivalTree> },
    Leaf {
        #[serde(serialize_with = "ser_f64")]
        theta: f64,
    },
}

impl SurvivalTree {
    pub fn leaf(theta: f64) -> Self {
        SurvivalTree::Leaf { theta }
    }

    pub fn split(feature: usize, left: SurvivalTree, right: SurvivalTree) -> Self {
        SurvivalTree::Split { feature, left: Box::new(left), right: Box::new(right) }
    }

    pub fn depth(&self) -> usize {
        match self {
            SurvivalTree::Leaf { .. } => 0,
            SurvivalTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Number of branching nodes.
    pub fn internal_nodes(&self) -> usize {
        match self {
            SurvivalTree::Leaf { .. } => 0,
            SurvivalTree::Split { left, right, .. } => 1 + left.internal_nodes() + right.internal_nodes(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.internal_nodes() + 1
    }

    /// Leaf index (left-to-right order) reached by `features`.
    pub fn leaf_index(&self, features: &BitVector) -> Result<usize> {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                SurvivalTree::Leaf { .. } => return Ok(offset),
                SurvivalTree::Split { feature, left, right } => {
                    if *feature >= features.len() {
                        return Err(Error::FeatureOutOfRange { feature: *feature, count: features.len() });
                    }
                    if features.get(*feature) {
                        offset += left.leaf_count();
                        node = right;
                    } else {
                        node = left;
                    }
                }
            }
        }
    }

    /// Leaf thetas in left-to-right order.
    pub fn thetas(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_thetas(&mut out);
        out
    }

    fn collect_thetas(&self, out: &mut Vec<f64>) {
        match self {
            SurvivalTree::Leaf { theta } => out.push(*theta),
            SurvivalTree::Split { left, right, .. } => {
                left.collect_thetas(out);
                right.collect_thetas(out);
            }
        }
    }

    pub fn predict_theta(&self, features: &BitVector) -> Result<f64> {
        let mut node = self;
        loop {
            match node {
                SurvivalTree::Leaf { theta } => return Ok(*theta),
                SurvivalTree::Split { feature, left, right } => {
                    if *feature >= features.len() {
                        return Err(Error::FeatureOutOfRange { feature: *feature, count: features.len() });
                    }
                    node = if features.get(*feature) { right } else { left };
                }
            }
        }
    }
}

pub fn predict_theta(tree: &SurvivalTree, features: &BitVector) -> Result<f64> {
    tree.predict_theta(features)
}

/// `exp(−θ·Λ̂(t))` for the leaf reached by `features`.
pub fn predict_survival(tree: &SurvivalTree, baseline: &BaselineHazard, features: &BitVector, t: f64) -> Result<f64> {
    let theta = tree.predict_theta(features)?;
    Ok((-theta * baseline.cumulative_hazard(t)).exp())
}
