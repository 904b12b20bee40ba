//! Synthetic censored survival data drawn from a random ground-truth tree.
//!
//! Rows get uniformly distributed raw features, a depth-5 tree routes each
//! row to a leaf distribution that supplies its event time, and a common
//! censoring scale `k` turns at most a fraction `c` of the rows into
//! censored observations `t ← k(1 − u²)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Gamma, LogNormal, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{ser_f64, sig17};
use crate::table::RawTable;

pub const TREE_DEPTH: usize = 5;
pub const DEFAULT_TEST_SIZE: usize = 50_000;

const STREAM_TREE: u64 = 1;
const STREAM_TRAIN_FEATURES: u64 = 2;
const STREAM_TRAIN_TIMES: u64 = 3;
const STREAM_TEST_FEATURES: u64 = 4;
const STREAM_TEST_TIMES: u64 = 5;

/// A dedicated random stream for one purpose under `seed`.
pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    #[serde(serialize_with = "ser_f64")]
    pub c: f64,
    pub seed: u64,
    pub test_size: usize,
    /// Twice the raw features: 6 continuous, 2 binary, 4 categorical.
    pub doubled: bool,
}

impl GenConfig {
    pub fn new(n: usize, c: f64, seed: u64) -> Self {
        Self { n, c, seed, test_size: DEFAULT_TEST_SIZE, doubled: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(Error::Config(format!("censoring fraction {} is outside [0, 1)", self.c)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RawFeature {
    Continuous { name: String },
    Binary { name: String },
    Categorical { name: String, levels: Vec<String> },
}

impl RawFeature {
    pub fn name(&self) -> &str {
        match self {
            RawFeature::Continuous { name } | RawFeature::Binary { name } | RawFeature::Categorical { name, .. } => name,
        }
    }
}

fn levels(count: usize) -> Vec<String> {
    (0..count).map(|i| char::from(b'a' + i as u8).to_string()).collect()
}

/// Three continuous, one binary and two categorical (3 and 5 levels)
/// features; `doubled` repeats each group.
pub fn feature_schema(doubled: bool) -> Vec<RawFeature> {
    let copies = if doubled { 2 } else { 1 };
    let mut out = Vec::new();
    for i in 1..=3 * copies {
        out.push(RawFeature::Continuous { name: format!("x{i}") });
    }
    for i in 1..=copies {
        out.push(RawFeature::Binary { name: format!("b{i}") });
    }
    for (i, count) in std::iter::repeat_n([3, 5], copies).flatten().enumerate() {
        out.push(RawFeature::Categorical { name: format!("c{}", i + 1), levels: levels(count) });
    }
    out
}

/// A raw feature value of one synthetic row.
#[derive(Clone, Debug, PartialEq)]
pub enum RawValue {
    Real(f64),
    Flag(bool),
    Level(usize),
}

impl RawValue {
    fn render(&self, feature: &RawFeature) -> String {
        match (self, feature) {
            (RawValue::Real(x), _) => sig17(*x),
            (RawValue::Flag(b), _) => if *b { "1" } else { "0" }.to_string(),
            (RawValue::Level(l), RawFeature::Categorical { levels, .. }) => levels[*l].clone(),
            (RawValue::Level(l), _) => l.to_string(),
        }
    }
}

pub fn generate_features(schema: &[RawFeature], n: usize, rng: &mut impl Rng) -> Vec<Vec<RawValue>> {
    (0..n)
        .map(|_| {
            schema
                .iter()
                .map(|f| match f {
                    RawFeature::Continuous { .. } => RawValue::Real(rng.random::<f64>()),
                    RawFeature::Binary { .. } => RawValue::Flag(rng.random_bool(0.5)),
                    RawFeature::Categorical { levels, .. } => RawValue::Level(rng.random_range(0..levels.len())),
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum LeafDistribution {
    Exponential {
        #[serde(serialize_with = "ser_f64")]
        rate: f64,
    },
    Weibull {
        #[serde(serialize_with = "ser_f64")]
        shape: f64,
        #[serde(serialize_with = "ser_f64")]
        scale: f64,
    },
    Lognormal {
        #[serde(serialize_with = "ser_f64")]
        mu: f64,
        #[serde(serialize_with = "ser_f64")]
        sigma2: f64,
    },
    Gamma {
        #[serde(serialize_with = "ser_f64")]
        shape: f64,
        #[serde(serialize_with = "ser_f64")]
        scale: f64,
    },
}

/// The 32 leaf options, eight per family.
pub fn distribution_menu() -> Vec<LeafDistribution> {
    use LeafDistribution::*;
    let mut menu: Vec<LeafDistribution> =
        [0.3, 0.4, 0.6, 0.8, 0.9, 1.15, 1.5, 1.8].into_iter().map(|rate| Exponential { rate }).collect();
    menu.extend(
        [(0.8, 0.4), (0.9, 0.5), (0.9, 0.7), (0.9, 1.1), (0.9, 1.5), (1.0, 1.1), (1.0, 1.9), (1.3, 0.5)]
            .into_iter()
            .map(|(shape, scale)| Weibull { shape, scale }),
    );
    menu.extend(
        [(0.1, 1.0), (0.2, 0.75), (0.3, 0.3), (0.3, 0.5), (0.3, 0.8), (0.4, 0.32), (0.5, 0.3), (0.5, 0.7)]
            .into_iter()
            .map(|(mu, sigma2)| Lognormal { mu, sigma2 }),
    );
    menu.extend(
        [(0.2, 0.75), (0.3, 1.3), (0.3, 2.0), (0.5, 1.5), (0.8, 1.0), (0.9, 1.3), (1.3, 0.9), (1.5, 0.7)]
            .into_iter()
            .map(|(shape, scale)| Gamma { shape, scale }),
    );
    menu
}

impl LeafDistribution {
    /// One strictly positive, finite draw.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        loop {
            let t = match *self {
                LeafDistribution::Exponential { rate } => Exp::new(rate).expect("menu rate").sample(rng),
                LeafDistribution::Weibull { shape, scale } => Weibull::new(scale, shape).expect("menu weibull").sample(rng),
                LeafDistribution::Lognormal { mu, sigma2 } => LogNormal::new(mu, sigma2.sqrt()).expect("menu lognormal").sample(rng),
                LeafDistribution::Gamma { shape, scale } => Gamma::new(shape, scale).expect("menu gamma").sample(rng),
            };
            if t > 0.0 && t.is_finite() {
                return t;
            }
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            LeafDistribution::Exponential { .. } => "exponential",
            LeafDistribution::Weibull { .. } => "weibull",
            LeafDistribution::Lognormal { .. } => "lognormal",
            LeafDistribution::Gamma { .. } => "gamma",
        }
    }
}

/// Split rule on raw feature `feature`; rows satisfying it go right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum SplitRule {
    Le {
        feature: usize,
        #[serde(serialize_with = "ser_f64")]
        threshold: f64,
    },
    Flag { feature: usize },
    In { feature: usize, levels: Vec<usize> },
}

impl SplitRule {
    pub fn holds(&self, row: &[RawValue]) -> bool {
        match (self, row) {
            (SplitRule::Le { feature, threshold }, r) => matches!(r[*feature], RawValue::Real(x) if x <= *threshold),
            (SplitRule::Flag { feature }, r) => matches!(r[*feature], RawValue::Flag(true)),
            (SplitRule::In { feature, levels }, r) => matches!(r[*feature], RawValue::Level(l) if levels.contains(&l)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruthTree {
    Split { split: SplitRule, left: Box<GroundTruthTree>, right: Box<GroundTruthTree> },
    Leaf { distribution: LeafDistribution },
}

impl GroundTruthTree {
    pub fn depth(&self) -> usize {
        match self {
            GroundTruthTree::Leaf { .. } => 0,
            GroundTruthTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<LeafDistribution> {
        match self {
            GroundTruthTree::Leaf { distribution } => vec![*distribution],
            GroundTruthTree::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    pub fn route(&self, row: &[RawValue]) -> &LeafDistribution {
        match self {
            GroundTruthTree::Leaf { distribution } => distribution,
            GroundTruthTree::Split { split, left, right } => {
                if split.holds(row) { right.route(row) } else { left.route(row) }
            }
        }
    }
}

/// A complete tree of the given depth with uniformly random splits and
/// leaf distributions drawn uniformly from the menu.
pub fn generate_tree(schema: &[RawFeature], depth: usize, rng: &mut impl Rng) -> GroundTruthTree {
    if depth == 0 {
        let menu = distribution_menu();
        return GroundTruthTree::Leaf { distribution: menu[rng.random_range(0..menu.len())] };
    }
    let feature = rng.random_range(0..schema.len());
    let split = match &schema[feature] {
        RawFeature::Continuous { .. } => SplitRule::Le { feature, threshold: rng.random::<f64>() },
        RawFeature::Binary { .. } => SplitRule::Flag { feature },
        RawFeature::Categorical { levels, .. } => {
            let mask: u32 = rng.random_range(1..(1u32 << levels.len()) - 1);
            SplitRule::In { feature, levels: (0..levels.len()).filter(|l| mask >> l & 1 == 1).collect() }
        }
    };
    let left = generate_tree(schema, depth - 1, rng);
    let right = generate_tree(schema, depth - 1, rng);
    GroundTruthTree::Split { split, left: Box::new(left), right: Box::new(right) }
}

/// Event times from each row's leaf, and censoring draws `u ∈ (0, 1)`.
pub fn assign_times(tree: &GroundTruthTree, rows: &[Vec<RawValue>], rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    rows.iter()
        .map(|row| {
            let t = tree.route(row).sample(rng);
            let u = loop {
                let u: f64 = rng.random();
                if u > 0.0 && u < 1.0 {
                    break u;
                }
            };
            (t, u)
        })
        .unzip()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Censored {
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub k: f64,
}

/// Picks the least `k` such that `k(1 − u_i²) < t_i` holds for at most
/// `⌊c·n⌋` rows, then censors exactly those rows at `k(1 − u_i²)`.
pub fn apply_censoring(times: &[f64], u: &[f64], c: f64) -> Result<Censored> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Config(format!("censoring fraction {c} is outside [0, 1)")));
    }
    let n = times.len();
    if n == 0 || u.len() != n {
        return Err(Error::Config("times and u must be nonempty and of equal length".into()));
    }
    let candidates: Vec<f64> = times.iter().zip(u).map(|(t, u)| t / (1.0 - u * u)).collect();
    let mut sorted = candidates.clone();
    sorted.sort_by(f64::total_cmp);
    let m = (c * n as f64).floor() as usize;
    let k = sorted[n - m - 1];
    let mut out = Censored { times: Vec::with_capacity(n), events: Vec::with_capacity(n), k };
    for i in 0..n {
        if k < candidates[i] {
            out.times.push(k * (1.0 - u[i] * u[i]));
            out.events.push(false);
        } else {
            out.times.push(times[i]);
            out.events.push(true);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundTruth {
    pub config: GenConfig,
    pub features: Vec<RawFeature>,
    #[serde(serialize_with = "ser_f64")]
    pub train_k: f64,
    #[serde(serialize_with = "ser_f64")]
    pub test_k: f64,
    pub tree: GroundTruthTree,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub train: RawTable,
    pub test: RawTable,
    pub truth: GroundTruth,
}

fn to_table(schema: &[RawFeature], rows: &[Vec<RawValue>], censored: Censored) -> RawTable {
    RawTable {
        feature_names: schema.iter().map(|f| f.name().to_string()).collect(),
        times: censored.times,
        events: censored.events,
        cells: rows.iter().map(|r| r.iter().zip(schema).map(|(v, f)| Some(v.render(f))).collect()).collect(),
    }
}

fn sample_split(schema: &[RawFeature], tree: &GroundTruthTree, n: usize, c: f64, seed: u64, streams: (u64, u64)) -> Result<(RawTable, f64)> {
    let rows = generate_features(schema, n, &mut stream(seed, streams.0));
    let (times, u) = assign_times(tree, &rows, &mut stream(seed, streams.1));
    let censored = apply_censoring(&times, &u, c)?;
    let k = censored.k;
    Ok((to_table(schema, &rows, censored), k))
}

/// Training and test sets from one ground-truth tree. The tree, the two
/// feature tables and the two time draws each use their own random stream.
pub fn generate(config: &GenConfig) -> Result<Generated> {
    config.validate()?;
    let schema = feature_schema(config.doubled);
    let tree = generate_tree(&schema, TREE_DEPTH, &mut stream(config.seed, STREAM_TREE));
    let (train, train_k) =
        sample_split(&schema, &tree, config.n, config.c, config.seed, (STREAM_TRAIN_FEATURES, STREAM_TRAIN_TIMES))?;
    let (test, test_k) = if config.test_size > 0 {
        sample_split(&schema, &tree, config.test_size, config.c, config.seed, (STREAM_TEST_FEATURES, STREAM_TEST_TIMES))?
    } else {
        (RawTable { feature_names: train.feature_names.clone(), times: vec![], events: vec![], cells: vec![] }, f64::NAN)
    };
    Ok(Generated { train, test, truth: GroundTruth { config: config.clone(), features: schema, train_k, test_k, tree } })
}
