//! Out-of-sample scores: Harrell's concordance index and the integrated
//! Brier score with inverse-probability-of-censoring weights.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::ser_f64;
use crate::model::{BaselineHazard, StepFunction};

/// Pair counts behind Harrell's C.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConcordanceCounts {
    pub concordant: u64,
    pub discordant: u64,
    pub tied: u64,
}

impl ConcordanceCounts {
    pub fn comparable(&self) -> u64 {
        self.concordant + self.discordant + self.tied
    }

    pub fn index(&self) -> Result<f64> {
        if self.comparable() == 0 {
            return Err(Error::UndefinedMetric("Harrell's C", "no comparable pairs".into()));
        }
        Ok((self.concordant as f64 + 0.5 * self.tied as f64) / self.comparable() as f64)
    }
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn prefix(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Counts ordered pairs `(i, j)` with `t_i < t_j` and `δ_i = 1`, classified
/// by the sign of `θ_i − θ_j`. Runs in `O(N log N)`.
pub fn concordance_counts(times: &[f64], events: &[bool], thetas: &[f64]) -> Result<ConcordanceCounts> {
    let n = times.len();
    if events.len() != n || thetas.len() != n {
        return Err(Error::Config("times, events and thetas differ in length".into()));
    }
    if let Some(i) = thetas.iter().position(|t| !t.is_finite()) {
        return Err(Error::InvalidInstance { index: i, reason: "risk score is not finite".into() });
    }
    let mut sorted = thetas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rank = |x: f64| sorted.partition_point(|&v| v < x);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut tree = Fenwick(vec![0; sorted.len() + 1]);
    let mut counts = ConcordanceCounts::default();
    let mut inserted = 0u64;
    let mut start = 0;
    while start < n {
        let t = times[order[start]];
        let mut end = start;
        while end < n && times[order[end]] == t {
            end += 1;
        }
        for &i in &order[start..end] {
            if events[i] {
                let r = rank(thetas[i]);
                let below = tree.prefix(r);
                let at_or_below = tree.prefix(r + 1);
                counts.concordant += below;
                counts.tied += at_or_below - below;
                counts.discordant += inserted - at_or_below;
            }
        }
        for &i in &order[start..end] {
            tree.add(rank(thetas[i]));
            inserted += 1;
        }
        start = end;
    }
    Ok(counts)
}

/// Harrell's C: `(CC + TR/2) / (CC + TR + DC)`.
pub fn harrell_c(times: &[f64], events: &[bool], thetas: &[f64]) -> Result<f64> {
    concordance_counts(times, events, thetas)?.index()
}

/// Kaplan-Meier estimate of the censoring distribution `Ĝ`: censorings are
/// treated as events.
pub fn censoring_km(times: &[f64], events: &[bool]) -> Result<BaselineHazard> {
    let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
    BaselineHazard::fit(times, &flipped)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalWindow {
    #[serde(serialize_with = "ser_f64")]
    pub t_lower: f64,
    #[serde(serialize_with = "ser_f64")]
    pub t_upper: f64,
}

impl EvalWindow {
    pub fn new(t_lower: f64, t_upper: f64) -> Result<Self> {
        if !(t_lower < t_upper) {
            return Err(Error::UndefinedMetric("evaluation window", format!("[{t_lower}, {t_upper}] is empty")));
        }
        Ok(Self { t_lower, t_upper })
    }

    /// The 10% and 90% quantiles of `times`.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        Self::new(quantile(times, 0.1)?, quantile(times, 0.9)?)
    }

    pub fn width(&self) -> f64 {
        self.t_upper - self.t_lower
    }
}

/// Sample quantile with linear interpolation between order statistics at
/// position `p·(N − 1)`.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// `exp(−θ·Λ̂(t))` as a step function over the baseline's knots.
pub fn proportional_curve(baseline: &BaselineHazard, theta: f64) -> StepFunction {
    StepFunction {
        times: baseline.times().to_vec(),
        values: baseline.cumulative_hazards().iter().map(|h| (-theta * h).exp()).collect(),
        initial: 1.0,
    }
}

/// `∫_a^b f(t)² / g(t) dt` for right-continuous steps `f` and `g`, summed
/// exactly over the merged breakpoints. `transform` maps `f` before squaring.
fn step_integral(f: &StepFunction, transform: impl Fn(f64) -> f64, g: &StepFunction, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Ok(0.0);
    }
    let mut fi = f.times.partition_point(|&x| x <= a);
    let mut gi = g.times.partition_point(|&x| x <= a);
    let mut u = a;
    let mut total = 0.0;
    while u < b {
        let fnext = f.times.get(fi).copied().unwrap_or(f64::INFINITY);
        let gnext = g.times.get(gi).copied().unwrap_or(f64::INFINITY);
        let v = fnext.min(gnext).min(b);
        let fv = transform(if fi == 0 { f.initial } else { f.values[fi - 1] });
        let gv = if gi == 0 { g.initial } else { g.values[gi - 1] };
        if v > u {
            if gv <= 0.0 {
                return Err(Error::ZeroCensoringWeight { time: u });
            }
            total += fv * fv / gv * (v - u);
        }
        if fnext == v {
            fi += 1;
        }
        if gnext == v {
            gi += 1;
        }
        u = v;
    }
    Ok(total)
}

/// Integrated Brier score over `window`:
///
/// `Σ_i [∫_{t̲}^{t_i} (1 − Ŝ_i)² / Ĝ(t) dt + δ_i ∫_{t_i}^{t̄} Ŝ_i² / Ĝ(t_i−) dt] / (N (t̄ − t̲))`
///
/// with each `t_i` clipped into the window. Integrals are exact sums over the
/// step breakpoints.
pub fn integrated_brier(
    times: &[f64],
    events: &[bool],
    predictions: &[&StepFunction],
    window: &EvalWindow,
    censoring: &BaselineHazard,
) -> Result<f64> {
    let n = times.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if events.len() != n || predictions.len() != n {
        return Err(Error::Config("times, events and predictions differ in length".into()));
    }
    let g = censoring.survival_curve();
    let one = StepFunction { times: Vec::new(), values: Vec::new(), initial: 1.0 };
    let mut sum = 0.0;
    for i in 0..n {
        let ti = times[i].clamp(window.t_lower, window.t_upper);
        sum += step_integral(predictions[i], |s| 1.0 - s, &g, window.t_lower, ti)?;
        if events[i] && ti < window.t_upper {
            let gi = g.eval_left(times[i]);
            if gi <= 0.0 {
                return Err(Error::ZeroCensoringWeight { time: times[i] });
            }
            sum += step_integral(predictions[i], |s| s, &one, ti, window.t_upper)? / gi;
        }
    }
    Ok(sum / (n as f64 * window.width()))
}

/// `1 − IB/IB₀`.
pub fn normalized_ib(ib: f64, ib0: f64) -> Result<f64> {
    if !(ib0 > 0.0) {
        return Err(Error::UndefinedMetric("normalized integrated Brier score", format!("reference score is {ib0}")));
    }
    Ok(1.0 - ib / ib0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_counts(times: &[f64], events: &[bool], thetas: &[f64]) -> ConcordanceCounts {
        let mut c = ConcordanceCounts::default();
        for i in 0..times.len() {
            for j in 0..times.len() {
                if times[i] < times[j] && events[i] {
                    if thetas[i] > thetas[j] {
                        c.concordant += 1;
                    } else if thetas[i] < thetas[j] {
                        c.discordant += 1;
                    } else {
                        c.tied += 1;
                    }
                }
            }
        }
        c
    }

    #[test]
    fn single_concordant_pair() {
        assert_eq!(harrell_c(&[1.0, 2.0], &[true, true], &[2.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn constant_predictor_is_half() {
        let t = [1.0, 2.0, 2.0, 5.0, 7.0];
        let e = [true, false, true, true, false];
        assert_eq!(harrell_c(&t, &e, &[0.3; 5]).unwrap(), 0.5);
    }

    #[test]
    fn three_instance_example() {
        let c = harrell_c(&[1.0, 2.0, 3.0], &[true, true, false], &[1.0, 2.0, 0.5]).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_comparable_pairs() {
        assert!(matches!(harrell_c(&[1.0, 2.0], &[false, false], &[1.0, 2.0]), Err(Error::UndefinedMetric(..))));
        assert!(harrell_c(&[3.0, 3.0], &[true, true], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn censoring_km_cases() {
        let g = censoring_km(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert!(g.survivals().iter().all(|&s| s == 1.0));
        let t = [1.0, 2.0, 2.0, 4.0];
        let g = censoring_km(&t, &[false; 4]).unwrap();
        let km = BaselineHazard::fit(&t, &[true; 4]).unwrap();
        assert_eq!(g.survivals(), km.survivals());
        // Flipped indicators (1, 0, 1): factors (1 − 1/3) at t = 1 and (1 − 1/1) at t = 3.
        let g = censoring_km(&[1.0, 2.0, 3.0], &[false, true, false]).unwrap();
        assert_eq!(g.survivals(), &[1.0 - 1.0 / 3.0, 1.0 - 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&v, 0.5).unwrap(), 3.0);
        assert!((quantile(&v, 0.1).unwrap() - 1.4).abs() < 1e-15);
        assert!((quantile(&v, 0.9).unwrap() - 4.6).abs() < 1e-15);
        assert!(EvalWindow::from_times(&[2.0, 2.0, 2.0]).is_err());
    }

    fn constant(v: f64) -> StepFunction {
        StepFunction { times: Vec::new(), values: Vec::new(), initial: v }
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let w = EvalWindow::new(2.0, 5.0).unwrap();
        let g = censoring_km(&[6.0, 7.0, 1.0], &[false, false, true]).unwrap();
        let s1 = constant(1.0);
        let ib = integrated_brier(&[6.0, 7.0], &[false, false], &[&s1, &s1], &w, &g).unwrap();
        assert_eq!(ib, 0.0);
        let s0 = constant(0.0);
        let ib = integrated_brier(&[1.0, 2.0], &[true, true], &[&s0, &s0], &w, &g).unwrap();
        assert_eq!(ib, 0.0);
    }

    #[test]
    fn two_instance_hand_case() {
        // Window [1, 3]; Ŝ drops 1 → 0.5 at t = 2; Ĝ ≡ 1.
        // i = 1 (t = 1.5, event): ∫_1^1.5 0 + ∫_1.5^2 1 + ∫_2^3 0.25 = 0.75
        // i = 2 (t = 4, censored): ∫_1^2 0 + ∫_2^3 0.25 = 0.25
        let s = StepFunction { times: vec![2.0], values: vec![0.5], initial: 1.0 };
        let g = censoring_km(&[1.5, 4.0], &[true, true]).unwrap();
        let w = EvalWindow::new(1.0, 3.0).unwrap();
        let ib = integrated_brier(&[1.5, 4.0], &[true, false], &[&s, &s], &w, &g).unwrap();
        assert!((ib - 0.25).abs() < 1e-15, "{ib}");
    }

    #[test]
    fn zero_censoring_weight_is_reported() {
        let g = censoring_km(&[1.0, 2.0], &[true, false]).unwrap();
        let s = constant(0.5);
        let w = EvalWindow::new(1.0, 3.0).unwrap();
        let err = integrated_brier(&[3.0, 3.0], &[false, false], &[&s, &s], &w, &g).unwrap_err();
        assert!(matches!(err, Error::ZeroCensoringWeight { time } if time == 2.0));
    }

    #[test]
    fn normalized_ib_cases() {
        assert_eq!(normalized_ib(0.2, 0.2).unwrap(), 0.0);
        assert_eq!(normalized_ib(0.0, 0.2).unwrap(), 1.0);
        assert_eq!(normalized_ib(0.1, 0.2).unwrap(), 0.5);
        assert!(normalized_ib(0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn fenwick_matches_pair_enumeration(rows in prop::collection::vec((1u8..8, any::<bool>(), 0u8..5), 1..60)) {
            let t: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
            let e: Vec<bool> = rows.iter().map(|r| r.1).collect();
            let th: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
            prop_assert_eq!(concordance_counts(&t, &e, &th).unwrap(), brute_counts(&t, &e, &th));
        }

        #[test]
        fn c_index_rank_invariance(rows in prop::collection::vec((1u8..20, any::<bool>(), 0u8..10), 2..40)) {
            let t: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
            let e: Vec<bool> = rows.iter().map(|r| r.1).collect();
            let th: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
            if let Ok(c) = harrell_c(&t, &e, &th) {
                let transformed: Vec<f64> = th.iter().map(|x| (x * 0.7).exp() + 3.0).collect();
                prop_assert_eq!(harrell_c(&t, &e, &transformed).unwrap(), c);
                let reversed: Vec<f64> = th.iter().map(|x| -x).collect();
                prop_assert!((harrell_c(&t, &e, &reversed).unwrap() - (1.0 - c)).abs() < 1e-12);
            }
        }
    }
}
