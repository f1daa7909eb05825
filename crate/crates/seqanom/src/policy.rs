//! Log-likelihood-ratio bookkeeping, closed-form error thresholds, and the
//! two stopping/decision rules.
//!
//! The sum-intersection rule stops once the k smallest LLR magnitudes sum to
//! at least d, then declares every source with strictly positive LLR. It
//! controls the probability of k or more misclassifications of any kind.
//!
//! The leap rule guards the two error types separately and is allowed to
//! concede ambiguous sources. For each l it pairs a guard on the weakest
//! positive LLRs (protecting against k1 or more false positives) with a guard
//! on the weakest negative LLRs (protecting against k2 or more false
//! negatives); conceding l sources on one side shifts or shortens the
//! corresponding window. The first satisfied variant in a fixed scan order
//! determines the declared set.

use crate::model::{SourceModel, SourceSet};
use crate::{Error, Result};

/// Per-trial statistics: cumulative LLRs, sample counts, and the running
/// estimate of the anomalous subset.
#[derive(Debug, Clone)]
pub struct RunState {
    llr: Vec<f64>,
    counts: Vec<u64>,
    n: u64,
    estimate: SourceSet,
}

impl RunState {
    /// Fresh state for m sources. All LLRs start at zero, so the initial
    /// estimate (sources with non-negative LLR) is the full set.
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m > SourceSet::MAX_SOURCES {
            return Err(Error::OutOfRange(format!(
                "source count must be in 1..={}, got {m}",
                SourceSet::MAX_SOURCES
            )));
        }
        Ok(RunState {
            llr: vec![0.0; m],
            counts: vec![0; m],
            n: 0,
            estimate: SourceSet::full(m),
        })
    }

    pub fn source_count(&self) -> usize {
        self.llr.len()
    }

    /// Cumulative LLR per source, in nats.
    pub fn llr(&self) -> &[f64] {
        &self.llr
    }

    /// Number of times each source has been observed.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Completed sampling instants.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Sources whose cumulative LLR is non-negative.
    pub fn estimate(&self) -> SourceSet {
        self.estimate
    }
}

/// Fold one sampling instant into the state. `observations` holds the values
/// of the sampled sources in ascending source id order.
pub fn update_llrs(
    state: &mut RunState,
    models: &[SourceModel],
    sampled: SourceSet,
    observations: &[f64],
) -> Result<()> {
    let m = state.source_count();
    if models.len() != m {
        return Err(Error::InvalidConfig(format!(
            "state tracks {m} sources but {} models were given",
            models.len()
        )));
    }
    if sampled.bits() >> m != 0 {
        return Err(Error::OutOfRange(format!(
            "sampled subset {sampled} references sources beyond {m}"
        )));
    }
    if observations.len() != sampled.len() {
        return Err(Error::InvalidConfig(format!(
            "{} observations for {} sampled sources",
            observations.len(),
            sampled.len()
        )));
    }
    for (i, &x) in sampled.iter().zip(observations) {
        if !x.is_finite() {
            return Err(Error::OutOfRange(format!(
                "observation for source {} is not finite: {x}",
                i + 1
            )));
        }
        state.llr[i] += models[i].llr(x);
        state.counts[i] += 1;
    }
    state.n += 1;
    let mut estimate = SourceSet::empty();
    for (i, &l) in state.llr.iter().enumerate() {
        if l >= 0.0 {
            estimate.insert(i);
        }
    }
    state.estimate = estimate;
    Ok(())
}

/// Exact binomial coefficient. Interleaved division keeps every intermediate
/// integral, and the result fits u128 for m <= 64.
fn binomial_u128(m: usize, k: usize) -> u128 {
    debug_assert!(k <= m);
    let k = k.min(m - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (m - i) as u128 / (i as u128 + 1);
    }
    num
}

fn ln_binomial(m: usize, k: usize) -> f64 {
    (binomial_u128(m, k) as f64).ln()
}

fn validate_error_rate(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::OutOfRange(format!(
            "{name} must lie in (0, 1), got {value}"
        )));
    }
    Ok(())
}

/// Threshold d = |ln alpha| + ln C(m, k) for the sum-intersection rule. With
/// this choice the probability of k or more misclassifications is at most
/// alpha for any sampling rule.
pub fn threshold_misclass(alpha: f64, m: usize, k: usize) -> Result<f64> {
    validate_error_rate("alpha", alpha)?;
    if m == 0 || m > SourceSet::MAX_SOURCES || k < 1 || k > m {
        return Err(Error::OutOfRange(format!(
            "need 1 <= k <= m <= {}, got k = {k}, m = {m}",
            SourceSet::MAX_SOURCES
        )));
    }
    Ok(-alpha.ln() + ln_binomial(m, k))
}

/// Thresholds (a, b) for the leap rule: a = |ln beta| + ln(2^k2 C(m, k2))
/// guards false negatives, b = |ln alpha| + ln(2^k1 C(m, k1)) guards false
/// positives. With this choice the probability of k1 or more false positives
/// is at most alpha and that of k2 or more false negatives at most beta.
pub fn thresholds_familywise(
    alpha: f64,
    beta: f64,
    m: usize,
    k1: usize,
    k2: usize,
) -> Result<(f64, f64)> {
    validate_error_rate("alpha", alpha)?;
    validate_error_rate("beta", beta)?;
    if m == 0 || m > SourceSet::MAX_SOURCES || k1 < 1 || k2 < 1 || k1 + k2 > m {
        return Err(Error::OutOfRange(format!(
            "need k1, k2 >= 1 and k1 + k2 <= m <= {}, got k1 = {k1}, k2 = {k2}, m = {m}",
            SourceSet::MAX_SOURCES
        )));
    }
    let a = -beta.ln() + k2 as f64 * std::f64::consts::LN_2 + ln_binomial(m, k2);
    let b = -alpha.ln() + k1 as f64 * std::f64::consts::LN_2 + ln_binomial(m, k1);
    Ok((a, b))
}

/// Which stopping variant fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopKind {
    /// Sum-intersection rule: k smallest LLR magnitudes cleared d.
    SumIntersection,
    /// Leap variant that declares all non-negative sources plus the l
    /// negative sources closest to zero.
    LeapAdd { l: usize },
    /// Leap variant that declares the non-negative sources except the l
    /// closest to zero.
    LeapDrop { l: usize },
}

/// A stopping decision: the declared anomalous subset and the variant that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub decided: SourceSet,
    pub kind: StopKind,
}

/// Sum-intersection check: stop once the k smallest LLR magnitudes sum to at
/// least d; declare every source with strictly positive LLR.
pub fn check_sum_intersection(state: &RunState, k: usize, d: f64) -> Result<Option<StopDecision>> {
    let m = state.source_count();
    if k < 1 || k > m {
        return Err(Error::OutOfRange(format!(
            "error tolerance k must be in 1..={m}, got {k}"
        )));
    }
    if !(d > 0.0) {
        return Err(Error::OutOfRange(format!(
            "stopping threshold must be positive, got {d}"
        )));
    }
    let mut buf = [0.0f64; SourceSet::MAX_SOURCES];
    for (slot, &l) in buf.iter_mut().zip(state.llr()) {
        *slot = l.abs();
    }
    buf[..m].sort_unstable_by(f64::total_cmp);
    let sum: f64 = buf[..k].iter().sum();
    if sum < d {
        return Ok(None);
    }
    let mut decided = SourceSet::empty();
    for (i, &l) in state.llr().iter().enumerate() {
        if l > 0.0 {
            decided.insert(i);
        }
    }
    Ok(Some(StopDecision {
        decided,
        kind: StopKind::SumIntersection,
    }))
}

/// Sum of ordered statistics at 1-based positions lo..=hi, where positions
/// beyond `len` are treated as +infinity (an exhausted side never blocks).
fn padded_sum(sorted: &[(f64, usize)], len: usize, lo: usize, hi: usize) -> f64 {
    debug_assert!(lo >= 1 && lo <= hi);
    if hi > len {
        return f64::INFINITY;
    }
    sorted[lo - 1..hi].iter().map(|&(v, _)| v).sum()
}

/// Leap rule check with false-positive guard b and false-negative guard a.
///
/// Non-negative LLRs are ordered ascending as the convict side; magnitudes of
/// negative LLRs are ordered ascending as the exonerate side. Variants are
/// scanned with l ascending, add-side first; the first satisfied variant
/// decides. Ordering ties between equal LLRs break by ascending source id.
pub fn check_leap(
    state: &RunState,
    k1: usize,
    k2: usize,
    a: f64,
    b: f64,
) -> Result<Option<StopDecision>> {
    let m = state.source_count();
    if k1 < 1 || k2 < 1 || k1 + k2 > m {
        return Err(Error::OutOfRange(format!(
            "error tolerances must satisfy k1, k2 >= 1 and k1 + k2 <= {m}, got ({k1}, {k2})"
        )));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::OutOfRange(format!(
            "stopping thresholds must be positive, got a = {a}, b = {b}"
        )));
    }
    let mut convict = [(0.0f64, 0usize); SourceSet::MAX_SOURCES];
    let mut exonerate = [(0.0f64, 0usize); SourceSet::MAX_SOURCES];
    let mut p = 0;
    let mut q = 0;
    for (i, &l) in state.llr().iter().enumerate() {
        if l >= 0.0 {
            convict[p] = (l, i);
            p += 1;
        } else {
            exonerate[q] = (-l, i);
            q += 1;
        }
    }
    let cmp = |x: &(f64, usize), y: &(f64, usize)| {
        f64::total_cmp(&x.0, &y.0).then(x.1.cmp(&y.1))
    };
    convict[..p].sort_unstable_by(cmp);
    exonerate[..q].sort_unstable_by(cmp);

    for l in 0..k1 {
        if padded_sum(&convict, p, 1, k1 - l) >= b
            && padded_sum(&exonerate, q, 1 + l, k2 + l) >= a
        {
            let mut decided = state.estimate();
            for &(_, i) in exonerate.iter().take(l.min(q)) {
                decided.insert(i);
            }
            return Ok(Some(StopDecision {
                decided,
                kind: StopKind::LeapAdd { l },
            }));
        }
    }
    for l in 1..k2 {
        if padded_sum(&convict, p, 1 + l, k1 + l) >= b
            && padded_sum(&exonerate, q, 1, k2 - l) >= a
        {
            let mut decided = SourceSet::empty();
            for &(_, i) in convict[..p].iter().skip(l) {
                decided.insert(i);
            }
            return Ok(Some(StopDecision {
                decided,
                kind: StopKind::LeapDrop { l },
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SourceModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state_with_llrs(llrs: &[f64]) -> RunState {
        // Drive the state through the public API with unit-mean Gaussians:
        // llr(x) = x - 1/2, so x = target + 1/2 lands exactly on target.
        let m = llrs.len();
        let models: Vec<SourceModel> = (0..m)
            .map(|i| SourceModel::gaussian_unit_variance(i, 1.0).unwrap())
            .collect();
        let mut state = RunState::new(m).unwrap();
        let all = SourceSet::full(m);
        let obs: Vec<f64> = llrs.iter().map(|&l| l + 0.5).collect();
        update_llrs(&mut state, &models, all, &obs).unwrap();
        state
    }

    #[test]
    fn binomial_pascal_recurrence() {
        for m in 2..=30usize {
            for k in 1..m {
                assert_eq!(
                    binomial_u128(m, k),
                    binomial_u128(m - 1, k - 1) + binomial_u128(m - 1, k)
                );
            }
        }
        assert_eq!(binomial_u128(10, 0), 1);
        assert_eq!(binomial_u128(10, 10), 1);
        assert_eq!(binomial_u128(10, 5), 252);
    }

    #[test]
    fn threshold_values() {
        // d = |ln 0.01| + ln C(10, 1) = ln 1000.
        let d = threshold_misclass(0.01, 10, 1).unwrap();
        assert_abs_diff_eq!(d, 1000.0f64.ln(), epsilon = 1e-12);
        let d = threshold_misclass(0.01, 10, 5).unwrap();
        assert_abs_diff_eq!(d, 100.0f64.ln() + 252.0f64.ln(), epsilon = 1e-12);

        let (a, b) = thresholds_familywise(0.01, 0.001, 10, 2, 3).unwrap();
        assert_abs_diff_eq!(a, 1000.0f64.ln() + (8.0 * 120.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(b, 100.0f64.ln() + (4.0 * 45.0f64).ln(), epsilon = 1e-12);

        assert!(threshold_misclass(0.0, 10, 1).is_err());
        assert!(threshold_misclass(1.0, 10, 1).is_err());
        assert!(threshold_misclass(0.1, 10, 11).is_err());
        assert!(thresholds_familywise(0.1, 0.1, 10, 6, 5).is_err());
    }

    #[test]
    fn state_update_tracks_counts_and_estimate() {
        let models = vec![
            SourceModel::gaussian_unit_variance(0, 2.0).unwrap(),
            SourceModel::gaussian_unit_variance(1, 2.0).unwrap(),
            SourceModel::gaussian_unit_variance(2, 2.0).unwrap(),
        ];
        let mut state = RunState::new(3).unwrap();
        assert_eq!(state.estimate(), SourceSet::full(3));
        // Sample sources 0 and 2: llr(x) = 2x - 2.
        update_llrs(&mut state, &models, SourceSet::from_ids([0, 2]), &[2.0, -1.0]).unwrap();
        assert_eq!(state.n(), 1);
        assert_eq!(state.counts(), &[1, 0, 1]);
        assert_abs_diff_eq!(state.llr()[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(state.llr()[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(state.llr()[2], -4.0, epsilon = 1e-12);
        // Zero LLR counts as non-negative, so source 1 stays in the estimate.
        assert_eq!(state.estimate(), SourceSet::from_ids([0, 1]));

        let err = update_llrs(&mut state, &models, SourceSet::from_ids([0]), &[1.0, 2.0]);
        assert!(err.is_err());
        let err = update_llrs(&mut state, &models, SourceSet::from_ids([0]), &[f64::NAN]);
        assert!(err.is_err());
    }

    #[test]
    fn sum_intersection_examples() {
        let state = state_with_llrs(&[3.0, -0.5]);
        assert!(check_sum_intersection(&state, 1, 1.0).unwrap().is_none());
        let state = state_with_llrs(&[3.0, -1.5]);
        let stop = check_sum_intersection(&state, 1, 1.0).unwrap().unwrap();
        assert_eq!(stop.decided, SourceSet::from_ids([0]));
        assert_eq!(stop.kind, StopKind::SumIntersection);
        // k = 2 sums both magnitudes.
        assert!(check_sum_intersection(&state, 2, 4.6).unwrap().is_none());
        let stop = check_sum_intersection(&state, 2, 4.5).unwrap().unwrap();
        assert_eq!(stop.decided, SourceSet::from_ids([0]));
        // A source at exactly zero LLR contributes nothing toward the
        // threshold and is excluded from the declared set.
        let state = state_with_llrs(&[3.0, 0.0]);
        assert!(check_sum_intersection(&state, 1, 0.5).unwrap().is_none());
        let stop = check_sum_intersection(&state, 2, 0.5).unwrap().unwrap();
        assert_eq!(stop.decided, SourceSet::from_ids([0]));
    }

    #[test]
    fn leap_add_variants() {
        // Convict side ascending: (4, id 1), (5, id 0); exonerate side
        // ascending: (0.1, id 2), (6, id 3).
        let llrs = [5.0, 4.0, -0.1, -6.0];
        let state = state_with_llrs(&llrs);

        // l = 0 fires: 4 + 5 >= 8 and 0.1 + 6 >= 4.
        let stop = check_leap(&state, 2, 2, 4.0, 8.0).unwrap().unwrap();
        assert_eq!(stop.kind, StopKind::LeapAdd { l: 0 });
        assert_eq!(stop.decided, SourceSet::from_ids([0, 1]));

        // Raising a past 6.1 blocks l = 0; l = 1 needs only the weakest
        // convict (4 >= 3.9) and the exonerate window beyond the conceded
        // source runs off the end, so it never blocks. Source 2 is leapt in.
        let stop = check_leap(&state, 2, 2, 7.0, 3.9).unwrap().unwrap();
        assert_eq!(stop.kind, StopKind::LeapAdd { l: 1 });
        assert_eq!(stop.decided, SourceSet::from_ids([0, 1, 2]));

        // With b past the weakest convict, neither add variant fires, and the
        // drop variant fails its exonerate guard: no stop.
        assert!(check_leap(&state, 2, 2, 7.0, 4.1).unwrap().is_none());
    }

    #[test]
    fn leap_drop_variant() {
        // Convict side: (0.1, id 0), (4, id 1); exonerate: (5, id 2), (6, id 3).
        let state = state_with_llrs(&[0.1, 4.0, -5.0, -6.0]);
        // Add variants fail on the convict guard (4.1 < 7, then 0.1 < 7).
        // Drop l = 1: convict positions 2..=3 pad to infinity, exonerate
        // 5 >= 4.5. Source 0 is dropped from the declared set.
        let stop = check_leap(&state, 2, 2, 4.5, 7.0).unwrap().unwrap();
        assert_eq!(stop.kind, StopKind::LeapDrop { l: 1 });
        assert_eq!(stop.decided, SourceSet::from_ids([1]));
    }

    #[test]
    fn leap_all_negative_declares_empty() {
        let state = state_with_llrs(&[-3.0, -4.0]);
        let stop = check_leap(&state, 1, 1, 2.5, 10.0).unwrap().unwrap();
        assert_eq!(stop.kind, StopKind::LeapAdd { l: 0 });
        assert_eq!(stop.decided, SourceSet::empty());
    }

    proptest! {
        #[test]
        fn leap_decision_shape(
            llrs in proptest::collection::vec(-20.0f64..20.0, 2..10),
            a in 0.5f64..30.0,
            b in 0.5f64..30.0,
        ) {
            let m = llrs.len();
            let state = state_with_llrs(&llrs);
            let p = state.estimate().len();
            if let Some(stop) = check_leap(&state, 1.max(m / 3), 1.max(m / 3), a, b).unwrap() {
                match stop.kind {
                    StopKind::LeapAdd { l } => {
                        // Declared set = estimate plus l extra sources.
                        prop_assert_eq!(
                            stop.decided.intersection(state.estimate()),
                            state.estimate()
                        );
                        prop_assert_eq!(stop.decided.len(), p + l.min(m - p));
                    }
                    StopKind::LeapDrop { l } => {
                        prop_assert_eq!(
                            stop.decided.union(state.estimate()),
                            state.estimate()
                        );
                        prop_assert_eq!(stop.decided.len(), p - l.min(p));
                    }
                    StopKind::SumIntersection => prop_assert!(false),
                }
            }
        }

        #[test]
        fn sum_intersection_monotone_in_threshold(
            llrs in proptest::collection::vec(-10.0f64..10.0, 1..8),
            d in 0.1f64..20.0,
        ) {
            let m = llrs.len();
            let state = state_with_llrs(&llrs);
            for k in 1..=m {
                let hit = check_sum_intersection(&state, k, d).unwrap();
                let looser = check_sum_intersection(&state, k, d / 2.0).unwrap();
                if hit.is_some() {
                    prop_assert!(looser.is_some());
                }
                // The declared set never depends on d, only on the signs.
                if let (Some(s1), Some(s2)) = (hit, looser) {
                    prop_assert_eq!(s1.decided, s2.decided);
                }
            }
        }
    }
}
