//! Problem difficulty and target sampling frequencies c*(A) for a candidate
//! anomalous subset, under both generalized error metrics.
//!
//! For the misclassification metric (at least k errors of any kind), the
//! difficulty of separating A from its neighbors is the single-block value
//! V(k, K, F(A)) and the target frequencies are its maximizer scattered back
//! to source coordinates.
//!
//! For the familywise metric (at least k1 false positives or at least k2
//! false negatives), the difficulty is the best of several candidate
//! quantities: a false positive (or false negative) may be conceded on each
//! of the l hardest opposite-side sources, removing them from consideration
//! and lowering the corresponding order. Two-block candidates balance the
//! anomalous-side objective against `ratio` times the null-side objective;
//! one-sided candidates arise when one error type cannot occur often enough
//! to constrain the policy. Ties between candidates resolve toward the
//! earlier case in the [`DifficultyCase`] order, then toward smaller l.
//!
//! All values are normalized so that the optimal expected decision time
//! scales like |log alpha| / value, with `ratio = |log alpha| / |log beta|`.

use crate::maxmin::{solve_v, solve_w, VParams};
use crate::model::{
    build_f_set, build_i_set, build_j_set, OrderedKlSet, SourceModel, SourceSet,
};
use crate::{Error, Result};

/// Which candidate quantity attains the difficulty value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DifficultyCase {
    /// Misclassification metric: one block over the combined rates F(A).
    Misclass,
    /// Two-block balance after conceding false positives on the l_A null
    /// sources that are slowest to exonerate (their rates leave the null
    /// block, and the false-positive order drops by l_A).
    SplitDropNull,
    /// Two-block balance after conceding false negatives on the l_A
    /// anomalous sources that are slowest to convict.
    SplitDropAnomalous,
    /// Only the anomalous block constrains: enough false positives are free
    /// that the null block never binds.
    AnomalousOnly,
    /// Only the null block constrains.
    NullOnly,
    /// No anomalous sources: a single null block with the k1 - 1 slowest
    /// sources conceded.
    EmptySet,
    /// Every source anomalous: a single anomalous block with the k2 - 1
    /// slowest sources conceded.
    FullSet,
}

impl DifficultyCase {
    pub fn label(&self) -> &'static str {
        match self {
            DifficultyCase::Misclass => "misclass",
            DifficultyCase::SplitDropNull => "split-drop-null",
            DifficultyCase::SplitDropAnomalous => "split-drop-anomalous",
            DifficultyCase::AnomalousOnly => "anomalous-only",
            DifficultyCase::NullOnly => "null-only",
            DifficultyCase::EmptySet => "empty-set",
            DifficultyCase::FullSet => "full-set",
        }
    }
}

/// Difficulty value of identifying subset A, with the structure of the
/// winning candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyReport {
    /// Normalized difficulty: optimal expected decision time ~ |log alpha| / value.
    pub value: f64,
    pub case: DifficultyCase,
    /// Number of conceded sources in the winning candidate (0 when none).
    pub l_a: usize,
    /// Budget split (anomalous-side, null-side) for two-block candidates.
    pub split: Option<(f64, f64)>,
    /// Shape of the anomalous-side (or single combined) block, if present.
    pub first: Option<VParams>,
    /// Shape of the null-side block, if present.
    pub second: Option<VParams>,
}

/// Target long-run sampling frequencies, indexed by 0-based source id.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationVector {
    pub c: Vec<f64>,
}

impl AllocationVector {
    pub fn sum(&self) -> f64 {
        self.c.iter().sum()
    }

    pub fn zero_count(&self) -> usize {
        self.c.iter().filter(|&&v| v == 0.0).count()
    }
}

fn validate_budget(budget: f64, m: usize) -> Result<()> {
    if !budget.is_finite() || budget <= 0.0 || budget > m as f64 {
        return Err(Error::OutOfRange(format!(
            "budget must lie in (0, {m}], got {budget}"
        )));
    }
    Ok(())
}

fn validate_ratio(ratio: f64) -> Result<()> {
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "error-rate ratio must be finite and positive, got {ratio}"
        )));
    }
    Ok(())
}

/// Scatter ordered-position frequencies back to source coordinates.
fn scatter_into(out: &mut [f64], set: &OrderedKlSet, c: &[f64]) {
    for (pos, &ci) in c.iter().enumerate() {
        out[set.source_at(pos)] = ci;
    }
}

fn finish_allocation(c: Vec<f64>, budget: f64) -> AllocationVector {
    debug_assert!(c.iter().all(|&ci| (0.0..=1.0 + 1e-12).contains(&ci)));
    debug_assert!(c.iter().sum::<f64>() <= budget + 1e-9);
    AllocationVector { c }
}

fn misclass_full(
    models: &[SourceModel],
    a: SourceSet,
    k: usize,
    budget: f64,
) -> Result<(DifficultyReport, AllocationVector)> {
    let m = models.len();
    validate_budget(budget, m)?;
    if k < 1 || k > m {
        return Err(Error::OutOfRange(format!(
            "error tolerance k must be in 1..={m}, got {k}"
        )));
    }
    let f = build_f_set(models, a)?;
    let sol = solve_v(k, budget, &f)?;
    let mut c = vec![0.0; m];
    scatter_into(&mut c, &f, &sol.c_prime);
    let report = DifficultyReport {
        value: sol.value,
        case: DifficultyCase::Misclass,
        l_a: 0,
        split: None,
        first: Some(sol.params()),
        second: None,
    };
    Ok((report, finish_allocation(c, budget)))
}

/// Difficulty of subset A under the misclassification metric with tolerance k.
pub fn difficulty_misclass(
    models: &[SourceModel],
    a: SourceSet,
    k: usize,
    budget: f64,
) -> Result<DifficultyReport> {
    misclass_full(models, a, k, budget).map(|(report, _)| report)
}

/// Target sampling frequencies for subset A under the misclassification
/// metric with tolerance k.
pub fn c_star_misclass(
    models: &[SourceModel],
    a: SourceSet,
    k: usize,
    budget: f64,
) -> Result<AllocationVector> {
    misclass_full(models, a, k, budget).map(|(_, alloc)| alloc)
}

fn familywise_full(
    models: &[SourceModel],
    a: SourceSet,
    k1: usize,
    k2: usize,
    budget: f64,
    ratio: f64,
) -> Result<(DifficultyReport, AllocationVector)> {
    let m = models.len();
    validate_budget(budget, m)?;
    validate_ratio(ratio)?;
    if k1 < 1 || k2 < 1 || k1 + k2 > m {
        return Err(Error::OutOfRange(format!(
            "error tolerances must satisfy k1, k2 >= 1 and k1 + k2 <= {m}, got ({k1}, {k2})"
        )));
    }
    let na = a.len();
    let nc = m - na;

    if a.is_empty() {
        // Only false positives can occur; concede the k1 - 1 slowest null
        // sources and guard the rest against k2 joint false positives.
        let j_all = build_j_set(models, a)?;
        let j_drop = j_all.tail(k1 - 1)?;
        let sol = solve_v(k2, budget, &j_drop)?;
        let mut c = vec![0.0; m];
        scatter_into(&mut c, &j_drop, &sol.c_prime);
        let report = DifficultyReport {
            value: ratio * sol.value,
            case: DifficultyCase::EmptySet,
            l_a: k1 - 1,
            split: None,
            first: None,
            second: Some(sol.params()),
        };
        return Ok((report, finish_allocation(c, budget)));
    }
    if na == m {
        // Only false negatives can occur; mirror image of the empty case.
        let i_all = build_i_set(models, a)?;
        let i_drop = i_all.tail(k2 - 1)?;
        let sol = solve_v(k1, budget, &i_drop)?;
        let mut c = vec![0.0; m];
        scatter_into(&mut c, &i_drop, &sol.c_prime);
        let report = DifficultyReport {
            value: sol.value,
            case: DifficultyCase::FullSet,
            l_a: k2 - 1,
            split: None,
            first: Some(sol.params()),
            second: None,
        };
        return Ok((report, finish_allocation(c, budget)));
    }

    let i_set = build_i_set(models, a)?;
    let j_set = build_j_set(models, a)?;

    struct Winner {
        value: f64,
        report: DifficultyReport,
        c: Vec<f64>,
    }
    let mut winner: Option<Winner> = None;
    // Candidates are generated in tie-break preference order, so a strict
    // comparison keeps the preferred case on equal values.
    let mut consider = |cand: Winner| {
        if winner.as_ref().is_none_or(|w| cand.value > w.value) {
            winner = Some(cand);
        }
    };

    if k2 <= nc {
        // Concede false positives on the l slowest null sources.
        for l in k1.saturating_sub(na)..=(k1 - 1).min(nc - k2) {
            let j_drop = j_set.tail(l)?;
            debug_assert!(k1 - l >= 1 && k1 - l <= na && k2 <= j_drop.len());
            let w = solve_w(k1 - l, k2, budget, &i_set, &j_drop, ratio)?;
            let mut c = vec![0.0; m];
            scatter_into(&mut c, &i_set, &w.c_hat);
            scatter_into(&mut c, &j_drop, &w.c_check);
            consider(Winner {
                value: w.value,
                report: DifficultyReport {
                    value: w.value,
                    case: DifficultyCase::SplitDropNull,
                    l_a: l,
                    split: Some((w.k1_star, w.k2_star)),
                    first: Some(w.hat),
                    second: Some(w.check),
                },
                c,
            });
        }
    }
    if k1 <= na {
        // Concede false negatives on the l slowest anomalous sources.
        for l in k2.saturating_sub(nc)..=(k2 - 1).min(na - k1) {
            let i_drop = i_set.tail(l)?;
            debug_assert!(k2 - l >= 1 && k1 <= i_drop.len() && k2 - l <= j_set.len());
            let w = solve_w(k1, k2 - l, budget, &i_drop, &j_set, ratio)?;
            let mut c = vec![0.0; m];
            scatter_into(&mut c, &i_drop, &w.c_hat);
            scatter_into(&mut c, &j_set, &w.c_check);
            consider(Winner {
                value: w.value,
                report: DifficultyReport {
                    value: w.value,
                    case: DifficultyCase::SplitDropAnomalous,
                    l_a: l,
                    split: Some((w.k1_star, w.k2_star)),
                    first: Some(w.hat),
                    second: Some(w.check),
                },
                c,
            });
        }
    }
    // One-sided candidates: so many errors of one type are tolerated that the
    // other block alone determines the difficulty.
    if k1 as isize - 1 >= nc as isize - k2 as isize + 1 {
        let l = (nc as isize - k2 as isize + 1).max(0) as usize;
        let sol = solve_v(k1 - l, budget, &i_set)?;
        let mut c = vec![0.0; m];
        scatter_into(&mut c, &i_set, &sol.c_prime);
        consider(Winner {
            value: sol.value,
            report: DifficultyReport {
                value: sol.value,
                case: DifficultyCase::AnomalousOnly,
                l_a: l,
                split: None,
                first: Some(sol.params()),
                second: None,
            },
            c,
        });
    }
    if k2 as isize - 1 >= na as isize - k1 as isize + 1 {
        let l = (na as isize - k1 as isize + 1).max(0) as usize;
        let sol = solve_v(k2 - l, budget, &j_set)?;
        let mut c = vec![0.0; m];
        scatter_into(&mut c, &j_set, &sol.c_prime);
        consider(Winner {
            value: ratio * sol.value,
            report: DifficultyReport {
                value: ratio * sol.value,
                case: DifficultyCase::NullOnly,
                l_a: l,
                split: None,
                first: None,
                second: Some(sol.params()),
            },
            c,
        });
    }

    let best = winner.ok_or_else(|| {
        Error::SolverInconsistency("no difficulty candidate was admissible".into())
    })?;
    Ok((best.report, finish_allocation(best.c, budget)))
}

/// Difficulty of subset A under the familywise metric with tolerances
/// (k1, k2) and error-rate ratio `ratio = |log alpha| / |log beta|`.
pub fn difficulty_familywise(
    models: &[SourceModel],
    a: SourceSet,
    k1: usize,
    k2: usize,
    budget: f64,
    ratio: f64,
) -> Result<DifficultyReport> {
    familywise_full(models, a, k1, k2, budget, ratio).map(|(report, _)| report)
}

/// Target sampling frequencies for subset A under the familywise metric.
pub fn c_star_familywise(
    models: &[SourceModel],
    a: SourceSet,
    k1: usize,
    k2: usize,
    budget: f64,
    ratio: f64,
) -> Result<AllocationVector> {
    familywise_full(models, a, k1, k2, budget, ratio).map(|(_, alloc)| alloc)
}

/// Precomputed target frequencies for every subset of sources, used by the
/// sampling rule as the running estimate changes.
#[derive(Debug, Clone)]
pub struct TargetCache {
    m: usize,
    table: Vec<AllocationVector>,
}

/// Largest source count for which the exhaustive per-subset cache is built.
pub const MAX_CACHED_SOURCES: usize = 16;

impl TargetCache {
    pub fn build_misclass(
        models: &[SourceModel],
        k: usize,
        budget: f64,
    ) -> Result<Self> {
        Self::build(models, |a| c_star_misclass(models, a, k, budget))
    }

    pub fn build_familywise(
        models: &[SourceModel],
        k1: usize,
        k2: usize,
        budget: f64,
        ratio: f64,
    ) -> Result<Self> {
        Self::build(models, |a| c_star_familywise(models, a, k1, k2, budget, ratio))
    }

    fn build<F>(models: &[SourceModel], f: F) -> Result<Self>
    where
        F: Fn(SourceSet) -> Result<AllocationVector>,
    {
        let m = models.len();
        if m > MAX_CACHED_SOURCES {
            return Err(Error::InvalidConfig(format!(
                "per-subset target cache supports at most {MAX_CACHED_SOURCES} sources, got {m}"
            )));
        }
        let table = (0u64..(1u64 << m))
            .map(|bits| f(SourceSet::from_bits(bits)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TargetCache { m, table })
    }

    pub fn source_count(&self) -> usize {
        self.m
    }

    pub fn get(&self, d: SourceSet) -> &AllocationVector {
        &self.table[d.bits() as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (SourceSet, &AllocationVector)> {
        self.table
            .iter()
            .enumerate()
            .map(|(bits, alloc)| (SourceSet::from_bits(bits as u64), alloc))
    }

    /// True when every subset's target vector is strictly positive, in which
    /// case unmodified probabilistic sampling already visits every source.
    pub fn all_positive(&self) -> bool {
        self.table
            .iter()
            .all(|alloc| alloc.c.iter().all(|&ci| ci > 0.0))
    }
}
