//! Probabilistic sampling under the hard per-instant budget.
//!
//! At each instant the sampler turns the current estimate D into per-source
//! inclusion probabilities and draws a subset of at most floor(K) sources
//! with exactly those marginals, via systematic (Madow) sampling.
//!
//! Plain mode uses the target frequencies c*(D) directly. It keeps every
//! source's long-run frequency at its target only when all targets are
//! strictly positive. When some targets are zero, forced mode substitutes a
//! slowly decaying floor b_n = cp * n^(-delta) for the zero entries and pays
//! for it by shaving the positive entries proportionally, which preserves the
//! probability total and keeps every probability at or above b_n.

use crate::allocation::TargetCache;
use crate::model::SourceSet;
use crate::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    /// Sample source i with probability exactly c*_i(D).
    Plain,
    /// Zero-target sources get the decaying floor; positive targets are
    /// reduced to compensate.
    Forced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Per-instant budget K; at most floor(K) sources are observed.
    pub budget: f64,
    pub mode: SamplerMode,
    /// Forced-exploration decay exponent, in (0, 1/2).
    pub delta: f64,
    /// Forced-exploration scale cp, in (0, 1).
    pub c_p: f64,
    /// Raise all probabilities affinely so that exactly floor(K) sources are
    /// drawn every instant, spending the whole budget.
    pub top_up: bool,
}

pub const DEFAULT_DELTA: f64 = 0.2;
pub const DEFAULT_CP: f64 = 0.01;

impl SamplerConfig {
    pub fn plain(budget: f64) -> Self {
        SamplerConfig {
            budget,
            mode: SamplerMode::Plain,
            delta: DEFAULT_DELTA,
            c_p: DEFAULT_CP,
            top_up: false,
        }
    }

    pub fn forced(budget: f64, delta: f64, c_p: f64) -> Self {
        SamplerConfig {
            budget,
            mode: SamplerMode::Forced,
            delta,
            c_p,
            top_up: false,
        }
    }

    pub fn floor_budget(&self) -> usize {
        self.budget.floor() as usize
    }

    /// Check this configuration against a target cache. Forced mode requires
    /// every positive target to stay at or above the floor after shaving,
    /// at every instant; the binding case is n = 1, where the floor is cp.
    pub fn validate(&self, cache: &TargetCache) -> Result<()> {
        let m = cache.source_count();
        if !self.budget.is_finite() || self.budget < 1.0 || self.budget > m as f64 {
            return Err(Error::InvalidConfig(format!(
                "budget must lie in [1, {m}] so at least one source is observed, got {}",
                self.budget
            )));
        }
        if self.mode == SamplerMode::Forced {
            if !(self.delta > 0.0 && self.delta < 0.5) {
                return Err(Error::InvalidConfig(format!(
                    "forced-exploration exponent delta must lie in (0, 0.5), got {}",
                    self.delta
                )));
            }
            if !(self.c_p > 0.0 && self.c_p < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "forced-exploration scale cp must lie in (0, 1), got {}",
                    self.c_p
                )));
            }
            for (d, alloc) in cache.iter() {
                let zeros = alloc.zero_count();
                debug_assert!(zeros < m, "target vector cannot be all zero");
                let needed = self.c_p * m as f64 / (m - zeros) as f64;
                for (i, &ci) in alloc.c.iter().enumerate() {
                    if ci > 0.0 && ci < needed {
                        return Err(Error::InvalidConfig(format!(
                            "forced exploration needs cp <= {:.6} (target {ci:.6} for \
                             source {} under estimate {d} would drop below the floor); \
                             got cp = {}",
                            ci * (m - zeros) as f64 / m as f64,
                            i + 1,
                            self.c_p
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-source inclusion probabilities for sampling instant n (1-based) when
/// the estimate after instant n - 1 is d.
pub fn sampling_probs(n: u64, d: SourceSet, cache: &TargetCache, cfg: &SamplerConfig) -> Vec<f64> {
    debug_assert!(n >= 1);
    let target = &cache.get(d).c;
    match cfg.mode {
        SamplerMode::Plain => target.clone(),
        SamplerMode::Forced => {
            let m = target.len();
            let zeros = target.iter().filter(|&&c| c == 0.0).count();
            if zeros == 0 {
                return target.clone();
            }
            let b_n = cfg.c_p * (n as f64).powf(-cfg.delta);
            let shave = zeros as f64 / (m - zeros) as f64 * b_n;
            target
                .iter()
                .map(|&c| if c == 0.0 { b_n } else { c - shave })
                .collect()
        }
    }
}

/// Draw a subset with the given inclusion probabilities and at most
/// `floor_k` members, using systematic sampling: the unit-spaced points
/// u, u + 1, ... are laid over the cumulative probability axis and each
/// source containing a point is included. Marginals are exact and the draw
/// consumes one uniform variate.
///
/// With `top_up`, probabilities are first raised affinely toward 1 so they
/// total exactly `floor_k`, making every draw spend the whole budget.
pub fn draw_subset<R: Rng + ?Sized>(
    probs: &[f64],
    floor_k: usize,
    top_up: bool,
    rng: &mut R,
) -> Result<SourceSet> {
    let m = probs.len();
    if m == 0 || m > SourceSet::MAX_SOURCES || floor_k < 1 {
        return Err(Error::OutOfRange(format!(
            "need 1..={} sources and a positive budget floor, got m = {m}, floor = {floor_k}",
            SourceSet::MAX_SOURCES
        )));
    }
    let mut p: Vec<f64> = Vec::with_capacity(m);
    for (i, &pi) in probs.iter().enumerate() {
        if !(pi >= -1e-12 && pi <= 1.0 + 1e-9) {
            return Err(Error::SamplingConstraint(format!(
                "inclusion probability for source {} is {pi}, outside [0, 1]",
                i + 1
            )));
        }
        p.push(pi.clamp(0.0, 1.0));
    }
    let fk = floor_k.min(m);
    let mut total: f64 = p.iter().sum();
    if total > fk as f64 + 1e-9 {
        return Err(Error::SamplingConstraint(format!(
            "inclusion probabilities total {total:.12}, exceeding the budget floor {fk}"
        )));
    }
    if top_up && m > fk {
        // p' = p + lambda (1 - p) with lambda chosen so the new total is fk.
        let lambda = ((fk as f64 - total) / (m as f64 - total)).clamp(0.0, 1.0);
        for pi in &mut p {
            *pi += lambda * (1.0 - *pi);
        }
        total = fk as f64;
    } else if top_up {
        // Budget floor covers every source.
        p.iter_mut().for_each(|pi| *pi = 1.0);
        total = m as f64;
    }
    if total > fk as f64 {
        // Rounding dust only; rescale so the point count cannot exceed fk.
        let scale = fk as f64 / total;
        p.iter_mut().for_each(|pi| *pi *= scale);
    }

    let u: f64 = rng.random::<f64>();
    let mut subset = SourceSet::empty();
    let mut cum = 0.0;
    let mut j = 0usize;
    for (i, &pi) in p.iter().enumerate() {
        cum += pi;
        // Probability intervals are at most unit length, so at most one of
        // the unit-spaced points lands in each; the cap at fk points makes
        // the budget bound unconditional.
        while j < fk && (u + j as f64) < cum {
            subset.insert(i);
            j += 1;
        }
    }
    Ok(subset)
}

/// First instant from which every later estimate equals `a`, 1-based over a
/// trace of per-instant estimates (`estimates[t]` is the estimate after
/// instant t + 1). Returns None when the trace is empty or ends inconsistent.
pub fn consistency_time(estimates: &[SourceSet], a: SourceSet) -> Option<u64> {
    if estimates.last().copied() != Some(a) {
        return None;
    }
    let last_bad = estimates.iter().rposition(|&e| e != a);
    Some(match last_bad {
        Some(t) => t as u64 + 2,
        None => 1,
    })
}
