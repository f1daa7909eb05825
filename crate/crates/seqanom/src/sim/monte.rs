//! Parallel Monte-Carlo estimation and threshold calibration.
//!
//! Trials are embarrassingly parallel and each one owns a generator stream
//! keyed by (probe, trial), so the summary is a pure function of the root
//! seed regardless of thread count. Calibration spends one probe index per
//! threshold evaluation, which keeps repeated calibrations reproducible too.

use super::{Engine, Metric, ThresholdSet, TrialOutcome};
use crate::{Error, Result};
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};
use std::cell::Cell;

/// An exceedance-event estimate with its two-sided 95% Clopper-Pearson
/// confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub events: u64,
    pub rate: f64,
    pub ci95: (f64, f64),
}

/// Aggregate over a batch of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub runs: u64,
    /// Mean stopping time in sampling instants.
    pub mean_steps: f64,
    /// Standard error of the mean stopping time; NaN for a single run.
    pub se_steps: f64,
    /// Mean total observations per trial.
    pub mean_samples: f64,
    /// Event bounded by alpha: at least k misclassifications, or at least k1
    /// false positives under the familywise metric.
    pub err_alpha: ErrorEstimate,
    /// Familywise metric only: at least k2 false negatives (bounded by beta).
    pub err_beta: Option<ErrorEstimate>,
}

fn clopper_pearson(events: u64, runs: u64) -> (f64, f64) {
    debug_assert!(events <= runs && runs > 0);
    let x = events as f64;
    let n = runs as f64;
    let lo = if events == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0)
            .expect("valid shape parameters")
            .inverse_cdf(0.025)
    };
    let hi = if events == runs {
        1.0
    } else {
        Beta::new(x + 1.0, n - x)
            .expect("valid shape parameters")
            .inverse_cdf(0.975)
    };
    (lo, hi)
}

fn estimate(events: u64, runs: u64) -> ErrorEstimate {
    ErrorEstimate {
        events,
        rate: events as f64 / runs as f64,
        ci95: clopper_pearson(events, runs),
    }
}

/// Run `runs` independent trials of `engine` and aggregate. The root `seed`
/// and the `probe` index fix every trial's generator stream; results are
/// independent of thread scheduling. Trial failures (for example horizon
/// overruns) are collected and reported with their count.
pub fn monte_carlo(engine: &Engine, runs: u64, seed: u64, probe: u64) -> Result<McSummary> {
    if runs == 0 || runs > u32::MAX as u64 {
        return Err(Error::InvalidConfig(format!(
            "runs must lie in [1, {}], got {runs}",
            u32::MAX
        )));
    }
    if probe > u32::MAX as u64 {
        return Err(Error::InvalidConfig(format!(
            "probe index must fit in 32 bits, got {probe}"
        )));
    }
    let outcomes: Vec<Result<TrialOutcome>> = (0..runs)
        .into_par_iter()
        .map(|trial| {
            let mut rng = Engine::trial_rng(seed, probe, trial);
            engine.run_trial(&mut rng)
        })
        .collect();

    let mut failed = 0u64;
    let mut first_failure: Option<String> = None;
    let mut kept: Vec<TrialOutcome> = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(o) => kept.push(o),
            Err(e) => {
                failed += 1;
                if first_failure.is_none() {
                    first_failure = Some(e.to_string());
                }
            }
        }
    }
    if failed > 0 {
        return Err(Error::TrialFailures {
            failed,
            total: runs,
            first: first_failure.unwrap(),
        });
    }

    let n = kept.len() as f64;
    let mean_steps = kept.iter().map(|o| o.steps as f64).sum::<f64>() / n;
    let se_steps = if kept.len() < 2 {
        f64::NAN
    } else {
        let var = kept
            .iter()
            .map(|o| {
                let d = o.steps as f64 - mean_steps;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    };
    let mean_samples = kept.iter().map(|o| o.samples_used as f64).sum::<f64>() / n;

    let (err_alpha, err_beta) = match engine.metric() {
        Metric::Misclass { k } => {
            let events = kept.iter().filter(|o| o.errors >= k).count() as u64;
            (estimate(events, runs), None)
        }
        Metric::Familywise { k1, k2 } => {
            let fp = kept.iter().filter(|o| o.false_pos >= k1).count() as u64;
            let fnn = kept.iter().filter(|o| o.false_neg >= k2).count() as u64;
            (estimate(fp, runs), Some(estimate(fnn, runs)))
        }
    };

    Ok(McSummary {
        runs,
        mean_steps,
        se_steps,
        mean_samples,
        err_alpha,
        err_beta,
    })
}

/// How familywise thresholds are tuned toward their two targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Tune b against alpha and a against beta in alternating rounds.
    Independent,
    /// Shift both thresholds by a common offset until the binding error rate
    /// meets its target.
    Joint,
}

/// Calibration result: tuned thresholds and the summary of the accepting
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub thresholds: ThresholdSet,
    pub probes_used: u64,
    pub summary: McSummary,
}

/// Default relative tolerance: accept when the empirical rate is within 10%
/// of the target.
pub const DEFAULT_CALIBRATION_TOL: f64 = 0.1;

const MAX_WIDEN: usize = 20;
const MAX_BISECT: usize = 40;

/// Shrink a stopping threshold by bisection until the empirical error rate of
/// `eval` is within `rel_tol` of `target` (relative). `init` is the starting
/// threshold, normally the conservative closed form. `eval` maps a threshold
/// to (rate, summary) and must be stochastically decreasing in the threshold.
fn bisect_threshold(
    mut eval: impl FnMut(f64) -> Result<(f64, McSummary)>,
    init: f64,
    target: f64,
    rel_tol: f64,
    what: &str,
) -> Result<(f64, McSummary)> {
    let in_band = |rate: f64| (rate - target).abs() <= rel_tol * target;
    let (rate0, summary0) = eval(init)?;
    if in_band(rate0) {
        return Ok((init, summary0));
    }
    let mut lo;
    let mut hi;
    if rate0 > target {
        // The start is too aggressive; widen upward until the rate drops
        // below the target.
        lo = init;
        hi = init;
        let mut bracketed = false;
        for _ in 0..MAX_WIDEN {
            hi *= 2.0;
            let (rate, summary) = eval(hi)?;
            if in_band(rate) {
                return Ok((hi, summary));
            }
            if rate <= target {
                bracketed = true;
                break;
            }
            lo = hi;
        }
        if !bracketed {
            return Err(Error::Calibration(format!(
                "{what}: error rate stays above target {target} even at threshold {hi}"
            )));
        }
    } else {
        // The start is conservative; shrink downward until the rate crosses
        // above the target.
        hi = init;
        lo = init;
        let mut bracketed = false;
        for _ in 0..MAX_WIDEN {
            lo /= 2.0;
            let (rate, summary) = eval(lo)?;
            if in_band(rate) {
                return Ok((lo, summary));
            }
            if rate > target {
                bracketed = true;
                break;
            }
            hi = lo;
        }
        if !bracketed {
            return Err(Error::Calibration(format!(
                "{what}: error rate stays below target {target} even at threshold {lo}; \
                 the problem is too easy to calibrate at this tolerance"
            )));
        }
    }
    for _ in 0..MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        let (rate, summary) = eval(mid)?;
        if in_band(rate) {
            return Ok((mid, summary));
        }
        if rate > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!(
        "{what}: no threshold within {:.1}% of target {target} after {MAX_BISECT} bisections; \
         final interval [{lo}, {hi}]",
        rel_tol * 100.0
    )))
}

/// Tune the engine's stopping thresholds so the empirical error rates meet
/// the configured alpha (and beta) targets at relative tolerance `rel_tol`,
/// using `runs` trials per evaluation. Returns the tuned thresholds together
/// with the summary of the accepting evaluation.
///
/// The misclassification metric bisects the single threshold d. The
/// familywise metric either alternates per-threshold bisections
/// ([`CalibrationMode::Independent`]) or shifts both thresholds by a common
/// offset ([`CalibrationMode::Joint`]).
pub fn calibrate(
    engine: &Engine,
    runs: u64,
    seed: u64,
    mode: CalibrationMode,
    rel_tol: f64,
) -> Result<Calibrated> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "calibration tolerance must lie in (0, 1), got {rel_tol}"
        )));
    }
    // The acceptance band must be at least one event wide, or no empirical
    // rate can ever fall inside it.
    let binding_target = match engine.metric() {
        Metric::Misclass { .. } => engine.alpha(),
        Metric::Familywise { .. } => engine.alpha().min(engine.beta()),
    };
    if 2.0 * runs as f64 * binding_target * rel_tol < 1.0 {
        return Err(Error::Calibration(format!(
            "{runs} runs cannot resolve target {binding_target} at relative tolerance \
             {rel_tol}; need at least {} runs per evaluation",
            (1.0 / (2.0 * binding_target * rel_tol)).ceil()
        )));
    }
    let probes = Cell::new(0u64);
    let next_probe = || {
        let p = probes.get();
        probes.set(p + 1);
        p
    };
    match (engine.metric(), engine.thresholds()) {
        (Metric::Misclass { .. }, ThresholdSet::Misclass { d: d0 }) => {
            let eval = |d: f64| -> Result<(f64, McSummary)> {
                let tuned = engine.with_thresholds(ThresholdSet::Misclass { d })?;
                let summary = monte_carlo(&tuned, runs, seed, next_probe())?;
                Ok((summary.err_alpha.rate, summary))
            };
            let (d, summary) = bisect_threshold(eval, d0, engine.alpha(), rel_tol, "threshold d")?;
            Ok(Calibrated {
                thresholds: ThresholdSet::Misclass { d },
                probes_used: probes.get(),
                summary,
            })
        }
        (Metric::Familywise { .. }, ThresholdSet::Familywise { a: a0, b: b0 }) => {
            let alpha = engine.alpha();
            let beta = engine.beta();
            let eval_pair = |a: f64, b: f64| -> Result<McSummary> {
                let tuned = engine.with_thresholds(ThresholdSet::Familywise { a, b })?;
                monte_carlo(&tuned, runs, seed, next_probe())
            };
            match mode {
                CalibrationMode::Independent => {
                    let in_band = |rate: f64, target: f64| {
                        (rate - target).abs() <= rel_tol * target
                    };
                    let mut a = a0;
                    let mut b = b0;
                    let mut summary = None;
                    for _ in 0..4 {
                        let (b_new, _) = bisect_threshold(
                            |bb| {
                                let s = eval_pair(a, bb)?;
                                Ok((s.err_alpha.rate, s))
                            },
                            b,
                            alpha,
                            rel_tol,
                            "threshold b",
                        )?;
                        b = b_new;
                        let (a_new, s) = bisect_threshold(
                            |aa| {
                                let s = eval_pair(aa, b)?;
                                let rate = s.err_beta.as_ref().expect("familywise").rate;
                                Ok((rate, s))
                            },
                            a,
                            beta,
                            rel_tol,
                            "threshold a",
                        )?;
                        a = a_new;
                        let beta_rate = s.err_beta.as_ref().expect("familywise").rate;
                        if in_band(s.err_alpha.rate, alpha) && in_band(beta_rate, beta) {
                            summary = Some(s);
                            break;
                        }
                    }
                    let summary = summary.ok_or_else(|| {
                        Error::Calibration(
                            "alternating rounds did not settle both error rates within \
                             tolerance; the two thresholds interact too strongly"
                                .into(),
                        )
                    })?;
                    Ok(Calibrated {
                        thresholds: ThresholdSet::Familywise { a, b },
                        probes_used: probes.get(),
                        summary,
                    })
                }
                CalibrationMode::Joint => {
                    // Shift (a, b) -> (a0 - t, b0 - t); the binding ratio
                    // max(err_alpha/alpha, err_beta/beta) grows with t.
                    let eval_shift = |t: f64| -> Result<(f64, McSummary)> {
                        let s = eval_pair(a0 - t, b0 - t)?;
                        let r1 = s.err_alpha.rate / alpha;
                        let r2 = s.err_beta.as_ref().expect("familywise").rate / beta;
                        Ok((r1.max(r2), s))
                    };
                    let in_band = |ratio: f64| (ratio - 1.0).abs() <= rel_tol;
                    let t_max = 0.999 * a0.min(b0);
                    let (ratio0, summary0) = eval_shift(0.0)?;
                    if in_band(ratio0) {
                        return Ok(Calibrated {
                            thresholds: ThresholdSet::Familywise { a: a0, b: b0 },
                            probes_used: probes.get(),
                            summary: summary0,
                        });
                    }
                    if ratio0 > 1.0 {
                        return Err(Error::Calibration(format!(
                            "closed-form thresholds already exceed a target \
                             (binding ratio {ratio0:.3}); joint shifting can only tighten"
                        )));
                    }
                    let (mut lo, mut hi) = (0.0f64, t_max);
                    let (ratio_max, summary_max) = eval_shift(t_max)?;
                    if in_band(ratio_max) {
                        return Ok(Calibrated {
                            thresholds: ThresholdSet::Familywise {
                                a: a0 - t_max,
                                b: b0 - t_max,
                            },
                            probes_used: probes.get(),
                            summary: summary_max,
                        });
                    }
                    if ratio_max < 1.0 {
                        return Err(Error::Calibration(
                            "both error rates stay below target over the whole joint shift \
                             range; the offset cannot be preserved at this tolerance"
                                .into(),
                        ));
                    }
                    for _ in 0..MAX_BISECT {
                        let mid = 0.5 * (lo + hi);
                        let (ratio, summary) = eval_shift(mid)?;
                        if in_band(ratio) {
                            return Ok(Calibrated {
                                thresholds: ThresholdSet::Familywise {
                                    a: a0 - mid,
                                    b: b0 - mid,
                                },
                                probes_used: probes.get(),
                                summary,
                            });
                        }
                        if ratio > 1.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    Err(Error::Calibration(format!(
                        "no joint shift within {:.1}% of the binding target after \
                         {MAX_BISECT} bisections",
                        rel_tol * 100.0
                    )))
                }
            }
        }
        _ => unreachable!("metric/threshold pairing enforced at construction"),
    }
}
