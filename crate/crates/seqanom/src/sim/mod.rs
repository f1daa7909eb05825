//! Trial execution, reproducible Monte-Carlo estimation, threshold
//! calibration, and CSV emission of benchmark sweeps.
//!
//! An [`Engine`] bundles everything a trial needs: source models, the
//! per-subset target cache, the sampler configuration, and the stopping
//! thresholds. Trials are pure functions of a generator, so a root seed plus
//! a (probe, trial) stream index reproduces any run exactly, independent of
//! thread scheduling.

mod monte;
mod reproduce;

pub use monte::{
    calibrate, monte_carlo, CalibrationMode, Calibrated, ErrorEstimate, McSummary,
    DEFAULT_CALIBRATION_TOL,
};
pub use reproduce::{
    benchmark_config, benchmark_table_rows, reproduce, write_summary_csv, write_table_csv,
    write_trace_csv, write_xyse_csv, ReproducePreset, TableRow,
};

use crate::allocation::TargetCache;
use crate::model::{SourceModel, SourceSet};
use crate::policy::{
    check_leap, check_sum_intersection, threshold_misclass, thresholds_familywise, update_llrs,
    RunState, StopKind,
};
use crate::sampler::{self, SamplerConfig, SamplerMode};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Which generalized error metric the policy controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// At least k misclassifications of any kind, bounded by alpha.
    Misclass { k: usize },
    /// At least k1 false positives bounded by alpha and at least k2 false
    /// negatives bounded by beta.
    Familywise { k1: usize, k2: usize },
}

/// Sampler selection in a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerChoice {
    /// Plain when every cached target is strictly positive, forced otherwise.
    Auto,
    Plain,
    Forced,
}

/// Stopping thresholds in force for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSet {
    Misclass { d: f64 },
    Familywise { a: f64, b: f64 },
}

/// A complete run description, parseable from a key=value text file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Alternative-hypothesis means, one per source (null is standard normal).
    pub mus: Vec<f64>,
    /// True anomalous subset used to generate data.
    pub a_true: SourceSet,
    pub metric: Metric,
    /// Per-instant sampling budget K.
    pub budget: f64,
    pub alpha: f64,
    /// False-negative target; defaults to alpha when absent.
    pub beta: Option<f64>,
    pub runs: u64,
    pub seed: u64,
    pub sampler: SamplerChoice,
    pub delta: f64,
    pub c_p: f64,
    /// Raise inclusion probabilities so exactly floor(K) sources are observed
    /// every instant.
    pub top_up: bool,
    /// Per-trial horizon guard.
    pub max_steps: u64,
    pub calibration: CalibrationMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mus: Vec::new(),
            a_true: SourceSet::empty(),
            metric: Metric::Misclass { k: 1 },
            budget: 1.0,
            alpha: 1e-3,
            beta: None,
            runs: 10_000,
            seed: 1,
            sampler: SamplerChoice::Auto,
            delta: sampler::DEFAULT_DELTA,
            c_p: sampler::DEFAULT_CP,
            top_up: true,
            max_steps: 10_000_000,
            calibration: CalibrationMode::Independent,
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::ConfigParse {
        line,
        msg: msg.into(),
    }
}

fn parse_source_list(line: usize, text: &str) -> Result<SourceSet> {
    let mut set = SourceSet::empty();
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "-" {
        return Ok(set);
    }
    for part in trimmed.split(',') {
        let part = part.trim();
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let lo: usize = lo
            .parse()
            .map_err(|_| parse_err(line, format!("bad source id '{part}'")))?;
        let hi: usize = hi
            .parse()
            .map_err(|_| parse_err(line, format!("bad source id '{part}'")))?;
        if lo < 1 || hi < lo || hi > SourceSet::MAX_SOURCES {
            return Err(parse_err(line, format!("source range '{part}' out of bounds")));
        }
        for id in lo..=hi {
            set.insert(id - 1);
        }
    }
    Ok(set)
}

impl RunConfig {
    /// Parse a key=value configuration. Lines may be blank or start with '#'.
    /// Source ids in `A_true` are 1-based and may use ranges like `1-5`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut m_declared: Option<usize> = None;
        let mut metric_name: Option<String> = None;
        let mut k: Option<usize> = None;
        let mut k1: Option<usize> = None;
        let mut k2: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
            let key = key.trim();
            let value = value.trim();
            macro_rules! num {
                ($ty:ty) => {
                    value.parse::<$ty>().map_err(|_| {
                        parse_err(line_no, format!("bad value '{value}' for key '{key}'"))
                    })?
                };
            }
            match key {
                "M" => m_declared = Some(num!(usize)),
                "mus" => {
                    cfg.mus = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| parse_err(line_no, format!("bad means list '{value}'")))?;
                }
                "A_true" => cfg.a_true = parse_source_list(line_no, value)?,
                "metric" => metric_name = Some(value.to_string()),
                "k" => k = Some(num!(usize)),
                "k1" => k1 = Some(num!(usize)),
                "k2" => k2 = Some(num!(usize)),
                "K" => cfg.budget = num!(f64),
                "alpha" => cfg.alpha = num!(f64),
                "beta" => cfg.beta = Some(num!(f64)),
                "runs" => cfg.runs = num!(u64),
                "seed" => cfg.seed = num!(u64),
                "sampler" => {
                    cfg.sampler = match value {
                        "auto" => SamplerChoice::Auto,
                        "plain" => SamplerChoice::Plain,
                        "forced" => SamplerChoice::Forced,
                        _ => {
                            return Err(parse_err(
                                line_no,
                                format!("sampler must be auto|plain|forced, got '{value}'"),
                            ))
                        }
                    }
                }
                "delta" => cfg.delta = num!(f64),
                "cp" => cfg.c_p = num!(f64),
                "top_up" => {
                    cfg.top_up = match value {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(parse_err(
                                line_no,
                                format!("top_up must be true|false, got '{value}'"),
                            ))
                        }
                    }
                }
                "max_steps" => cfg.max_steps = num!(u64),
                "calibrate_mode" => {
                    cfg.calibration = match value {
                        "independent" => CalibrationMode::Independent,
                        "joint" => CalibrationMode::Joint,
                        _ => {
                            return Err(parse_err(
                                line_no,
                                format!(
                                    "calibrate_mode must be independent|joint, got '{value}'"
                                ),
                            ))
                        }
                    }
                }
                _ => return Err(parse_err(line_no, format!("unknown key '{key}'"))),
            }
        }
        if let Some(m) = m_declared {
            if cfg.mus.is_empty() {
                return Err(Error::InvalidConfig(
                    "config declares M but no means (key 'mus')".into(),
                ));
            }
            if cfg.mus.len() != m {
                return Err(Error::InvalidConfig(format!(
                    "M = {m} but {} means were given",
                    cfg.mus.len()
                )));
            }
        }
        cfg.metric = match metric_name.as_deref() {
            Some("misclass") | None => Metric::Misclass {
                k: k.ok_or_else(|| {
                    Error::InvalidConfig("misclassification metric requires key 'k'".into())
                })?,
            },
            Some("familywise") => Metric::Familywise {
                k1: k1.ok_or_else(|| {
                    Error::InvalidConfig("familywise metric requires key 'k1'".into())
                })?,
                k2: k2.ok_or_else(|| {
                    Error::InvalidConfig("familywise metric requires key 'k2'".into())
                })?,
            },
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "metric must be misclass|familywise, got '{other}'"
                )))
            }
        };
        Ok(cfg)
    }

    /// Effective false-negative target: beta, defaulting to alpha.
    pub fn beta_effective(&self) -> f64 {
        self.beta.unwrap_or(self.alpha)
    }

    /// Error-target ratio |log alpha| / |log beta| used by the familywise
    /// difficulty and allocation.
    pub fn ratio(&self) -> f64 {
        self.alpha.ln() / self.beta_effective().ln()
    }
}

/// Per-trial result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    /// Stopping time T in sampling instants.
    pub steps: u64,
    pub decided: SourceSet,
    pub kind: StopKind,
    /// |decided \ A|.
    pub false_pos: usize,
    /// |A \ decided|.
    pub false_neg: usize,
    /// |decided symmetric-difference A| = false_pos + false_neg.
    pub errors: usize,
    /// First instant from which the running estimate equaled the true subset
    /// through stopping; None if it was wrong at the stopping instant.
    pub sigma_a: Option<u64>,
    /// Total observations taken; at most floor(K) * steps.
    pub samples_used: u64,
}

/// One recorded sampling instant of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub n: u64,
    pub sampled: SourceSet,
    pub llr: Vec<f64>,
    pub estimate: SourceSet,
}

/// A recorded trial: per-instant rows plus the outcome, which is None when
/// the horizon cut the trial before the rule fired.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub outcome: Option<TrialOutcome>,
}

/// Everything needed to run trials for one configuration.
#[derive(Debug, Clone)]
pub struct Engine {
    models: Vec<SourceModel>,
    a_true: SourceSet,
    metric: Metric,
    alpha: f64,
    beta: f64,
    cache: Arc<TargetCache>,
    sampler_cfg: SamplerConfig,
    thresholds: ThresholdSet,
    floor_k: usize,
    max_steps: u64,
}

impl Engine {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let m = cfg.mus.len();
        if m == 0 {
            return Err(Error::InvalidConfig("no sources configured".into()));
        }
        let models: Vec<SourceModel> = cfg
            .mus
            .iter()
            .enumerate()
            .map(|(i, &mu)| SourceModel::gaussian_unit_variance(i, mu))
            .collect::<Result<_>>()?;
        if cfg.a_true.bits() >> m != 0 {
            return Err(Error::InvalidConfig(format!(
                "true subset {} references sources beyond M = {m}",
                cfg.a_true
            )));
        }
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                cfg.alpha
            )));
        }
        let beta = cfg.beta_effective();
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        let (cache, thresholds) = match cfg.metric {
            Metric::Misclass { k } => (
                TargetCache::build_misclass(&models, k, cfg.budget)?,
                ThresholdSet::Misclass {
                    d: threshold_misclass(cfg.alpha, m, k)?,
                },
            ),
            Metric::Familywise { k1, k2 } => (
                TargetCache::build_familywise(&models, k1, k2, cfg.budget, cfg.ratio())?,
                {
                    let (a, b) = thresholds_familywise(cfg.alpha, beta, m, k1, k2)?;
                    ThresholdSet::Familywise { a, b }
                },
            ),
        };
        let mode = match cfg.sampler {
            SamplerChoice::Plain => SamplerMode::Plain,
            SamplerChoice::Forced => SamplerMode::Forced,
            SamplerChoice::Auto => {
                if cache.all_positive() {
                    SamplerMode::Plain
                } else {
                    SamplerMode::Forced
                }
            }
        };
        if mode == SamplerMode::Plain && !cache.all_positive() {
            return Err(Error::InvalidConfig(
                "plain sampling starves sources whose target frequency is zero for some \
                 estimate; use sampler = forced (or auto)"
                    .into(),
            ));
        }
        let sampler_cfg = SamplerConfig {
            budget: cfg.budget,
            mode,
            delta: cfg.delta,
            c_p: cfg.c_p,
            top_up: cfg.top_up,
        };
        sampler_cfg.validate(&cache)?;
        if cfg.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(Engine {
            models,
            a_true: cfg.a_true,
            metric: cfg.metric,
            alpha: cfg.alpha,
            beta,
            cache: Arc::new(cache),
            sampler_cfg,
            thresholds,
            floor_k: cfg.budget.floor() as usize,
            max_steps: cfg.max_steps,
        })
    }

    pub fn source_count(&self) -> usize {
        self.models.len()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn a_true(&self) -> SourceSet {
        self.a_true
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sampler_mode(&self) -> SamplerMode {
        self.sampler_cfg.mode
    }

    pub fn thresholds(&self) -> ThresholdSet {
        self.thresholds
    }

    pub fn target_cache(&self) -> &TargetCache {
        &self.cache
    }

    /// Same engine with different stopping thresholds (used by calibration).
    pub fn with_thresholds(&self, thresholds: ThresholdSet) -> Result<Engine> {
        match (self.metric, thresholds) {
            (Metric::Misclass { .. }, ThresholdSet::Misclass { d }) if d > 0.0 => {}
            (Metric::Familywise { .. }, ThresholdSet::Familywise { a, b })
                if a > 0.0 && b > 0.0 => {}
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "thresholds {thresholds:?} do not fit metric {:?}",
                    self.metric
                )))
            }
        }
        let mut engine = self.clone();
        engine.thresholds = thresholds;
        Ok(engine)
    }

    /// Generator for one trial: a fixed root seed with a stream derived from
    /// the probe and trial indices, so any trial can be replayed in isolation.
    pub fn trial_rng(seed: u64, probe: u64, trial: u64) -> ChaCha8Rng {
        debug_assert!(probe < (1 << 32) && trial < (1 << 32));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((probe << 32) | trial);
        rng
    }

    /// One sampling instant: draw the subset for instant n, observe, update.
    /// Returns the sampled subset.
    fn step(&self, state: &mut RunState, n: u64, rng: &mut ChaCha8Rng) -> Result<SourceSet> {
        let probs = sampler::sampling_probs(n, state.estimate(), &self.cache, &self.sampler_cfg);
        let sampled = sampler::draw_subset(&probs, self.floor_k, self.sampler_cfg.top_up, rng)?;
        let mut obs = [0.0f64; SourceSet::MAX_SOURCES];
        let mut len = 0;
        for i in sampled.iter() {
            obs[len] = self.models[i].sample(self.a_true.contains(i), rng);
            len += 1;
        }
        update_llrs(state, &self.models, sampled, &obs[..len])?;
        Ok(sampled)
    }

    fn check_stop(&self, state: &RunState) -> Result<Option<crate::policy::StopDecision>> {
        match (self.metric, self.thresholds) {
            (Metric::Misclass { k }, ThresholdSet::Misclass { d }) => {
                check_sum_intersection(state, k, d)
            }
            (Metric::Familywise { k1, k2 }, ThresholdSet::Familywise { a, b }) => {
                check_leap(state, k1, k2, a, b)
            }
            _ => unreachable!("metric/threshold pairing enforced at construction"),
        }
    }

    fn outcome(
        &self,
        decision: crate::policy::StopDecision,
        steps: u64,
        samples_used: u64,
        last_bad: u64,
    ) -> TrialOutcome {
        let false_pos = decision.decided.difference(self.a_true).len();
        let false_neg = self.a_true.difference(decision.decided).len();
        debug_assert!(samples_used <= self.floor_k as u64 * steps);
        TrialOutcome {
            steps,
            decided: decision.decided,
            kind: decision.kind,
            false_pos,
            false_neg,
            errors: false_pos + false_neg,
            sigma_a: if last_bad == steps {
                None
            } else {
                Some(last_bad + 1)
            },
            samples_used,
        }
    }

    /// Run one trial to a stopping decision.
    pub fn run_trial(&self, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
        let mut state = RunState::new(self.source_count())?;
        let mut samples_used = 0u64;
        let mut last_bad = 0u64;
        for n in 1..=self.max_steps {
            let sampled = self.step(&mut state, n, rng)?;
            samples_used += sampled.len() as u64;
            if state.estimate() != self.a_true {
                last_bad = n;
            }
            if let Some(decision) = self.check_stop(&state)? {
                return Ok(self.outcome(decision, n, samples_used, last_bad));
            }
        }
        Err(Error::HorizonExceeded {
            max_steps: self.max_steps,
        })
    }

    /// Run one trial collecting per-instant rows, stopping at the rule or at
    /// `horizon`, whichever comes first.
    pub fn run_trace(&self, horizon: u64, rng: &mut ChaCha8Rng) -> Result<Trace> {
        let mut state = RunState::new(self.source_count())?;
        let mut steps = Vec::new();
        let mut samples_used = 0u64;
        let mut last_bad = 0u64;
        for n in 1..=horizon {
            let sampled = self.step(&mut state, n, rng)?;
            samples_used += sampled.len() as u64;
            if state.estimate() != self.a_true {
                last_bad = n;
            }
            steps.push(TraceStep {
                n,
                sampled,
                llr: state.llr().to_vec(),
                estimate: state.estimate(),
            });
            if let Some(decision) = self.check_stop(&state)? {
                let outcome = self.outcome(decision, n, samples_used, last_bad);
                return Ok(Trace {
                    steps,
                    outcome: Some(outcome),
                });
            }
        }
        Ok(Trace {
            steps,
            outcome: None,
        })
    }

    /// Run the sampling loop for a fixed horizon with the stopping rule
    /// disabled and report the consistency time of the estimate, in the same
    /// convention as [`crate::sampler::consistency_time`].
    pub fn consistency_probe(&self, horizon: u64, rng: &mut ChaCha8Rng) -> Result<Option<u64>> {
        let mut state = RunState::new(self.source_count())?;
        let mut last_bad = 0u64;
        for n in 1..=horizon {
            self.step(&mut state, n, rng)?;
            if state.estimate() != self.a_true {
                last_bad = n;
            }
        }
        Ok(if state.estimate() != self.a_true {
            None
        } else {
            Some(last_bad + 1)
        })
    }
}
