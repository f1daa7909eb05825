//! Sequential anomaly identification over M independent data sources under a
//! per-instant sampling budget.
//!
//! Each source i emits i.i.d. observations from a null density f0i or, if the
//! source is anomalous, from an alternative density f1i. A policy repeatedly
//! picks a subset of at most floor(K) sources to observe, updates per-source
//! log-likelihood ratio (LLR) statistics, and stops once it can declare the
//! anomalous subset while controlling one of two generalized error metrics:
//!
//! * at least k misclassifications of any kind, bounded by alpha, or
//! * at least k1 false positives bounded by alpha and at least k2 false
//!   negatives bounded by beta.
//!
//! The crate provides, as separately usable layers:
//!
//! * [`model`]: source distributions, their Kullback-Leibler (KL) numbers, and
//!   ordered KL statistics for a candidate anomalous subset.
//! * [`maxmin`]: the two max-min budget-allocation solvers. `solve_v` maximizes
//!   the sum of the kappa smallest allocated information rates; `solve_w`
//!   balances two such objectives at a given ratio. A grid-search oracle
//!   (`brute_force_v`) provides an independent check of `solve_v`.
//! * [`allocation`]: the difficulty value of an identification problem and the
//!   target long-run sampling-frequency vector `c*(A)` for both error metrics.
//! * [`policy`]: LLR bookkeeping, closed-form thresholds, and the two
//!   stopping/decision rules (sum-intersection and leap).
//! * [`sampler`]: probabilistic sampling with optional forced exploration and
//!   an exact-marginal subset draw under the hard per-step budget.
//! * [`sim`]: trial execution, reproducible parallel Monte-Carlo estimation,
//!   threshold calibration, and CSV emission of benchmark sweeps.
//!
//! # Determinism
//!
//! All randomness flows from one root seed. Each trial uses a counter-based
//! generator stream derived from its index, so results are identical across
//! thread schedules, and repeated runs with the same seed and configuration
//! produce byte-identical CSV output.
//!
//! # Conventions
//!
//! * Natural logarithms everywhere: LLRs, KL numbers, and thresholds are in nats.
//! * Source ids are 0-based in code; text interfaces (config files, CSV) use
//!   1-based ids.
//! * Ordered statistics break ties by ascending source id.

pub mod allocation;
pub mod maxmin;
pub mod model;
pub mod policy;
pub mod sampler;
pub mod sim;

pub use allocation::{
    c_star_familywise, c_star_misclass, difficulty_familywise, difficulty_misclass,
    AllocationVector, DifficultyCase, DifficultyReport, TargetCache,
};
pub use maxmin::{brute_force_v, harmonic_tail, solve_v, solve_w, SolutionV, SolutionW, VParams};
pub use model::{
    build_f_set, build_i_set, build_j_set, DistributionKind, OrderedKlSet, SourceModel, SourceSet,
};
pub use policy::{
    check_leap, check_sum_intersection, threshold_misclass, thresholds_familywise, update_llrs,
    RunState, StopDecision, StopKind,
};
pub use sampler::{
    consistency_time, draw_subset, sampling_probs, SamplerConfig, SamplerMode,
};
pub use sim::{
    benchmark_config, calibrate, monte_carlo, reproduce, CalibrationMode, Calibrated, Engine,
    ErrorEstimate, McSummary, Metric, ReproducePreset, RunConfig, SamplerChoice, ThresholdSet,
    Trace, TraceStep, TrialOutcome,
};

/// Errors reported by every layer of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A source model is ill-posed (for example a Gaussian alternative with
    /// non-positive mean, whose KL numbers would vanish).
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// A solver or rule argument violates its documented precondition.
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    /// A run configuration is inconsistent (sizes, tolerances, budgets).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A key=value configuration file could not be parsed.
    #[error("config parse error (line {line}): {msg}")]
    ConfigParse { line: usize, msg: String },
    /// The per-instant budget or a probability constraint was violated.
    #[error("sampling constraint violated: {0}")]
    SamplingConstraint(String),
    /// Threshold calibration could not bracket or reach the target rate.
    #[error("calibration failed: {0}")]
    Calibration(String),
    /// A trial ran past the configured horizon without stopping.
    #[error("trial exceeded {max_steps} steps without stopping")]
    HorizonExceeded { max_steps: u64 },
    /// One or more Monte-Carlo trials failed; carries the failure count.
    #[error("{failed} of {total} trials failed; first failure: {first}")]
    TrialFailures { failed: u64, total: u64, first: String },
    /// An internal invariant of a solver did not hold (indicates a bug, not
    /// bad user input).
    #[error("internal solver inconsistency: {0}")]
    SolverInconsistency(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
