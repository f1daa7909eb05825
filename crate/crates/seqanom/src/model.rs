//! Source observation models, anomalous-subset bitsets, and ordered
//! Kullback-Leibler statistics.
//!
//! For source i with null density f0i and alternative f1i, the two KL numbers
//! are I_i = D(f1i || f0i) and J_i = D(f0i || f1i). They quantify how fast
//! evidence accumulates when the source is sampled: I_i under the alternative,
//! J_i under the null. For a candidate anomalous subset A, three ordered
//! multisets drive every allocation computation:
//!
//! * I(A): the I_i of the sources in A, ascending;
//! * J(A): the J_j of the sources outside A, ascending;
//! * F(A): the union of the two, ascending (I_i for members, J_j for others).
//!
//! Ordering invariants: values are finite, strictly positive, ascending, and
//! ties are broken by ascending source id. Each ordered set remembers which
//! source produced each position, so allocation vectors computed in ordered
//! coordinates can be scattered back to source coordinates.

use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Observation distribution of a single source under both hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind {
    /// Null N(0, 1) versus alternative N(mu, 1) with mu > 0.
    GaussianUnitVariance { mu: f64 },
}

/// One data source: an id and its pair of observation densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel {
    id: usize,
    kind: DistributionKind,
}

impl SourceModel {
    /// Gaussian source with unit variance and alternative mean `mu > 0`.
    pub fn gaussian_unit_variance(id: usize, mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "source {}: alternative mean must be finite and positive, got {mu}",
                id + 1
            )));
        }
        Ok(SourceModel {
            id,
            kind: DistributionKind::GaussianUnitVariance { mu },
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    /// KL numbers (I, J) = (D(f1 || f0), D(f0 || f1)).
    ///
    /// For the unit-variance Gaussian pair both equal mu^2 / 2. Both are
    /// strictly positive for any valid model.
    pub fn kl_numbers(&self) -> (f64, f64) {
        match self.kind {
            DistributionKind::GaussianUnitVariance { mu } => {
                let kl = mu * mu / 2.0;
                (kl, kl)
            }
        }
    }

    /// Log-likelihood ratio log(f1(x) / f0(x)) of one observation, in nats.
    ///
    /// Gaussian case: mu * x - mu^2 / 2.
    pub fn llr(&self, x: f64) -> f64 {
        match self.kind {
            DistributionKind::GaussianUnitVariance { mu } => mu * x - mu * mu / 2.0,
        }
    }

    /// Draw one observation, from f1 if `anomalous`, else from f0.
    pub fn sample<R: Rng + ?Sized>(&self, anomalous: bool, rng: &mut R) -> f64 {
        match self.kind {
            DistributionKind::GaussianUnitVariance { mu } => {
                let z: f64 = StandardNormal.sample(rng);
                if anomalous {
                    z + mu
                } else {
                    z
                }
            }
        }
    }
}

/// A subset of sources, stored as a bitmask over 0-based source ids.
///
/// Doubles as a hypothesis (the set of anomalous sources), a decision, and a
/// sampled batch. Supports at most 64 sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceSet {
    bits: u64,
}

impl SourceSet {
    pub const MAX_SOURCES: usize = 64;

    pub const fn empty() -> Self {
        SourceSet { bits: 0 }
    }

    /// The full set {0, .., m-1}.
    pub fn full(m: usize) -> Self {
        debug_assert!(m <= Self::MAX_SOURCES);
        if m == 64 {
            SourceSet { bits: u64::MAX }
        } else {
            SourceSet {
                bits: (1u64 << m) - 1,
            }
        }
    }

    pub const fn from_bits(bits: u64) -> Self {
        SourceSet { bits }
    }

    pub const fn bits(&self) -> u64 {
        self.bits
    }

    pub fn from_ids<I: IntoIterator<Item = usize>>(ids: I) -> Self {
        let mut s = SourceSet::empty();
        for i in ids {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < Self::MAX_SOURCES);
        self.bits |= 1u64 << i;
    }

    pub fn remove(&mut self, i: usize) {
        self.bits &= !(1u64 << i);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < Self::MAX_SOURCES && (self.bits >> i) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    /// Members in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        let bits = self.bits;
        (0..Self::MAX_SOURCES).filter(move |i| (bits >> i) & 1 == 1)
    }

    /// Complement within the universe {0, .., m-1}.
    pub fn complement(&self, m: usize) -> Self {
        SourceSet {
            bits: !self.bits & Self::full(m).bits,
        }
    }

    /// Members of self not in other.
    pub fn difference(&self, other: SourceSet) -> Self {
        SourceSet {
            bits: self.bits & !other.bits,
        }
    }

    pub fn symmetric_difference(&self, other: SourceSet) -> Self {
        SourceSet {
            bits: self.bits ^ other.bits,
        }
    }

    pub fn union(&self, other: SourceSet) -> Self {
        SourceSet {
            bits: self.bits | other.bits,
        }
    }

    pub fn intersection(&self, other: SourceSet) -> Self {
        SourceSet {
            bits: self.bits & other.bits,
        }
    }
}

impl std::fmt::Display for SourceSet {
    /// Ascending 1-based ids joined by '|', or "-" for the empty set.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            return write!(f, "-");
        }
        let mut first = true;
        for i in self.iter() {
            if !first {
                write!(f, "|")?;
            }
            write!(f, "{}", i + 1)?;
            first = false;
        }
        Ok(())
    }
}

/// An ascending multiset of positive per-source rates (KL numbers), with the
/// originating source id of each position.
///
/// Invariants: every value is finite and strictly positive; `values()[p] <=
/// values()[p + 1]`; equal values appear in ascending source-id order;
/// `source_at` is injective.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedKlSet {
    values: Vec<f64>,
    source_of: Vec<usize>,
}

impl OrderedKlSet {
    /// Sort `(source id, rate)` pairs ascending by rate, ties by id.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::OutOfRange(
                "ordered rate set must not be empty".into(),
            ));
        }
        for &(id, v) in &entries {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "source {}: rate must be finite and positive, got {v}",
                    id + 1
                )));
            }
        }
        let mut sorted = entries;
        sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        Ok(OrderedKlSet {
            values: sorted.iter().map(|e| e.1).collect(),
            source_of: sorted.iter().map(|e| e.0).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Ascending rates, 0-based positions.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Source id occupying 0-based position `pos`.
    pub fn source_at(&self, pos: usize) -> usize {
        self.source_of[pos]
    }

    /// Drop the `drop` smallest entries, keeping the source map.
    ///
    /// Errors if fewer than `drop + 1` entries would remain empty, that is,
    /// when `drop >= len`.
    pub fn tail(&self, drop: usize) -> Result<Self> {
        if drop >= self.values.len() {
            return Err(Error::OutOfRange(format!(
                "cannot drop {drop} entries from a set of {}",
                self.values.len()
            )));
        }
        Ok(OrderedKlSet {
            values: self.values[drop..].to_vec(),
            source_of: self.source_of[drop..].to_vec(),
        })
    }

    /// Sum of the `k` smallest rates.
    pub fn sum_first(&self, k: usize) -> f64 {
        self.values[..k].iter().sum()
    }
}

fn check_subset_bounds(models: &[SourceModel], a: SourceSet) -> Result<()> {
    let m = models.len();
    if a.difference(SourceSet::full(m)).bits() != 0 {
        return Err(Error::OutOfRange(format!(
            "anomalous set contains a source id >= {m}"
        )));
    }
    Ok(())
}

/// F(A): for each source, its I value if the source is in A, else its J value,
/// as one ascending multiset over all sources.
pub fn build_f_set(models: &[SourceModel], a: SourceSet) -> Result<OrderedKlSet> {
    check_subset_bounds(models, a)?;
    let entries = models
        .iter()
        .map(|mdl| {
            let (i_val, j_val) = mdl.kl_numbers();
            let v = if a.contains(mdl.id()) { i_val } else { j_val };
            (mdl.id(), v)
        })
        .collect();
    OrderedKlSet::new(entries)
}

/// I(A): the I values of the sources in A, ascending. Errors if A is empty.
pub fn build_i_set(models: &[SourceModel], a: SourceSet) -> Result<OrderedKlSet> {
    check_subset_bounds(models, a)?;
    if a.is_empty() {
        return Err(Error::OutOfRange(
            "I(A) is undefined for an empty anomalous set".into(),
        ));
    }
    let entries = models
        .iter()
        .filter(|mdl| a.contains(mdl.id()))
        .map(|mdl| (mdl.id(), mdl.kl_numbers().0))
        .collect();
    OrderedKlSet::new(entries)
}

/// J(A): the J values of the sources outside A, ascending. Errors if A covers
/// every source.
pub fn build_j_set(models: &[SourceModel], a: SourceSet) -> Result<OrderedKlSet> {
    check_subset_bounds(models, a)?;
    if a.len() >= models.len() && a == SourceSet::full(models.len()) {
        return Err(Error::OutOfRange(
            "J(A) is undefined when every source is anomalous".into(),
        ));
    }
    let entries = models
        .iter()
        .filter(|mdl| !a.contains(mdl.id()))
        .map(|mdl| (mdl.id(), mdl.kl_numbers().1))
        .collect();
    OrderedKlSet::new(entries)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Ten-source benchmark scenario used across the crate's tests: means
    /// 0.5 (x3), 0.7 (x4), 1.0 (x3), anomalous set {1..5} (1-based).
    pub(crate) fn bench_models() -> Vec<SourceModel> {
        let mus = [0.5, 0.5, 0.5, 0.7, 0.7, 0.7, 0.7, 1.0, 1.0, 1.0];
        mus.iter()
            .enumerate()
            .map(|(i, &mu)| SourceModel::gaussian_unit_variance(i, mu).unwrap())
            .collect()
    }

    pub(crate) fn bench_a() -> SourceSet {
        SourceSet::from_ids(0..5)
    }

    #[test]
    fn gaussian_kl_numbers() {
        let m = SourceModel::gaussian_unit_variance(0, 1.0).unwrap();
        assert_eq!(m.kl_numbers(), (0.5, 0.5));
        let m = SourceModel::gaussian_unit_variance(1, 0.5).unwrap();
        assert_eq!(m.kl_numbers(), (0.125, 0.125));
        let m = SourceModel::gaussian_unit_variance(2, 0.7).unwrap();
        let (i_val, j_val) = m.kl_numbers();
        assert_abs_diff_eq!(i_val, 0.245, epsilon = 1e-15);
        assert_abs_diff_eq!(j_val, 0.245, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_llr_linear_form() {
        let m = SourceModel::gaussian_unit_variance(0, 1.0).unwrap();
        assert_abs_diff_eq!(m.llr(1.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.llr(0.0), -0.5, epsilon = 1e-15);
        let m = SourceModel::gaussian_unit_variance(0, 0.7).unwrap();
        assert_abs_diff_eq!(m.llr(2.0), 1.4 - 0.245, epsilon = 1e-15);
    }

    #[test]
    fn invalid_mean_rejected() {
        assert!(SourceModel::gaussian_unit_variance(0, 0.0).is_err());
        assert!(SourceModel::gaussian_unit_variance(0, -1.0).is_err());
        assert!(SourceModel::gaussian_unit_variance(0, f64::NAN).is_err());
        assert!(SourceModel::gaussian_unit_variance(0, f64::INFINITY).is_err());
    }

    #[test]
    fn source_set_basics() {
        let mut s = SourceSet::empty();
        assert!(s.is_empty());
        s.insert(3);
        s.insert(0);
        assert_eq!(s.len(), 2);
        assert!(s.contains(0) && s.contains(3) && !s.contains(1));
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 3]);
        assert_eq!(s.complement(5).iter().collect::<Vec<_>>(), vec![1, 2, 4]);
        assert_eq!(s.to_string(), "1|4");
        assert_eq!(SourceSet::empty().to_string(), "-");
        assert_eq!(SourceSet::full(3).bits(), 0b111);
        let t = SourceSet::from_ids([0, 1]);
        assert_eq!(s.symmetric_difference(t).iter().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(s.difference(t).iter().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn ordered_set_sorts_and_maps_sources() {
        let set = OrderedKlSet::new(vec![(0, 0.5), (1, 0.125), (2, 0.125)]).unwrap();
        assert_eq!(set.values(), &[0.125, 0.125, 0.5]);
        // Tie between sources 1 and 2 resolves by ascending id.
        assert_eq!(set.source_at(0), 1);
        assert_eq!(set.source_at(1), 2);
        assert_eq!(set.source_at(2), 0);
        let tail = set.tail(1).unwrap();
        assert_eq!(tail.values(), &[0.125, 0.5]);
        assert_eq!(tail.source_at(0), 2);
        assert!(set.tail(3).is_err());
        assert_abs_diff_eq!(set.sum_first(2), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn bench_scenario_rate_sets() {
        let models = bench_models();
        let a = bench_a();
        let f = build_f_set(&models, a).unwrap();
        let expected = [0.125, 0.125, 0.125, 0.245, 0.245, 0.245, 0.245, 0.5, 0.5, 0.5];
        for (got, want) in f.values().iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let i_set = build_i_set(&models, a).unwrap();
        let expect_i = [0.125, 0.125, 0.125, 0.245, 0.245];
        for (got, want) in i_set.values().iter().zip(expect_i) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        // Members of A are sources 1..3 (mean 0.5) then 4..5 (mean 0.7).
        assert_eq!(
            (0..5).map(|p| i_set.source_at(p)).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
        let j_set = build_j_set(&models, a).unwrap();
        let expect_j = [0.245, 0.245, 0.5, 0.5, 0.5];
        for (got, want) in j_set.values().iter().zip(expect_j) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(
            (0..5).map(|p| j_set.source_at(p)).collect::<Vec<_>>(),
            vec![5, 6, 7, 8, 9]
        );
    }

    #[test]
    fn empty_and_full_rate_sets_rejected() {
        let models = bench_models();
        assert!(build_i_set(&models, SourceSet::empty()).is_err());
        assert!(build_j_set(&models, SourceSet::full(models.len())).is_err());
        // The complementary constructions remain valid.
        assert_eq!(
            build_j_set(&models, SourceSet::empty()).unwrap().len(),
            models.len()
        );
        assert_eq!(
            build_i_set(&models, SourceSet::full(models.len()))
                .unwrap()
                .len(),
            models.len()
        );
    }

    proptest! {
        /// F(A) is always the multiset union of I(A) and J(A).
        #[test]
        fn f_is_union_of_i_and_j(
            mus in proptest::collection::vec(0.05f64..3.0, 2..10),
            mask in 0u64..1024,
        ) {
            let m = mus.len();
            let models: Vec<_> = mus
                .iter()
                .enumerate()
                .map(|(i, &mu)| SourceModel::gaussian_unit_variance(i, mu).unwrap())
                .collect();
            let a = SourceSet::from_bits(mask & SourceSet::full(m).bits());
            prop_assume!(!a.is_empty() && a.len() < m);
            let f = build_f_set(&models, a).unwrap();
            let mut merged: Vec<f64> = build_i_set(&models, a)
                .unwrap()
                .values()
                .iter()
                .chain(build_j_set(&models, a).unwrap().values())
                .copied()
                .collect();
            merged.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (got, want) in f.values().iter().zip(merged) {
                prop_assert!((got - want).abs() <= 1e-15);
            }
            // Position-to-source maps are bijections onto their index sets.
            let ids: std::collections::HashSet<_> =
                (0..m).map(|p| f.source_at(p)).collect();
            prop_assert_eq!(ids.len(), m);
        }
    }
}
