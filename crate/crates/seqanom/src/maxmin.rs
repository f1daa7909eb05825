//! Max-min budget allocation over ordered rate sets.
//!
//! Given an ascending rate multiset L = (L_1, .., L_m) and a per-instant
//! budget K, `solve_v` computes
//!
//! ```text
//! V(kappa, K, L) = max { min over |U| = kappa of sum_{p in U} c_p * L_p }
//! ```
//!
//! over frequency vectors c in [0, 1]^m with sum(c) <= K, together with the
//! minimal-norm maximizer c'. The optimum has a water-filling shape described
//! by four parameters (x, y, u, v): positions v..u carry a full unit, position
//! v - 1 carries the fractional remainder x, and every position above u is
//! held at a common product level (c_p * L_p constant), parameterized by y.
//!
//! `solve_w` splits one budget across two such objectives (rate sets L1, L2
//! with orders kappa1, kappa2) so that the first objective equals `ratio`
//! times the second and no budget is wasted:
//!
//! ```text
//! W = max over K1 + K2 <= K of min { V(kappa1, K1, L1), ratio * V(kappa2, K2, L2) }
//! ```
//!
//! `brute_force_v` is an independent grid-search oracle for `solve_v`,
//! exponential in the set size, used to validate the solver on small inputs.
//!
//! # Numerical policy
//!
//! * Boundary comparisons use a 1e-12 slack resolving ties toward the branch
//!   that treats the boundary as already reached ([`TOL_TIE`]).
//! * Residual budget at most 1e-12 counts as exhausted ([`TOL_EXHAUST`]).
//! * Root finding uses bisection to a bracket width of 1e-12 on monotone
//!   functions, so solver self-consistency holds to well under 1e-9.

use crate::model::OrderedKlSet;
use crate::{Error, Result};

/// Slack for boundary comparisons; ties resolve toward "boundary reached".
pub const TOL_TIE: f64 = 1e-12;
/// Residual budget below this is considered fully spent.
pub const TOL_EXHAUST: f64 = 1e-12;
/// Bracket width at which budget-split bisection stops.
pub const TOL_BISECT: f64 = 1e-12;

/// Shape parameters of one water-filling solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VParams {
    /// Fractional frequency on position v - 1; meaningful only when v >= 2.
    pub x: f64,
    /// Shared-tail parameter; meaningful only when u < kappa.
    pub y: f64,
    /// Highest position carrying a full unit (0 if none).
    pub u: usize,
    /// Lowest position carrying a full unit (0 if none).
    pub v: usize,
    /// Order of the objective (number of smallest products summed).
    pub kappa: usize,
}

/// Result of [`solve_v`]: the optimal value, its shape parameters, and the
/// minimal-norm maximizer in ordered-position coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionV {
    /// Optimal sum of the kappa smallest products c_p * L_p.
    pub value: f64,
    pub x: f64,
    pub y: f64,
    pub u: usize,
    pub v: usize,
    pub kappa: usize,
    /// Frequencies by 0-based ordered position (same order as the input set).
    pub c_prime: Vec<f64>,
}

impl SolutionV {
    pub fn params(&self) -> VParams {
        VParams {
            x: self.x,
            y: self.y,
            u: self.u,
            v: self.v,
            kappa: self.kappa,
        }
    }
}

/// Result of [`solve_w`]: the balanced value, the budget split, and the two
/// minimal-norm maximizers in their respective ordered-position coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionW {
    /// Common value V(kappa1, K1*, L1) = ratio * V(kappa2, K2*, L2).
    pub value: f64,
    pub k1_star: f64,
    pub k2_star: f64,
    /// Maximizer over the first rate set.
    pub c_hat: Vec<f64>,
    /// Maximizer over the second rate set.
    pub c_check: Vec<f64>,
    /// Shape parameters of the first-block solution.
    pub hat: VParams,
    /// Shape parameters of the second-block solution.
    pub check: VParams,
}

/// Precomputed 1-based accessors over an ascending rate list, with the zero
/// sentinel L_0 = 0 and exact suffix sums of reciprocals.
struct Rates<'a> {
    vals: &'a [f64],
    /// inv_suffix[i] = sum over positions j in {i, .., m} of 1 / L_j.
    inv_suffix: Vec<f64>,
}

impl<'a> Rates<'a> {
    fn new(vals: &'a [f64]) -> Self {
        let m = vals.len();
        let mut inv_suffix = vec![0.0; m + 2];
        for i in (1..=m).rev() {
            inv_suffix[i] = inv_suffix[i + 1] + 1.0 / vals[i - 1];
        }
        Rates { vals, inv_suffix }
    }

    fn m(&self) -> usize {
        self.vals.len()
    }

    /// L_i, with L_0 = 0.
    fn at(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.vals[i - 1]
        }
    }

    /// Sum over positions j in {i, .., m} of 1 / L_j (zero for i = m + 1).
    fn inv_from(&self, i: usize) -> f64 {
        self.inv_suffix[i]
    }

    /// Harmonic mean of the tail {L_i, .., L_m}; +infinity for i = m + 1.
    fn tilde(&self, i: usize) -> f64 {
        if i == self.m() + 1 {
            f64::INFINITY
        } else {
            (self.m() - i + 1) as f64 / self.inv_from(i)
        }
    }

    /// Marginal objective rate of the shared tail once positions up to u are
    /// saturated: (kappa - u) / (m - u) * tilde(u + 1). Zero at u = kappa,
    /// where the tail no longer contributes to the objective.
    fn tail_rate(&self, kappa: usize, u: usize) -> f64 {
        if u == kappa {
            0.0
        } else {
            ((kappa - u) as f64 / (self.m() - u) as f64) * self.tilde(u + 1)
        }
    }
}

/// Harmonic mean of the tail starting at 1-based position `i`:
/// (len - i + 1) / sum_{p = i..len} (1 / L_p), and +infinity for i = len + 1
/// (empty tail). Errors for i = 0 or i > len + 1.
pub fn harmonic_tail(l_set: &OrderedKlSet, i: usize) -> Result<f64> {
    let m = l_set.len();
    if i < 1 || i > m + 1 {
        return Err(Error::OutOfRange(format!(
            "harmonic tail position must be in 1..={}, got {i}",
            m + 1
        )));
    }
    Ok(Rates::new(l_set.values()).tilde(i))
}

fn validate_kappa_budget(kappa: usize, budget: f64, m: usize) -> Result<()> {
    if kappa < 1 || kappa > m {
        return Err(Error::OutOfRange(format!(
            "order kappa must be in 1..={m}, got {kappa}"
        )));
    }
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "budget must be finite and positive, got {budget}"
        )));
    }
    Ok(())
}

/// Maximize the sum of the `kappa` smallest products c_p * L_p over frequency
/// vectors c in [0, 1]^len with sum(c) <= budget.
///
/// Runs in O(len) time after an O(len) prefix pass. The returned maximizer is
/// the one of minimal Euclidean norm; its positions are those of `l_set`
/// (ascending rates), not source ids.
pub fn solve_v(kappa: usize, budget: f64, l_set: &OrderedKlSet) -> Result<SolutionV> {
    let m = l_set.len();
    validate_kappa_budget(kappa, budget, m)?;
    let r = Rates::new(l_set.values());

    // Saturated regime: enough budget for a full unit on each of the kappa
    // smallest rates plus a tail held at the product level L_kappa. Beyond
    // this point additional budget cannot raise the objective.
    let saturation_budget = kappa as f64 + r.at(kappa) * r.inv_from(kappa + 1);
    if budget >= saturation_budget - TOL_TIE {
        let mut c = vec![0.0; m];
        for (i, slot) in c.iter_mut().enumerate() {
            let pos = i + 1;
            *slot = if pos <= kappa {
                1.0
            } else {
                r.at(kappa) / r.at(pos)
            };
        }
        let value = (1..=kappa).map(|i| r.at(i)).sum();
        return finish(kappa, budget, &r, value, 0.0, 0.0, kappa, 1, c);
    }

    // Pivot u*: the highest u < kappa whose position rate L_u is still no
    // better than the shared-tail marginal rate. u = 0 always qualifies.
    let mut u_star = 0;
    for u in (1..kappa).rev() {
        if r.tail_rate(kappa, u) >= r.at(u) - TOL_TIE {
            u_star = u;
            break;
        }
    }

    // Spread regime: the whole budget sits in a shared tail above u*.
    let spread_budget = r.at(u_star + 1) * r.inv_from(u_star + 1);
    if budget < spread_budget - TOL_TIE {
        let u = u_star;
        let y = budget / (m - u) as f64;
        let level = budget / r.inv_from(u + 1);
        let mut c = vec![0.0; m];
        for pos in (u + 1)..=m {
            c[pos - 1] = level / r.at(pos);
        }
        let value = (kappa - u) as f64 * level;
        return finish(kappa, budget, &r, value, 0.0, y, u, 0, c);
    }

    // Water-filling between the two regimes. State: positions v..u hold a
    // full unit, x is a fractional unit on position v - 1, the positions
    // above u share z total frequency at a common product level. The budget
    // identity (u - v + 1) + x + z = spent holds throughout, which also rules
    // out ever reaching u = kappa and v = 1 with budget left (that state
    // spends saturation_budget, already excluded above).
    let mut x = 0.0_f64;
    let mut u = u_star + 1;
    let mut v = u_star + 1;
    let mut z = r.at(u_star + 1) * r.inv_from(u_star + 2);
    let mut kk = budget - spread_budget;
    let mut rounds = 0usize;
    while kk > TOL_EXHAUST {
        rounds += 1;
        if rounds > 4 * (m + 2) {
            return Err(Error::SolverInconsistency(
                "water-filling failed to terminate".into(),
            ));
        }
        // Raise position v - 1 toward a full unit when its rate beats the
        // shared-tail marginal rate (always true once u = kappa).
        if u == kappa || r.at(v - 1) >= r.tail_rate(kappa, u) - TOL_TIE {
            if v == 1 {
                // Reachable only through floating-point dust: everything the
                // objective can use is already saturated.
                debug_assert!(kk <= 1e-9, "unit step with v = 1 and budget {kk}");
                kk = 0.0;
            } else if kk >= 1.0 {
                v -= 1;
                kk -= 1.0;
            } else {
                x = kk;
                kk = 0.0;
            }
        }
        // Deepen the shared tail toward the rate of position u + 1, absorbing
        // that position into the saturated block when the level reaches it.
        // Evaluated with the v just updated above, and also when the budget
        // was exhausted, so a tail sitting exactly at a position rate is
        // normalized into the saturated block before reporting.
        if v == 1 || r.at(v - 1) < r.tail_rate(kappa, u) - TOL_TIE {
            debug_assert!(u < kappa, "tail step with u = kappa");
            let cap = r.at(u + 1) * r.inv_from(u + 1);
            let grab = kk.min((cap - z).max(0.0));
            z += grab;
            kk -= grab;
            if z >= cap - TOL_TIE {
                z = r.at(u + 1) * r.inv_from(u + 2);
                u += 1;
            }
        }
    }

    let mut c = vec![0.0; m];
    let y;
    if u == kappa {
        // The tail no longer enters the objective; it sits at product level
        // L_kappa exactly (z was set by the last absorption step).
        y = 0.0;
        debug_assert!((z - r.at(kappa) * r.inv_from(kappa + 1)).abs() <= 1e-9 * (1.0 + z));
        for pos in (kappa + 1)..=m {
            c[pos - 1] = r.at(kappa) / r.at(pos);
        }
    } else {
        y = z / (m - u) as f64;
        let level = z / r.inv_from(u + 1);
        for pos in (u + 1)..=m {
            c[pos - 1] = level / r.at(pos);
        }
    }
    for pos in v..=u {
        c[pos - 1] = 1.0;
    }
    if v >= 2 {
        c[v - 2] = x;
    }
    let tail_term = if u == kappa {
        0.0
    } else {
        (kappa - u) as f64 * y * r.tilde(u + 1)
    };
    let value = x * r.at(v - 1) + (v..=u).map(|i| r.at(i)).sum::<f64>() + tail_term;
    finish(kappa, budget, &r, value, x, y, u, v, c)
}

/// Assemble a [`SolutionV`] and check its defining identities in debug builds.
#[allow(clippy::too_many_arguments)]
fn finish(
    kappa: usize,
    budget: f64,
    r: &Rates<'_>,
    value: f64,
    x: f64,
    y: f64,
    u: usize,
    v: usize,
    c_prime: Vec<f64>,
) -> Result<SolutionV> {
    debug_assert!((0.0..1.0 + TOL_TIE).contains(&x));
    debug_assert!((0.0..1.0 + TOL_TIE).contains(&y));
    let spent: f64 = c_prime.iter().sum();
    debug_assert!(
        spent <= budget + 1e-9 * (1.0 + budget),
        "allocation spends {spent} of budget {budget}"
    );
    debug_assert!(c_prime.iter().all(|&ci| (-TOL_TIE..=1.0 + TOL_TIE).contains(&ci)));
    #[cfg(debug_assertions)]
    {
        let mut products: Vec<f64> = c_prime
            .iter()
            .enumerate()
            .map(|(p, &ci)| ci * r.at(p + 1))
            .collect();
        products.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let recomputed: f64 = products[..kappa].iter().sum();
        debug_assert!(
            (recomputed - value).abs() <= 1e-9 * (1.0 + value.abs()),
            "objective recomputation {recomputed} != reported {value}"
        );
    }
    Ok(SolutionV {
        value,
        x,
        y,
        u,
        v,
        kappa,
        c_prime,
    })
}

/// Exhaustive grid-search value of the same max-min objective as [`solve_v`],
/// over frequency vectors whose entries are multiples of (approximately)
/// `grid_step`, spending at most `floor(budget / grid_step)` grid units.
///
/// Independent of the water-filling solver by construction: plain
/// depth-first search over grid levels with an optimistic pruning bound and a
/// greedy unit-by-unit starting solution. Exponential in `l_set.len()`;
/// intended as a correctness oracle on small sets.
pub fn brute_force_v(
    kappa: usize,
    budget: f64,
    l_set: &OrderedKlSet,
    grid_step: f64,
) -> Result<f64> {
    let m = l_set.len();
    validate_kappa_budget(kappa, budget, m)?;
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::OutOfRange(format!(
            "grid step must be in (0, 0.5], got {grid_step}"
        )));
    }
    let g = (1.0 / grid_step).round() as u64;
    let total_units = (((budget * g as f64) + 1e-9).floor() as u64).min(m as u64 * g);

    // Largest rates first: fixing influential coordinates early makes the
    // optimistic bound bite sooner.
    let mut vals: Vec<f64> = l_set.values().to_vec();
    vals.reverse();

    // With kappa = m the objective is the plain sum, so the grid optimum is
    // the greedy fill of the largest rates.
    if kappa == m {
        let mut rem = total_units;
        let mut value = 0.0;
        for &l in &vals {
            let take = rem.min(g);
            value += take as f64 / g as f64 * l;
            rem -= take;
        }
        return Ok(value);
    }

    let objective = |products: &[f64]| -> f64 {
        let mut sorted = products.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted[..kappa].iter().sum()
    };
    let products_of = |levels: &[u64]| -> Vec<f64> {
        levels
            .iter()
            .zip(&vals)
            .map(|(&lv, &l)| lv as f64 / g as f64 * l)
            .collect()
    };

    // Two cheap feasible starting points; both only seed the search and
    // cannot overstate the optimum.
    //
    // (a) Unit-by-unit greedy: each grid unit goes wherever it raises the
    // objective most (first coordinate on ties).
    let mut levels = vec![0u64; m];
    for _ in 0..total_units {
        let base = objective(&products_of(&levels));
        let mut best_gain = f64::NEG_INFINITY;
        let mut best_i = usize::MAX;
        for i in 0..m {
            if levels[i] >= g {
                continue;
            }
            levels[i] += 1;
            let gain = objective(&products_of(&levels)) - base;
            levels[i] -= 1;
            if gain > best_gain + TOL_TIE {
                best_gain = gain;
                best_i = i;
            }
        }
        if best_i == usize::MAX {
            break;
        }
        levels[best_i] += 1;
    }
    let mut best = objective(&products_of(&levels));

    // (b) Equal-product guesses: zero out the d smallest rates and hold the
    // rest at a common product level, rounded down to the grid.
    for d in 0..m {
        // vals is descending, so "d smallest" means the last d coordinates.
        let active = &vals[..m - d];
        let inv_sum: f64 = active.iter().map(|&l| 1.0 / l).sum();
        let mut level = total_units as f64 / g as f64 / inv_sum;
        level = level.min(active[m - d - 1]); // cap at c = 1 on the smallest active rate
        let mut trial = vec![0u64; m];
        let mut spent = 0u64;
        for i in 0..m - d {
            let units = (((level / vals[i]) * g as f64) + 1e-9).floor() as u64;
            trial[i] = units.min(g).min(total_units - spent);
            spent += trial[i];
        }
        best = best.max(objective(&products_of(&trial)));
    }

    // Seed the search with the optimum of a 5x coarser grid. Every coarse
    // allocation is representable on this grid (levels scale by an integer
    // and the coarse unit total never exceeds the fine one), so its value is
    // a valid lower bound that prunes most of the tree up front.
    if g % 5 == 0 && g >= 20 {
        best = best.max(brute_force_v(kappa, budget, l_set, grid_step * 5.0)?);
    }

    // Depth-first search over grid levels, largest rate first, pruning with
    // the smaller of two optimistic bounds: a pool bound where every
    // unassigned coordinate spends min(1, remaining budget) alone, and a
    // shared bound where the unassigned coordinates that end up among the
    // kappa smallest split the remaining budget between them.
    struct Dfs<'s> {
        vals: &'s [f64],
        g: u64,
        kappa: usize,
        best: f64,
        scratch: Vec<f64>,
    }
    impl Dfs<'_> {
        fn pool_bound(&mut self, assigned: &[f64], rem_units: u64) -> f64 {
            let cap = (rem_units as f64 / self.g as f64).min(1.0);
            self.scratch.clear();
            self.scratch.extend_from_slice(assigned);
            self.scratch
                .extend(self.vals[assigned.len()..].iter().map(|&l| cap * l));
            self.scratch.sort_by(|x, y| x.partial_cmp(y).unwrap());
            self.scratch[..self.kappa].iter().sum()
        }

        // If s of the kappa smallest are unassigned coordinates, their value
        // is at most the s largest free rates sharing the remaining budget,
        // and the other kappa - s must be the smallest assigned products.
        fn shared_bound(&mut self, assigned: &[f64], rem_units: u64) -> f64 {
            let b = rem_units as f64 / self.g as f64;
            let free = &self.vals[assigned.len()..];
            self.scratch.clear();
            self.scratch.extend_from_slice(assigned);
            self.scratch.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut shared = f64::NEG_INFINITY;
            let s_lo = self.kappa.saturating_sub(assigned.len());
            let s_hi = self.kappa.min(free.len());
            for s in s_lo..=s_hi {
                let fixed: f64 = self.scratch[..self.kappa - s].iter().sum();
                let mut left = b;
                let mut value = fixed;
                for &l in &free[..s] {
                    let take = left.min(1.0);
                    value += take * l;
                    left -= take;
                }
                shared = shared.max(value);
            }
            shared
        }

        fn leaf(&mut self, assigned: &[f64]) {
            self.scratch.clear();
            self.scratch.extend_from_slice(assigned);
            self.scratch.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let value: f64 = self.scratch[..self.kappa].iter().sum();
            if value > self.best {
                self.best = value;
            }
        }

        fn run(&mut self, assigned: &mut Vec<f64>, rem_units: u64) {
            let idx = assigned.len();
            if idx == self.vals.len() {
                self.leaf(assigned);
                return;
            }
            // The objective never decreases when any coordinate grows, so the
            // last coordinate always takes everything it can hold.
            if idx + 1 == self.vals.len() {
                let units = rem_units.min(self.g);
                assigned.push(units as f64 / self.g as f64 * self.vals[idx]);
                self.leaf(assigned);
                assigned.pop();
                return;
            }
            // By the same monotonicity, leaving more budget than the
            // remaining coordinates can absorb is dominated.
            let absorbable = (self.vals.len() - idx - 1) as u64 * self.g;
            let lo = rem_units.saturating_sub(absorbable);
            for units in (lo..=rem_units.min(self.g)).rev() {
                assigned.push(units as f64 / self.g as f64 * self.vals[idx]);
                let rem = rem_units - units;
                // The pool bound is cheap, so the shared bound only runs when
                // the pool bound fails to prune; it can then only save work.
                if self.pool_bound(assigned, rem) > self.best + TOL_TIE
                    && self.shared_bound(assigned, rem) > self.best + TOL_TIE
                {
                    self.run(assigned, rem);
                }
                assigned.pop();
            }
        }
    }
    let mut dfs = Dfs {
        vals: &vals,
        g,
        kappa,
        best,
        scratch: Vec::with_capacity(m),
    };
    dfs.run(&mut Vec::with_capacity(m), total_units);
    Ok(dfs.best)
}

/// Monotone-nondecreasing bisection: returns a point within [`TOL_BISECT`] of
/// a sign change of `f` on [lo, hi], assuming f(lo) <= 0 <= f(hi).
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= TOL_BISECT {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// V(kappa, k, l), extended by V = 0 at k <= 0 for use inside root brackets.
fn v_value(kappa: usize, k: f64, l_set: &OrderedKlSet) -> f64 {
    if k <= 0.0 {
        0.0
    } else {
        solve_v(kappa, k, l_set).expect("validated arguments").value
    }
}

/// Split `budget` across two max-min objectives so that the first equals
/// `ratio` times the second and the common value is maximal.
///
/// The split never exceeds the point where both objectives saturate, so
/// `k1_star + k2_star = min(budget, saturation total)`.
pub fn solve_w(
    kappa1: usize,
    kappa2: usize,
    budget: f64,
    l1: &OrderedKlSet,
    l2: &OrderedKlSet,
    ratio: f64,
) -> Result<SolutionW> {
    let m1 = l1.len();
    let m2 = l2.len();
    validate_kappa_budget(kappa1, budget, m1)?;
    validate_kappa_budget(kappa2, budget, m2)?;
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "ratio must be finite and positive, got {ratio}"
        )));
    }

    let r1 = Rates::new(l1.values());
    let r2 = Rates::new(l2.values());
    let sat1 = kappa1 as f64 + r1.at(kappa1) * r1.inv_from(kappa1 + 1);
    let sat2 = kappa2 as f64 + r2.at(kappa2) * r2.inv_from(kappa2 + 1);
    let v1_max = l1.sum_first(kappa1);
    let v2_max = ratio * l2.sum_first(kappa2);

    // Cap the usable budget where the smaller-valued block saturates: past
    // that point the balanced value cannot grow. Then split the capped budget
    // at the unique crossing of the two monotone value curves.
    let (k1_star, k2_star) = if v1_max <= v2_max {
        let k2r = bisect(|k2| ratio * v_value(kappa2, k2, l2) - v1_max, 0.0, sat2);
        let cap = (sat1 + k2r).min(budget);
        let k1 = bisect(
            |k1| v_value(kappa1, k1, l1) - ratio * v_value(kappa2, cap - k1, l2),
            0.0,
            cap,
        );
        (k1, cap - k1)
    } else {
        let k1r = bisect(|k1| v_value(kappa1, k1, l1) - v2_max, 0.0, sat1);
        let cap = (k1r + sat2).min(budget);
        let k2 = bisect(
            |k2| ratio * v_value(kappa2, k2, l2) - v_value(kappa1, cap - k2, l1),
            0.0,
            cap,
        );
        (cap - k2, k2)
    };

    let hat = solve_v(kappa1, k1_star, l1)?;
    let check = solve_v(kappa2, k2_star, l2)?;
    debug_assert!(
        (hat.value - ratio * check.value).abs() <= 1e-9 * (1.0 + hat.value.abs()),
        "unbalanced split: {} vs {}",
        hat.value,
        ratio * check.value
    );
    Ok(SolutionW {
        value: hat.value,
        k1_star,
        k2_star,
        c_hat: hat.c_prime.clone(),
        c_check: check.c_prime.clone(),
        hat: hat.params(),
        check: check.params(),
    })
}
