//! Acceptance gate: one criterion per numbered check, one printed pass/fail
//! line each, and a final assertion that every criterion passed. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines on success;
//! on failure they are shown in the captured output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use seqanom::allocation::TargetCache;
use seqanom::maxmin::{brute_force_v, harmonic_tail, solve_v, solve_w, SolutionV};
use seqanom::model::{build_f_set, OrderedKlSet, SourceModel, SourceSet};
use seqanom::sampler::{draw_subset, sampling_probs, SamplerConfig};
use seqanom::sim::{
    benchmark_config, benchmark_table_rows, calibrate, monte_carlo, reproduce, CalibrationMode,
    Engine, McSummary, Metric, ReproducePreset, SamplerChoice,
};
use std::fmt::Write as _;
use std::time::Instant;

const BENCH_RUNS: u64 = 10_000;

fn rates_set(rates: &[f64]) -> OrderedKlSet {
    OrderedKlSet::new(rates.iter().copied().enumerate().collect()).unwrap()
}

fn bench_models() -> Vec<SourceModel> {
    benchmark_config(Metric::Misclass { k: 1 })
        .mus
        .iter()
        .enumerate()
        .map(|(i, &mu)| SourceModel::gaussian_unit_variance(i, mu).unwrap())
        .collect()
}

fn bench_a() -> SourceSet {
    SourceSet::from_ids(0..5)
}

/// Check that a solution has exactly the water-filling shape its parameters
/// (x, y, u, v) describe: full units on v..=u, the fraction x on v - 1,
/// zeros below, and an equalized product level on the shared tail above u.
fn structure_errors(sol: &SolutionV, rates: &[f64], budget: f64) -> Vec<String> {
    let m = rates.len();
    let c = &sol.c_prime;
    let mut errs = Vec::new();
    let (x, y, u, v) = (sol.x, sol.y, sol.u, sol.v);
    if v >= 1 {
        for p in v..=u {
            if c[p - 1] != 1.0 {
                errs.push(format!("position {p} should be a full unit, got {}", c[p - 1]));
            }
        }
        if v >= 2 {
            if c[v - 2] != x {
                errs.push(format!("position {} should carry x = {x}, got {}", v - 1, c[v - 2]));
            }
            for p in 1..v - 1 {
                if c[p - 1] != 0.0 {
                    errs.push(format!("position {p} below the block should be 0, got {}", c[p - 1]));
                }
            }
        }
    } else {
        for p in 1..=u {
            if c[p - 1] != 0.0 {
                errs.push(format!("spread position {p} should be 0, got {}", c[p - 1]));
            }
        }
    }
    if u < m {
        let level = c[u] * rates[u];
        for p in (u + 1)..=m {
            let product = c[p - 1] * rates[p - 1];
            if (product - level).abs() > 1e-12 * (1.0 + level.abs()) {
                errs.push(format!(
                    "tail product at position {p} is {product}, level is {level}"
                ));
            }
        }
        if u == sol.kappa {
            if (level - rates[sol.kappa - 1]).abs() > 1e-12 * (1.0 + level.abs()) {
                errs.push(format!(
                    "saturated tail level {level} != order-boundary rate {}",
                    rates[sol.kappa - 1]
                ));
            }
        } else {
            let tail_sum: f64 = c[u..].iter().sum();
            if (y * (m - u) as f64 - tail_sum).abs() > 1e-12 * (1.0 + tail_sum.abs()) {
                errs.push(format!(
                    "tail parameter y = {y} does not integrate to the tail mass {tail_sum}"
                ));
            }
        }
    }
    let spent: f64 = c.iter().sum();
    if spent > budget + 1e-11 * (1.0 + budget) {
        errs.push(format!("allocation spends {spent} of budget {budget}"));
    }
    errs
}

fn criterion_01() -> seqanom::Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    struct Inst {
        rates: Vec<f64>,
        kappa: usize,
        budget: f64,
    }
    let instances: Vec<Inst> = (0..200)
        .map(|_| {
            let m = rng.random_range(1..=6usize);
            let rates: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..=2.0)).collect();
            Inst {
                kappa: rng.random_range(1..=m),
                budget: (rng.random::<f64>() * m as f64).max(1e-3),
                rates,
            }
        })
        .collect();
    let checked: Vec<(f64, f64, Vec<String>)> = instances
        .par_iter()
        .map(|inst| {
            let set = rates_set(&inst.rates);
            let sol = solve_v(inst.kappa, inst.budget, &set).unwrap();
            let oracle = brute_force_v(inst.kappa, inst.budget, &set, 0.01).unwrap();
            let max_rate = inst.rates.iter().cloned().fold(f64::MIN, f64::max);
            let tol = 2.0 * 0.01 * max_rate;
            let mut errs = structure_errors(&sol, set.values(), inst.budget);
            if oracle > sol.value + 1e-9 {
                errs.push(format!("grid value {oracle} exceeds solver value {}", sol.value));
            }
            ((sol.value - oracle).abs(), tol, errs)
        })
        .collect();
    let mut worst_ratio = 0.0f64;
    let mut failures = 0usize;
    let mut first_err = String::new();
    for (dev, tol, errs) in &checked {
        worst_ratio = worst_ratio.max(dev / tol);
        if dev > tol || !errs.is_empty() {
            failures += 1;
            if first_err.is_empty() {
                first_err = if *dev > *tol {
                    format!("value deviation {dev} > {tol}")
                } else {
                    errs[0].clone()
                };
            }
        }
    }
    let pass = failures == 0;
    let detail = if pass {
        format!(
            "200 instances: solver matches grid oracle (worst deviation at {:.0}% of tolerance), \
             shape and equalization identities exact",
            worst_ratio * 100.0
        )
    } else {
        format!("{failures} of 200 instances failed; first: {first_err}")
    };
    Ok((pass, detail))
}

fn criterion_02() -> seqanom::Result<(bool, String)> {
    let models = bench_models();
    let f = build_f_set(&models, bench_a())?;
    let budget = 5.0;
    let m = f.len() as f64;
    let f1 = harmonic_tail(&f, 1)?;
    let f4 = harmonic_tail(&f, 4)?;
    let mut worst = 0.0f64;
    for k in 1..=10usize {
        let expected = match k {
            1..=5 => k as f64 * budget * f1 / m,
            6..=8 => (k as f64 - 3.0) * budget * f4 / (m - 3.0),
            9 => f.values()[5..9].iter().sum(),
            _ => f.values()[5..10].iter().sum(),
        };
        let got = solve_v(k, budget, &f)?.value;
        worst = worst.max((got - expected).abs());
    }
    let pass = worst <= 1e-12;
    Ok((
        pass,
        format!("piecewise closed form vs solver over k in [1,10]: max |diff| = {worst:.2e} (tol 1e-12)"),
    ))
}

fn criterion_03() -> seqanom::Result<(bool, String)> {
    // Reference two-decimal rows: (k, l_A, x1, x2, y1, y2).
    let expected: [(usize, usize, Option<f64>, Option<f64>, Option<f64>, Option<f64>); 5] = [
        (1, 0, None, None, Some(0.69), Some(0.30)),
        (2, 0, None, None, Some(0.69), Some(0.30)),
        (3, 1, None, None, Some(0.66), Some(0.46)),
        (4, 1, Some(0.61), None, None, Some(0.53)),
        (5, 0, Some(0.61), Some(0.39), None, None),
    ];
    let rows = benchmark_table_rows()?;
    let cell = |got: Option<f64>, want: Option<f64>, name: &str, k: usize, errs: &mut Vec<String>| {
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                if (g - w).abs() > 0.01 + 1e-12 {
                    errs.push(format!("k={k} {name}: {g:.4} vs reference {w}"));
                }
            }
            (Some(g), None) => errs.push(format!("k={k} {name}: {g:.4} where the reference has a dash")),
            (None, Some(w)) => errs.push(format!("k={k} {name}: dash where the reference has {w}")),
        }
    };
    let mut errs = Vec::new();
    for (row, &(k, l_a, x1, x2, y1, y2)) in rows.iter().zip(&expected) {
        assert_eq!(row.k, k);
        if row.l_a != l_a {
            errs.push(format!("k={k} l_A: {} vs reference {l_a}", row.l_a));
        }
        cell(row.x1, x1, "x1", k, &mut errs);
        cell(row.x2, x2, "x2", k, &mut errs);
        cell(row.y1, y1, "y1", k, &mut errs);
        cell(row.y2, y2, "y2", k, &mut errs);
    }
    let pass = errs.is_empty();
    let detail = if pass {
        "all 5 rows match the reference decomposition within 0.01 including dash pattern".into()
    } else {
        format!(
            "{} cell(s) differ from the reference table: {}",
            errs.len(),
            errs.join("; ")
        )
    };
    Ok((pass, detail))
}

fn criterion_04() -> seqanom::Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let mut worst_balance = 0.0f64;
    let mut worst_overspend = f64::MIN;
    let mut worst_symmetry = 0.0f64;
    for i in 0..125 {
        let symmetric = i >= 100;
        let m1 = rng.random_range(1..=6usize);
        let rates1: Vec<f64> = (0..m1).map(|_| rng.random_range(0.05..=2.0)).collect();
        let kappa1 = rng.random_range(1..=m1);
        let (m2, rates2, kappa2, ratio) = if symmetric {
            (m1, rates1.clone(), kappa1, 1.0)
        } else {
            let m2 = rng.random_range(1..=6usize);
            (
                m2,
                (0..m2).map(|_| rng.random_range(0.05..=2.0)).collect(),
                rng.random_range(1..=m2),
                rng.random_range(0.25..=4.0f64),
            )
        };
        let budget = (rng.random::<f64>() * (m1 + m2) as f64).max(1e-2);
        let l1 = rates_set(&rates1);
        let l2 = rates_set(&rates2);
        let sol = solve_w(kappa1, kappa2, budget, &l1, &l2, ratio)?;
        let v1 = solve_v(kappa1, sol.k1_star.max(1e-300), &l1)?.value;
        let v2 = solve_v(kappa2, sol.k2_star.max(1e-300), &l2)?.value;
        worst_balance = worst_balance.max((v1 - ratio * v2).abs());
        worst_overspend = worst_overspend.max(sol.k1_star + sol.k2_star - budget);
        if symmetric {
            worst_symmetry = worst_symmetry.max((sol.k1_star - sol.k2_star).abs());
        }
    }
    let pass = worst_balance <= 1e-9 && worst_overspend <= 1e-9 && worst_symmetry <= 1e-9;
    Ok((
        pass,
        format!(
            "100 general + 25 symmetric instances: max |V1 - r*V2| = {worst_balance:.2e}, \
             max budget overspend = {worst_overspend:.2e}, max symmetric split gap = \
             {worst_symmetry:.2e} (tol 1e-9)"
        ),
    ))
}

fn error_control_summary(metric: Metric, alpha: f64, probe: u64) -> seqanom::Result<McSummary> {
    let mut cfg = benchmark_config(metric);
    cfg.alpha = alpha;
    cfg.sampler = SamplerChoice::Forced;
    let engine = Engine::new(&cfg)?;
    monte_carlo(&engine, BENCH_RUNS, 11, probe)
}

fn criterion_05() -> seqanom::Result<(bool, String)> {
    let mut pass = true;
    let mut detail = String::new();
    for k in [1usize, 5] {
        let s = error_control_summary(Metric::Misclass { k }, 1e-2, k as u64)?;
        let e = &s.err_alpha;
        pass &= e.rate <= 1e-2;
        let _ = write!(
            detail,
            "k={k}: rate {:.4} (CP 95% CI [{:.4}, {:.4}]) vs alpha 0.01; ",
            e.rate, e.ci95.0, e.ci95.1
        );
    }
    Ok((pass, detail))
}

fn criterion_06() -> seqanom::Result<(bool, String)> {
    let mut pass = true;
    let mut detail = String::new();
    for k in [1usize, 3] {
        let s = error_control_summary(Metric::Familywise { k1: k, k2: k }, 1e-2, 10 + k as u64)?;
        let fp = &s.err_alpha;
        let fnr = s.err_beta.as_ref().expect("familywise");
        pass &= fp.rate <= 1e-2 && fnr.rate <= 1e-2;
        let _ = write!(
            detail,
            "k1=k2={k}: fp rate {:.4} (CI [{:.4}, {:.4}]), fn rate {:.4} (CI [{:.4}, {:.4}]) \
             vs 0.01; ",
            fp.rate, fp.ci95.0, fp.ci95.1, fnr.rate, fnr.ci95.0, fnr.ci95.1
        );
    }
    Ok((pass, detail))
}

/// Run both metric orders over the alpha grid with closed-form thresholds and
/// return (ratio, theta) per point, where theta is the optimality monitor
/// mean_T * difficulty / |log alpha| of the higher-order metric.
fn alpha_grid(
    of_interest: Metric,
    baseline: Metric,
    difficulty: f64,
    seed: u64,
) -> seqanom::Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    let mut probe = 0;
    for e in 1..=10 {
        let alpha = 10f64.powi(-e);
        let mut means = [0.0f64; 2];
        for (slot, metric) in [of_interest, baseline].into_iter().enumerate() {
            let mut cfg = benchmark_config(metric);
            cfg.alpha = alpha;
            let engine = Engine::new(&cfg)?;
            means[slot] = monte_carlo(&engine, BENCH_RUNS, seed, probe)?.mean_steps;
            probe += 1;
        }
        let theta = means[0] * difficulty / (e as f64 * std::f64::consts::LN_10);
        points.push((means[0] / means[1], theta));
    }
    Ok(points)
}

fn criterion_07() -> seqanom::Result<(bool, String)> {
    let points = alpha_grid(
        Metric::Misclass { k: 5 },
        Metric::Misclass { k: 1 },
        5.0 * 49.0 / 454.0,
        13,
    )?;
    let (ratio, theta) = points[9];
    let pass = (ratio - 0.2).abs() <= 0.05;
    let upticks = points
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 + 0.02)
        .count();
    Ok((
        pass,
        format!(
            "ratio at alpha=1e-10 is {ratio:.4} (target 0.2 +/- 0.05); optimality monitor \
             theta = {theta:.3} with {upticks} upticks > 0.02 across the grid"
        ),
    ))
}

fn criterion_08() -> seqanom::Result<(bool, String)> {
    let points = alpha_grid(
        Metric::Familywise { k1: 3, k2: 3 },
        Metric::Familywise { k1: 1, k2: 1 },
        147.0 / 445.0,
        29,
    )?;
    let (ratio, theta) = points[9];
    let pass = (ratio - 0.328).abs() <= 0.05;
    Ok((
        pass,
        format!(
            "ratio at alpha=beta=1e-10 is {ratio:.4} (target 0.328 +/- 0.05); optimality \
             monitor theta = {theta:.3}"
        ),
    ))
}

fn criterion_09() -> seqanom::Result<(bool, String)> {
    let ks = [1usize, 2, 3, 4, 5, 8, 9, 10];
    // A wide calibration acceptance band would bias the threshold (and hence
    // the mean) by up to the band width in log scale, so calibrate tightly.
    let cal_runs = 40_000;
    let mut means = Vec::new();
    for &k in &ks {
        let cfg = benchmark_config(Metric::Misclass { k });
        let engine = Engine::new(&cfg)?;
        let cal = calibrate(&engine, cal_runs, 17, CalibrationMode::Independent, 0.025)?;
        means.push(cal.summary.mean_steps);
    }
    let base = means[0];
    let mut pass = true;
    let mut detail = String::from("calibrated ratios: ");
    for (i, &k) in ks.iter().enumerate() {
        let ratio = means[i] / base;
        let bound = if k <= 5 {
            1.0 / k as f64 + 0.05
        } else {
            1.0 / k as f64 - 0.02
        };
        let ok = if k <= 5 { ratio <= bound } else { ratio < bound };
        pass &= ok;
        let _ = write!(
            detail,
            "k={k}: {ratio:.3} (bound {bound:.3}{}); ",
            if ok { "" } else { ", exceeded" }
        );
    }
    Ok((pass, detail))
}

fn criterion_10() -> seqanom::Result<(bool, String)> {
    let models = bench_models();
    let cache = TargetCache::build_familywise(&models, 3, 3, 5.0, 1.0)?;
    let cfg = SamplerConfig::forced(5.0, 0.2, 0.005);
    cfg.validate(&cache)?;
    let probs = sampling_probs(1, bench_a(), &cache, &cfg);
    let n = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC10);
    let mut hits = vec![0u64; probs.len()];
    let mut max_len = 0usize;
    for _ in 0..n {
        let s = draw_subset(&probs, 5, false, &mut rng)?;
        max_len = max_len.max(s.len());
        for i in s.iter() {
            hits[i] += 1;
        }
    }
    let mut worst_z = 0.0f64;
    let mut marginals_ok = true;
    for (i, &p) in probs.iter().enumerate() {
        let freq = hits[i] as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        if se == 0.0 {
            marginals_ok &= freq == p;
        } else {
            let z = (freq - p).abs() / se;
            worst_z = worst_z.max(z);
            marginals_ok &= z <= 4.0;
        }
    }
    let budget_ok = max_len <= 5;

    // Top-up must pin the subset size at the budget floor, both on the
    // benchmark vector (which already totals 5) and on a scaled-down vector
    // where the lift is actually exercised.
    let sub: Vec<f64> = probs.iter().map(|p| 0.6 * p).collect();
    let sub_total: f64 = sub.iter().sum();
    let mut topped_ok = true;
    for _ in 0..10_000 {
        topped_ok &= draw_subset(&probs, 5, true, &mut rng)?.len() == 5;
        topped_ok &= draw_subset(&sub, 5, true, &mut rng)?.len() == 5;
    }
    let pass = marginals_ok && budget_ok && topped_ok;
    Ok((
        pass,
        format!(
            "marginals over 1e5 draws: worst |z| = {worst_z:.2} (limit 4); max subset size \
             {max_len} (cap 5); top-up drew exactly 5 sources in all 1e4 draws on the \
             benchmark vector and on one totaling {sub_total:.3}: {topped_ok}"
        ),
    ))
}

fn criterion_11() -> seqanom::Result<(bool, String)> {
    let mut cfg = benchmark_config(Metric::Familywise { k1: 3, k2: 3 });
    // The conceded source (target frequency zero) is only ever seen through
    // the exploration floor b_n = c_p * n^(-delta), so give the floor enough
    // mass that its likelihood ratio is sign-stable well before instant 2000.
    // Both knobs stay within the admissible range for this target cache.
    cfg.c_p = 0.15;
    cfg.delta = 0.1;
    let engine = Engine::new(&cfg)?;
    let traces = 1_000u64;
    let consistent: u64 = (0..traces)
        .into_par_iter()
        .map(|t| {
            let mut rng = Engine::trial_rng(19, 777, t);
            match engine.consistency_probe(10_000, &mut rng) {
                Ok(Some(time)) if time <= 2_000 => 1u64,
                _ => 0u64,
            }
        })
        .sum();
    let frac = consistent as f64 / traces as f64;
    Ok((
        frac > 0.99,
        format!(
            "{consistent} of {traces} forced-exploration traces (c_p=0.15, delta=0.1) had the \
             estimate settled on the true subset from instant 2000 on (need > 0.99)"
        ),
    ))
}

fn criterion_12() -> seqanom::Result<(bool, String)> {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut buf = Vec::new();
        reproduce(ReproducePreset::Table1, 1, 7, &mut buf)?;
        reproduce(ReproducePreset::Eq80, 1, 7, &mut buf)?;
        let cfg = benchmark_config(Metric::Misclass { k: 1 });
        let engine = Engine::new(&cfg)?;
        let summary = monte_carlo(&engine, 500, 23, 0)?;
        seqanom::sim::write_summary_csv(&mut buf, &summary)?;
        runs.push(buf);
    }
    let pass = runs[0] == runs[1];
    Ok((
        pass,
        format!(
            "repeated CSV emission over {} bytes is byte-identical: {pass}; \
             subcommand-level reruns are checked in the seqanom-cli integration tests",
            runs[0].len()
        ),
    ))
}

#[test]
fn acceptance_gate() {
    let criteria: Vec<(&str, fn() -> seqanom::Result<(bool, String)>)> = vec![
        ("01 solver-oracle equivalence", criterion_01),
        ("02 misclassification difficulty closed form", criterion_02),
        ("03 familywise decomposition table", criterion_03),
        ("04 two-block balance self-consistency", criterion_04),
        ("05 error control, misclassification", criterion_05),
        ("06 error control, familywise", criterion_06),
        ("07 stopping-time ratio asymptote, misclassification", criterion_07),
        ("08 stopping-time ratio asymptote, familywise", criterion_08),
        ("09 calibrated stopping-time trend", criterion_09),
        ("10 sampler marginals and budget cap", criterion_10),
        ("11 estimate consistency under forced exploration", criterion_11),
        ("12 deterministic CSV emission", criterion_12),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {name}: {} - {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(name);
        }
    }
    assert!(
        failed.is_empty(),
        "acceptance criteria failed: {failed:?} (see the printed lines above for details)"
    );
}
