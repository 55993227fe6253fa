//! Property checks shared by the `properties` and `acceptance` test targets.
//!
//! Each check panics on the first counterexample. Runners use a fixed RNG so
//! failures reproduce.

#![allow(dead_code)]

use hetex::bootstrap::{bootstrap_hill, bootstrap_quasi_tail_copula, bootstrap_scedasis_curve, PreparedSeries};
use hetex::dgp::{simulate_dgp, DgpSpec};
use hetex::hypothesis::{
    run_tests, test_h10_asymptotic, test_h40_asymptotic, BootstrapSettings, Hypothesis, Method, SampleAnalysis,
    SplitSample,
};
use hetex::reference::{clayton_amh_mixture, TailCopulaModel};
use hetex::sample::{count_joint_exceedances, floor_index, order_statistic, tail_threshold};
use hetex::{
    estimate_integrated_scedasis, estimate_quasi_tail_copula, hill, BivariateSample, StepFunction, TailConfig,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub type Check = (&'static str, fn());

pub const ALL: &[Check] = &[
    ("threshold leaves exactly k exceedances", threshold_counts),
    ("order statistics match a full sort", order_statistics_match_sort),
    ("joint exceedance counts: oracle, monotone, additive", joint_exceedances),
    ("scedasis estimate: oracle, monotone, endpoints", scedasis_curve),
    (
        "quasi-tail copula: oracle, additive, monotone, bounded",
        quasi_tail_copula,
    ),
    ("quasi-tail copula marginal consistency", marginal_consistency),
    ("Hill estimator matches textbook formula", hill_textbook),
    ("Hill scale invariance", hill_scale_invariance),
    ("unit multipliers reproduce plain estimators", unit_multiplier_identity),
    ("multiplier scale invariance", multiplier_scale_invariance),
    (
        "built-in tail copulas: bounds, 2-increasing, homogeneous",
        tail_copula_properties,
    ),
    ("Clayton/AMH mixture tail limit at rate 1/t", mixture_rate),
    ("jump-point suprema equal dense-grid suprema", jump_point_suprema),
    ("decision regions are nested in alpha", nested_decisions),
    ("simulation and bootstrap tests are reproducible", determinism),
];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>)
where
    S::Value: std::fmt::Debug,
{
    if let Err(e) = runner(cases).run(&strategy, test) {
        panic!("{e}");
    }
}

fn has_duplicates(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

fn distinct(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1000.0, n).prop_filter("distinct values", |v| !has_duplicates(v))
}

/// Distinct positive margins with orders `1 <= k1, k2 < n/2` and `k <= min(k1, k2)`.
fn sample_and_config(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize, usize, usize)> {
    n.prop_flat_map(|n| {
        (distinct(n..n + 1), distinct(n..n + 1), 1..n / 2, 1..n / 2).prop_flat_map(|(xs, ys, k1, k2)| {
            let m = k1.min(k2);
            (Just(xs), Just(ys), 1..=m, Just(k1), Just(k2))
        })
    })
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn brute_floor(n: usize, z: f64) -> usize {
    (0..=n).filter(|&i| i as f64 / n as f64 <= z).max().unwrap_or(0)
}

/// `X_{n-m,n}` by full sort.
fn brute_threshold(v: &[f64], m: usize) -> f64 {
    sorted(v)[v.len() - m - 1]
}

fn brute_c(v: &[f64], k: usize, z: f64) -> f64 {
    let t = brute_threshold(v, k);
    let upto = brute_floor(v.len(), z);
    v[..upto].iter().filter(|x| **x > t).count() as f64 / k as f64
}

#[allow(clippy::too_many_arguments)]
fn brute_r(xs: &[f64], ys: &[f64], k: usize, k1: usize, k2: usize, x: f64, y: f64, z1: f64, z2: f64) -> f64 {
    let mx = (k1 as f64 * x).ceil() as usize;
    let my = (k2 as f64 * y).ceil() as usize;
    let tx = if mx == 0 {
        f64::INFINITY
    } else {
        brute_threshold(xs, mx)
    };
    let ty = if my == 0 {
        f64::INFINITY
    } else {
        brute_threshold(ys, my)
    };
    let (lo, hi) = (brute_floor(xs.len(), z1), brute_floor(xs.len(), z2));
    (lo..hi).filter(|&i| xs[i] > tx && ys[i] > ty).count() as f64 / k as f64
}

fn textbook_hill(v: &[f64], k: usize) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let base = s[k].ln();
    s[..k].iter().map(|x| x.ln() - base).sum::<f64>() / k as f64
}

pub fn threshold_counts() {
    run(64, distinct(2..50), |v| {
        for k in 1..v.len() {
            let t = tail_threshold(&v, k).unwrap();
            prop_assert_eq!(v.iter().filter(|x| **x > t).count(), k);
        }
        Ok(())
    });
}

pub fn order_statistics_match_sort() {
    run(64, prop::collection::vec(-50.0f64..50.0, 1..50), |v| {
        let s = sorted(&v);
        for r in 1..=v.len() {
            prop_assert_eq!(order_statistic(&v, r).unwrap(), s[r - 1]);
        }
        Ok(())
    });
}

pub fn joint_exceedances() {
    run(64, sample_and_config(4..50), |(xs, ys, _, _, _)| {
        let n = xs.len();
        let s = BivariateSample::new(xs.clone(), ys.clone()).unwrap();
        let sx = sorted(&xs);
        let sy = sorted(&ys);
        for a in (0..n).step_by(3) {
            for b in (0..n).step_by(5) {
                let (tx, ty) = (sx[a], sy[b]);
                let full = count_joint_exceedances(&s, tx, ty, 1, n);
                let brute = (0..n).filter(|&i| xs[i] > tx && ys[i] > ty).count();
                prop_assert_eq!(full, brute);
                if a + 1 < n {
                    prop_assert!(count_joint_exceedances(&s, sx[a + 1], ty, 1, n) <= full);
                }
                if b + 1 < n {
                    prop_assert!(count_joint_exceedances(&s, tx, sy[b + 1], 1, n) <= full);
                }
                for m in 0..=n {
                    let split =
                        count_joint_exceedances(&s, tx, ty, 1, m) + count_joint_exceedances(&s, tx, ty, m + 1, n);
                    prop_assert_eq!(split, full);
                }
            }
        }
        Ok(())
    });
}

pub fn scedasis_curve() {
    run(64, (distinct(3..50), 0.0f64..1.0), |(v, u)| {
        let n = v.len();
        let k = 1 + ((n - 2) as f64 * u) as usize;
        let c = estimate_integrated_scedasis(&v, k).unwrap();
        prop_assert_eq!(c.eval(0.0), 0.0);
        prop_assert_eq!(c.eval(1.0), 1.0);
        let mut prev = 0.0;
        for j in 0..=4 * n {
            let z = j as f64 / (4 * n) as f64;
            let val = c.eval(z);
            prop_assert!(val >= prev);
            prop_assert!((val - brute_c(&v, k, z)).abs() < 1e-15);
            prev = val;
        }
        for i in 0..=n {
            let z = i as f64 / n as f64;
            prop_assert!((c.eval(z) - brute_c(&v, k, z)).abs() < 1e-15);
        }
        Ok(())
    });
}

const ARGS: [f64; 6] = [0.0, 0.3, 0.5, 1.0, 1.5, 2.0];

pub fn quasi_tail_copula() {
    run(48, sample_and_config(6..50), |(xs, ys, k, k1, k2)| {
        let n = xs.len();
        let s = BivariateSample::new(xs.clone(), ys.clone()).unwrap();
        let config = TailConfig::new(k, k1, k2).unwrap();
        let admissible = |a: f64, kj: usize| ((kj as f64 * a).ceil() as usize) < n;
        let zs: Vec<f64> = (0..=8).map(|j| j as f64 / 8.0).collect();
        for &x in ARGS.iter().filter(|a| admissible(**a, k1)) {
            for &y in ARGS.iter().filter(|a| admissible(**a, k2)) {
                let r = |z1: f64, z2: f64| estimate_quasi_tail_copula(&s, config, x, y, z1, z2).unwrap();
                let whole = r(0.0, 1.0);
                let bound = ((k1 as f64 * x).ceil()).min((k2 as f64 * y).ceil()) / k as f64;
                prop_assert!(whole <= bound + 1e-15);
                for (a, &z1) in zs.iter().enumerate() {
                    for &z2 in &zs[a..] {
                        let v = r(z1, z2);
                        prop_assert_eq!(v, brute_r(&xs, &ys, k, k1, k2, x, y, z1, z2));
                        let mid = 0.5 * (z1 + z2);
                        prop_assert!((r(z1, mid) + r(mid, z2) - v).abs() < 1e-12);
                        if z2 < 1.0 {
                            prop_assert!(r(z1, (z2 + 0.1).min(1.0)) >= v);
                        }
                    }
                }
                if admissible(x + 0.5, k1) {
                    prop_assert!(estimate_quasi_tail_copula(&s, config, x + 0.5, y, 0.0, 1.0).unwrap() >= whole);
                }
                if admissible(y + 0.5, k2) {
                    prop_assert!(estimate_quasi_tail_copula(&s, config, x, y + 0.5, 0.0, 1.0).unwrap() >= whole);
                }
            }
        }
        Ok(())
    });
}

/// With `y` at its largest admissible value only the minimum of `ys` is
/// excluded, so `k R̂'(1, y; 0, z)` counts the `x` exceedances up to `z` minus
/// that one observation if it is itself an `x` exceedance.
pub fn marginal_consistency() {
    run(64, sample_and_config(6..50), |(xs, ys, k, k1, k2)| {
        let n = xs.len();
        let s = BivariateSample::new(xs.clone(), ys.clone()).unwrap();
        let config = TailConfig::new(k, k1, k2).unwrap();
        let c1 = estimate_integrated_scedasis(&xs, k1).unwrap();
        let y_max = ((n - 1) as f64 - 0.5) / k2 as f64;
        let argmin = (0..n).min_by(|&a, &b| ys[a].total_cmp(&ys[b])).unwrap();
        let tx = tail_threshold(&xs, k1).unwrap();
        for j in 0..=n {
            let z = j as f64 / n as f64;
            let lhs = estimate_quasi_tail_copula(&s, config, 1.0, y_max, 0.0, z).unwrap() * k as f64 / k1 as f64;
            let missing = (argmin < floor_index(n, z) && xs[argmin] > tx) as usize as f64 / k1 as f64;
            prop_assert!(
                (lhs + missing - c1.eval(z)).abs() < 1e-12,
                "z={} lhs={} c1={}",
                z,
                lhs,
                c1.eval(z)
            );
        }
        Ok(())
    });
}

pub fn hill_textbook() {
    run(64, (distinct(4..1000), 0.0f64..1.0), |(v, u)| {
        let k = 2 + ((v.len() - 3) as f64 * u) as usize;
        let g = hill(&v, k).unwrap().gamma_hat;
        let t = textbook_hill(&v, k);
        prop_assert!((g - t).abs() <= 1e-12 * t.abs().max(1.0), "{} vs {}", g, t);
        Ok(())
    });
}

pub fn hill_scale_invariance() {
    run(64, (distinct(4..300), 0.0f64..1.0, 1e-3f64..1e3), |(v, u, a)| {
        let k = 2 + ((v.len() - 3) as f64 * u) as usize;
        let g = hill(&v, k).unwrap().gamma_hat;
        let scaled: Vec<f64> = v.iter().map(|x| a * x).collect();
        let gs = hill(&scaled, k).unwrap().gamma_hat;
        prop_assert!((g - gs).abs() <= 1e-12 * g.abs().max(1.0), "{} vs {}", g, gs);
        Ok(())
    });
}

pub fn unit_multiplier_identity() {
    run(48, sample_and_config(6..50), |(xs, ys, k, k1, k2)| {
        let n = xs.len();
        let ones = vec![1.0; n];
        let series = PreparedSeries::new(&xs);
        prop_assert_eq!(
            series.threshold(&ones, k1).unwrap().to_bits(),
            tail_threshold(&xs, k1).unwrap().to_bits()
        );
        let plain = estimate_integrated_scedasis(&xs, k1).unwrap();
        let boot = bootstrap_scedasis_curve(&xs, k1, &ones).unwrap();
        for i in 0..=n {
            let z = i as f64 / n as f64;
            prop_assert!((boot.eval(z) - plain.eval(z)).abs() < 1e-12);
        }
        if k1 >= 2 {
            let g = hill(&xs, k1).unwrap().gamma_hat;
            let gb = bootstrap_hill(&xs, &plain, &ones, 0.0, 1.0).unwrap();
            prop_assert!((g - gb).abs() < 1e-12, "{} vs {}", g, gb);
        }
        let s = BivariateSample::new(xs, ys).unwrap();
        let config = TailConfig::new(k, k1, k2).unwrap();
        for (x, y, z) in [(1.0, 1.0, 1.0), (0.5, 1.0, 0.5), (1.0, 0.3, 0.75)] {
            let p = estimate_quasi_tail_copula(&s, config, x, y, 0.0, z).unwrap();
            let b = bootstrap_quasi_tail_copula(&s, config, &ones, x, y, 0.0, z).unwrap();
            prop_assert!((p - b).abs() < 1e-12);
        }
        Ok(())
    });
}

pub fn multiplier_scale_invariance() {
    let strategy = sample_and_config(6..50).prop_flat_map(|(xs, ys, k, k1, k2)| {
        let n = xs.len();
        (
            Just((xs, ys, k, k1, k2)),
            prop::collection::vec(0.05f64..4.0, n),
            0.01f64..100.0,
        )
    });
    run(48, strategy, |((xs, ys, k, k1, k2), xi, a)| {
        let scaled: Vec<f64> = xi.iter().map(|v| a * v).collect();
        let c = bootstrap_scedasis_curve(&xs, k1, &xi).unwrap();
        let cs = bootstrap_scedasis_curve(&xs, k1, &scaled).unwrap();
        let n = xs.len();
        for i in 0..=n {
            let z = i as f64 / n as f64;
            prop_assert!((c.eval(z) - cs.eval(z)).abs() < 1e-12);
        }
        let plain = estimate_integrated_scedasis(&xs, k1).unwrap();
        if k1 >= 2 {
            let g = bootstrap_hill(&xs, &plain, &xi, 0.0, 1.0).unwrap();
            let gs = bootstrap_hill(&xs, &plain, &scaled, 0.0, 1.0).unwrap();
            prop_assert!((g - gs).abs() < 1e-12 * g.abs().max(1.0));
        }
        let s = BivariateSample::new(xs, ys).unwrap();
        let config = TailConfig::new(k, k1, k2).unwrap();
        let r = bootstrap_quasi_tail_copula(&s, config, &xi, 1.0, 1.0, 0.0, 1.0).unwrap();
        let rs = bootstrap_quasi_tail_copula(&s, config, &scaled, 1.0, 1.0, 0.0, 1.0).unwrap();
        prop_assert!((r - rs).abs() < 1e-12 * r.abs().max(1.0));
        Ok(())
    });
}

pub fn builtin_tail_copulas() -> Vec<TailCopulaModel> {
    vec![
        TailCopulaModel::t_copula(1.0, 0.0).unwrap(),
        TailCopulaModel::t_copula(1.0, 0.5).unwrap(),
        TailCopulaModel::t_copula(4.0, -0.3).unwrap(),
        TailCopulaModel::Clayton,
        TailCopulaModel::Independence,
    ]
}

pub fn tail_copula_properties() {
    let grid: Vec<f64> = (1..=20).map(|i| 0.15 * i as f64).collect();
    let rays = [0.1, 0.4, 1.0, 2.5, 8.0];
    for model in builtin_tail_copulas() {
        let r = |x: f64, y: f64| model.eval(x, y);
        for &x in &grid {
            for &y in &grid {
                let v = r(x, y);
                assert!(v >= 0.0 && v <= x.min(y) + 1e-12, "{model:?} bounds at ({x}, {y}): {v}");
            }
        }
        for i in 0..grid.len() - 1 {
            for j in 0..grid.len() - 1 {
                let (u1, u2, v1, v2) = (grid[i], grid[i + 1], grid[j], grid[j + 1]);
                let rect = r(u1, v1) + r(u2, v2) - r(u1, v2) - r(u2, v1);
                assert!(rect >= -1e-9, "{model:?} rectangle at ({u1}, {v1}): {rect}");
            }
        }
        for &ratio in &rays {
            let (x, y) = (1.0, ratio);
            for a in [0.5, 2.0, 10.0] {
                let lhs = r(a * x, a * y);
                let rhs = a * r(x, y);
                assert!(
                    (lhs - rhs).abs() <= 1e-6 * rhs.abs().max(1.0),
                    "{model:?} homogeneity on ray {ratio}, a={a}"
                );
            }
        }
    }
}

const MIXTURE_TS: [f64; 3] = [1e2, 1e3, 1e4];

/// Largest deviation of `t C(x/t, y/t)` from `scale (1/x + 1/y)^{-1}` on a
/// grid of `(x, y)` in `(0, 1]^2`, for mixture weight `p`.
pub fn mixture_deviation(p: f64, t: f64, scale: f64) -> f64 {
    let pts: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
    let mut worst: f64 = 0.0;
    for &x in &pts {
        for &y in &pts {
            let d = t * clayton_amh_mixture(p, x / t, y / t) - scale / (1.0 / x + 1.0 / y);
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Least-squares slope of `log10 dev(t)` against `log10 t`.
pub fn log_log_slope(dev: impl Fn(f64) -> f64) -> f64 {
    let logs: Vec<(f64, f64)> = MIXTURE_TS.iter().map(|&t| (t.log10(), dev(t).log10())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / 3.0;
    logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

/// The mixture converges to `(1/x + 1/y)^{-1}` at rate `1/t` for every weight.
pub fn mixture_rate() {
    for p in [0.2, 0.6, 1.0] {
        let slope = log_log_slope(|t| mixture_deviation(p, t, 1.0));
        assert!((slope + 1.0).abs() <= 0.2, "p={p}: log-log slope {slope}");
    }
}

fn dense_sup(fns: &[&StepFunction], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut vals = vec![0.0; fns.len()];
    for j in 1..=10_000 {
        let z = j as f64 / 10_000.0;
        for (v, g) in vals.iter_mut().zip(fns) {
            *v = g.eval(z);
        }
        best = best.max(f(&vals));
    }
    best
}

/// Sample sizes divide 10^4, so every jump point `i/n` lies on the dense grid.
pub fn jump_point_suprema() {
    let strategy = prop::sample::select(vec![8usize, 10, 16, 20, 25, 40, 50]).prop_flat_map(|n| {
        (
            distinct(n..n + 1),
            distinct(n..n + 1),
            2..n / 2,
            2..n / 2,
            any::<bool>(),
        )
    });
    run(32, strategy, |(xs, mut ys, k1, k2, dependent)| {
        if dependent {
            for (y, x) in ys.iter_mut().zip(&xs) {
                *y += 2.0 * x;
            }
            if has_duplicates(&ys) {
                return Ok(());
            }
        }
        let s = BivariateSample::new(xs, ys).unwrap();
        let config = TailConfig::new(k1.min(k2), k1, k2).unwrap();
        let a = SampleAnalysis::new(&s, config).unwrap();
        let k = config.k as f64;
        let ks1 = dense_sup(&[&a.c1.curve, &a.c2.curve], |v| k * (v[0] - v[1]).powi(2));
        prop_assert!((ks1 - a.scaled_ks1()).abs() <= 1e-12);
        if a.r11 > 0.0 {
            if let Ok(cross) = a.cross_coefficient() {
                let r11 = a.r11;
                let ks2 = dense_sup(&[&a.c1.curve, &a.c2.curve, &a.r_curve], |v| {
                    k * (v[0] + v[1] - 2.0 * v[2] / r11 + cross * (v[0] - v[1])).powi(2)
                });
                prop_assert!((ks2 - a.scaled_ks2().unwrap()).abs() <= 1e-12);
            }
        }
        let split = SplitSample::new(&s, TailConfig::new(k1.min(k2), k1.max(4), k2.max(4)).unwrap());
        if let Ok(split) = split {
            let (cx, cy) = (split.scedasis_x().unwrap(), split.scedasis_y().unwrap());
            let jump = StepFunction::sup_combined(&[&cx, &cy], |v| (v[0] - v[1]).powi(2)).1;
            let dense = dense_sup(&[&cx, &cy], |v| (v[0] - v[1]).powi(2));
            prop_assert!((jump - dense).abs() <= 1e-12);
        }
        Ok(())
    });
}

pub fn nested_decisions() {
    let strategy = (
        prop::collection::vec(0.01f64..1.0, 200),
        prop::collection::vec(0.01f64..1.0, 200),
        0.0f64..1.0,
    );
    run(32, strategy, |(u, v, mix)| {
        let xs: Vec<f64> = u.iter().map(|p| 1.0 / p).collect();
        let ys: Vec<f64> = u
            .iter()
            .zip(&v)
            .map(|(a, b)| 1.0 / (mix * a + (1.0 - mix) * b))
            .collect();
        let s = BivariateSample::new(xs, ys).unwrap();
        let config = TailConfig::uniform(20).unwrap();
        let alphas: Vec<f64> = (1..=40).map(|i| i as f64 * 0.005).collect();
        let mut reports = vec![test_h10_asymptotic(&s, config).unwrap()];
        if let Ok(r) = test_h40_asymptotic(&s, config) {
            reports.push(r);
        }
        for r in &reports {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            for w in alphas.windows(2) {
                prop_assert!(!r.rejects(w[0]) || r.rejects(w[1]));
            }
        }
        Ok(())
    });
}

pub fn determinism() {
    let hs = [Hypothesis::H10, Hypothesis::H20, Hypothesis::H30, Hypothesis::H40];
    for id in [1u8, 11, 15] {
        let spec = DgpSpec::from_id(id, 0.5).unwrap();
        let a = simulate_dgp(&spec, 600, 42).unwrap();
        let b = simulate_dgp(&spec, 600, 42).unwrap();
        assert_eq!(a.xs(), b.xs());
        assert_eq!(a.ys(), b.ys());
        let config = TailConfig::uniform(60).unwrap();
        let settings = BootstrapSettings::new(50, 9);
        let json = |s: &BivariateSample| {
            let reports: Vec<_> = run_tests(s, config, &hs, Method::Bootstrap, Some(&settings))
                .into_iter()
                .map(|(_, r)| r.unwrap())
                .collect();
            serde_json::to_string(&reports).unwrap()
        };
        assert_eq!(json(&a), json(&b), "DGP {id}");
    }
}
