//! Point estimators: integrated scedasis, tail empirical quasi-copula, Hill
//! estimators on index windows, and the normalizing constants of the tests.
//!
//! Index windows `(z1, z2]` always map to the 1-based indices
//! `floor(n z1) + 1 ..= floor(n z2)`, for the Hill subsamples and for the
//! quasi-copula alike. This keeps the quasi-copula additive over adjacent
//! windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{
    ceil_count, floor_index, fraction, tail_threshold, BivariateSample, SortedValues, StepFunction, TailConfig,
};

/// `Ĉ_j`: the fraction of the top-`k_j` exceedances seen up to each sample fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScedasisEstimate {
    pub curve: StepFunction,
    pub k_j: usize,
    /// `X_{n-k_j,n}`, the order statistic exceedances are measured against.
    pub threshold: f64,
    /// Set when ties at the threshold make the exceedance count differ from `k_j`.
    pub tie_warning: bool,
    n: usize,
    exceedances: Vec<usize>,
}

impl ScedasisEstimate {
    pub fn eval(&self, z: f64) -> f64 {
        self.curve.eval(z)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 1-based indices of the observations strictly above the threshold.
    pub fn exceedance_indices(&self) -> &[usize] {
        &self.exceedances
    }

    /// Number of exceedances with index in `floor(n z1) + 1 ..= floor(n z2)`,
    /// i.e. `k_j (Ĉ_j(z2) - Ĉ_j(z1))` computed as an integer.
    pub fn window_count(&self, z1: f64, z2: f64) -> usize {
        let lo = floor_index(self.n, z1);
        let hi = floor_index(self.n, z2);
        if hi <= lo {
            return 0;
        }
        let a = self.exceedances.partition_point(|&i| i <= lo);
        let b = self.exceedances.partition_point(|&i| i <= hi);
        b - a
    }
}

/// `Ĉ_j(z) = (1/k_j) #{i <= floor(nz) : v_i > v_{n-k_j,n}}`.
pub fn estimate_integrated_scedasis(values: &[f64], k_j: usize) -> Result<ScedasisEstimate> {
    let n = values.len();
    let threshold = tail_threshold(values, k_j)?;
    let exceedances: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > threshold)
        .map(|(i, _)| i + 1)
        .collect();
    let k = k_j as f64;
    let jump_points = exceedances.iter().map(|&i| fraction(i, n)).collect();
    let curve_values = (1..=exceedances.len()).map(|m| m as f64 / k).collect();
    let curve = StepFunction::new(jump_points, curve_values, 0.0)?;
    Ok(ScedasisEstimate {
        curve,
        k_j,
        threshold,
        tie_warning: exceedances.len() != k_j,
        n,
        exceedances,
    })
}

/// Pull a window `(z1, z2]` with `0 <= z1 <= z2 <= 1` into index bounds.
pub(crate) fn window_bounds(n: usize, z1: f64, z2: f64) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&z1) || !(0.0..=1.0).contains(&z2) || z1 > z2 {
        return Err(Error::Domain(format!(
            "window ({z1}, {z2}] must satisfy 0 <= z1 <= z2 <= 1"
        )));
    }
    Ok((floor_index(n, z1), floor_index(n, z2)))
}

/// Tail empirical quasi-copula `R̂'(x, y; z1, z2)` for one sample.
///
/// Both marginals are sorted once, so repeated evaluations only pay for the
/// window scan.
#[derive(Debug, Clone)]
pub struct QuasiTailCopula<'a> {
    sample: &'a BivariateSample,
    config: TailConfig,
    sorted_x: SortedValues,
    sorted_y: SortedValues,
}

impl<'a> QuasiTailCopula<'a> {
    pub fn new(sample: &'a BivariateSample, config: TailConfig) -> Result<Self> {
        config.validate(sample.len())?;
        Ok(Self {
            sample,
            config,
            sorted_x: SortedValues::new(sample.xs()),
            sorted_y: SortedValues::new(sample.ys()),
        })
    }

    pub fn config(&self) -> TailConfig {
        self.config
    }

    /// `(X_{n-⌈k1 x⌉,n}, Y_{n-⌈k2 y⌉,n})`; a zero count gives an infinite threshold.
    pub fn thresholds(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !(x >= 0.0 && y >= 0.0) {
            return Err(Error::Domain(format!("tail arguments must be >= 0, got ({x}, {y})")));
        }
        let mx = ceil_count(self.config.k1, x);
        let my = ceil_count(self.config.k2, y);
        Ok((
            self.sorted_x.threshold_for_count(mx)?,
            self.sorted_y.threshold_for_count(my)?,
        ))
    }

    pub fn value(&self, x: f64, y: f64, z1: f64, z2: f64) -> Result<f64> {
        let (tx, ty) = self.thresholds(x, y)?;
        let (lo, hi) = window_bounds(self.sample.len(), z1, z2)?;
        let count = crate::sample::count_joint_exceedances(self.sample, tx, ty, lo + 1, hi);
        Ok(count as f64 / self.config.k as f64)
    }

    /// `R̂'(1, 1)` over the whole sample.
    pub fn r11(&self) -> Result<f64> {
        self.value(1.0, 1.0, 0.0, 1.0)
    }

    /// The map `z ↦ R̂'(x, y; 0, z)` as a step function.
    pub fn curve(&self, x: f64, y: f64) -> Result<StepFunction> {
        let (tx, ty) = self.thresholds(x, y)?;
        let n = self.sample.len();
        let k = self.config.k as f64;
        let mut points = Vec::new();
        let mut values = Vec::new();
        let mut count = 0usize;
        for (i, (xv, yv)) in self.sample.xs().iter().zip(self.sample.ys()).enumerate() {
            if *xv > tx && *yv > ty {
                count += 1;
                points.push(fraction(i + 1, n));
                values.push(count as f64 / k);
            }
        }
        StepFunction::new(points, values, 0.0)
    }
}

/// One-shot `R̂'(x, y; z1, z2)`.
pub fn estimate_quasi_tail_copula(
    sample: &BivariateSample,
    config: TailConfig,
    x: f64,
    y: f64,
    z1: f64,
    z2: f64,
) -> Result<f64> {
    QuasiTailCopula::new(sample, config)?.value(x, y, z1, z2)
}

/// Hill estimate on an index window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub gamma_hat: f64,
    pub z1: f64,
    pub z2: f64,
    /// Exceedances of the global threshold inside the window.
    pub effective_k: usize,
    /// Window length `floor(n z2) - floor(n z1)`.
    pub subsample_size: usize,
}

/// Hill estimator on the `(z1, z2]` subsample, using as many top order
/// statistics as the window holds global exceedances.
pub fn estimate_hill_subsample(values: &[f64], scedasis: &ScedasisEstimate, z1: f64, z2: f64) -> Result<HillEstimate> {
    if values.len() != scedasis.n() {
        return Err(Error::Validation(format!(
            "scedasis estimate built on {} values, got {}",
            scedasis.n(),
            values.len()
        )));
    }
    let (lo, hi) = window_bounds(values.len(), z1, z2)?;
    let subsample_size = hi.saturating_sub(lo);
    let m = scedasis.window_count(z1, z2);
    if m < 2 {
        return Err(Error::InsufficientExceedances {
            found: m,
            required: 2,
            context: format!("Hill estimator on window ({z1}, {z2}]"),
        });
    }
    if m >= subsample_size {
        return Err(Error::InsufficientExceedances {
            found: subsample_size,
            required: m + 1,
            context: format!("Hill window ({z1}, {z2}] needs more observations than exceedances"),
        });
    }
    let mut window: Vec<f64> = values[lo..hi].to_vec();
    // descending: window[0] is the maximum, window[m] is V_{ñ-m}
    window.select_nth_unstable_by(m, |a, b| b.total_cmp(a));
    let base = window[m];
    if base <= 0.0 {
        return Err(Error::Domain(format!(
            "Hill estimator needs positive order statistics, found {base}"
        )));
    }
    let log_base = base.ln();
    let sum: f64 = window[..m].iter().map(|v| v.ln() - log_base).sum();
    Ok(HillEstimate {
        gamma_hat: sum / m as f64,
        z1,
        z2,
        effective_k: m,
        subsample_size,
    })
}

/// Classical Hill estimator with `k` upper order statistics on the full sample.
pub fn hill(values: &[f64], k: usize) -> Result<HillEstimate> {
    let sced = estimate_integrated_scedasis(values, k)?;
    estimate_hill_subsample(values, &sced, 0.0, 1.0)
}

fn check_r11(config: TailConfig, r_hat_11: f64) -> Result<()> {
    let upper = config.k1.min(config.k2) as f64 / config.k as f64;
    if !(r_hat_11 >= 0.0 && r_hat_11 <= upper * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("R'(1,1) = {r_hat_11} outside [0, {upper}]")));
    }
    Ok(())
}

/// `Δ1 = k/k1 + k/k2 - 2k²/(k1 k2) R̂'(1,1)`.
pub fn delta1(config: TailConfig, r_hat_11: f64) -> Result<f64> {
    check_r11(config, r_hat_11)?;
    let k = config.k as f64;
    Ok(config.s1() + config.s2() - 2.0 * k * k / (config.k1 as f64 * config.k2 as f64) * r_hat_11)
}

/// `Δ2 = 2 (k/k1 + k/k2)`.
pub fn delta2(config: TailConfig) -> f64 {
    2.0 * (config.s1() + config.s2())
}

/// `Δ3`, the variance proxy of the dependence-based scedasis contrast.
///
/// May come out nonpositive; callers decide whether that is fatal.
pub fn delta3(config: TailConfig, r_hat_11: f64) -> Result<f64> {
    check_r11(config, r_hat_11)?;
    if r_hat_11 <= 0.0 {
        return Err(Error::Degenerate(
            "R'(1,1) = 0: no joint exceedances, dependence normalizer undefined".into(),
        ));
    }
    let k = config.k as f64;
    let d1 = delta1(config, r_hat_11)?;
    let ds = config.s1() - config.s2();
    let correction = if ds == 0.0 {
        0.0
    } else if d1 > 0.0 {
        ds * ds / d1
    } else {
        return Err(Error::Degenerate(format!(
            "Δ1 = {d1} with unequal k1, k2: dependence normalizer undefined"
        )));
    };
    Ok(
        4.0 / r_hat_11 + 2.0 * k * k / (config.k1 as f64 * config.k2 as f64) * r_hat_11
            - correction
            - 1.5 * delta2(config),
    )
}

/// `k R̂'(1,1) / sqrt(k1 k2)`: joint exceedances of the two marginal tails over
/// `sqrt(k1 k2)`. Free of `k`; near zero under tail independence.
pub fn tail_dependence_diagnostic(sample: &BivariateSample, config: TailConfig) -> Result<f64> {
    config.validate(sample.len())?;
    let tx = tail_threshold(sample.xs(), config.k1)?;
    let ty = tail_threshold(sample.ys(), config.k2)?;
    let count = crate::sample::count_joint_exceedances(sample, tx, ty, 1, sample.len());
    Ok(count as f64 / ((config.k1 as f64) * (config.k2 as f64)).sqrt())
}
