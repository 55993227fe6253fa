//! Multiplier bootstrap: weighted tail quantiles, replicate versions of the
//! scedasis, quasi-copula and Hill estimators, and a deterministic parallel
//! ensemble runner.
//!
//! Public estimator functions take raw multipliers `ξ` and normalize them to
//! `ξ/ξ̄` themselves. [`PreparedSeries`] and [`PreparedSample`] cache the
//! descending sort order so a replicate only walks the top of the tail.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimators::{window_bounds, ScedasisEstimate};
use crate::rng::{stream, DOMAIN_MULTIPLIERS};
use crate::sample::{ceil_count, fraction, BivariateSample, StepFunction, TailConfig};

const MASS_RTOL: f64 = 1e-9;
const MAX_REDRAWS: u64 = 64;

type Sampler = Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>;

/// Law of the IID multipliers `ξ`.
#[derive(Clone, Default)]
pub enum MultiplierSpec {
    /// Standard exponential, `μ = σ = 1`.
    #[default]
    Exponential,
    Custom {
        mu: f64,
        sigma: f64,
        sampler: Sampler,
    },
}

impl MultiplierSpec {
    pub fn custom<F>(mu: f64, sigma: f64, sampler: F) -> Self
    where
        F: Fn(&mut ChaCha8Rng) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            mu,
            sigma,
            sampler: Arc::new(sampler),
        }
    }

    pub fn mu(&self) -> f64 {
        match self {
            Self::Exponential => 1.0,
            Self::Custom { mu, .. } => *mu,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Self::Exponential => 1.0,
            Self::Custom { sigma, .. } => *sigma,
        }
    }

    /// `μ > 0` and `σ > 0`, both finite.
    pub fn validate(&self) -> Result<()> {
        let (mu, sigma) = (self.mu(), self.sigma());
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Validation(format!("multiplier mean must be positive, got {mu}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "multiplier standard deviation must be positive, got {sigma}"
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Self::Exponential => rng.sample(Exp1),
            Self::Custom { sampler, .. } => sampler(rng),
        }
    }
}

impl fmt::Debug for MultiplierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential => write!(f, "Exponential"),
            Self::Custom { mu, sigma, .. } => write!(f, "Custom {{ mu: {mu}, sigma: {sigma} }}"),
        }
    }
}

impl Serialize for MultiplierSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("MultiplierSpec", 3)?;
        let name = match self {
            Self::Exponential => "standard_exponential",
            Self::Custom { .. } => "custom",
        };
        st.serialize_field("distribution", name)?;
        st.serialize_field("mu", &self.mu())?;
        st.serialize_field("sigma", &self.sigma())?;
        st.end()
    }
}

/// One replicate's multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub xi: Vec<f64>,
    pub xi_bar: f64,
}

impl Multipliers {
    /// Wrap given multipliers; their mean must be positive.
    pub fn from_xi(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() {
            return Err(Error::Validation("no multipliers".into()));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("multipliers must be finite".into()));
        }
        let xi_bar = xi.iter().sum::<f64>() / xi.len() as f64;
        if !(xi_bar > 0.0) {
            return Err(Error::Domain(format!("multiplier mean {xi_bar} is not positive")));
        }
        Ok(Self { xi, xi_bar })
    }

    /// `ξ_i / ξ̄`.
    pub fn weights(&self) -> Vec<f64> {
        self.xi.iter().map(|v| v / self.xi_bar).collect()
    }
}

/// `n` multipliers for replicate `b`, a pure function of `(spec, n, seed, b)`.
///
/// A draw with `ξ̄ <= 0` (only possible for signed custom laws) is redrawn on
/// the next stream.
pub fn draw_multipliers(spec: &MultiplierSpec, n: usize, seed: u64, b: u64) -> Result<Multipliers> {
    if n == 0 {
        return Err(Error::Validation("need at least one multiplier".into()));
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = stream(seed, DOMAIN_MULTIPLIERS, b | (attempt << 48));
        let xi: Vec<f64> = (0..n).map(|_| spec.draw(&mut rng)).collect();
        match Multipliers::from_xi(xi) {
            Ok(m) => return Ok(m),
            Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numerical(format!(
        "multiplier mean stayed nonpositive after {MAX_REDRAWS} redraws"
    )))
}

/// Sort order used by the weighted quantile walks: descending value, then index.
fn descending_order(values: &[f64], indices: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut order: Vec<usize> = indices.collect();
    order.sort_unstable_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Walk `order` (descending values) and return the smallest value whose
/// strictly-larger weighted mass does not exceed `target`, together with the
/// number of leading positions strictly above it.
fn walk_quantile(values: &[f64], weights: &[f64], order: &[usize], target: f64) -> (f64, usize) {
    let limit = target * (1.0 + MASS_RTOL) + f64::EPSILON;
    let mut acc = 0.0;
    let mut best = (f64::INFINITY, 0usize);
    let mut pos = 0;
    while pos < order.len() {
        let v = values[order[pos]];
        if acc > limit {
            break;
        }
        best = (v, pos);
        while pos < order.len() && values[order[pos]] == v {
            acc += weights[order[pos]];
            pos += 1;
        }
    }
    best
}

/// `S^{b←}` for one series on one window: sorted values with their weights.
#[derive(Debug, Clone)]
pub struct WeightedTailQuantileFn {
    values: Vec<f64>,
    weights: Vec<f64>,
    /// `n (Ĉ_j(z2) - Ĉ_j(z1))`.
    normalizer: f64,
}

impl WeightedTailQuantileFn {
    /// Build from raw multipliers over the window `(z1, z2]`.
    pub fn new(values: &[f64], multipliers: &[f64], z1: f64, z2: f64, normalizer: f64) -> Result<Self> {
        if values.len() != multipliers.len() {
            return Err(Error::Validation(format!(
                "{} values but {} multipliers",
                values.len(),
                multipliers.len()
            )));
        }
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            return Err(Error::Domain(format!(
                "quantile normalizer must be positive, got {normalizer}"
            )));
        }
        let w = Multipliers::from_xi(multipliers.to_vec())?.weights();
        let (lo, hi) = window_bounds(values.len(), z1, z2)?;
        let order = descending_order(values, lo..hi);
        Ok(Self {
            values: order.iter().map(|&i| values[i]).collect(),
            weights: order.iter().map(|&i| w[i]).collect(),
            normalizer,
        })
    }

    /// Over `(0, 1]` with the normalizer `n` of the full sample.
    pub fn full(values: &[f64], multipliers: &[f64]) -> Result<Self> {
        Self::new(values, multipliers, 0.0, 1.0, values.len() as f64)
    }

    /// `S^b(t) = Σ_window w_i 1(v_i > t) / normalizer`.
    pub fn survival(&self, t: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .take_while(|(v, _)| **v > t)
            .map(|(_, w)| w)
            .sum::<f64>()
            / self.normalizer
    }

    /// `inf{t in window : S^b(t) <= level}`.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {level}")));
        }
        if self.values.is_empty() {
            return Err(Error::Domain("quantile over an empty window".into()));
        }
        let order: Vec<usize> = (0..self.values.len()).collect();
        Ok(walk_quantile(&self.values, &self.weights, &order, level * self.normalizer).0)
    }
}

/// Free-function form of [`WeightedTailQuantileFn::quantile`].
pub fn weighted_tail_quantile(f: &WeightedTailQuantileFn, level: f64) -> Result<f64> {
    f.quantile(level)
}

/// One series with its descending order cached.
#[derive(Debug, Clone)]
pub struct PreparedSeries<'a> {
    values: &'a [f64],
    order: Vec<usize>,
}

impl<'a> PreparedSeries<'a> {
    pub fn new(values: &'a [f64]) -> Self {
        Self {
            values,
            order: descending_order(values, 0..values.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "{} values but {} weights",
                self.values.len(),
                weights.len()
            )));
        }
        Ok(())
    }

    /// Full-sample quantile leaving weighted mass `target` strictly above it,
    /// and the 0-based indices strictly above it.
    fn tail(&self, weights: &[f64], target: f64) -> (f64, &[usize]) {
        let (t, above) = walk_quantile(self.values, weights, &self.order, target);
        (t, &self.order[..above])
    }

    /// `S^{b←}(k_j/n)` over the full sample.
    pub fn threshold(&self, weights: &[f64], k_j: usize) -> Result<f64> {
        self.check_weights(weights)?;
        check_order(k_j, self.len())?;
        Ok(self.tail(weights, k_j as f64).0)
    }

    /// `Ĉ^b_j` as a step function, from normalized weights.
    pub fn scedasis_curve(&self, weights: &[f64], k_j: usize) -> Result<StepFunction> {
        self.check_weights(weights)?;
        check_order(k_j, self.len())?;
        let n = self.len();
        let (_, above) = self.tail(weights, k_j as f64);
        let mut idx: Vec<usize> = above.to_vec();
        idx.sort_unstable();
        let k = k_j as f64;
        let mut acc = 0.0;
        let mut points = Vec::with_capacity(idx.len());
        let mut values = Vec::with_capacity(idx.len());
        for i in idx {
            acc += weights[i];
            points.push(fraction(i + 1, n));
            values.push(acc / k);
        }
        StepFunction::new(points, values, 0.0)
    }

    /// `γ̂^b` on `(z1, z2]`, with the threshold leaving `effective_k` weighted
    /// exceedances inside the window.
    pub fn hill(&self, weights: &[f64], effective_k: usize, z1: f64, z2: f64) -> Result<f64> {
        self.check_weights(weights)?;
        if effective_k == 0 {
            return Err(Error::InsufficientExceedances {
                found: 0,
                required: 1,
                context: format!("bootstrap Hill on window ({z1}, {z2}]"),
            });
        }
        let (lo, hi) = window_bounds(self.len(), z1, z2)?;
        let target = effective_k as f64;
        let (thr, above): (f64, Vec<usize>) = if lo == 0 && hi == self.len() {
            let (t, a) = self.tail(weights, target);
            (t, a.to_vec())
        } else {
            let order: Vec<usize> = self.order.iter().copied().filter(|i| (lo..hi).contains(i)).collect();
            let (t, a) = walk_quantile(self.values, weights, &order, target);
            (t, order[..a].to_vec())
        };
        if !(thr > 0.0) {
            return Err(Error::Domain(format!(
                "bootstrap Hill threshold must be positive, found {thr}"
            )));
        }
        let log_thr = thr.ln();
        let sum: f64 = above
            .iter()
            .map(|&i| weights[i] * (self.values[i].ln() - log_thr))
            .sum();
        Ok(sum / target)
    }
}

fn check_order(k_j: usize, n: usize) -> Result<()> {
    if k_j == 0 || k_j >= n {
        return Err(Error::Config(format!("tail order k={k_j} must satisfy 1 <= k < n={n}")));
    }
    Ok(())
}

/// Both margins of a sample prepared for repeated replicate evaluation.
#[derive(Debug, Clone)]
pub struct PreparedSample<'a> {
    pub xs: PreparedSeries<'a>,
    pub ys: PreparedSeries<'a>,
    config: TailConfig,
}

impl<'a> PreparedSample<'a> {
    pub fn new(sample: &'a BivariateSample, config: TailConfig) -> Result<Self> {
        config.validate(sample.len())?;
        Ok(Self {
            xs: PreparedSeries::new(sample.xs()),
            ys: PreparedSeries::new(sample.ys()),
            config,
        })
    }

    pub fn config(&self) -> TailConfig {
        self.config
    }

    /// Indices (0-based) jointly above `S^{b←}_1(⌈k1 x⌉/n)` and `S^{b←}_2(⌈k2 y⌉/n)`,
    /// ascending.
    fn joint_exceedances(&self, weights: &[f64], x: f64, y: f64) -> Result<Vec<usize>> {
        self.xs.check_weights(weights)?;
        if !(x >= 0.0 && y >= 0.0) {
            return Err(Error::Domain(format!("tail arguments must be >= 0, got ({x}, {y})")));
        }
        let n = self.xs.len();
        let mx = ceil_count(self.config.k1, x);
        let my = ceil_count(self.config.k2, y);
        if mx >= n || my >= n {
            return Err(Error::Domain(format!(
                "tail counts ({mx}, {my}) leave no order statistic below them (n={n})"
            )));
        }
        if mx == 0 || my == 0 {
            return Ok(Vec::new());
        }
        let (_, ax) = self.xs.tail(weights, mx as f64);
        let (_, ay) = self.ys.tail(weights, my as f64);
        let mut in_x = vec![false; n];
        for &i in ax {
            in_x[i] = true;
        }
        let mut joint: Vec<usize> = ay.iter().copied().filter(|&i| in_x[i]).collect();
        joint.sort_unstable();
        Ok(joint)
    }

    /// `R̂'^b(x, y; z1, z2)` from normalized weights.
    pub fn quasi_copula(&self, weights: &[f64], x: f64, y: f64, z1: f64, z2: f64) -> Result<f64> {
        let (lo, hi) = window_bounds(self.xs.len(), z1, z2)?;
        let joint = self.joint_exceedances(weights, x, y)?;
        let s: f64 = joint
            .iter()
            .filter(|i| (lo..hi).contains(*i))
            .map(|&i| weights[i])
            .sum();
        Ok(s / self.config.k as f64)
    }

    /// `z ↦ R̂'^b(x, y; 0, z)` from normalized weights.
    pub fn quasi_copula_curve(&self, weights: &[f64], x: f64, y: f64) -> Result<StepFunction> {
        let n = self.xs.len();
        let k = self.config.k as f64;
        let joint = self.joint_exceedances(weights, x, y)?;
        let mut acc = 0.0;
        let mut points = Vec::with_capacity(joint.len());
        let mut values = Vec::with_capacity(joint.len());
        for i in joint {
            acc += weights[i];
            points.push(fraction(i + 1, n));
            values.push(acc / k);
        }
        StepFunction::new(points, values, 0.0)
    }
}

fn normalized(multipliers: &[f64]) -> Result<Vec<f64>> {
    Ok(Multipliers::from_xi(multipliers.to_vec())?.weights())
}

/// `Ĉ^b_j(z)` from raw multipliers.
pub fn bootstrap_scedasis(values: &[f64], k_j: usize, multipliers: &[f64], z: f64) -> Result<f64> {
    Ok(bootstrap_scedasis_curve(values, k_j, multipliers)?.eval(z))
}

/// `Ĉ^b_j` as a step function, from raw multipliers.
pub fn bootstrap_scedasis_curve(values: &[f64], k_j: usize, multipliers: &[f64]) -> Result<StepFunction> {
    PreparedSeries::new(values).scedasis_curve(&normalized(multipliers)?, k_j)
}

/// `R̂'^b(x, y; z1, z2)` from raw multipliers.
pub fn bootstrap_quasi_tail_copula(
    sample: &BivariateSample,
    config: TailConfig,
    multipliers: &[f64],
    x: f64,
    y: f64,
    z1: f64,
    z2: f64,
) -> Result<f64> {
    PreparedSample::new(sample, config)?.quasi_copula(&normalized(multipliers)?, x, y, z1, z2)
}

/// `γ̂^b` on `(z1, z2]` from raw multipliers; the window's exceedance count
/// comes from the plain scedasis estimate.
pub fn bootstrap_hill(
    values: &[f64],
    scedasis: &ScedasisEstimate,
    multipliers: &[f64],
    z1: f64,
    z2: f64,
) -> Result<f64> {
    if scedasis.n() != values.len() {
        return Err(Error::Validation(format!(
            "scedasis estimate built on {} values, got {}",
            scedasis.n(),
            values.len()
        )));
    }
    let m = scedasis.window_count(z1, z2);
    PreparedSeries::new(values).hill(&normalized(multipliers)?, m, z1, z2)
}

/// Run `f(b, weights)` for `b = 1..=B`, in parallel, results in replicate order.
///
/// Each replicate's weights come from its own stream, so the output does not
/// depend on scheduling.
pub fn run_replicates<T, F>(n: usize, b_count: usize, spec: &MultiplierSpec, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &[f64]) -> Result<T> + Sync,
{
    try_replicates(n, b_count, spec, seed, f)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| e.in_replicate(i + 1)))
        .collect()
}

/// As [`run_replicates`], keeping per-replicate failures for the caller.
pub fn try_replicates<T, F>(n: usize, b_count: usize, spec: &MultiplierSpec, seed: u64, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(usize, &[f64]) -> Result<T> + Sync,
{
    spec.validate()?;
    if b_count == 0 {
        return Err(Error::Validation(
            "number of bootstrap replicates must be positive".into(),
        ));
    }
    (1..=b_count)
        .into_par_iter()
        .map(|b| -> Result<Result<T>> {
            let w = draw_multipliers(spec, n, seed, b as u64)?.weights();
            Ok(f(b, &w))
        })
        .collect()
}

/// Replicate statistics `stat^b`, `b = 1..=B`.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapEnsemble {
    pub replicates: Vec<f64>,
    pub spec: MultiplierSpec,
    pub seed: u64,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl BootstrapEnsemble {
    pub fn new(replicates: Vec<f64>, spec: MultiplierSpec, seed: u64) -> Result<Self> {
        if replicates.is_empty() {
            return Err(Error::Validation("empty bootstrap ensemble".into()));
        }
        if let Some(i) = replicates.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("replicate {} is not finite", i + 1)));
        }
        let mut sorted = replicates.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(Self {
            b: replicates.len(),
            replicates,
            spec,
            seed,
            sorted,
        })
    }

    /// `F̂(x) = #{b : stat^b <= x} / B`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.b as f64
    }

    /// Left limit `#{b : stat^b < x} / B`; equals [`Self::ecdf`] unless `x`
    /// ties a replicate.
    pub fn ecdf_below(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v < x) as f64 / self.b as f64
    }

    /// Smallest replicate `v` with `F̂(v) >= alpha`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1], got {alpha}")));
        }
        let r = ((alpha * self.b as f64) - 1e-9).ceil().max(1.0) as usize;
        Ok(self.sorted[r.min(self.b) - 1])
    }
}

/// Ensemble of `statistic(b, weights)` over `B` replicates.
pub fn run_ensemble<F>(
    statistic: F,
    n: usize,
    b_count: usize,
    spec: &MultiplierSpec,
    seed: u64,
) -> Result<BootstrapEnsemble>
where
    F: Fn(usize, &[f64]) -> Result<f64> + Sync,
{
    let reps = run_replicates(n, b_count, spec, seed, statistic)?;
    BootstrapEnsemble::new(reps, spec.clone(), seed)
}

/// Basic bootstrap interval for `γ` at confidence `level`: the law of
/// `γ̂ - γ` is approximated by that of `(μ/σ)(γ̂^b - γ̂)`.
pub fn hill_confidence_interval(
    values: &[f64],
    k_j: usize,
    level: f64,
    b_count: usize,
    spec: &MultiplierSpec,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let gamma = crate::estimators::hill(values, k_j)?.gamma_hat;
    let series = PreparedSeries::new(values);
    let scale = spec.mu() / spec.sigma();
    let ensemble = run_ensemble(
        |_, w| Ok(scale * (series.hill(w, k_j, 0.0, 1.0)? - gamma)),
        values.len(),
        b_count,
        spec,
        seed,
    )?;
    let tail = (1.0 - level) / 2.0;
    Ok((gamma - ensemble.quantile(1.0 - tail)?, gamma - ensemble.quantile(tail)?))
}
