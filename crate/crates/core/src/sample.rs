//! Data containers, order statistics, thresholds and exceedance counting.
//!
//! Observation `i` (1-based) sits at sample fraction `i/n`. Every place that
//! converts a fraction `z` into an index goes through [`floor_index`] or
//! [`ceil_index`], which are defined on the exact same `i as f64 / n as f64`
//! grid that [`StepFunction`] uses for its jump points, so a step function
//! evaluated at `floor_index(n, z)` never disagrees with one evaluated at `z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-ordered paired losses `(x_i, y_i)`, `i = 1..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateSample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl BivariateSample {
    pub const MIN_LEN: usize = 4;

    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Validation(format!(
                "series lengths differ: {} vs {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < Self::MIN_LEN {
            return Err(Error::Validation(format!(
                "need at least {} observations, got {}",
                Self::MIN_LEN,
                xs.len()
            )));
        }
        for (name, series) in [("x", &xs), ("y", &ys)] {
            if let Some(i) = series.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "non-finite {name} value at observation {}",
                    i + 1
                )));
            }
        }
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// The same sample with the roles of the two series exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            xs: self.ys.clone(),
            ys: self.xs.clone(),
        }
    }

    /// Multiply each series by its own positive factor.
    pub fn rescaled(&self, ax: f64, ay: f64) -> Result<Self> {
        if !(ax > 0.0 && ay > 0.0) {
            return Err(Error::Domain("scale factors must be positive".into()));
        }
        Self::new(
            self.xs.iter().map(|v| v * ax).collect(),
            self.ys.iter().map(|v| v * ay).collect(),
        )
    }
}

/// Intermediate orders: `k` sets the overall rate, `k1`/`k2` pick the marginal tails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailConfig {
    pub k: usize,
    pub k1: usize,
    pub k2: usize,
}

impl TailConfig {
    pub fn new(k: usize, k1: usize, k2: usize) -> Result<Self> {
        if k == 0 || k1 == 0 || k2 == 0 {
            return Err(Error::Config(format!(
                "intermediate orders must be positive (k={k}, k1={k1}, k2={k2})"
            )));
        }
        Ok(Self { k, k1, k2 })
    }

    /// `k = k1 = k2`.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(k, k, k)
    }

    pub fn s1(&self) -> f64 {
        self.k as f64 / self.k1 as f64
    }

    pub fn s2(&self) -> f64 {
        self.k as f64 / self.k2 as f64
    }

    /// Check the orders against a sample size. Ratios `s_j < 1` are legal in
    /// finite samples and come back as warnings rather than errors.
    pub fn validate(&self, n: usize) -> Result<Vec<String>> {
        for (name, v) in [("k", self.k), ("k1", self.k1), ("k2", self.k2)] {
            if v >= n {
                return Err(Error::Config(format!("{name}={v} must be below n={n}")));
            }
        }
        let mut warnings = Vec::new();
        if self.s1() < 1.0 {
            warnings.push(format!("k/k1 = {:.4} is below 1", self.s1()));
        }
        if self.s2() < 1.0 {
            warnings.push(format!("k/k2 = {:.4} is below 1", self.s2()));
        }
        Ok(warnings)
    }
}

/// Fraction of observation `i` out of `n`.
#[inline]
pub fn fraction(i: usize, n: usize) -> f64 {
    i as f64 / n as f64
}

/// `⌊nz⌋`, computed as the largest `i` with `i/n <= z`.
pub fn floor_index(n: usize, z: f64) -> usize {
    if z <= 0.0 {
        return 0;
    }
    if z >= 1.0 {
        return n;
    }
    let mut i = ((n as f64) * z).floor() as usize;
    i = i.min(n);
    while i < n && fraction(i + 1, n) <= z {
        i += 1;
    }
    while i > 0 && fraction(i, n) > z {
        i -= 1;
    }
    i
}

/// `⌈nz⌉`, computed as the smallest `i` with `i/n >= z`.
pub fn ceil_index(n: usize, z: f64) -> usize {
    let f = floor_index(n, z);
    if f < n && fraction(f, n) < z {
        f + 1
    } else {
        f
    }
}

/// `⌈k·x⌉` for tail-fraction arguments; products within 1e-9 (relative) of an
/// integer snap to it so that e.g. `k·(m/k)` gives `m`.
pub fn ceil_count(k: usize, x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let p = k as f64 * x;
    let r = p.round();
    if (p - r).abs() <= 1e-9 * p.max(1.0) {
        r as usize
    } else {
        p.ceil() as usize
    }
}

/// The `r`-th smallest value (1-based).
pub fn order_statistic(values: &[f64], r: usize) -> Result<f64> {
    if r == 0 || r > values.len() {
        return Err(Error::Index {
            index: r,
            len: values.len(),
        });
    }
    let mut buf = values.to_vec();
    let (_, nth, _) = buf.select_nth_unstable_by(r - 1, f64::total_cmp);
    Ok(*nth)
}

/// `X_{n-k,n}`: the value above which the top `k` observations lie.
pub fn tail_threshold(values: &[f64], k: usize) -> Result<f64> {
    let n = values.len();
    if k == 0 || k >= n {
        return Err(Error::Config(format!("tail order k={k} must satisfy 1 <= k < n={n}")));
    }
    order_statistic(values, n - k)
}

/// Values sorted ascending, for repeated order-statistic lookups.
#[derive(Debug, Clone)]
pub struct SortedValues {
    sorted: Vec<f64>,
}

impl SortedValues {
    pub fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `r`-th smallest value, 1-based.
    pub fn order_statistic(&self, r: usize) -> Result<f64> {
        if r == 0 || r > self.sorted.len() {
            return Err(Error::Index {
                index: r,
                len: self.sorted.len(),
            });
        }
        Ok(self.sorted[r - 1])
    }

    /// Threshold leaving `m` values above it; `m = 0` gives `+inf` (empty tail).
    pub fn threshold_for_count(&self, m: usize) -> Result<f64> {
        let n = self.sorted.len();
        if m == 0 {
            return Ok(f64::INFINITY);
        }
        if m >= n {
            return Err(Error::Domain(format!(
                "tail count {m} leaves no order statistic below it (n={n})"
            )));
        }
        Ok(self.sorted[n - m - 1])
    }
}

/// Number of 1-based indices `i` in `[i_lo, i_hi]` with `x_i > tx` and `y_i > ty`.
///
/// Windows are clamped to `1..=n`; an empty window counts zero.
pub fn count_joint_exceedances(sample: &BivariateSample, tx: f64, ty: f64, i_lo: usize, i_hi: usize) -> usize {
    let lo = i_lo.max(1);
    let hi = i_hi.min(sample.len());
    if lo > hi {
        return 0;
    }
    sample.xs[lo - 1..hi]
        .iter()
        .zip(&sample.ys[lo - 1..hi])
        .filter(|(x, y)| **x > tx && **y > ty)
        .count()
}

/// Right-continuous piecewise-constant function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    jump_points: Vec<f64>,
    values: Vec<f64>,
    initial_value: f64,
}

impl StepFunction {
    pub fn new(jump_points: Vec<f64>, values: Vec<f64>, initial_value: f64) -> Result<Self> {
        if jump_points.len() != values.len() {
            return Err(Error::Validation("step function needs one value per jump point".into()));
        }
        if jump_points.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::Validation("jump points must lie in (0, 1]".into()));
        }
        if jump_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("jump points must be strictly increasing".into()));
        }
        Ok(Self {
            jump_points,
            values,
            initial_value,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            jump_points: Vec::new(),
            values: Vec::new(),
            initial_value: value,
        }
    }

    pub fn jump_points(&self) -> &[f64] {
        &self.jump_points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn eval(&self, z: f64) -> f64 {
        // number of jump points <= z
        let idx = self.jump_points.partition_point(|p| *p <= z);
        if idx == 0 {
            self.initial_value
        } else {
            self.values[idx - 1]
        }
    }

    /// Value after the last jump.
    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial_value)
    }

    /// Sorted union of jump points of several functions.
    pub fn union_jump_points(fns: &[&StepFunction]) -> Vec<f64> {
        let mut pts: Vec<f64> = fns.iter().flat_map(|f| f.jump_points.iter().copied()).collect();
        pts.sort_unstable_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Exact supremum over `z ∈ (0, 1]` of `combine(f_1(z), ..., f_m(z))`.
    ///
    /// The combined function is constant between consecutive jump points, so it
    /// suffices to look at `(0, first jump)` and at every jump point. Returns the
    /// maximizing `z` (0 stands for the initial stretch) and the supremum.
    pub fn sup_combined<F>(fns: &[&StepFunction], mut combine: F) -> (f64, f64)
    where
        F: FnMut(&[f64]) -> f64,
    {
        let points = Self::union_jump_points(fns);
        let mut cursors = vec![0usize; fns.len()];
        let mut current: Vec<f64> = fns.iter().map(|f| f.initial_value).collect();

        let mut best_z = 0.0;
        let mut best = if points.first().is_some_and(|p| *p <= 0.0) {
            f64::NEG_INFINITY
        } else {
            combine(&current)
        };
        for &p in &points {
            for (j, f) in fns.iter().enumerate() {
                while cursors[j] < f.jump_points.len() && f.jump_points[cursors[j]] <= p {
                    current[j] = f.values[cursors[j]];
                    cursors[j] += 1;
                }
            }
            let v = combine(&current);
            if v > best {
                best = v;
                best_z = p;
            }
        }
        (best_z, best)
    }

    /// Supremum over `(0, 1]` of this single function.
    pub fn sup(&self) -> f64 {
        Self::sup_combined(&[self], |v| v[0]).1
    }
}
