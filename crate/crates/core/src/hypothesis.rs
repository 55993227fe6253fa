//! The four two-sample tests: equal tail indices (H10), equal scedasis
//! (H20), both jointly (H30), and equal scedasis with a constant copula
//! mixture (H40). Each has an asymptotic and a multiplier-bootstrap version.
//!
//! Bootstrap tests place the observed statistic in its replicate ensemble
//! with the left-limit empirical CDF `#{stat^b < stat}/B`, so a statistic tied
//! with its replicates (identical series) does not reject.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_replicates, BootstrapEnsemble, MultiplierSpec, PreparedSample};
use crate::distributions::{chi_square_1_cdf, kolmogorov_sq_cdf};
use crate::error::{Error, Result};
use crate::estimators::{
    delta1, delta2, delta3, estimate_integrated_scedasis, hill, HillEstimate, QuasiTailCopula, ScedasisEstimate,
};
use crate::sample::{fraction, BivariateSample, StepFunction, TailConfig};

/// Levels evaluated in every report unless the caller asks for others.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.1];
/// Share of bootstrap replicates that may be dropped for lack of joint exceedances.
pub const MAX_DROPPED_SHARE: f64 = 0.1;
const DECISION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    H10,
    H20,
    H30,
    H40,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 4] = [Self::H10, Self::H20, Self::H30, Self::H40];
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::H10 => "H10",
            Self::H20 => "H20",
            Self::H30 => "H30",
            Self::H40 => "H40",
        })
    }
}

impl FromStr for Hypothesis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "H10" | "1" => Ok(Self::H10),
            "H20" | "2" => Ok(Self::H20),
            "H30" | "3" => Ok(Self::H30),
            "H40" | "4" => Ok(Self::H40),
            _ => Err(Error::Validation(format!(
                "unknown hypothesis '{s}' (expected H10..H40)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Asymptotic,
    Bootstrap,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Asymptotic => "asymptotic",
            Self::Bootstrap => "bootstrap",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "asymptotic" => Ok(Self::Asymptotic),
            "bootstrap" => Ok(Self::Bootstrap),
            _ => Err(Error::Validation(format!(
                "unknown method '{s}' (expected asymptotic or bootstrap)"
            ))),
        }
    }
}

/// Limiting law a statistic is referred to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceDistribution {
    ChiSquare1,
    KolmogorovSq,
}

impl ReferenceDistribution {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::ChiSquare1 => chi_square_1_cdf(x),
            Self::KolmogorovSq => kolmogorov_sq_cdf(x),
        }
    }
}

/// How a report turns into a decision at level `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Reject iff `p < α`.
    PValueBelow,
    /// Reject iff `p <= α`; used with bootstrap empirical CDFs.
    PValueAtMost,
    /// Reject iff the combined criterion is at least `sqrt(1 - α)`.
    CriterionSqrt,
    /// Reject iff the combined criterion is at least `1 - α/2`.
    CriterionHalf,
    /// Reject iff the combined criterion reaches the bootstrap quantile of its
    /// own replicates; equivalent to `p <= α`.
    CriterionQuantile,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub delta3: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub alpha: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInfo {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub multiplier: String,
    pub mu: f64,
    pub sigma: f64,
    /// Replicates left out of an ensemble (H40 only).
    pub dropped: usize,
}

impl BootstrapInfo {
    fn new(b: usize, spec: &MultiplierSpec, seed: u64) -> Self {
        Self {
            b,
            seed,
            multiplier: match spec {
                MultiplierSpec::Exponential => "standard_exponential".into(),
                MultiplierSpec::Custom { .. } => "custom".into(),
            },
            mu: spec.mu(),
            sigma: spec.sigma(),
            dropped: 0,
        }
    }
}

/// Outcome of one test on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub hypothesis: Hypothesis,
    pub method: Method,
    /// The test statistic; the combined criterion for H30 and H40, and the
    /// unnormalized `Δ·statistic` for bootstrap H10 and H20.
    pub statistic: f64,
    pub p_value: f64,
    pub rule: DecisionRule,
    pub normalizers: Normalizers,
    /// Named intermediate values (component statistics, CDF values, estimates).
    pub components: BTreeMap<String, f64>,
    pub decisions: Vec<Decision>,
    pub warnings: Vec<String>,
    pub bootstrap: Option<BootstrapInfo>,
}

impl TestReport {
    fn new(hypothesis: Hypothesis, method: Method, statistic: f64, p_value: f64, rule: DecisionRule) -> Self {
        let mut r = Self {
            hypothesis,
            method,
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            rule,
            normalizers: Normalizers::default(),
            components: BTreeMap::new(),
            decisions: Vec::new(),
            warnings: Vec::new(),
            bootstrap: None,
        };
        r.set_alphas(&DEFAULT_ALPHAS);
        r
    }

    /// Decision at level `α` under this report's rule.
    pub fn rejects(&self, alpha: f64) -> bool {
        match self.rule {
            DecisionRule::PValueBelow => self.p_value < alpha,
            DecisionRule::PValueAtMost | DecisionRule::CriterionQuantile => self.p_value <= alpha + DECISION_TOL,
            DecisionRule::CriterionSqrt => self.statistic >= (1.0 - alpha).sqrt() - DECISION_TOL,
            DecisionRule::CriterionHalf => self.statistic >= 1.0 - alpha / 2.0 - DECISION_TOL,
        }
    }

    /// Recompute the stored decisions for the given levels.
    pub fn set_alphas(&mut self, alphas: &[f64]) {
        self.decisions = alphas
            .iter()
            .map(|&alpha| Decision {
                alpha,
                reject: self.rejects(alpha),
            })
            .collect();
    }

    fn component(mut self, name: &str, value: f64) -> Self {
        self.components.insert(name.into(), value);
        self
    }
}

/// Validate a list of significance levels.
pub fn check_alphas(alphas: &[f64]) -> Result<()> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::Validation(format!("significance level {a} outside (0, 1)")));
    }
    Ok(())
}

/// Full-sample estimates shared by H10, H40 and all bootstrap tests.
#[derive(Debug, Clone)]
pub struct SampleAnalysis<'a> {
    pub sample: &'a BivariateSample,
    pub config: TailConfig,
    pub gamma1: HillEstimate,
    pub gamma2: HillEstimate,
    pub c1: ScedasisEstimate,
    pub c2: ScedasisEstimate,
    /// `z ↦ R̂'(1, 1; 0, z)`.
    pub r_curve: StepFunction,
    pub r11: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub warnings: Vec<String>,
}

impl<'a> SampleAnalysis<'a> {
    pub fn new(sample: &'a BivariateSample, config: TailConfig) -> Result<Self> {
        let mut warnings = config.validate(sample.len())?;
        let c1 = estimate_integrated_scedasis(sample.xs(), config.k1)?;
        let c2 = estimate_integrated_scedasis(sample.ys(), config.k2)?;
        for (name, c) in [("x", &c1), ("y", &c2)] {
            if c.tie_warning {
                warnings.push(format!(
                    "ties at the {name} threshold: {} exceedances for k={}",
                    c.exceedance_indices().len(),
                    c.k_j
                ));
            }
        }
        let gamma1 = hill(sample.xs(), config.k1)?;
        let gamma2 = hill(sample.ys(), config.k2)?;
        let q = QuasiTailCopula::new(sample, config)?;
        let r_curve = q.curve(1.0, 1.0)?;
        let r11 = r_curve.final_value();
        Ok(Self {
            sample,
            config,
            gamma1,
            gamma2,
            c1,
            c2,
            r_curve,
            r11,
            delta1: delta1(config, r11)?,
            delta2: delta2(config),
            warnings,
        })
    }

    /// `log γ̂1 - log γ̂2`.
    pub fn log_gamma_diff(&self) -> f64 {
        self.gamma1.gamma_hat.ln() - self.gamma2.gamma_hat.ln()
    }

    /// `k (log γ̂1 - log γ̂2)^2`, i.e. `Δ1 T1`.
    pub fn scaled_t1(&self) -> f64 {
        let d = self.log_gamma_diff();
        self.config.k as f64 * d * d
    }

    /// `sup_z k (Ĉ1 - Ĉ2)^2`, i.e. `Δ1 KS1`.
    pub fn scaled_ks1(&self) -> f64 {
        let k = self.config.k as f64;
        StepFunction::sup_combined(&[&self.c1.curve, &self.c2.curve], |v| k * (v[0] - v[1]).powi(2)).1
    }

    /// Coefficient `(k/k1 - k/k2)/Δ1` of the cross term in KS2.
    pub fn cross_coefficient(&self) -> Result<f64> {
        let ds = self.config.s1() - self.config.s2();
        if ds == 0.0 {
            return Ok(0.0);
        }
        if self.delta1 <= 0.0 {
            return Err(Error::Degenerate(format!(
                "Δ1 = {} with k1 != k2: KS2 cross term undefined",
                self.delta1
            )));
        }
        Ok(ds / self.delta1)
    }

    fn require_dependence(&self) -> Result<()> {
        if self.r11 <= 0.0 {
            return Err(Error::Degenerate(
                "R'(1,1) = 0: no joint exceedances, H40 statistic undefined".into(),
            ));
        }
        Ok(())
    }

    /// `Δ3`, required positive.
    pub fn delta3(&self) -> Result<f64> {
        self.require_dependence()?;
        let d3 = delta3(self.config, self.r11)?;
        if !(d3 > 0.0) {
            return Err(Error::Degenerate(format!("Δ3 = {d3} is not positive")));
        }
        Ok(d3)
    }

    /// `sup_z k g(z)^2` with `g` the KS2 integrand, i.e. `Δ3 KS2`.
    pub fn scaled_ks2(&self) -> Result<f64> {
        self.require_dependence()?;
        let a = self.cross_coefficient()?;
        let k = self.config.k as f64;
        let r11 = self.r11;
        Ok(
            StepFunction::sup_combined(&[&self.c1.curve, &self.c2.curve, &self.r_curve], |v| {
                k * ks2_integrand(v[0], v[1], v[2], r11, a).powi(2)
            })
            .1,
        )
    }
}

fn ks2_integrand(c1: f64, c2: f64, r: f64, r11: f64, cross: f64) -> f64 {
    c1 + c2 - 2.0 * r / r11 + cross * (c1 - c2)
}

/// `num/den` where a zero numerator gives zero even when the normalizer vanishes.
fn normalized(num: f64, den: f64, what: &str) -> Result<f64> {
    if num == 0.0 {
        return Ok(0.0);
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("{what} normalizer {den} is not positive")));
    }
    Ok(num / den)
}

/// The two independent halves: even-indexed `x` (1-based `2, 4, ...`) and
/// odd-indexed `y` (1-based `1, 3, ...`).
#[derive(Debug, Clone)]
pub struct SplitSample {
    /// Observations used, `n` rounded down to even.
    pub n: usize,
    pub xs_even: Vec<f64>,
    pub ys_odd: Vec<f64>,
    pub k1_half: usize,
    pub k2_half: usize,
    pub warnings: Vec<String>,
}

/// `max(2, round(k/2))`.
pub fn half_order(k: usize) -> usize {
    ((k as f64 / 2.0).round() as usize).max(2)
}

impl SplitSample {
    pub fn new(sample: &BivariateSample, config: TailConfig) -> Result<Self> {
        let mut warnings = Vec::new();
        let mut n = sample.len();
        if n % 2 == 1 {
            n -= 1;
            warnings.push(format!(
                "odd sample size: dropped observation {} before splitting",
                n + 1
            ));
        }
        let xs_even: Vec<f64> = sample.xs()[..n].iter().skip(1).step_by(2).copied().collect();
        let ys_odd: Vec<f64> = sample.ys()[..n].iter().step_by(2).copied().collect();
        let (k1_half, k2_half) = (half_order(config.k1), half_order(config.k2));
        let half = n / 2;
        for (name, kh) in [("k1", k1_half), ("k2", k2_half)] {
            if kh >= half {
                return Err(Error::InsufficientExceedances {
                    found: half,
                    required: kh + 1,
                    context: format!("half-sample order for {name} needs more observations"),
                });
            }
        }
        Ok(Self {
            n,
            xs_even,
            ys_odd,
            k1_half,
            k2_half,
            warnings,
        })
    }
}

impl SplitSample {
    /// `Ĉ*_1` on the original time axis: half index `l` sits at `2l/n`.
    pub fn scedasis_x(&self) -> Result<StepFunction> {
        self.on_time_axis(&self.xs_even, self.k1_half, 0)
    }

    /// `Ĉ*_2` on the original time axis: half index `l` sits at `(2l-1)/n`.
    pub fn scedasis_y(&self) -> Result<StepFunction> {
        self.on_time_axis(&self.ys_odd, self.k2_half, 1)
    }

    fn on_time_axis(&self, values: &[f64], k_half: usize, shift: usize) -> Result<StepFunction> {
        let c = estimate_integrated_scedasis(values, k_half)?;
        let points = c
            .exceedance_indices()
            .iter()
            .map(|&l| fraction(2 * l - shift, self.n))
            .collect();
        StepFunction::new(points, c.curve.values().to_vec(), 0.0)
    }
}

/// Split-sample statistics shared by H20 and H30.
#[derive(Debug, Clone)]
struct SplitAnalysis {
    t2: f64,
    log_gamma_diff: f64,
    gamma1: f64,
    gamma2: f64,
    warnings: Vec<String>,
}

impl SplitAnalysis {
    fn new(sample: &BivariateSample, config: TailConfig, with_gamma: bool) -> Result<Self> {
        config.validate(sample.len())?;
        let split = SplitSample::new(sample, config)?;
        let c1 = split.scedasis_x()?;
        let c2 = split.scedasis_y()?;
        let k = config.k as f64;
        let d2 = delta2(config);
        let t2 = StepFunction::sup_combined(&[&c1, &c2], |v| k * (v[0] - v[1]).powi(2)).1 / d2;
        let (gamma1, gamma2) = if with_gamma {
            (
                hill(&split.xs_even, split.k1_half)?.gamma_hat,
                hill(&split.ys_odd, split.k2_half)?.gamma_hat,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(Self {
            t2,
            log_gamma_diff: gamma1.ln() - gamma2.ln(),
            gamma1,
            gamma2,
            warnings: split.warnings,
        })
    }
}

fn h10_asymptotic(a: &SampleAnalysis) -> Result<TestReport> {
    let t1 = normalized(a.scaled_t1(), a.delta1, "Δ1")?;
    let mut r = TestReport::new(
        Hypothesis::H10,
        Method::Asymptotic,
        t1,
        1.0 - chi_square_1_cdf(t1),
        DecisionRule::PValueBelow,
    )
    .component("gamma1", a.gamma1.gamma_hat)
    .component("gamma2", a.gamma2.gamma_hat)
    .component("r11", a.r11);
    r.normalizers = Normalizers {
        delta1: Some(a.delta1),
        ..Normalizers::default()
    };
    r.warnings = a.warnings.clone();
    Ok(r)
}

fn h20_split(s: &SplitAnalysis, config: TailConfig) -> TestReport {
    let mut r = TestReport::new(
        Hypothesis::H20,
        Method::Asymptotic,
        s.t2,
        1.0 - kolmogorov_sq_cdf(s.t2),
        DecisionRule::PValueBelow,
    );
    r.normalizers.delta2 = Some(delta2(config));
    r.warnings = s.warnings.clone();
    r
}

fn h30_split(s: &SplitAnalysis, config: TailConfig) -> TestReport {
    let d2 = delta2(config);
    let chi_stat = normalized(config.k as f64 * s.log_gamma_diff.powi(2), d2, "Δ2").unwrap_or(f64::NAN);
    let f_gamma = chi_square_1_cdf(chi_stat);
    let f_c = kolmogorov_sq_cdf(s.t2);
    let t3 = f_gamma.max(f_c);
    let mut r = TestReport::new(
        Hypothesis::H30,
        Method::Asymptotic,
        t3,
        1.0 - t3 * t3,
        DecisionRule::CriterionSqrt,
    )
    .component("gamma_stat", chi_stat)
    .component("gamma_cdf", f_gamma)
    .component("t2", s.t2)
    .component("scedasis_cdf", f_c)
    .component("gamma1_half", s.gamma1)
    .component("gamma2_half", s.gamma2);
    r.normalizers.delta2 = Some(d2);
    r.warnings = s.warnings.clone();
    r
}

fn h40_asymptotic(a: &SampleAnalysis) -> Result<TestReport> {
    let d3 = a.delta3()?;
    let ks1 = normalized(a.scaled_ks1(), a.delta1, "Δ1")?;
    let ks2 = a.scaled_ks2()? / d3;
    let f1 = kolmogorov_sq_cdf(ks1);
    let f2 = kolmogorov_sq_cdf(ks2);
    let t4 = f1.max(f2);
    let mut r = TestReport::new(
        Hypothesis::H40,
        Method::Asymptotic,
        t4,
        1.0 - t4 * t4,
        DecisionRule::CriterionSqrt,
    )
    .component("ks1", ks1)
    .component("ks1_cdf", f1)
    .component("ks2", ks2)
    .component("ks2_cdf", f2)
    .component("r11", a.r11);
    r.normalizers = Normalizers {
        delta1: Some(a.delta1),
        delta2: None,
        delta3: Some(d3),
    };
    r.warnings = a.warnings.clone();
    Ok(r)
}

pub fn test_h10_asymptotic(sample: &BivariateSample, config: TailConfig) -> Result<TestReport> {
    h10_asymptotic(&SampleAnalysis::new(sample, config)?)
}

pub fn test_h20_split(sample: &BivariateSample, config: TailConfig) -> Result<TestReport> {
    Ok(h20_split(&SplitAnalysis::new(sample, config, false)?, config))
}

pub fn test_h30_split(sample: &BivariateSample, config: TailConfig) -> Result<TestReport> {
    Ok(h30_split(&SplitAnalysis::new(sample, config, true)?, config))
}

pub fn test_h40_asymptotic(sample: &BivariateSample, config: TailConfig) -> Result<TestReport> {
    h40_asymptotic(&SampleAnalysis::new(sample, config)?)
}

/// Critical value used by the bootstrap H30 test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H30Threshold {
    /// `1 - α/2`.
    #[default]
    Approximate,
    /// Bootstrap quantile of the replicate criteria.
    Exact,
}

/// Settings of the bootstrap tests.
#[derive(Debug, Clone)]
pub struct BootstrapSettings {
    pub b: usize,
    pub spec: MultiplierSpec,
    pub seed: u64,
    pub h30_threshold: H30Threshold,
}

impl BootstrapSettings {
    pub fn new(b: usize, seed: u64) -> Self {
        Self {
            b,
            spec: MultiplierSpec::Exponential,
            seed,
            h30_threshold: H30Threshold::Approximate,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Needs {
    gamma: bool,
    scedasis: bool,
    dependence: bool,
}

impl Needs {
    fn for_hypotheses(hs: &[Hypothesis]) -> Self {
        let mut n = Self::default();
        for h in hs {
            match h {
                Hypothesis::H10 => n.gamma = true,
                Hypothesis::H20 => n.scedasis = true,
                Hypothesis::H30 => {
                    n.gamma = true;
                    n.scedasis = true;
                }
                Hypothesis::H40 => {
                    n.scedasis = true;
                    n.dependence = true;
                }
            }
        }
        n
    }
}

#[derive(Debug, Clone, Copy)]
struct ReplicateStats {
    t1: f64,
    ks1: f64,
    /// `None` when the replicate has no weighted joint exceedance.
    ks2: Option<f64>,
}

/// Bootstrap replicate ensembles of `T1`, `KS1` and `KS2` from one set of
/// multiplier draws.
#[derive(Debug)]
struct BootstrapRun {
    t1: Option<BootstrapEnsemble>,
    ks1: Option<BootstrapEnsemble>,
    ks2: Option<Result<BootstrapEnsemble>>,
    dropped: usize,
}

fn bootstrap_run(a: &SampleAnalysis, needs: Needs, settings: &BootstrapSettings) -> Result<BootstrapRun> {
    let spec = &settings.spec;
    spec.validate()?;
    let prepared = PreparedSample::new(a.sample, a.config)?;
    let scale = (spec.mu() / spec.sigma()).powi(2) * a.config.k as f64;
    let d = a.log_gamma_diff();
    let m1 = a.c1.exceedance_indices().len();
    let m2 = a.c2.exceedance_indices().len();
    let cross = if needs.dependence { a.cross_coefficient()? } else { 0.0 };
    let r11 = a.r11;

    let stats = run_replicates(a.sample.len(), settings.b, spec, settings.seed, |_, w| {
        let mut out = ReplicateStats {
            t1: 0.0,
            ks1: 0.0,
            ks2: None,
        };
        if needs.gamma {
            let g1 = prepared.xs.hill(w, m1, 0.0, 1.0)?;
            let g2 = prepared.ys.hill(w, m2, 0.0, 1.0)?;
            out.t1 = scale * ((g1.ln() - g2.ln()) - d).powi(2);
        }
        if needs.scedasis || needs.dependence {
            let c1b = prepared.xs.scedasis_curve(w, a.config.k1)?;
            let c2b = prepared.ys.scedasis_curve(w, a.config.k2)?;
            if needs.scedasis {
                out.ks1 = scale
                    * StepFunction::sup_combined(&[&c1b, &c2b, &a.c1.curve, &a.c2.curve], |v| {
                        (v[0] - v[1] - v[2] + v[3]).powi(2)
                    })
                    .1;
            }
            if needs.dependence {
                let rb = prepared.quasi_copula_curve(w, 1.0, 1.0)?;
                let r11b = rb.final_value();
                if r11b > 0.0 {
                    let sup =
                        StepFunction::sup_combined(&[&c1b, &c2b, &rb, &a.c1.curve, &a.c2.curve, &a.r_curve], |v| {
                            (ks2_integrand(v[0], v[1], v[2], r11b, cross) - ks2_integrand(v[3], v[4], v[5], r11, cross))
                                .powi(2)
                        })
                        .1;
                    out.ks2 = Some(scale * sup);
                }
            }
        }
        Ok(out)
    })?;

    let ensemble = |f: &dyn Fn(&ReplicateStats) -> f64| {
        BootstrapEnsemble::new(stats.iter().map(f).collect(), spec.clone(), settings.seed)
    };
    let t1 = needs.gamma.then(|| ensemble(&|s| s.t1)).transpose()?;
    let ks1 = needs.scedasis.then(|| ensemble(&|s| s.ks1)).transpose()?;
    let kept: Vec<f64> = stats.iter().filter_map(|s| s.ks2).collect();
    let dropped = if needs.dependence { stats.len() - kept.len() } else { 0 };
    let ks2 = needs.dependence.then(|| {
        if dropped as f64 > MAX_DROPPED_SHARE * stats.len() as f64 {
            Err(Error::Degenerate(format!(
                "{dropped} of {} bootstrap replicates had no weighted joint exceedance",
                stats.len()
            )))
        } else {
            BootstrapEnsemble::new(kept, spec.clone(), settings.seed)
        }
    });
    Ok(BootstrapRun { t1, ks1, ks2, dropped })
}

fn h10_bootstrap(a: &SampleAnalysis, run: &BootstrapRun, settings: &BootstrapSettings) -> TestReport {
    let e = run.t1.as_ref().expect("T1 replicates computed");
    let stat = a.scaled_t1();
    let mut r = TestReport::new(
        Hypothesis::H10,
        Method::Bootstrap,
        stat,
        1.0 - e.ecdf_below(stat),
        DecisionRule::PValueAtMost,
    )
    .component("gamma1", a.gamma1.gamma_hat)
    .component("gamma2", a.gamma2.gamma_hat);
    r.normalizers.delta1 = Some(a.delta1);
    r.warnings = a.warnings.clone();
    r.bootstrap = Some(BootstrapInfo::new(settings.b, &settings.spec, settings.seed));
    r
}

fn h20_bootstrap(a: &SampleAnalysis, run: &BootstrapRun, settings: &BootstrapSettings) -> TestReport {
    let e = run.ks1.as_ref().expect("KS1 replicates computed");
    let stat = a.scaled_ks1();
    let mut r = TestReport::new(
        Hypothesis::H20,
        Method::Bootstrap,
        stat,
        1.0 - e.ecdf_below(stat),
        DecisionRule::PValueAtMost,
    );
    r.normalizers.delta1 = Some(a.delta1);
    r.warnings = a.warnings.clone();
    r.bootstrap = Some(BootstrapInfo::new(settings.b, &settings.spec, settings.seed));
    r
}

fn h30_bootstrap(a: &SampleAnalysis, run: &BootstrapRun, settings: &BootstrapSettings) -> TestReport {
    let et = run.t1.as_ref().expect("T1 replicates computed");
    let ec = run.ks1.as_ref().expect("KS1 replicates computed");
    let f_gamma = et.ecdf_below(a.scaled_t1());
    let f_c = ec.ecdf_below(a.scaled_ks1());
    let crit = f_gamma.max(f_c);
    let mut r = match settings.h30_threshold {
        H30Threshold::Approximate => TestReport::new(
            Hypothesis::H30,
            Method::Bootstrap,
            crit,
            (2.0 * (1.0 - crit)).min(1.0),
            DecisionRule::CriterionHalf,
        ),
        H30Threshold::Exact => {
            let reps: Vec<f64> = et
                .replicates
                .iter()
                .zip(&ec.replicates)
                .map(|(t, c)| et.ecdf_below(*t).max(ec.ecdf_below(*c)))
                .collect();
            let joint =
                BootstrapEnsemble::new(reps, settings.spec.clone(), settings.seed).expect("criteria are finite");
            TestReport::new(
                Hypothesis::H30,
                Method::Bootstrap,
                crit,
                1.0 - joint.ecdf_below(crit),
                DecisionRule::CriterionQuantile,
            )
        }
    };
    r = r
        .component("gamma_cdf", f_gamma)
        .component("scedasis_cdf", f_c)
        .component("scaled_t1", a.scaled_t1())
        .component("scaled_ks1", a.scaled_ks1());
    r.normalizers.delta1 = Some(a.delta1);
    r.warnings = a.warnings.clone();
    r.bootstrap = Some(BootstrapInfo::new(settings.b, &settings.spec, settings.seed));
    r
}

fn h40_bootstrap(a: &SampleAnalysis, run: &BootstrapRun, settings: &BootstrapSettings) -> Result<TestReport> {
    let d3 = a.delta3()?;
    let e1 = run.ks1.as_ref().expect("KS1 replicates computed");
    let e2 = match run.ks2.as_ref().expect("KS2 replicates computed") {
        Ok(e) => e,
        Err(e) => return Err(Error::Degenerate(e.to_string())),
    };
    let s1 = a.scaled_ks1();
    let s2 = a.scaled_ks2()?;
    let f1 = e1.ecdf_below(s1);
    let f2 = e2.ecdf_below(s2);
    let crit = f1.max(f2);
    let mut r = TestReport::new(
        Hypothesis::H40,
        Method::Bootstrap,
        crit,
        1.0 - crit * crit,
        DecisionRule::CriterionSqrt,
    )
    .component("scaled_ks1", s1)
    .component("ks1_cdf", f1)
    .component("scaled_ks2", s2)
    .component("ks2_cdf", f2)
    .component("r11", a.r11);
    r.normalizers = Normalizers {
        delta1: Some(a.delta1),
        delta2: None,
        delta3: Some(d3),
    };
    r.warnings = a.warnings.clone();
    let mut info = BootstrapInfo::new(settings.b, &settings.spec, settings.seed);
    info.dropped = run.dropped;
    if run.dropped > 0 {
        r.warnings.push(format!(
            "{} bootstrap replicates dropped: no weighted joint exceedance",
            run.dropped
        ));
    }
    r.bootstrap = Some(info);
    Ok(r)
}

fn check_bootstrap(settings: &BootstrapSettings) -> Result<()> {
    settings.spec.validate()?;
    if settings.b == 0 {
        return Err(Error::Validation(
            "number of bootstrap replicates must be positive".into(),
        ));
    }
    Ok(())
}

fn single_bootstrap(
    sample: &BivariateSample,
    config: TailConfig,
    settings: &BootstrapSettings,
    h: Hypothesis,
) -> Result<TestReport> {
    check_bootstrap(settings)?;
    let a = SampleAnalysis::new(sample, config)?;
    if h == Hypothesis::H40 {
        a.delta3()?;
    }
    let run = bootstrap_run(&a, Needs::for_hypotheses(&[h]), settings)?;
    match h {
        Hypothesis::H10 => Ok(h10_bootstrap(&a, &run, settings)),
        Hypothesis::H20 => Ok(h20_bootstrap(&a, &run, settings)),
        Hypothesis::H30 => Ok(h30_bootstrap(&a, &run, settings)),
        Hypothesis::H40 => h40_bootstrap(&a, &run, settings),
    }
}

pub fn test_h10_bootstrap(
    sample: &BivariateSample,
    config: TailConfig,
    b: usize,
    spec: &MultiplierSpec,
    seed: u64,
) -> Result<TestReport> {
    let s = BootstrapSettings {
        spec: spec.clone(),
        ..BootstrapSettings::new(b, seed)
    };
    single_bootstrap(sample, config, &s, Hypothesis::H10)
}

pub fn test_h20_bootstrap(
    sample: &BivariateSample,
    config: TailConfig,
    b: usize,
    spec: &MultiplierSpec,
    seed: u64,
) -> Result<TestReport> {
    let s = BootstrapSettings {
        spec: spec.clone(),
        ..BootstrapSettings::new(b, seed)
    };
    single_bootstrap(sample, config, &s, Hypothesis::H20)
}

pub fn test_h30_bootstrap(
    sample: &BivariateSample,
    config: TailConfig,
    b: usize,
    spec: &MultiplierSpec,
    seed: u64,
) -> Result<TestReport> {
    let s = BootstrapSettings {
        spec: spec.clone(),
        ..BootstrapSettings::new(b, seed)
    };
    single_bootstrap(sample, config, &s, Hypothesis::H30)
}

/// Bootstrap H30 with an explicit choice of critical value.
pub fn test_h30_bootstrap_with(
    sample: &BivariateSample,
    config: TailConfig,
    settings: &BootstrapSettings,
) -> Result<TestReport> {
    single_bootstrap(sample, config, settings, Hypothesis::H30)
}

pub fn test_h40_bootstrap(
    sample: &BivariateSample,
    config: TailConfig,
    b: usize,
    spec: &MultiplierSpec,
    seed: u64,
) -> Result<TestReport> {
    let s = BootstrapSettings {
        spec: spec.clone(),
        ..BootstrapSettings::new(b, seed)
    };
    single_bootstrap(sample, config, &s, Hypothesis::H40)
}

/// Run several tests on one sample, sharing estimates and, for the bootstrap,
/// one set of multiplier draws. Failures are reported per hypothesis.
pub fn run_tests(
    sample: &BivariateSample,
    config: TailConfig,
    hypotheses: &[Hypothesis],
    method: Method,
    settings: Option<&BootstrapSettings>,
) -> Vec<(Hypothesis, Result<TestReport>)> {
    let fail_all = |e: &Error| -> Vec<(Hypothesis, Result<TestReport>)> {
        hypotheses.iter().map(|h| (*h, Err(e.duplicate()))).collect()
    };
    match method {
        Method::Asymptotic => {
            let needs_full = hypotheses
                .iter()
                .any(|h| matches!(h, Hypothesis::H10 | Hypothesis::H40));
            let needs_split = hypotheses
                .iter()
                .any(|h| matches!(h, Hypothesis::H20 | Hypothesis::H30));
            let full = needs_full.then(|| SampleAnalysis::new(sample, config));
            let split = needs_split.then(|| SplitAnalysis::new(sample, config, hypotheses.contains(&Hypothesis::H30)));
            hypotheses
                .iter()
                .map(|&h| {
                    let r = match h {
                        Hypothesis::H10 => shared(&full).and_then(h10_asymptotic),
                        Hypothesis::H40 => shared(&full).and_then(h40_asymptotic),
                        Hypothesis::H20 => shared(&split).map(|s| h20_split(s, config)),
                        Hypothesis::H30 => shared(&split).map(|s| h30_split(s, config)),
                    };
                    (h, r)
                })
                .collect()
        }
        Method::Bootstrap => {
            let Some(settings) = settings else {
                return fail_all(&Error::Config("bootstrap settings missing".into()));
            };
            if let Err(e) = check_bootstrap(settings) {
                return fail_all(&e);
            }
            let a = match SampleAnalysis::new(sample, config) {
                Ok(a) => a,
                Err(e) => return fail_all(&e),
            };
            let mut needs = Needs::for_hypotheses(hypotheses);
            if needs.dependence && a.delta3().is_err() {
                needs.dependence = false;
            }
            let run = match bootstrap_run(&a, needs, settings) {
                Ok(r) => r,
                Err(e) => return fail_all(&e),
            };
            hypotheses
                .iter()
                .map(|&h| {
                    let r = match h {
                        Hypothesis::H10 => Ok(h10_bootstrap(&a, &run, settings)),
                        Hypothesis::H20 => Ok(h20_bootstrap(&a, &run, settings)),
                        Hypothesis::H30 => Ok(h30_bootstrap(&a, &run, settings)),
                        Hypothesis::H40 => match a.delta3() {
                            Ok(_) => h40_bootstrap(&a, &run, settings),
                            Err(e) => Err(e),
                        },
                    };
                    (h, r)
                })
                .collect()
        }
    }
}

fn shared<T>(r: &Option<Result<T>>) -> Result<&T> {
    match r.as_ref().expect("analysis computed when needed") {
        Ok(v) => Ok(v),
        Err(e) => Err(e.duplicate()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::MultiplierSpec;
    use approx::assert_relative_eq;

    fn pseudo_sample(n: usize, seed: u64) -> BivariateSample {
        // deterministic heavy-tailed values with some shared extremes
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let u = next();
            let v = if next() < 0.5 { u } else { next() };
            xs.push(1.0 / (1.0 - u));
            ys.push(1.0 / (1.0 - v));
        }
        BivariateSample::new(xs, ys).unwrap()
    }

    #[test]
    fn identical_series_give_zero_h10() {
        let s = pseudo_sample(400, 1);
        let same = BivariateSample::new(s.xs().to_vec(), s.xs().to_vec()).unwrap();
        let r = test_h10_asymptotic(&same, TailConfig::uniform(40).unwrap()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.rejects(0.1));
        let b = test_h20_bootstrap(
            &same,
            TailConfig::uniform(40).unwrap(),
            50,
            &MultiplierSpec::Exponential,
            3,
        )
        .unwrap();
        assert_eq!(b.statistic, 0.0);
        assert!(!b.rejects(0.1));
    }

    #[test]
    fn h10_scale_invariant() {
        let s = pseudo_sample(500, 2);
        let cfg = TailConfig::new(50, 50, 40).unwrap();
        let a = test_h10_asymptotic(&s, cfg).unwrap();
        let b = test_h10_asymptotic(&s.rescaled(3.5, 0.25).unwrap(), cfg).unwrap();
        assert_relative_eq!(a.statistic, b.statistic, epsilon = 1e-10);
    }

    #[test]
    fn rules_are_nested_in_alpha() {
        let s = pseudo_sample(600, 5);
        let cfg = TailConfig::uniform(60).unwrap();
        let settings = BootstrapSettings::new(100, 8);
        for method in [Method::Asymptotic, Method::Bootstrap] {
            for (h, r) in run_tests(&s, cfg, &Hypothesis::ALL, method, Some(&settings)) {
                let r = r.unwrap_or_else(|e| panic!("{h} {method}: {e}"));
                assert!((0.0..=1.0).contains(&r.p_value));
                for w in [0.01, 0.05, 0.1, 0.2].windows(2) {
                    assert!(!r.rejects(w[0]) || r.rejects(w[1]));
                }
            }
        }
    }

    #[test]
    fn shared_run_matches_single_tests() {
        let s = pseudo_sample(600, 9);
        let cfg = TailConfig::new(60, 60, 50).unwrap();
        let settings = BootstrapSettings::new(60, 4);
        let all = run_tests(&s, cfg, &Hypothesis::ALL, Method::Bootstrap, Some(&settings));
        let spec = MultiplierSpec::Exponential;
        let singles = [
            test_h10_bootstrap(&s, cfg, 60, &spec, 4).unwrap(),
            test_h20_bootstrap(&s, cfg, 60, &spec, 4).unwrap(),
            test_h30_bootstrap(&s, cfg, 60, &spec, 4).unwrap(),
            test_h40_bootstrap(&s, cfg, 60, &spec, 4).unwrap(),
        ];
        for ((_, r), single) in all.iter().zip(&singles) {
            assert_eq!(r.as_ref().unwrap(), single);
        }
        let asym = run_tests(&s, cfg, &Hypothesis::ALL, Method::Asymptotic, None);
        assert_eq!(asym[0].1.as_ref().unwrap(), &test_h10_asymptotic(&s, cfg).unwrap());
        assert_eq!(asym[1].1.as_ref().unwrap(), &test_h20_split(&s, cfg).unwrap());
        assert_eq!(asym[2].1.as_ref().unwrap(), &test_h30_split(&s, cfg).unwrap());
        assert_eq!(asym[3].1.as_ref().unwrap(), &test_h40_asymptotic(&s, cfg).unwrap());
    }

    #[test]
    fn h40_cross_term_vanishes_for_equal_orders() {
        let s = pseudo_sample(400, 4);
        let a = SampleAnalysis::new(&s, TailConfig::uniform(40).unwrap()).unwrap();
        assert_eq!(a.cross_coefficient().unwrap(), 0.0);
    }

    #[test]
    fn h40_needs_joint_exceedances() {
        // x large where y small and vice versa: no joint exceedances
        let n = 100;
        let xs: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let ys: Vec<f64> = (1..=n).map(|i| (n + 1 - i) as f64).collect();
        let s = BivariateSample::new(xs, ys).unwrap();
        let cfg = TailConfig::uniform(10).unwrap();
        assert!(matches!(test_h40_asymptotic(&s, cfg), Err(Error::Degenerate(_))));
        assert!(matches!(
            test_h40_bootstrap(&s, cfg, 20, &MultiplierSpec::Exponential, 1),
            Err(Error::Degenerate(_))
        ));
        assert_eq!(Error::Degenerate(String::new()).exit_code(), 3);
    }

    #[test]
    fn degenerate_multipliers_rejected() {
        let s = pseudo_sample(200, 3);
        let ones = MultiplierSpec::custom(1.0, 0.0, |_| 1.0);
        assert!(matches!(
            test_h10_bootstrap(&s, TailConfig::uniform(20).unwrap(), 10, &ones, 1),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn split_uses_even_x_and_odd_y() {
        let xs: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let ys: Vec<f64> = (1..=9).map(|i| 10.0 * i as f64).collect();
        let s = BivariateSample::new(xs, ys).unwrap();
        let sp = SplitSample::new(&s, TailConfig::uniform(3).unwrap()).unwrap();
        assert_eq!(sp.xs_even, vec![2.0, 4.0, 6.0, 8.0]);
        assert_eq!(sp.ys_odd, vec![10.0, 30.0, 50.0, 70.0]);
        assert_eq!(sp.k1_half, 2);
        assert_eq!(sp.warnings.len(), 1);
        assert_eq!(half_order(201), 101);
        assert_eq!(half_order(3), 2);
        let cx = sp.scedasis_x().unwrap();
        let cy = sp.scedasis_y().unwrap();
        assert_eq!(cx.jump_points(), &[6.0 / 8.0, 1.0]);
        assert_eq!(cy.jump_points(), &[5.0 / 8.0, 7.0 / 8.0]);
        assert_eq!(cx.values(), &[0.5, 1.0]);
    }

    #[test]
    fn decision_rules() {
        let r = TestReport::new(
            Hypothesis::H30,
            Method::Asymptotic,
            0.975,
            1.0 - 0.975f64.powi(2),
            DecisionRule::CriterionSqrt,
        );
        assert!(r.rejects(0.05));
        assert!(!r.rejects(0.04));
        assert_eq!(r.rejects(0.05), r.p_value <= 0.05);
        let b = TestReport::new(
            Hypothesis::H10,
            Method::Bootstrap,
            1.0,
            1.0 - 190.0 / 200.0,
            DecisionRule::PValueAtMost,
        );
        assert!(b.rejects(0.05));
        let h = TestReport::new(
            Hypothesis::H30,
            Method::Bootstrap,
            0.975,
            0.05,
            DecisionRule::CriterionHalf,
        );
        assert!(h.rejects(0.05));
        assert!(!h.rejects(0.049));
    }

    #[test]
    fn report_round_trips_through_json() {
        let s = pseudo_sample(300, 7);
        let r = test_h40_asymptotic(&s, TailConfig::new(30, 30, 25).unwrap()).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: TestReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
