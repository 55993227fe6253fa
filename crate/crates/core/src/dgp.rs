//! Simulation of bivariate heteroscedastic samples with Fréchet-type
//! marginals and a t/independence copula mixture, and a Monte Carlo harness
//! for rejection frequencies.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{check_alphas, run_tests, BootstrapSettings, Hypothesis, Method};
use crate::reference::{MixtureProbabilityFunction, ScedasisFunction};
use crate::rng::{derive_seed, stream, DOMAIN_DATASET, DOMAIN_MIXTURE, DOMAIN_MULTIPLIERS};
use crate::sample::{fraction, BivariateSample, TailConfig};

/// Correlation of the t-copula when none is given.
pub const DEFAULT_RHO: f64 = 0.0;

type PairSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> (f64, f64) + Send + Sync>;

/// Tail-dependent component of the copula mixture.
#[derive(Clone)]
pub enum CopulaSpec {
    /// Student-t copula with one degree of freedom.
    TCopula { rho: f64 },
    /// Draws `(1 - u, 1 - v)`, survival probabilities in `(0, 1)`.
    Custom { label: String, sampler: PairSampler },
}

impl fmt::Debug for CopulaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TCopula { rho } => write!(f, "TCopula {{ df: 1, rho: {rho} }}"),
            Self::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// One data-generating process.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub gamma1: f64,
    pub gamma2: f64,
    pub c1: ScedasisFunction,
    pub c2: ScedasisFunction,
    pub h: MixtureProbabilityFunction,
    pub copula: CopulaSpec,
    pub id: Option<u8>,
}

/// Serializable description of a [`DgpSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSummary {
    pub id: Option<u8>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub c1: String,
    pub c2: String,
    pub h: String,
    pub copula: String,
    pub rho: Option<f64>,
}

impl DgpSpec {
    /// Rows 1..=18: nine `(γ1, γ2, c1, c2)` settings, odd ids with `h ≡ 1`,
    /// even ids with the tent mixture.
    pub fn from_id(id: u8, rho: f64) -> Result<Self> {
        if !(1..=18).contains(&id) {
            return Err(Error::Validation(format!("DGP id must lie in 1..=18, got {id}")));
        }
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::Validation(format!(
                "t-copula correlation must lie in (-1, 1), got {rho}"
            )));
        }
        let (g1, g2, s1, s2) = match id.div_ceil(2) {
            1 => (1.0, 1.0, 1, 1),
            2 => (2.0, 2.0, 2, 2),
            3 => (0.5, 0.5, 3, 3),
            4 => (1.0, 1.0, 1, 2),
            5 => (2.0, 2.0, 1, 3),
            6 => (0.5, 0.5, 2, 3),
            7 => (1.0, 2.0, 1, 1),
            8 => (1.0, 0.5, 2, 2),
            _ => (2.0, 0.5, 3, 3),
        };
        Ok(Self {
            gamma1: g1,
            gamma2: g2,
            c1: ScedasisFunction::builtin(s1).expect("builtin scedasis"),
            c2: ScedasisFunction::builtin(s2).expect("builtin scedasis"),
            h: MixtureProbabilityFunction::builtin(if id % 2 == 1 { 1 } else { 2 }).expect("builtin mixture"),
            copula: CopulaSpec::TCopula { rho },
            id: Some(id),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for g in [self.gamma1, self.gamma2] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Validation(format!(
                    "extreme value index must be positive, got {g}"
                )));
            }
        }
        self.c1.validate()?;
        self.c2.validate()?;
        self.h.validate_range()?;
        if let CopulaSpec::TCopula { rho } = self.copula {
            if !(rho > -1.0 && rho < 1.0) {
                return Err(Error::Validation(format!(
                    "t-copula correlation must lie in (-1, 1), got {rho}"
                )));
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> DgpSummary {
        let (copula, rho) = match &self.copula {
            CopulaSpec::TCopula { rho } => ("t(df=1)".to_string(), Some(*rho)),
            CopulaSpec::Custom { label, .. } => (label.clone(), None),
        };
        DgpSummary {
            id: self.id,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            c1: self.c1.label(),
            c2: self.c2.label(),
            h: self.h.label(),
            copula,
            rho,
        }
    }
}

/// Inverse of `F(t) = exp(-(t / c^γ)^{-1/γ})`: `t = c^γ (-ln u)^{-γ}`.
pub fn frechet_marginal_quantile(u: f64, gamma: f64, c: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {u}")));
    }
    if !(gamma > 0.0 && c > 0.0) {
        return Err(Error::Domain(format!("need gamma > 0 and c > 0, got ({gamma}, {c})")));
    }
    Ok(c.powf(gamma) * (-u.ln()).powf(-gamma))
}

/// Same quantile from the survival probability `p = 1 - u`, accurate for tiny `p`.
fn frechet_survival_quantile(p: f64, gamma: f64, c: f64) -> f64 {
    c.powf(gamma) * (-(-p).ln_1p()).powf(-gamma)
}

/// Survival probability of the standard Cauchy law, `1/2 - atan(t)/π`.
fn cauchy_survival(t: f64) -> f64 {
    if t > 0.0 {
        (1.0 / t).atan() / std::f64::consts::PI
    } else {
        0.5 - t.atan() / std::f64::consts::PI
    }
}

/// Survival probabilities `(1 - u, 1 - v)` of one t-copula (df = 1) draw.
pub fn sample_t_copula_survival(rho: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let scale = (1.0 - rho * rho).sqrt();
    loop {
        let z1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        let n3: f64 = rng.sample(StandardNormal);
        let z2 = rho * z1 + scale * n2;
        let root_s = n3.abs();
        let p = cauchy_survival(z1 / root_s);
        let q = cauchy_survival(z2 / root_s);
        if p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0 {
            return (p, q);
        }
    }
}

/// One t-copula (df = 1) draw `(u, v)` in `(0, 1)^2`.
pub fn sample_t_copula_pair(rho: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (p, q) = sample_t_copula_survival(rho, rng);
    (1.0 - p, 1.0 - q)
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Simulate `n` observations. Index `i` uses `c_j(i/n)` in its marginals and
/// the t-copula with probability `h(i/n)`, independent uniforms otherwise.
pub fn simulate_dgp(spec: &DgpSpec, n: usize, seed: u64) -> Result<BivariateSample> {
    if n < BivariateSample::MIN_LEN {
        return Err(Error::Validation(format!(
            "need at least {} observations, got {n}",
            BivariateSample::MIN_LEN
        )));
    }
    spec.validate()?;
    let mut data = stream(seed, DOMAIN_DATASET, 0);
    let mut mix = stream(seed, DOMAIN_MIXTURE, 0);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 1..=n {
        let t = fraction(i, n);
        let dependent = mix.random::<f64>() < spec.h.eval(t);
        let (p, q) = if dependent {
            match &spec.copula {
                CopulaSpec::TCopula { rho } => sample_t_copula_survival(*rho, &mut data),
                CopulaSpec::Custom { sampler, .. } => sampler(&mut data),
            }
        } else {
            (open_unit(&mut data), open_unit(&mut data))
        };
        xs.push(frechet_survival_quantile(p, spec.gamma1, spec.c1.eval(t)));
        ys.push(frechet_survival_quantile(q, spec.gamma2, spec.c2.eval(t)));
    }
    BivariateSample::new(xs, ys)
}

/// What a Monte Carlo study runs on each simulated dataset.
#[derive(Debug, Clone)]
pub struct StudyPlan {
    pub n: usize,
    pub config: TailConfig,
    pub hypotheses: Vec<Hypothesis>,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub reps: usize,
    /// Required when `methods` contains [`Method::Bootstrap`]; its seed is
    /// replaced by a per-dataset derived seed.
    pub bootstrap: Option<BootstrapSettings>,
    pub seed: u64,
}

impl StudyPlan {
    pub fn asymptotic(n: usize, config: TailConfig, reps: usize, seed: u64) -> Self {
        Self {
            n,
            config,
            hypotheses: Hypothesis::ALL.to_vec(),
            methods: vec![Method::Asymptotic],
            alphas: vec![0.05, 0.1],
            reps,
            bootstrap: None,
            seed,
        }
    }
}

/// Rejection frequency of one (hypothesis, method, α) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCell {
    pub hypothesis: Hypothesis,
    pub method: Method,
    pub alpha: f64,
    pub rejections: usize,
    /// Datasets on which the test produced a decision.
    pub valid: usize,
    pub failures: usize,
    pub frequency: f64,
    /// `1.96 sqrt(f (1 - f) / valid)`.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub dgp: DgpSummary,
    pub n: usize,
    pub k: usize,
    pub k1: usize,
    pub k2: usize,
    pub reps: usize,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub seed: u64,
    pub cells: Vec<RejectionCell>,
    /// Distinct failure messages with their counts.
    pub failures: Vec<(String, usize)>,
}

impl MonteCarloResult {
    pub fn cell(&self, hypothesis: Hypothesis, method: Method, alpha: f64) -> Option<&RejectionCell> {
        self.cells
            .iter()
            .find(|c| c.hypothesis == hypothesis && c.method == method && (c.alpha - alpha).abs() < 1e-12)
    }

    pub fn frequency(&self, hypothesis: Hypothesis, method: Method, alpha: f64) -> Option<f64> {
        self.cell(hypothesis, method, alpha).map(|c| c.frequency)
    }

    /// One row per cell.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("dgp,n,k,k1,k2,reps,hypothesis,method,alpha,rejections,valid,failures,frequency,half_width\n");
        let dgp = self.dgp.id.map_or_else(|| "custom".to_string(), |id| id.to_string());
        for c in &self.cells {
            out.push_str(&format!(
                "{dgp},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.n,
                self.k,
                self.k1,
                self.k2,
                self.reps,
                c.hypothesis,
                c.method,
                c.alpha,
                c.rejections,
                c.valid,
                c.failures,
                c.frequency,
                c.half_width
            ));
        }
        out
    }
}

/// `1.96 sqrt(f (1 - f) / reps)`.
pub fn binomial_half_width(f: f64, reps: usize) -> f64 {
    if reps == 0 {
        return f64::NAN;
    }
    1.96 * (f * (1.0 - f) / reps as f64).sqrt()
}

/// Seed of dataset `r` within a study.
pub fn dataset_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, DOMAIN_DATASET, r as u64)
}

/// Bootstrap seed of dataset `r` within a study.
pub fn dataset_bootstrap_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, DOMAIN_MULTIPLIERS, r as u64)
}

type Outcome = std::result::Result<Vec<bool>, String>;

/// Simulate `plan.reps` datasets in parallel and tabulate rejections.
pub fn run_rejection_study(spec: &DgpSpec, plan: &StudyPlan) -> Result<MonteCarloResult> {
    if plan.reps < 30 {
        return Err(Error::Validation(format!(
            "a study needs at least 30 repetitions, got {}",
            plan.reps
        )));
    }
    if plan.hypotheses.is_empty() || plan.methods.is_empty() || plan.alphas.is_empty() {
        return Err(Error::Validation("study needs hypotheses, methods and levels".into()));
    }
    check_alphas(&plan.alphas)?;
    spec.validate()?;
    plan.config.validate(plan.n)?;
    if plan.methods.contains(&Method::Bootstrap) && plan.bootstrap.is_none() {
        return Err(Error::Config("bootstrap study needs bootstrap settings".into()));
    }

    // outcomes[r][method][hypothesis] = per-alpha decisions or failure message
    let outcomes: Vec<Vec<Vec<Outcome>>> = (0..plan.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<Outcome>>> {
            let sample = simulate_dgp(spec, plan.n, dataset_seed(plan.seed, r))?;
            let settings = plan.bootstrap.as_ref().map(|s| BootstrapSettings {
                seed: dataset_bootstrap_seed(plan.seed, r),
                ..s.clone()
            });
            Ok(plan
                .methods
                .iter()
                .map(|&m| {
                    run_tests(&sample, plan.config, &plan.hypotheses, m, settings.as_ref())
                        .into_iter()
                        .map(|(_, res)| match res {
                            Ok(rep) => Ok(plan.alphas.iter().map(|&a| rep.rejects(a)).collect()),
                            Err(e) => Err(e.to_string()),
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut failures: Vec<(String, usize)> = Vec::new();
    for (mi, &method) in plan.methods.iter().enumerate() {
        for (hi, &hypothesis) in plan.hypotheses.iter().enumerate() {
            for (ai, &alpha) in plan.alphas.iter().enumerate() {
                let mut rejections = 0;
                let mut valid = 0;
                for o in &outcomes {
                    if let Ok(d) = &o[mi][hi] {
                        valid += 1;
                        rejections += d[ai] as usize;
                    }
                }
                let frequency = if valid > 0 {
                    rejections as f64 / valid as f64
                } else {
                    f64::NAN
                };
                cells.push(RejectionCell {
                    hypothesis,
                    method,
                    alpha,
                    rejections,
                    valid,
                    failures: plan.reps - valid,
                    frequency,
                    half_width: binomial_half_width(frequency, valid),
                });
            }
            for o in &outcomes {
                if let Err(msg) = &o[mi][hi] {
                    let key = format!("{hypothesis} {method}: {msg}");
                    match failures.iter_mut().find(|(m, _)| *m == key) {
                        Some((_, c)) => *c += 1,
                        None => failures.push((key, 1)),
                    }
                }
            }
        }
    }
    Ok(MonteCarloResult {
        dgp: spec.summary(),
        n: plan.n,
        k: plan.config.k,
        k1: plan.config.k1,
        k2: plan.config.k2,
        reps: plan.reps,
        b: plan
            .methods
            .contains(&Method::Bootstrap)
            .then(|| plan.bootstrap.as_ref().map(|s| s.b))
            .flatten(),
        seed: plan.seed,
        cells,
        failures,
    })
}
