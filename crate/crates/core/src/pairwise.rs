//! All four tests on every unordered pair of a set of return series.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{hill, tail_dependence_diagnostic};
use crate::hypothesis::{check_alphas, run_tests, BootstrapSettings, Hypothesis, Method, TestReport, DEFAULT_ALPHAS};
use crate::io::{align_pair_with, fmt_f64, ReturnSeries, DEFAULT_MIN_OVERLAP};
use crate::rng::{derive_seed, DOMAIN_PAIRS};
use crate::sample::TailConfig;

/// Share of the sample used as intermediate order when none is given.
pub const DEFAULT_K_FRACTION: f64 = 0.08;
pub const DEFAULT_PAIRWISE_B: usize = 500;

#[derive(Debug, Clone)]
pub struct PairwiseConfig {
    /// Fixed order for every series and pair; otherwise `⌊k_fraction · n⌋`.
    pub k: Option<usize>,
    pub k_fraction: f64,
    pub method: Method,
    pub bootstrap: BootstrapSettings,
    pub alphas: Vec<f64>,
    pub min_overlap: usize,
}

impl PairwiseConfig {
    pub fn new(method: Method, b: usize, seed: u64) -> Self {
        Self {
            k: None,
            k_fraction: DEFAULT_K_FRACTION,
            method,
            bootstrap: BootstrapSettings::new(b, seed),
            alphas: DEFAULT_ALPHAS.to_vec(),
            min_overlap: DEFAULT_MIN_OVERLAP,
        }
    }

    fn order(&self, n: usize) -> usize {
        self.k.unwrap_or_else(|| (self.k_fraction * n as f64).floor() as usize)
    }
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        Self::new(Method::Bootstrap, DEFAULT_PAIRWISE_B, 0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesSummary {
    pub symbol: String,
    pub n: usize,
    pub k: usize,
    pub gamma_hat: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairEntry {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub k: usize,
    pub k1: usize,
    pub k2: usize,
    /// `k R̂'(1,1) / sqrt(k1 k2)`.
    pub diagnostic: Option<f64>,
    pub reports: Vec<TestReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub method: Method,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub seed: u64,
    pub k: Option<usize>,
    pub k_fraction: f64,
    pub alphas: Vec<f64>,
    pub min_overlap: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseReport {
    pub symbols: Vec<String>,
    /// Symmetric p-value matrices; the diagonal and failed pairs are `null`.
    pub p_matrix: BTreeMap<Hypothesis, Vec<Vec<Option<f64>>>>,
    pub diagnostic_matrix: Vec<Vec<Option<f64>>>,
    pub per_series: Vec<SeriesSummary>,
    pub pairs: Vec<PairEntry>,
    pub config: ConfigEcho,
    pub warnings: Vec<String>,
}

impl PairwiseReport {
    pub fn p_value(&self, hypothesis: Hypothesis, i: usize, j: usize) -> Option<f64> {
        self.p_matrix.get(&hypothesis)?.get(i)?.get(j).copied().flatten()
    }

    /// Number of off-diagonal entries above the diagonal that carry a p-value.
    pub fn filled_pairs(&self, hypothesis: Hypothesis) -> usize {
        let n = self.symbols.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.p_value(hypothesis, i, j).is_some())
            .count()
    }

    pub fn matrix_csv(&self, hypothesis: Hypothesis) -> String {
        let empty = Vec::new();
        matrix_to_csv(&self.symbols, self.p_matrix.get(&hypothesis).unwrap_or(&empty))
    }

    pub fn diagnostic_csv(&self) -> String {
        matrix_to_csv(&self.symbols, &self.diagnostic_matrix)
    }
}

fn matrix_to_csv(symbols: &[String], m: &[Vec<Option<f64>>]) -> String {
    let mut out = String::from("symbol");
    for s in symbols {
        out.push(',');
        out.push_str(s);
    }
    out.push('\n');
    for (i, s) in symbols.iter().enumerate() {
        out.push_str(s);
        for j in 0..symbols.len() {
            out.push(',');
            match m.get(i).and_then(|r| r.get(j)).copied().flatten() {
                Some(v) => out.push_str(&fmt_f64(v)),
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    out
}

struct PairOutcome {
    entry: Option<PairEntry>,
    warnings: Vec<String>,
}

fn analyse_pair(a: &ReturnSeries, b: &ReturnSeries, index: usize, config: &PairwiseConfig) -> PairOutcome {
    let label = format!("{}/{}", a.symbol, b.symbol);
    let fail = |e: Error| PairOutcome {
        entry: None,
        warnings: vec![format!("{label}: {e}")],
    };
    let sample = match align_pair_with(a, b, config.min_overlap) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let n = sample.len();
    let tail = match TailConfig::uniform(config.order(n)) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let mut warnings = Vec::new();
    match tail.validate(n) {
        Ok(w) => warnings.extend(w.into_iter().map(|w| format!("{label}: {w}"))),
        Err(e) => return fail(e),
    }
    let settings = BootstrapSettings {
        seed: derive_seed(config.bootstrap.seed, DOMAIN_PAIRS, index as u64),
        ..config.bootstrap.clone()
    };
    let diagnostic = match tail_dependence_diagnostic(&sample, tail) {
        Ok(d) => Some(d),
        Err(e) => {
            warnings.push(format!("{label}: diagnostic: {e}"));
            None
        }
    };
    let mut reports = Vec::new();
    for (h, r) in run_tests(&sample, tail, &Hypothesis::ALL, config.method, Some(&settings)) {
        match r {
            Ok(mut rep) => {
                rep.set_alphas(&config.alphas);
                reports.push(rep);
            }
            Err(e) => warnings.push(format!("{label}: {h}: {e}")),
        }
    }
    PairOutcome {
        entry: Some(PairEntry {
            a: a.symbol.clone(),
            b: b.symbol.clone(),
            n,
            k: tail.k,
            k1: tail.k1,
            k2: tail.k2,
            diagnostic,
            reports,
        }),
        warnings,
    }
}

/// Test every unordered pair `(i, j)`, `i < j`, with the losses of series `i`
/// as first margin. Pairs run in parallel; a failing pair becomes a warning.
pub fn run_pairwise_analysis(series: &[ReturnSeries], config: &PairwiseConfig) -> Result<PairwiseReport> {
    if series.len() < 2 {
        return Err(Error::Validation(format!(
            "pairwise analysis needs at least 2 series, got {}",
            series.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in series {
        if !seen.insert(s.symbol.as_str()) {
            return Err(Error::Validation(format!("duplicate symbol '{}'", s.symbol)));
        }
    }
    check_alphas(&config.alphas)?;
    if !(config.k_fraction > 0.0 && config.k_fraction < 1.0) {
        return Err(Error::Config(format!(
            "k fraction must lie in (0, 1), got {}",
            config.k_fraction
        )));
    }

    let m = series.len();
    let mut warnings = Vec::new();
    let per_series: Vec<SeriesSummary> = series
        .iter()
        .map(|s| {
            let k = config.order(s.len());
            let gamma_hat = match hill(&s.losses, k) {
                Ok(h) => Some(h.gamma_hat),
                Err(e) => {
                    warnings.push(format!("{}: Hill estimate: {e}", s.symbol));
                    None
                }
            };
            SeriesSummary {
                symbol: s.symbol.clone(),
                n: s.len(),
                k,
                gamma_hat,
            }
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let outcomes: Vec<PairOutcome> = pairs
        .par_iter()
        .enumerate()
        .map(|(idx, &(i, j))| analyse_pair(&series[i], &series[j], idx, config))
        .collect();

    let mut p_matrix: BTreeMap<Hypothesis, Vec<Vec<Option<f64>>>> =
        Hypothesis::ALL.iter().map(|&h| (h, vec![vec![None; m]; m])).collect();
    let mut diagnostic_matrix = vec![vec![None; m]; m];
    let mut entries = Vec::new();
    for (&(i, j), outcome) in pairs.iter().zip(outcomes) {
        warnings.extend(outcome.warnings);
        let Some(entry) = outcome.entry else { continue };
        diagnostic_matrix[i][j] = entry.diagnostic;
        diagnostic_matrix[j][i] = entry.diagnostic;
        for rep in &entry.reports {
            let mat = p_matrix.get_mut(&rep.hypothesis).expect("all hypotheses present");
            mat[i][j] = Some(rep.p_value);
            mat[j][i] = Some(rep.p_value);
        }
        entries.push(entry);
    }

    Ok(PairwiseReport {
        symbols: series.iter().map(|s| s.symbol.clone()).collect(),
        p_matrix,
        diagnostic_matrix,
        per_series,
        pairs: entries,
        config: ConfigEcho {
            method: config.method,
            b: (config.method == Method::Bootstrap).then_some(config.bootstrap.b),
            seed: config.bootstrap.seed,
            k: config.k,
            k_fraction: config.k_fraction,
            alphas: config.alphas.clone(),
            min_overlap: config.min_overlap,
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate_dgp, DgpSpec};
    use crate::io::daily_dates;

    fn as_series(symbol: &str, losses: &[f64]) -> ReturnSeries {
        let dates = daily_dates("2010-01-04", losses.len()).unwrap();
        ReturnSeries::new(symbol, dates, losses.iter().map(|l| -l).collect()).unwrap()
    }

    fn dgp_series(id: u8, rho: f64, n: usize, seed: u64) -> (ReturnSeries, ReturnSeries) {
        let s = simulate_dgp(&DgpSpec::from_id(id, rho).unwrap(), n, seed).unwrap();
        (
            as_series(&format!("d{id}x{seed}"), s.xs()),
            as_series(&format!("d{id}y{seed}"), s.ys()),
        )
    }

    #[test]
    fn identical_series_have_unit_p_values() {
        let (x, _) = dgp_series(1, 0.5, 1000, 3);
        let twin = ReturnSeries {
            symbol: "twin".into(),
            ..x.clone()
        };
        let config = PairwiseConfig::new(Method::Bootstrap, 100, 9);
        let r = run_pairwise_analysis(&[x, twin], &config).unwrap();
        assert_eq!(r.p_value(Hypothesis::H10, 0, 1), Some(1.0));
        assert_eq!(r.p_value(Hypothesis::H20, 1, 0), Some(1.0));
        assert_eq!(r.p_value(Hypothesis::H10, 0, 0), None);
    }

    #[test]
    fn matrices_are_symmetric_and_complete() {
        let mut all = Vec::new();
        for seed in 0..2 {
            let (x, y) = dgp_series(15, 0.0, 800, seed);
            all.push(x);
            all.push(y);
        }
        let config = PairwiseConfig::new(Method::Asymptotic, 0, 1);
        let r = run_pairwise_analysis(&all, &config).unwrap();
        assert_eq!(r.pairs.len(), 6);
        for h in Hypothesis::ALL {
            assert_eq!(r.filled_pairs(h), 6);
            for i in 0..4 {
                assert_eq!(r.p_value(h, i, i), None);
                for j in 0..4 {
                    assert_eq!(r.p_value(h, i, j), r.p_value(h, j, i));
                }
            }
        }
        assert_eq!(r.per_series[0].k, 64);
        let csv = r.matrix_csv(Hypothesis::H10);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().split(',').nth(1) == Some("NA"));
    }

    #[test]
    fn dependent_pair_diagnostic() {
        let (x, y) = dgp_series(1, 0.5, 5000, 11);
        let config = PairwiseConfig::new(Method::Asymptotic, 0, 1);
        let r = run_pairwise_analysis(&[x, y], &config).unwrap();
        let d = r.diagnostic_matrix[0][1].unwrap();
        assert!((0.3..=0.7).contains(&d), "diagnostic {d}");
    }

    #[test]
    fn failures_become_warnings() {
        let (x, _) = dgp_series(1, 0.5, 500, 1);
        let short = as_series("short", &[1.0, 2.0, 3.0]);
        let config = PairwiseConfig::new(Method::Asymptotic, 0, 1);
        let r = run_pairwise_analysis(&[x.clone(), short], &config).unwrap();
        assert!(r.pairs.is_empty());
        assert!(r.warnings.iter().any(|w| w.contains("share")));
        assert!(run_pairwise_analysis(std::slice::from_ref(&x), &config).is_err());
        assert!(run_pairwise_analysis(&[x.clone(), x], &config).is_err());
    }

    #[test]
    fn deterministic() {
        let (x, y) = dgp_series(2, 0.0, 600, 4);
        let config = PairwiseConfig::new(Method::Bootstrap, 50, 21);
        let a = crate::io::to_json(&run_pairwise_analysis(&[x.clone(), y.clone()], &config).unwrap()).unwrap();
        let b = crate::io::to_json(&run_pairwise_analysis(&[x, y], &config).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
