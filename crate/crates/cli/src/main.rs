use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hetex::dgp::{run_rejection_study, simulate_dgp, DgpSpec, StudyPlan, DEFAULT_RHO};
use hetex::estimators::QuasiTailCopula;
use hetex::hypothesis::{run_tests, BootstrapSettings, Hypothesis, Method, DEFAULT_ALPHAS};
use hetex::io::{
    daily_dates, load_returns_dir, read_sample_csv, to_json, write_atomic, write_returns_csv, write_sample_csv,
    ColumnSpec, ReturnSeries, DEFAULT_MIN_OVERLAP,
};
use hetex::pairwise::{run_pairwise_analysis, PairwiseConfig, DEFAULT_K_FRACTION, DEFAULT_PAIRWISE_B};
use hetex::{
    estimate_integrated_scedasis, hill, tail_dependence_diagnostic, Error, HillEstimate, Result, StepFunction,
    TailConfig,
};

#[derive(Parser)]
#[command(
    name = "hetex",
    version,
    about = "Tail index and scedasis tests for bivariate heteroscedastic extremes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one of the 18 built-in data-generating processes.
    Simulate(SimulateArgs),
    /// Hill estimates, scedasis curves and quasi-tail copula values of a sample.
    Estimate(EstimateArgs),
    /// Run hypothesis tests on a sample.
    Test(TestArgs),
    /// Monte Carlo rejection frequencies for a built-in process.
    Study(StudyArgs),
    /// Test every pair of return series in a directory.
    Pairwise(PairwiseArgs),
}

#[derive(Args)]
struct OrderArgs {
    /// Sets k, k1 and k2 unless those are given separately.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
}

impl OrderArgs {
    /// Missing orders default to `⌊0.08 n⌋`, and `k` to `min(k1, k2)`.
    fn resolve(&self, n: usize) -> Result<TailConfig> {
        let fallback = || (DEFAULT_K_FRACTION * n as f64).floor() as usize;
        let k1 = self.k1.or(self.k).unwrap_or_else(fallback);
        let k2 = self.k2.or(self.k).unwrap_or_else(fallback);
        let k = self.k.unwrap_or(k1.min(k2));
        TailConfig::new(k, k1, k2)
    }
}

#[derive(Args)]
struct BootArgs {
    #[arg(long, default_value = "asymptotic")]
    method: Method,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 500)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Process id, 1 to 18.
    #[arg(long)]
    dgp: u8,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Correlation of the t-copula.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    /// Write the two margins as `date,return` files (returns are negated losses) into the `--out` directory.
    #[arg(long)]
    as_returns: bool,
    /// File stem prefix for `--as-returns`; defaults to `dgp<id>s<seed>`.
    #[arg(long)]
    prefix: Option<String>,
    #[arg(long, default_value = "2000-01-01")]
    start: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample file with columns i,x,y.
    sample: PathBuf,
    #[command(flatten)]
    orders: OrderArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Sample file with columns i,x,y.
    sample: PathBuf,
    /// Hypothesis to test (H10, H20, H30, H40); repeatable, all by default.
    #[arg(long = "hypothesis")]
    hypotheses: Vec<Hypothesis>,
    #[command(flatten)]
    orders: OrderArgs,
    #[command(flatten)]
    boot: BootArgs,
    /// Significance level; repeatable.
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    dgp: u8,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    /// Calibration method; repeatable, asymptotic by default.
    #[arg(long = "method")]
    methods: Vec<Method>,
    #[arg(long = "hypothesis")]
    hypotheses: Vec<Hypothesis>,
    #[command(flatten)]
    orders: OrderArgs,
    #[arg(long = "B", default_value_t = 200)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    /// Emit the full result as JSON instead of a CSV table.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PairwiseArgs {
    /// Directory of `date,return` or `date,price` files.
    dir: PathBuf,
    /// Read prices and convert them to simple returns.
    #[arg(long)]
    from_prices: bool,
    #[arg(long, default_value = "bootstrap")]
    method: Method,
    #[arg(long = "B", default_value_t = DEFAULT_PAIRWISE_B)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Common intermediate order; `⌊0.08 n⌋` per pair by default.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_MIN_OVERLAP)]
    min_overlap: usize,
    /// Output directory for report.json and the matrix files.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Test(a) => test(a),
        Command::Study(a) => study(a),
        Command::Pairwise(a) => pairwise(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn alphas_or_default(alphas: Vec<f64>) -> Vec<f64> {
    if alphas.is_empty() {
        DEFAULT_ALPHAS.to_vec()
    } else {
        alphas
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = DgpSpec::from_id(a.dgp, a.rho)?;
    let sample = simulate_dgp(&spec, a.n, a.seed)?;
    if !a.as_returns {
        return write_sample_csv(&a.out, &sample);
    }
    std::fs::create_dir_all(&a.out)?;
    let prefix = a.prefix.unwrap_or_else(|| format!("dgp{}s{}", a.dgp, a.seed));
    let dates = daily_dates(&a.start, a.n)?;
    for (suffix, losses) in [("x", sample.xs()), ("y", sample.ys())] {
        let symbol = format!("{prefix}{suffix}");
        let series = ReturnSeries::new(&symbol, dates.clone(), losses.iter().map(|l| -l).collect())?;
        write_returns_csv(&a.out.join(format!("{symbol}.csv")), &series)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CurveOutput {
    k_j: usize,
    threshold: f64,
    tie_warning: bool,
    curve: StepFunction,
}

#[derive(Serialize)]
struct GridPoint {
    x: f64,
    y: f64,
    value: f64,
}

#[derive(Serialize)]
struct EstimateOutput {
    n: usize,
    config: TailConfig,
    gamma1: HillEstimate,
    gamma2: HillEstimate,
    scedasis1: CurveOutput,
    scedasis2: CurveOutput,
    r11: f64,
    tail_dependence: f64,
    r_grid: Vec<GridPoint>,
    warnings: Vec<String>,
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let sample = read_sample_csv(&a.sample)?;
    let config = a.orders.resolve(sample.len())?;
    let warnings = config.validate(sample.len())?;
    let curve = |values: &[f64], k_j: usize| -> Result<CurveOutput> {
        let e = estimate_integrated_scedasis(values, k_j)?;
        Ok(CurveOutput {
            k_j,
            threshold: e.threshold,
            tie_warning: e.tie_warning,
            curve: e.curve,
        })
    };
    let q = QuasiTailCopula::new(&sample, config)?;
    let args = [0.5, 1.0, 2.0];
    let mut r_grid = Vec::new();
    for &x in &args {
        for &y in &args {
            r_grid.push(GridPoint {
                x,
                y,
                value: q.value(x, y, 0.0, 1.0)?,
            });
        }
    }
    let out = EstimateOutput {
        n: sample.len(),
        config,
        gamma1: hill(sample.xs(), config.k1)?,
        gamma2: hill(sample.ys(), config.k2)?,
        scedasis1: curve(sample.xs(), config.k1)?,
        scedasis2: curve(sample.ys(), config.k2)?,
        r11: q.r11()?,
        tail_dependence: tail_dependence_diagnostic(&sample, config)?,
        r_grid,
        warnings,
    };
    emit(a.out.as_deref(), &to_json(&out)?)
}

fn test(a: TestArgs) -> Result<()> {
    let sample = read_sample_csv(&a.sample)?;
    let config = a.orders.resolve(sample.len())?;
    config.validate(sample.len())?;
    let hypotheses = if a.hypotheses.is_empty() {
        Hypothesis::ALL.to_vec()
    } else {
        a.hypotheses
    };
    let alphas = alphas_or_default(a.alphas);
    hetex::hypothesis::check_alphas(&alphas)?;
    let settings = BootstrapSettings::new(a.boot.b, a.boot.seed);
    let mut reports = Vec::new();
    let mut first_error: Option<Error> = None;
    for (h, r) in run_tests(&sample, config, &hypotheses, a.boot.method, Some(&settings)) {
        match r {
            Ok(mut rep) => {
                rep.set_alphas(&alphas);
                reports.push(rep);
            }
            Err(e) => {
                eprintln!("{h}: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    if !reports.is_empty() {
        emit(a.out.as_deref(), &to_json(&reports)?)?;
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn study(a: StudyArgs) -> Result<()> {
    let spec = DgpSpec::from_id(a.dgp, a.rho)?;
    let config = a.orders.resolve(a.n)?;
    let mut plan = StudyPlan::asymptotic(a.n, config, a.reps, a.seed);
    if !a.methods.is_empty() {
        plan.methods = a.methods;
    }
    if !a.hypotheses.is_empty() {
        plan.hypotheses = a.hypotheses;
    }
    if !a.alphas.is_empty() {
        plan.alphas = a.alphas;
    }
    if plan.methods.contains(&Method::Bootstrap) {
        plan.bootstrap = Some(BootstrapSettings::new(a.b, a.seed));
    }
    let result = run_rejection_study(&spec, &plan)?;
    let text = if a.json { to_json(&result)? } else { result.to_csv() };
    emit(a.out.as_deref(), &text)
}

fn pairwise(a: PairwiseArgs) -> Result<()> {
    let columns = if a.from_prices {
        ColumnSpec::Prices
    } else {
        ColumnSpec::Auto
    };
    let series = load_returns_dir(&a.dir, columns)?;
    let mut config = PairwiseConfig::new(a.method, a.b, a.seed);
    config.k = a.k;
    config.alphas = alphas_or_default(a.alphas);
    config.min_overlap = a.min_overlap;
    let report = run_pairwise_analysis(&series, &config)?;
    std::fs::create_dir_all(&a.out)?;
    write_atomic(&a.out.join("report.json"), to_json(&report)?.as_bytes())?;
    for h in Hypothesis::ALL {
        write_atomic(&a.out.join(format!("p_{h}.csv")), report.matrix_csv(h).as_bytes())?;
    }
    write_atomic(&a.out.join("tail_dependence.csv"), report.diagnostic_csv().as_bytes())?;
    println!(
        "{} series, {} pairs analysed, {} warnings",
        report.symbols.len(),
        report.pairs.len(),
        report.warnings.len()
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
