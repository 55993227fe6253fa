//! Analytic reference models: scedasis and mixture-probability families, tail
//! copulas of known copulas, the theoretical quasi-tail copula by quadrature,
//! and the limiting covariance matrices under equal scedasis and `h ≡ 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Absolute tolerance used for every quadrature in this module.
pub const QUAD_TOL: f64 = 1e-8;
const QUAD_MAX_DEPTH: u32 = 16;

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Surface = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`,
/// refining at most `2^16` times along any branch.
pub fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, QUAD_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if !diff.is_finite() {
        return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
    }
    if diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical(format!(
            "adaptive Simpson did not converge on [{a}, {b}] (error estimate {:.3e}, tolerance {tol:.1e})",
            diff.abs() / 15.0
        )));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Integrate over `[a, b]`, splitting at the given kink locations.
pub fn integrate_piecewise<F>(f: &F, a: f64, b: f64, breakpoints: &[f64], tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|p| *p > a && *p < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_unstable_by(f64::total_cmp);
    cuts.dedup();
    let pieces = (cuts.len() - 1).max(1) as f64;
    cuts.windows(2)
        .map(|w| adaptive_simpson(f, w[0], w[1], tol / pieces))
        .sum()
}

/// Scedasis function `c(t)` on `[0, 1]`.
#[derive(Clone)]
pub enum ScedasisFunction {
    /// `c̃1 ≡ 1`.
    Constant,
    /// `c̃2`: rises linearly from 0.5 to 1.5 at `t = 0.5`, then falls back.
    Tent,
    /// `c̃3`: flat at 0.8 with a spike to 2.8 on `(0.4, 0.6)`.
    Spike,
    Custom {
        label: String,
        f: Curve,
        breakpoints: Vec<f64>,
    },
}

impl ScedasisFunction {
    pub fn custom<F>(label: impl Into<String>, f: F, breakpoints: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            label: label.into(),
            f: Arc::new(f),
            breakpoints,
        }
    }

    /// Built-in family by index 1, 2 or 3.
    pub fn builtin(index: u8) -> Option<Self> {
        match index {
            1 => Some(Self::Constant),
            2 => Some(Self::Tent),
            3 => Some(Self::Spike),
            _ => None,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Tent => {
                if t <= 0.5 {
                    2.0 * t + 0.5
                } else {
                    2.5 - 2.0 * t
                }
            }
            Self::Spike => {
                if t > 0.4 && t <= 0.5 {
                    20.0 * t - 7.2
                } else if t > 0.5 && t < 0.6 {
                    12.8 - 20.0 * t
                } else {
                    0.8
                }
            }
            Self::Custom { f, .. } => f(t),
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Self::Constant => &[],
            Self::Tent => &[0.5],
            Self::Spike => &[0.4, 0.5, 0.6],
            Self::Custom { breakpoints, .. } => breakpoints,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant => "c1".into(),
            Self::Tent => "c2".into(),
            Self::Spike => "c3".into(),
            Self::Custom { label, .. } => label.clone(),
        }
    }

    /// `C(z) = ∫_0^z c(t) dt`.
    pub fn integrated(&self, z: f64) -> Result<f64> {
        integrate_piecewise(&|t| self.eval(t), 0.0, z, self.breakpoints(), QUAD_TOL)
    }

    /// Unit integral and positivity on a `10^4`-point grid.
    pub fn validate(&self) -> Result<()> {
        let total = self.integrated(1.0)?;
        if (total - 1.0).abs() > QUAD_TOL {
            return Err(Error::Validation(format!(
                "scedasis {} integrates to {total}, not 1",
                self.label()
            )));
        }
        let min = (0..=10_000)
            .map(|i| self.eval(i as f64 / 10_000.0))
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || !min.is_finite() {
            return Err(Error::Validation(format!(
                "scedasis {} is not bounded away from zero (min {min})",
                self.label()
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for ScedasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScedasisFunction({})", self.label())
    }
}

impl Serialize for ScedasisFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

/// Mixture probability `h(t)` weighting the tail-dependent copula component.
#[derive(Clone)]
pub enum MixtureProbabilityFunction {
    /// `h̃1 ≡ 1`.
    Constant,
    /// `h̃2`: `2t` up to 0.5, `2 - 2t` after.
    Tent,
    Custom {
        label: String,
        f: Curve,
        breakpoints: Vec<f64>,
    },
}

impl MixtureProbabilityFunction {
    pub fn custom<F>(label: impl Into<String>, f: F, breakpoints: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            label: label.into(),
            f: Arc::new(f),
            breakpoints,
        }
    }

    pub fn builtin(index: u8) -> Option<Self> {
        match index {
            1 => Some(Self::Constant),
            2 => Some(Self::Tent),
            _ => None,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Tent => {
                if t < 0.5 {
                    2.0 * t
                } else {
                    2.0 - 2.0 * t
                }
            }
            Self::Custom { f, .. } => f(t),
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Self::Constant => &[],
            Self::Tent => &[0.5],
            Self::Custom { breakpoints, .. } => breakpoints,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant => "h1".into(),
            Self::Tent => "h2".into(),
            Self::Custom { label, .. } => label.clone(),
        }
    }

    /// `0 <= h <= 1` with maximum 1 (to 1e-6) on a `10^4`-point grid.
    pub fn validate(&self) -> Result<()> {
        let max = self.validate_range()?;
        if (max - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "mixture probability {} peaks at {max}, not 1",
                self.label()
            )));
        }
        Ok(())
    }

    /// `0 <= h <= 1` on a `10^4`-point grid; returns the grid maximum.
    pub fn validate_range(&self) -> Result<f64> {
        let mut max = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let v = self.eval(i as f64 / 10_000.0);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!(
                    "mixture probability {} leaves [0, 1]: {v}",
                    self.label()
                )));
            }
            max = max.max(v);
        }
        Ok(max)
    }
}

impl fmt::Debug for MixtureProbabilityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MixtureProbabilityFunction({})", self.label())
    }
}

impl Serialize for MixtureProbabilityFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

fn student_t_cdf(df: f64, x: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom validated positive")
        .cdf(x)
}

/// Tail copula `R(x, y)` of a known bivariate copula.
#[derive(Clone)]
pub enum TailCopulaModel {
    /// Student-t copula with `df` degrees of freedom and correlation `rho`.
    TCopula {
        df: f64,
        rho: f64,
    },
    /// Clayton tail copula `(1/x + 1/y)^{-1}`.
    Clayton,
    Independence,
    Custom {
        label: String,
        r: Surface,
    },
}

impl TailCopulaModel {
    pub fn t_copula(df: f64, rho: f64) -> Result<Self> {
        if !(df > 0.0) {
            return Err(Error::Domain(format!(
                "t-copula degrees of freedom must be positive, got {df}"
            )));
        }
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::Domain(format!(
                "t-copula correlation must lie in (-1, 1), got {rho}"
            )));
        }
        Ok(Self::TCopula { df, rho })
    }

    pub fn custom<F>(label: impl Into<String>, r: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            label: label.into(),
            r: Arc::new(r),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::TCopula { df, rho } => format!("t(df={df}, rho={rho})"),
            Self::Clayton => "clayton".into(),
            Self::Independence => "independence".into(),
            Self::Custom { label, .. } => label.clone(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if x <= 0.0 || y <= 0.0 {
            return 0.0;
        }
        match self {
            Self::TCopula { df, rho } => {
                let scale = ((df + 1.0) / (1.0 - rho * rho)).sqrt();
                let arg = |a: f64, b: f64| -scale * ((a / b).powf(1.0 / df) - rho);
                x * student_t_cdf(df + 1.0, arg(x, y)) + y * student_t_cdf(df + 1.0, arg(y, x))
            }
            Self::Clayton => x * y / (x + y),
            Self::Independence => 0.0,
            Self::Custom { r, .. } => r(x, y),
        }
    }

    /// Partial derivative in argument `j` (1 or 2).
    ///
    /// Closed form where available, central differences with step
    /// `1e-5 max(1, |arg|)` otherwise.
    pub fn partial(&self, j: u8, x: f64, y: f64) -> Result<f64> {
        if j != 1 && j != 2 {
            return Err(Error::Domain(format!("partial index must be 1 or 2, got {j}")));
        }
        Ok(match self {
            Self::Clayton => {
                let s = (x + y) * (x + y);
                if j == 1 {
                    y * y / s
                } else {
                    x * x / s
                }
            }
            Self::Independence => 0.0,
            _ => {
                if j == 1 {
                    let h = 1e-5 * x.abs().max(1.0);
                    (self.eval(x + h, y) - self.eval(x - h, y)) / (2.0 * h)
                } else {
                    let h = 1e-5 * y.abs().max(1.0);
                    (self.eval(x, y + h) - self.eval(x, y - h)) / (2.0 * h)
                }
            }
        })
    }
}

impl fmt::Debug for TailCopulaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TailCopulaModel({})", self.label())
    }
}

/// `λ = R(1, 1) = 2 T_{df+1}(-sqrt((df+1)(1-ρ)/(1+ρ)))` for the t-copula.
pub fn t_copula_tail_dependence(df: f64, rho: f64) -> Result<f64> {
    if !(df > 0.0) || !(rho > -1.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("invalid t-copula parameters df={df}, rho={rho}")));
    }
    if rho == 1.0 {
        return Ok(1.0);
    }
    Ok(2.0 * student_t_cdf(df + 1.0, -((df + 1.0) * (1.0 - rho) / (1.0 + rho)).sqrt()))
}

/// Ingredients of the theoretical quasi-tail copula.
#[derive(Debug, Clone)]
pub struct QuasiCopulaModel {
    pub tail_copula: TailCopulaModel,
    pub c1: ScedasisFunction,
    pub c2: ScedasisFunction,
    pub h: MixtureProbabilityFunction,
}

impl QuasiCopulaModel {
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .c1
            .breakpoints()
            .iter()
            .chain(self.c2.breakpoints())
            .chain(self.h.breakpoints())
            .copied()
            .collect();
        b.sort_unstable_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn check_args(x: f64, y: f64, z1: f64, z2: f64) -> Result<()> {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::Domain(format!(
                "quasi-tail copula needs 0 < x, y < inf, got ({x}, {y})"
            )));
        }
        if !(0.0 <= z1 && z1 < z2 && z2 <= 1.0) {
            return Err(Error::Domain(format!(
                "window must satisfy 0 <= z1 < z2 <= 1, got ({z1}, {z2})"
            )));
        }
        Ok(())
    }

    /// `R'(x, y; z1, z2) = ∫_{z1}^{z2} h(t) R(c1(t) x, c2(t) y) dt`.
    pub fn eval(&self, x: f64, y: f64, z1: f64, z2: f64) -> Result<f64> {
        Self::check_args(x, y, z1, z2)?;
        let f = |t: f64| self.h.eval(t) * self.tail_copula.eval(self.c1.eval(t) * x, self.c2.eval(t) * y);
        integrate_piecewise(&f, z1, z2, &self.breakpoints(), QUAD_TOL)
    }

    /// `R'_j(x, y; z1, z2) = ∫ h(t) R_j(c1(t) x, c2(t) y) c_j(t) dt`.
    pub fn partial(&self, j: u8, x: f64, y: f64, z1: f64, z2: f64) -> Result<f64> {
        Self::check_args(x, y, z1, z2)?;
        self.tail_copula.partial(j, 1.0, 1.0)?;
        let cj = if j == 1 { &self.c1 } else { &self.c2 };
        let f = |t: f64| {
            let c1 = self.c1.eval(t);
            let c2 = self.c2.eval(t);
            self.h.eval(t) * self.tail_copula.partial(j, c1 * x, c2 * y).unwrap_or(f64::NAN) * cj.eval(t)
        };
        integrate_piecewise(&f, z1, z2, &self.breakpoints(), QUAD_TOL)
    }
}

/// Free-function form of [`QuasiCopulaModel::eval`].
#[allow(clippy::too_many_arguments)]
pub fn eval_quasi_tail_copula(
    tail_copula: &TailCopulaModel,
    c1: &ScedasisFunction,
    c2: &ScedasisFunction,
    h: &MixtureProbabilityFunction,
    x: f64,
    y: f64,
    z1: f64,
    z2: f64,
) -> Result<f64> {
    QuasiCopulaModel {
        tail_copula: tail_copula.clone(),
        c1: c1.clone(),
        c2: c2.clone(),
        h: h.clone(),
    }
    .eval(x, y, z1, z2)
}

/// Free-function form of [`QuasiCopulaModel::partial`].
#[allow(clippy::too_many_arguments)]
pub fn eval_quasi_tail_copula_partial(
    j: u8,
    tail_copula: &TailCopulaModel,
    c1: &ScedasisFunction,
    c2: &ScedasisFunction,
    h: &MixtureProbabilityFunction,
    x: f64,
    y: f64,
    z1: f64,
    z2: f64,
) -> Result<f64> {
    QuasiCopulaModel {
        tail_copula: tail_copula.clone(),
        c1: c1.clone(),
        c2: c2.clone(),
        h: h.clone(),
    }
    .partial(j, x, y, z1, z2)
}

/// Limiting covariances when both series share one scedasis function and `h ≡ 1`.
///
/// `gamma_matrix` is the covariance of `sqrt(k)(γ̂1 - γ1, γ̂2 - γ2)`;
/// `scale * b_matrix` is that of `sqrt(k)(Ĉ1(z) - C(z), Ĉ2(z) - C(z),
/// R̂'(1,1;0,z)/R̂'(1,1) - C(z))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticCovariance {
    pub gamma_matrix: [[f64; 2]; 2],
    /// Absent when `R(s2, s1) = 0`.
    pub b_matrix: Option<[[f64; 3]; 3]>,
    /// `C(z)(1 - C(z))`.
    pub scale: f64,
}

pub fn corollary2_covariance(
    s1: f64,
    s2: f64,
    gamma1: f64,
    gamma2: f64,
    tail_copula: &TailCopulaModel,
    z: f64,
    c1_at_z: f64,
) -> Result<AsymptoticCovariance> {
    if !(0.0 < z && z < 1.0) {
        return Err(Error::Domain(format!("z must lie in (0, 1), got {z}")));
    }
    let r = tail_copula.eval(s2, s1);
    let off = r * gamma1 * gamma2;
    let gamma_matrix = [[s1 * gamma1 * gamma1, off], [off, s2 * gamma2 * gamma2]];
    let b_matrix = (r > 0.0).then(|| [[s1, r, s1], [r, s2, s2], [s1, s2, s1 * s2 / r]]);
    Ok(AsymptoticCovariance {
        gamma_matrix,
        b_matrix,
        scale: c1_at_z * (1.0 - c1_at_z),
    })
}

/// Clayton copula `(u^{-1} + v^{-1} - 1)^{-1}`.
pub fn clayton_copula(u: f64, v: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 / u + 1.0 / v - 1.0)
}

/// Ali-Mikhail-Haq copula `uv / (1 - (1-u)(1-v))` (parameter 1).
///
/// Near the origin it behaves like `uv/(u+v)`, so its tail copula is
/// `(1/x + 1/y)^{-1}`, the same as Clayton's.
pub fn amh_copula(u: f64, v: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    u * v / (1.0 - (1.0 - u) * (1.0 - v))
}

/// `p C_Clayton + (1 - p) C_AMH`; its tail copula is `(1/x + 1/y)^{-1}` for every `p`.
pub fn clayton_amh_mixture(p: f64, u: f64, v: f64) -> f64 {
    p * clayton_copula(u, v) + (1.0 - p) * amh_copula(u, v)
}
