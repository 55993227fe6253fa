//! Reading and writing return series, bivariate samples and reports.
//!
//! Every file is written to a temporary sibling first and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sample::BivariateSample;

/// Smallest number of common dates accepted by [`align_pair`].
pub const DEFAULT_MIN_OVERLAP: usize = 100;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Daily simple returns of one asset, with losses as negated returns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSeries {
    pub symbol: String,
    pub dates: Vec<String>,
    pub returns: Vec<f64>,
    pub losses: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(symbol: impl Into<String>, dates: Vec<String>, returns: Vec<f64>) -> Result<Self> {
        let symbol = symbol.into();
        if dates.len() != returns.len() {
            return Err(Error::Validation(format!(
                "{symbol}: {} dates but {} returns",
                dates.len(),
                returns.len()
            )));
        }
        let mut previous: Option<NaiveDate> = None;
        for (i, d) in dates.iter().enumerate() {
            let date = parse_date(d)
                .ok_or_else(|| Error::Validation(format!("{symbol}: invalid date '{d}' at position {}", i + 1)))?;
            if previous.is_some_and(|p| p >= date) {
                return Err(Error::Validation(format!(
                    "{symbol}: dates must be strictly increasing, '{d}' at position {} is not",
                    i + 1
                )));
            }
            previous = Some(date);
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::Validation(format!(
                "{symbol}: return at position {} is not finite",
                i + 1
            )));
        }
        let losses = returns.iter().map(|r| -r).collect();
        Ok(Self {
            symbol,
            dates,
            returns,
            losses,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).ok()
}

/// Which value column a return file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnSpec {
    /// Decide from the header: `return` or `price`.
    #[default]
    Auto,
    Returns,
    /// Prices, turned into simple returns `p_t / p_{t-1} - 1` dated at `t`.
    Prices,
}

/// Load a `date,return` or `date,price` file. The symbol is the file stem.
pub fn load_returns_csv(path: &Path, columns: ColumnSpec) -> Result<ReturnSeries> {
    let symbol = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("series")
        .to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect();
    let date_col = headers.iter().position(|h| h == "date").ok_or_else(|| Error::Parse {
        line: 1,
        column: "date".into(),
        message: format!("{}: header has no 'date' column", path.display()),
    })?;
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (value_col, prices) = match columns {
        ColumnSpec::Returns => (find("return"), false),
        ColumnSpec::Prices => (find("price"), true),
        ColumnSpec::Auto => match (find("return"), find("price")) {
            (Some(c), _) => (Some(c), false),
            (None, Some(c)) => (Some(c), true),
            (None, None) => (None, false),
        },
    };
    let value_name = if prices { "price" } else { "return" };
    let value_col = value_col.ok_or_else(|| Error::Parse {
        line: 1,
        column: value_name.into(),
        message: format!("{}: header has no '{value_name}' column", path.display()),
    })?;

    let mut dates = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize, name: &str| -> Result<String> {
            match record.get(col) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(Error::Parse {
                    line,
                    column: name.into(),
                    message: "missing value".into(),
                }),
            }
        };
        let date = field(date_col, "date")?;
        if parse_date(&date).is_none() {
            return Err(Error::Parse {
                line,
                column: "date".into(),
                message: format!("'{date}' is not a YYYY-MM-DD date"),
            });
        }
        let raw = field(value_col, value_name)?;
        let value: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            column: value_name.into(),
            message: format!("'{raw}' is not a number"),
        })?;
        if !value.is_finite() || (prices && value <= 0.0) {
            return Err(Error::Parse {
                line,
                column: value_name.into(),
                message: format!("'{raw}' is not an admissible {value_name}"),
            });
        }
        if let Some(prev) = dates.last().and_then(|d: &String| parse_date(d)) {
            if parse_date(&date).is_some_and(|d| d <= prev) {
                return Err(Error::Validation(format!(
                    "{}: dates must be strictly increasing, '{date}' at line {line} is not",
                    path.display()
                )));
            }
        }
        dates.push(date);
        values.push(value);
    }

    if prices {
        let returns = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        let dates = dates.into_iter().skip(1).collect();
        ReturnSeries::new(symbol, dates, returns)
    } else {
        ReturnSeries::new(symbol, dates, values)
    }
}

/// Load every `*.csv` file of a directory, ordered by file name.
pub fn load_returns_dir(dir: &Path, columns: ColumnSpec) -> Result<Vec<ReturnSeries>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_returns_csv(p, columns)).collect()
}

pub fn write_returns_csv(path: &Path, series: &ReturnSeries) -> Result<()> {
    let mut out = String::from("date,return\n");
    for (d, r) in series.dates.iter().zip(&series.returns) {
        out.push_str(&format!("{d},{}\n", fmt_f64(*r)));
    }
    write_atomic(path, out.as_bytes())
}

/// Consecutive calendar dates starting at `start`, formatted `YYYY-MM-DD`.
pub fn daily_dates(start: &str, n: usize) -> Result<Vec<String>> {
    let first = parse_date(start).ok_or_else(|| Error::Validation(format!("invalid start date '{start}'")))?;
    Ok((0..n)
        .map(|i| (first + Duration::days(i as i64)).format(DATE_FORMAT).to_string())
        .collect())
}

/// Inner join on dates, pairing the losses of `a` (first margin) and `b`.
pub fn align_pair(a: &ReturnSeries, b: &ReturnSeries) -> Result<BivariateSample> {
    align_pair_with(a, b, DEFAULT_MIN_OVERLAP)
}

pub fn align_pair_with(a: &ReturnSeries, b: &ReturnSeries, min_overlap: usize) -> Result<BivariateSample> {
    let (mut i, mut j) = (0, 0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    // Dates are validated ISO strings, so string order is date order.
    while i < a.len() && j < b.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                xs.push(a.losses[i]);
                ys.push(b.losses[j]);
                i += 1;
                j += 1;
            }
        }
    }
    if xs.len() < min_overlap.max(1) {
        return Err(Error::Validation(format!(
            "{} ({} rows) and {} ({} rows) share {} dates, at least {} required",
            a.symbol,
            a.len(),
            b.symbol,
            b.len(),
            xs.len(),
            min_overlap.max(1)
        )));
    }
    BivariateSample::new(xs, ys)
}

/// Scientific notation with 17 significant digits, which parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".to_string()
    }
}

/// Write a sample as `i,x,y` with 1-based `i`.
pub fn write_sample_csv(path: &Path, sample: &BivariateSample) -> Result<()> {
    let mut out = String::from("i,x,y\n");
    for (i, (x, y)) in sample.xs().iter().zip(sample.ys()).enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, fmt_f64(*x), fmt_f64(*y)));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_sample_csv(path: &Path) -> Result<BivariateSample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            column: name.into(),
            message: format!("{}: header needs columns i,x,y", path.display()),
        })
    };
    let (ic, xc, yc) = (col("i")?, col("x")?, col("y")?);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |c: usize, name: &str| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: name.into(),
                message: format!("'{raw}' is not a number"),
            })
        };
        let i = num(ic, "i")?;
        if i != (xs.len() + 1) as f64 {
            return Err(Error::Parse {
                line,
                column: "i".into(),
                message: format!(
                    "expected index {}, found '{}'",
                    xs.len() + 1,
                    record.get(ic).unwrap_or("")
                ),
            });
        }
        xs.push(num(xc, "x")?);
        ys.push(num(yc, "y")?);
    }
    BivariateSample::new(xs, ys)
}

/// Write `bytes` to a temporary file next to `path`, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn file(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = file(
            dir.path(),
            "AAA.csv",
            "date,return\n2020-01-02,0.01\n2020-01-03,-0.02\n2020-01-06,0.005\n",
        );
        let s = load_returns_csv(&p, ColumnSpec::Auto).unwrap();
        assert_eq!(s.symbol, "AAA");
        assert_eq!(s.len(), 3);
        assert_eq!(s.losses, vec![-0.01, 0.02, -0.005]);
    }

    #[test]
    fn crlf_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = file(
            dir.path(),
            "B.csv",
            "date,return\r\n2020-01-02,0.01\r\n2020-01-03,0.02\r\n",
        );
        assert_eq!(
            load_returns_csv(&p, ColumnSpec::Returns).unwrap().returns,
            vec![0.01, 0.02]
        );
    }

    #[test]
    fn nan_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = file(
            dir.path(),
            "C.csv",
            "date,return\n2020-01-01,0.1\n2020-01-02,0.1\n2020-01-03,0.1\n2020-01-04,NaN\n",
        );
        match load_returns_csv(&p, ColumnSpec::Auto) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let p = file(dir.path(), "D.csv", "date,return\n2020-01-01,0.1\n2020-01-02,\n");
        assert!(matches!(
            load_returns_csv(&p, ColumnSpec::Auto),
            Err(Error::Parse { line: 3, .. })
        ));
        let p = file(dir.path(), "E.csv", "date,return\n2020-01-01,abc\n");
        let e = load_returns_csv(&p, ColumnSpec::Auto).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("line 2"));
    }

    #[test]
    fn non_monotone_dates() {
        let dir = tempfile::tempdir().unwrap();
        let p = file(dir.path(), "F.csv", "date,return\n2020-01-02,0.1\n2020-01-02,0.1\n");
        assert!(matches!(
            load_returns_csv(&p, ColumnSpec::Auto),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn prices_to_returns() {
        let dir = tempfile::tempdir().unwrap();
        let p = file(
            dir.path(),
            "G.csv",
            "date,price\n2020-01-01,100\n2020-01-02,110\n2020-01-03,99\n",
        );
        let s = load_returns_csv(&p, ColumnSpec::Auto).unwrap();
        assert_eq!(s.dates, vec!["2020-01-02", "2020-01-03"]);
        assert_relative_eq!(s.returns[0], 0.10, epsilon = 1e-12);
        assert_relative_eq!(s.returns[1], -0.10, epsilon = 1e-12);
        assert_relative_eq!(s.losses[0], -0.10, epsilon = 1e-12);
        assert_relative_eq!(s.losses[1], 0.10, epsilon = 1e-12);
        assert!(load_returns_csv(&p, ColumnSpec::Returns).is_err());
    }

    fn series(symbol: &str, dates: &[&str]) -> ReturnSeries {
        let returns = (0..dates.len()).map(|i| i as f64 * 0.01).collect();
        ReturnSeries::new(symbol, dates.iter().map(|d| d.to_string()).collect(), returns).unwrap()
    }

    #[test]
    fn alignment() {
        let all = ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-04", "2020-01-05"];
        let a = series("A", &all);
        let b = series("B", &["2020-01-01", "2020-01-02", "2020-01-04", "2020-01-05"]);
        let s = align_pair_with(&a, &a, 1).unwrap();
        assert_eq!(s.len(), 5);
        let s = align_pair_with(&a, &b, 1).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.xs(), &[-0.0, -0.01, -0.03, -0.04]);
        assert_eq!(s.ys(), &[-0.0, -0.01, -0.02, -0.03]);
        let c = series("C", &["2021-01-01", "2021-01-02"]);
        assert!(align_pair_with(&a, &c, 1).is_err());
        let e = align_pair(&a, &b).unwrap_err();
        assert!(e.to_string().contains("share 4 dates"));
    }

    #[test]
    fn sample_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let xs = vec![1.0 / 3.0, std::f64::consts::PI, 1e-300, 12345.678901234567];
        let ys = vec![-0.1, 2.0f64.sqrt(), 5e300, f64::MIN_POSITIVE];
        let s = BivariateSample::new(xs, ys).unwrap();
        let p = dir.path().join("s.csv");
        write_sample_csv(&p, &s).unwrap();
        let back = read_sample_csv(&p).unwrap();
        assert_eq!(back.xs(), s.xs());
        assert_eq!(back.ys(), s.ys());
    }

    #[test]
    fn returns_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = ReturnSeries::new(
            "Z",
            daily_dates("2019-12-30", 4).unwrap(),
            vec![0.1, -0.2, 1.0 / 7.0, 0.0],
        )
        .unwrap();
        assert_eq!(s.dates[3], "2020-01-02");
        let p = dir.path().join("Z.csv");
        write_returns_csv(&p, &s).unwrap();
        assert_eq!(load_returns_csv(&p, ColumnSpec::Auto).unwrap(), s);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_json(&p, &vec![1.0, 2.0]).unwrap();
        write_json(&p, &vec![3.0]).unwrap();
        let v: Vec<f64> = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v, vec![3.0]);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
