//! Per-iteration metrics rows and their CSV encoding.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "seed,iteration,episodes,mean_return,std_return,min_return,max_return,mean_kl,steps,wall_ms";

/// Formats `x` with `digits` significant digits in the style of C's `%g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One iteration of one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub seed: u64,
    pub iteration: usize,
    /// Undiscounted return of every trajectory collected this iteration.
    pub returns: Vec<f64>,
    pub mean_kl: Option<f64>,
    pub steps: usize,
    pub wall_ms: u64,
}

impl IterationRecord {
    pub fn to_row(&self) -> Result<MetricsRow> {
        let n = self.returns.len();
        if n == 0 {
            return Err(Error::Empty("iteration without trajectories"));
        }
        let mean = self.returns.iter().sum::<f64>() / n as f64;
        let var = self.returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
        Ok(MetricsRow {
            seed: self.seed,
            iteration: self.iteration,
            episodes: n,
            mean_return: mean,
            std_return: var.sqrt(),
            min_return: self.returns.iter().copied().fold(f64::INFINITY, f64::min),
            max_return: self.returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_kl: self.mean_kl,
            steps: self.steps,
            wall_ms: self.wall_ms,
        })
    }
}

/// A parsed CSV row. Return columns hold the 6-significant-digit values as written.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub iteration: usize,
    pub episodes: usize,
    pub mean_return: f64,
    /// Population standard deviation over the iteration's trajectories.
    pub std_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub mean_kl: Option<f64>,
    pub steps: usize,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.iteration,
            self.episodes,
            format_sig(self.mean_return, 6),
            format_sig(self.std_return, 6),
            format_sig(self.min_return, 6),
            format_sig(self.max_return, 6),
            self.mean_kl.map(|k| format_sig(k, 6)).unwrap_or_default(),
            self.steps,
            self.wall_ms
        )
    }

    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(format!("expected 10 fields, got {}", f.len()));
        }
        fn num<V: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<V, String> {
            s.parse().map_err(|_| format!("bad {name} `{s}`"))
        }
        Ok(Self {
            seed: num(f[0], "seed")?,
            iteration: num(f[1], "iteration")?,
            episodes: num(f[2], "episodes")?,
            mean_return: num(f[3], "mean_return")?,
            std_return: num(f[4], "std_return")?,
            min_return: num(f[5], "min_return")?,
            max_return: num(f[6], "max_return")?,
            mean_kl: if f[7].is_empty() {
                None
            } else {
                Some(num(f[7], "mean_kl")?)
            },
            steps: num(f[8], "steps")?,
            wall_ms: num(f[9], "wall_ms")?,
        })
    }
}

/// Reads a metrics file, checking the header and that iterations run 0, 1, 2, ...
///
/// A trailing line without a newline is a torn write and is ignored.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    let bad = |reason: String| Error::Metrics {
        path: path.display().to_string(),
        reason,
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut lines = complete.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        Some(other) => return Err(bad(format!("unexpected header `{other}`"))),
        None => return Ok(Vec::new()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = MetricsRow::parse(line).map_err(|e| bad(format!("row {i}: {e}")))?;
        if row.iteration != i {
            return Err(bad(format!("row {i} has iteration {}", row.iteration)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Append-only writer for one seed's metrics file.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    /// Opens `path`, dropping any torn trailing line and writing the header if the file is new.
    pub fn open(path: &Path, keep_rows: usize) -> Result<Self> {
        let mut body = String::from(CSV_HEADER);
        body.push('\n');
        if path.exists() {
            let rows = read_metrics(path)?;
            for r in rows.iter().take(keep_rows) {
                body.push_str(&r.to_csv());
                body.push('\n');
            }
            if fs::read_to_string(path)? == body {
                let file = OpenOptions::new().append(true).open(path)?;
                return Ok(Self { file });
            }
        }
        let tmp = path.with_extension("csv.tmp");
        fs::write(&tmp, &body)?;
        fs::rename(&tmp, path)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.file, "{}", row.to_csv())?;
        self.file.flush()?;
        Ok(())
    }
}
