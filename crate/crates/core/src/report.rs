//! CSV artifacts: experiment reports, field vectors and dense boundary
//! operators.

use std::fmt::Write as _;

use faer::Mat;

use crate::error::{Error, Result};

/// Current version string embedded in every report.
pub const VERSION: &str = concat!("calderon ", env!("CARGO_PKG_VERSION"));

/// Header line of the dense boundary-operator CSV.
pub fn dtn_header(n: usize) -> String {
    format!("# calderon-dtn v1, n={n}")
}

/// Named numeric columns plus free-form metadata and summary scalars.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub meta: Vec<(String, String)>,
    pub scalars: Vec<(String, f64)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ExperimentReport {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        ExperimentReport {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn set_scalar(&mut self, key: &str, value: f64) {
        match self.scalars.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.scalars.push((key.to_string(), value)),
        }
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    /// CSV with `# meta:` comment lines (experiment name, version, metadata
    /// and scalars) followed by a header row and data rows. Numbers use the
    /// shortest representation that round-trips exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# meta: experiment={}", self.name);
        let _ = writeln!(s, "# meta: version={VERSION}");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# meta: {k}={}", v.replace('\n', " "));
        }
        for (k, v) in &self.scalars {
            let _ = writeln!(s, "# meta: scalar.{k}={v:?}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// Parses the output of [`ExperimentReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut report = ExperimentReport::default();
        let mut body = String::new();
        for (ln, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix("# meta: ") {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::parse(ln + 1, "metadata line without '='"))?;
                if k == "experiment" {
                    report.name = v.to_string();
                } else if k == "version" {
                } else if let Some(name) = k.strip_prefix("scalar.") {
                    let value = parse_f64(v).ok_or_else(|| Error::parse(ln + 1, "bad scalar value"))?;
                    report.scalars.push((name.to_string(), value));
                } else {
                    report.meta.push((k.to_string(), v.to_string()));
                }
            } else if line.starts_with('#') {
                continue;
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        report.columns = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if report.columns.is_empty() || report.columns.iter().any(|c| c.is_empty()) {
            return Err(Error::parse(0, "report has no column header"));
        }
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let row = rec
                .iter()
                .map(|c| parse_f64(c.trim()).ok_or_else(|| Error::parse(line, format!("bad number '{c}'"))))
                .collect::<Result<Vec<f64>>>()?;
            report.rows.push(row);
        }
        Ok(report)
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// `index,value` CSV of a real field.
pub fn write_field_csv(values: &[f64]) -> String {
    let mut s = String::from("index,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i},{v:?}");
    }
    s
}

/// `index,re,im` CSV of a complex field.
pub fn write_complex_field_csv(values: &[faer::c64]) -> String {
    let mut s = String::from("index,re,im\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i},{:?},{:?}", v.re, v.im);
    }
    s
}

/// Reads either field format; a real field has zero imaginary parts.
/// Indices must run 0, 1, 2, ... in order.
pub fn read_field_csv(text: &str) -> Result<Vec<faer::c64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let complex = match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["index", "value"] => false,
        ["index", "re", "im"] => true,
        _ => return Err(Error::parse(1, "expected header 'index,value' or 'index,re,im'")),
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = || Error::parse(line, "malformed field row");
        let idx: usize = rec.get(0).and_then(|v| v.trim().parse().ok()).ok_or_else(bad)?;
        if idx != out.len() {
            return Err(Error::parse(line, format!("expected index {}, found {idx}", out.len())));
        }
        let re = rec.get(1).and_then(|v| parse_f64(v.trim())).ok_or_else(bad)?;
        let im = if complex {
            rec.get(2).and_then(|v| parse_f64(v.trim())).ok_or_else(bad)?
        } else {
            0.0
        };
        out.push(faer::c64::new(re, im));
    }
    Ok(out)
}

/// Dense row-major CSV of a square boundary operator.
pub fn write_dtn_csv(m: &Mat<f64>) -> String {
    let n = m.nrows();
    let mut s = dtn_header(n);
    s.push('\n');
    for i in 0..n {
        let cells: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn read_dtn_csv(text: &str) -> Result<Mat<f64>> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let n: usize = first
        .trim()
        .strip_prefix("# calderon-dtn v1, n=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::parse(1, "expected header '# calderon-dtn v1, n=<n>'"))?;
    if n > 20_000 {
        return Err(Error::SizeLimit(format!("operator dimension {n} too large")));
    }
    let mut m = Mat::<f64>::zeros(n, n);
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(rest.as_bytes());
    let mut i = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if i >= n || rec.len() != n {
            return Err(Error::parse(i + 2, format!("expected {n} rows of {n} values")));
        }
        for (j, c) in rec.iter().enumerate() {
            m[(i, j)] = parse_f64(c.trim()).ok_or_else(|| Error::parse(i + 2, format!("bad number '{c}'")))?;
        }
        i += 1;
    }
    if i != n {
        return Err(Error::parse(i + 2, format!("expected {n} rows, found {i}")));
    }
    Ok(m)
}
