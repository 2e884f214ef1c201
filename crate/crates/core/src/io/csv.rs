//! Precision-recall curve as CSV with a trailing AP comment.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::PrCurve;

use super::{read_text, write_atomic};

const HEADER: &str = "score,precision,recall";

/// Parsed contents of a PR-curve CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PrTable {
    /// `(score, precision, recall)` rows in file order.
    pub rows: Vec<[f64; 3]>,
    pub ap_exact: f64,
    pub ap_101: f64,
}

impl PrTable {
    pub fn from_curve(curve: &PrCurve, ap_exact: f64, ap_101: f64) -> Self {
        Self {
            rows: curve
                .points
                .iter()
                .map(|p| [p.score, p.precision, p.recall])
                .collect(),
            ap_exact,
            ap_101,
        }
    }

    /// CSV text; numbers use the shortest representation that parses back exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for [s, p, r] in &self.rows {
            writeln!(out, "{s:?},{p:?},{r:?}").expect("writing to a String");
        }
        writeln!(
            out,
            "# ap_exact={:?},ap_101={:?}",
            self.ap_exact, self.ap_101
        )
        .expect("writing to a String");
        out
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(err(1, "expected header score,precision,recall")),
        }
        let num =
            |line: usize, s: &str| s.trim().parse::<f64>().map_err(|_| err(line, "bad number"));
        let mut rows = Vec::new();
        let mut ap = None;
        for (n, line) in lines {
            if let Some(comment) = line.strip_prefix('#') {
                let mut exact = None;
                let mut interp = None;
                for kv in comment.trim().split(',') {
                    match kv.split_once('=') {
                        Some(("ap_exact", v)) => exact = Some(num(n, v)?),
                        Some(("ap_101", v)) => interp = Some(num(n, v)?),
                        _ => return Err(err(n, "unknown comment field")),
                    }
                }
                ap = exact.zip(interp);
                continue;
            }
            if ap.is_some() {
                return Err(err(n, "row after AP comment"));
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [s, p, r] = fields[..] else {
                return Err(err(n, "expected three fields"));
            };
            rows.push([num(n, s)?, num(n, p)?, num(n, r)?]);
        }
        let (ap_exact, ap_101) = ap.ok_or_else(|| err(0, "missing AP comment line"))?;
        Ok(Self {
            rows,
            ap_exact,
            ap_101,
        })
    }
}

pub fn write_pr_csv(
    curve: &PrCurve,
    ap_exact: f64,
    ap_101: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(
        path,
        PrTable::from_curve(curve, ap_exact, ap_101)
            .to_text()
            .as_bytes(),
    )
}

pub fn read_pr_csv(path: impl AsRef<Path>) -> Result<PrTable> {
    let path = path.as_ref();
    PrTable::parse(path, &read_text(path)?)
}
