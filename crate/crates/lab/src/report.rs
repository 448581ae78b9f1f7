//! Result rows, the CSV/JSON writers and the report verifier.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use l1bsde::tolerance::BOUND;
use l1bsde::Verdict;
use serde::Serialize;
use thiserror::Error;

pub const HEADER: [&str; 8] = ["experiment", "instance", "param", "quantity", "value", "bound", "slack", "pass"];

/// One measured quantity, with its bound when it is asserted.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub instance: usize,
    pub param: String,
    pub quantity: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: bool,
}

impl Row {
    /// Reported only: no bound, always passes.
    pub fn report(quantity: &str, param: &str, value: f64) -> Self {
        Row {
            experiment: String::new(),
            instance: 0,
            param: param.into(),
            quantity: quantity.into(),
            value,
            bound: None,
            pass: true,
        }
    }

    /// Asserted with the solver's verdict. An inapplicable verdict drops
    /// the bound and fails the row.
    pub fn verdict(quantity: &str, param: &str, value: f64, bound: f64, verdict: Verdict) -> Self {
        let mut row = Row::report(quantity, param, value);
        match verdict {
            Verdict::Inapplicable => row.pass = false,
            v => {
                row.bound = Some(bound);
                row.pass = v.holds();
            }
        }
        row
    }

    /// Asserted as `value <= bound + tol`.
    pub fn within(quantity: &str, param: &str, value: f64, bound: f64, tol: f64) -> Self {
        Row::verdict(quantity, param, value, bound, Verdict::from_bool(value <= bound + tol))
    }

    pub fn slack(&self) -> Option<f64> {
        self.bound.map(|b| b - self.value)
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv(path: &Path, rows: &[Row]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.instance.to_string(),
            r.param.clone(),
            r.quantity.clone(),
            num(r.value),
            r.bound.map(num).unwrap_or_default(),
            r.slack().map(num).unwrap_or_default(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone, Default, Serialize, PartialEq, Eq)]
pub struct Counts {
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub instances: usize,
    pub rows: usize,
    pub passed: usize,
    pub failed: usize,
    pub quantities: BTreeMap<String, Counts>,
}

impl Summary {
    pub fn from_rows(experiment: &str, seed: u64, instances: usize, rows: &[Row]) -> Self {
        let mut quantities: BTreeMap<String, Counts> = BTreeMap::new();
        for r in rows {
            let c = quantities.entry(r.quantity.clone()).or_default();
            if r.pass { c.passed += 1 } else { c.failed += 1 }
        }
        let passed = rows.iter().filter(|r| r.pass).count();
        Summary {
            experiment: experiment.into(),
            seed,
            instances,
            rows: rows.len(),
            passed,
            failed: rows.len() - passed,
            quantities,
        }
    }
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`; returns the CSV path.
pub fn write_reports(dir: &Path, summary: &Summary, rows: &[Row]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", summary.experiment));
    write_csv(&csv_path, rows)?;
    let json = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    fs::write(dir.join(format!("{}.json", summary.experiment)), json + "\n")?;
    Ok(csv_path)
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("malformed report: {0}")]
    Malformed(String),
}

/// Outcome of re-checking a report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyOutcome {
    pub rows: usize,
    pub failed_rows: usize,
    /// Human-readable description of each inconsistent row.
    pub inconsistent: Vec<String>,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.failed_rows == 0 && self.inconsistent.is_empty()
    }
}

fn parse_opt(field: &str, line: usize, name: &str) -> Result<Option<f64>, VerifyError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| VerifyError::Malformed(format!("line {line}: {name} `{field}` is not a number")))
}

/// Re-checks a report: slack equals `bound - value`, and rows marked as
/// passing satisfy `value <= bound + tol * (1 + |bound|)`.
pub fn verify(path: &Path) -> Result<VerifyOutcome, VerifyError> {
    let text = fs::read_to_string(path).map_err(|e| VerifyError::Io(path.display().to_string(), e))?;
    if text.trim().is_empty() {
        return Err(VerifyError::Malformed("empty file".into()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| VerifyError::Malformed(e.to_string()))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(VerifyError::Malformed(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = VerifyOutcome::default();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| VerifyError::Malformed(e.to_string()))?;
        if rec.len() != HEADER.len() {
            return Err(VerifyError::Malformed(format!("line {line}: expected 8 fields, found {}", rec.len())));
        }
        rec[1].parse::<usize>().map_err(|_| VerifyError::Malformed(format!("line {line}: bad instance `{}`", &rec[1])))?;
        let value = parse_opt(&rec[4], line, "value")?
            .ok_or_else(|| VerifyError::Malformed(format!("line {line}: missing value")))?;
        let bound = parse_opt(&rec[5], line, "bound")?;
        let slack = parse_opt(&rec[6], line, "slack")?;
        let pass = match &rec[7] {
            "true" => true,
            "false" => false,
            other => return Err(VerifyError::Malformed(format!("line {line}: pass `{other}`"))),
        };
        out.rows += 1;
        if !pass {
            out.failed_rows += 1;
        }
        match (bound, slack) {
            (None, None) => {}
            (Some(b), Some(s)) => {
                let expected = b - value;
                if (s - expected).abs() > 1e-12 * (1.0 + b.abs() + value.abs()) {
                    out.inconsistent.push(format!("line {line}: slack {s:?} differs from bound - value = {expected:?}"));
                }
                if pass && value > b + BOUND * (1.0 + b.abs()) {
                    out.inconsistent.push(format!("line {line}: marked pass but value {value:?} exceeds bound {b:?}"));
                }
            }
            _ => out.inconsistent.push(format!("line {line}: bound and slack must both be present or both empty")),
        }
    }
    if out.rows == 0 {
        return Err(VerifyError::Malformed("no rows".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<Row> {
        let mut a = Row::within("gap", "N=2", 1e-15, 1e-12, 0.0);
        a.experiment = "demo".into();
        let mut b = Row::report("ratio", "N=2;L=0.5", 0.1 + 0.2);
        b.experiment = "demo".into();
        b.instance = 1;
        vec![a, b]
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&p, &rows()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], "experiment,instance,param,quantity,value,bound,slack,pass");
        assert_eq!(lines[1], format!("demo,0,N=2,gap,1e-15,1e-12,{:?},true", 1e-12 - 1e-15));
        assert_eq!(lines[2], "demo,1,N=2;L=0.5,ratio,0.30000000000000004,,,true");
        assert!(!text.contains('\r'));
        let out = verify(&p).unwrap();
        assert!(out.ok(), "{out:?}");
        assert_eq!(out.rows, 2);
    }

    #[test]
    fn inapplicable_rows_fail_without_bound() {
        let r = Row::verdict("x", "", 1.0, 2.0, Verdict::Inapplicable);
        assert!(!r.pass);
        assert_eq!(r.bound, None);
    }

    #[test]
    fn verify_flags_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "experiment,instance,param,quantity,value,bound,slack,pass\ne,0,,q,1.0,2.0,0.5,true\n").unwrap();
        assert_eq!(verify(&p).unwrap().inconsistent.len(), 1);
        fs::write(&p, "experiment,instance,param,quantity,value,bound,slack,pass\ne,0,,q,3.0,2.0,-1.0,true\n").unwrap();
        assert_eq!(verify(&p).unwrap().inconsistent.len(), 1);
        fs::write(&p, "").unwrap();
        assert!(matches!(verify(&p), Err(VerifyError::Malformed(_))));
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(verify(&p), Err(VerifyError::Malformed(_))));
    }
}
