//! CSV ingestion and output.
//!
//! Sample files carry a header. The diversification value is either one `z`
//! column (category label) or numeric columns `z1..zd`. Calibration files
//! need `mu_hat` and `y`; test files need `mu_hat` and may carry `y` as ground
//! truth. An optional `c` column is a per-row threshold: the row is treated
//! as (μ̂ − c, y − c).

use std::collections::BTreeSet;
use std::path::Path;

use crate::data::{CalibrationSample, Diversification, TestSample};
use crate::error::{DacsError, Result};
use crate::metrics::SimilarityMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub calib: Vec<CalibrationSample>,
    pub test: Vec<TestSample>,
    /// Test responses when the test file has a `y` column.
    pub test_y: Option<Vec<f64>>,
    /// Category labels in index order, for categorical `z`.
    pub labels: Option<Vec<String>>,
}

enum RawZ {
    Label(String),
    Vector(Vec<f64>),
}

struct RawRow {
    z: RawZ,
    mu_hat: f64,
    y: Option<f64>,
}

fn parse_f64(field: &str, what: &str, row: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| DacsError::Data(format!("row {row}: cannot parse {what} = {field:?}")))?;
    if v.is_nan() {
        return Err(DacsError::NonFinite(format!("row {row}: {what}")));
    }
    Ok(v)
}

fn read_raw(path: &Path, need_y: bool) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mu_col = col("mu_hat").ok_or_else(|| DacsError::Data(format!("{}: missing column mu_hat", path.display())))?;
    let y_col = col("y");
    if need_y && y_col.is_none() {
        return Err(DacsError::Data(format!("{}: missing column y", path.display())));
    }
    let c_col = col("c");
    let z_col = col("z");
    let mut z_vec: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix('z').and_then(|k| k.parse::<usize>().ok()).map(|k| (k, i)))
        .collect();
    z_vec.sort_unstable();
    if z_col.is_none() && z_vec.is_empty() {
        return Err(DacsError::Data(format!("{}: need a z column or z1..zd columns", path.display())));
    }
    if !z_vec.iter().enumerate().all(|(i, &(k, _))| k == i + 1) {
        return Err(DacsError::Data(format!("{}: vector columns must be z1..zd without gaps", path.display())));
    }

    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let shift = match c_col {
            Some(i) => parse_f64(&rec[i], "c", row)?,
            None => 0.0,
        };
        let z = match z_col {
            Some(i) => RawZ::Label(rec[i].to_string()),
            None => RawZ::Vector(z_vec.iter().map(|&(_, i)| parse_f64(&rec[i], "z", row)).collect::<Result<_>>()?),
        };
        let mu_hat = parse_f64(&rec[mu_col], "mu_hat", row)? - shift;
        let y = match y_col {
            Some(i) => Some(parse_f64(&rec[i], "y", row)? - shift),
            None => None,
        };
        rows.push(RawRow { z, mu_hat, y });
    }
    Ok(rows)
}

/// Reads a calibration/test pair. Categorical labels are indexed jointly:
/// numerically when every label is an integer, otherwise lexicographically.
pub fn read_dataset(calib_path: &Path, test_path: &Path) -> Result<Dataset> {
    let calib_raw = read_raw(calib_path, true)?;
    let test_raw = read_raw(test_path, false)?;
    let all = calib_raw.iter().chain(&test_raw);
    let categorical = matches!(calib_raw.first().or(test_raw.first()).map(|r| &r.z), Some(RawZ::Label(_)));
    if all.clone().any(|r| matches!(r.z, RawZ::Label(_)) != categorical) {
        return Err(DacsError::Data("calibration and test files disagree on the z format".into()));
    }

    let labels: Option<Vec<String>> = categorical.then(|| {
        let set: BTreeSet<&str> = all
            .clone()
            .filter_map(|r| match &r.z {
                RawZ::Label(s) => Some(s.as_str()),
                RawZ::Vector(_) => None,
            })
            .collect();
        let mut labels: Vec<String> = set.into_iter().map(String::from).collect();
        if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
            labels.sort_by_key(|l| l.parse::<i64>().unwrap());
        }
        labels
    });
    let to_z = |z: &RawZ| -> Diversification {
        match z {
            RawZ::Label(s) => Diversification::Category(labels.as_ref().unwrap().iter().position(|l| l == s).unwrap()),
            RawZ::Vector(v) => Diversification::Vector(v.clone()),
        }
    };
    let calib = calib_raw
        .iter()
        .map(|r| CalibrationSample { z: to_z(&r.z), mu_hat: r.mu_hat, y: r.y.expect("checked") })
        .collect();
    let test = test_raw.iter().map(|r| TestSample { z: to_z(&r.z), mu_hat: r.mu_hat }).collect();
    let test_y = test_raw.iter().map(|r| r.y).collect::<Option<Vec<f64>>>();
    Ok(Dataset { calib, test, test_y, labels })
}

fn z_header(z: Option<&Diversification>) -> Vec<String> {
    match z {
        Some(Diversification::Vector(v)) => (1..=v.len()).map(|k| format!("z{k}")).collect(),
        _ => vec!["z".into()],
    }
}

fn z_fields(z: &Diversification) -> Vec<String> {
    match z {
        Diversification::Category(c) => vec![c.to_string()],
        Diversification::Vector(v) => v.iter().map(|x| x.to_string()).collect(),
    }
}

/// Writes samples in the format [`read_dataset`] accepts. Categories are
/// written as their integer index and floats in shortest round-trip form.
pub fn write_dataset(calib_path: &Path, test_path: &Path, calib: &[CalibrationSample], test: &[TestSample], test_y: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(calib_path)?;
    let mut header = z_header(calib.first().map(|c| &c.z));
    header.extend(["mu_hat".into(), "y".into()]);
    w.write_record(&header)?;
    for c in calib {
        let mut rec = z_fields(&c.z);
        rec.extend([c.mu_hat.to_string(), c.y.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(test_path)?;
    let mut header = z_header(test.first().map(|t| &t.z));
    header.push("mu_hat".into());
    if test_y.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for (j, t) in test.iter().enumerate() {
        let mut rec = z_fields(&t.z);
        rec.push(t.mu_hat.to_string());
        if let Some(y) = test_y {
            rec.push(y[j].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a square similarity matrix: one row per line, no header, rows in
/// pooled order (calibration rows first, then test rows).
pub fn read_similarity_csv(path: &Path) -> Result<SimilarityMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut entries = Vec::new();
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        rows += 1;
        for f in rec.iter() {
            entries.push(parse_f64(f, "similarity", rows)?);
        }
    }
    if entries.len() != rows * rows {
        return Err(DacsError::InvalidSimilarity(format!("{rows} rows but {} entries", entries.len())));
    }
    SimilarityMatrix::with_ridge(rows, entries)
}
