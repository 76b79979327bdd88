//! CSV and JSON artifacts.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Float formatting shared by every CSV artifact (9 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.8e}")
}

/// A table of named columns written as CSV.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends one row; panics if the width differs from the header.
    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Two-column `bin_center_ns,<name>` table.
pub fn write_profile(path: &Path, centers: &[f64], values: &[f64], name: &str) -> Result<()> {
    let mut t = Table::new(&["bin_center_ns", name]);
    for (c, v) in centers.iter().zip(values) {
        t.push(vec![fmt_f64(*c), fmt_f64(*v)]);
    }
    t.write(path)
}

/// Histogram as `bin_center_ns,count` with integer counts.
pub fn write_histogram(path: &Path, centers: &[f64], counts: &[u64]) -> Result<()> {
    let mut t = Table::new(&["bin_center_ns", "count"]);
    for (c, v) in centers.iter().zip(counts) {
        t.push(vec![fmt_f64(*c), v.to_string()]);
    }
    t.write(path)
}

/// Reads a two-column `bin_center_ns,value` CSV with a header line.
pub fn read_profile(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut centers = Vec::new();
    let mut values = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<(f64, f64)> = match fields.as_slice() {
            [a, b] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        match parsed {
            Some((c, v)) => {
                centers.push(c);
                values.push(v);
            }
            None if i == 0 && centers.is_empty() => continue,
            None => {
                return Err(Error::Parse {
                    path: path.into(),
                    msg: format!("line {}: expected two numeric columns, got {line:?}", i + 1),
                })
            }
        }
    }
    if centers.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            msg: "no data rows".into(),
        });
    }
    Ok((centers, values))
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse {
        path: path.into(),
        msg: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_f64(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_f64(0.0), "0.00000000e0");
    }

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("h.csv");
        write_histogram(&p, &[0.025, 0.075], &[3, 0]).unwrap();
        let (c, v) = read_profile(&p).unwrap();
        assert_eq!(c, vec![0.025, 0.075]);
        assert_eq!(v, vec![3.0, 0.0]);
    }

    #[test]
    fn malformed_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "bin_center_ns,count\n0.5,1\nnope\n").unwrap();
        assert!(matches!(read_profile(&p), Err(Error::Parse { .. })));
    }
}
