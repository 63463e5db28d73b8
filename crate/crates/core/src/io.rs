//! CSV ingestion of a single series and CSV/JSON export of results.
//! Numbers are written in scientific notation with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::ArFit;
use crate::kernelvar::VariancePathEstimate;
use crate::model::SeriesSample;
use crate::resample::CalibrationResult;
use crate::scalar::Scalar;

/// Fewest observations accepted after differencing.
pub const MIN_OBSERVATIONS: usize = 30;

/// Which CSV column holds the series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for Column {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

/// Formats with 17 significant digits.
pub fn fmt_num<F: Scalar>(v: F) -> String {
    format!("{:.16e}", v.as_f64())
}

fn parse_num(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads one numeric column, skipping a header row if the first row is not
/// numeric, and applies `difference` rounds of first differencing. The
/// result has `p = 0`; set the AR order with [`SeriesSample::with_order`].
pub fn ingest_csv(path: impl AsRef<Path>, column: Option<&Column>, difference: usize) -> Result<SeriesSample<f64>> {
    ingest_csv_min(path, column, difference, MIN_OBSERVATIONS)
}

/// [`ingest_csv`] with an explicit minimum length.
pub fn ingest_csv_min(
    path: impl AsRef<Path>,
    column: Option<&Column>,
    difference: usize,
    min_len: usize,
) -> Result<SeriesSample<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let mut values = Vec::new();
    let mut idx: Option<usize> = match column {
        Some(Column::Index(i)) => Some(*i),
        None => Some(0),
        Some(Column::Name(_)) => None,
    };
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = row + 1;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if row == 0 {
            let is_header = match (column, idx) {
                (Some(Column::Name(name)), _) => {
                    idx = rec.iter().position(|c| c.trim() == name);
                    if idx.is_none() {
                        return Err(Error::Data(format!(
                            "no column named '{name}' in the header of {}",
                            path.display()
                        )));
                    }
                    true
                }
                (_, Some(i)) => rec.get(i).is_some_and(|c| parse_num(c).is_none()),
                _ => false,
            };
            if is_header {
                continue;
            }
        }
        let i = idx.expect("column index resolved by the header row");
        let cell = rec.get(i).ok_or_else(|| Error::Data(format!("row {line} has no column {i}")))?;
        let v = parse_num(cell)
            .ok_or_else(|| Error::Data(format!("row {line}: '{}' is not a finite number", cell.trim())))?;
        values.push(v);
    }
    for _ in 0..difference {
        values = values.windows(2).map(|w| w[1] - w[0]).collect();
    }
    if values.len() < min_len.max(1) {
        return Err(Error::Data(format!(
            "{} usable observations after differencing, need at least {}",
            values.len(),
            min_len.max(1)
        )));
    }
    SeriesSample::new(values, 0)
}

/// Single column `x` holding every value including the presample.
pub fn write_series_csv<F: Scalar>(mut w: impl Write, sample: &SeriesSample<F>) -> Result<()> {
    writeln!(w, "x")?;
    for v in sample.values() {
        writeln!(w, "{}", fmt_num(*v))?;
    }
    Ok(())
}

pub fn write_residuals_csv<F: Scalar>(mut w: impl Write, fit: &ArFit<F>) -> Result<()> {
    writeln!(w, "residual")?;
    for v in &fit.residuals {
        writeln!(w, "{}", fmt_num(*v))?;
    }
    Ok(())
}

/// Columns `t,h2` with `t` starting at 1.
pub fn write_variance_path_csv<F: Scalar>(mut w: impl Write, path: &VariancePathEstimate<F>) -> Result<()> {
    writeln!(w, "t,h2")?;
    for (t, v) in path.h2.iter().enumerate() {
        writeln!(w, "{},{}", t + 1, fmt_num(*v))?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(bound = "F: Scalar")]
struct PathSidecar<'a, F> {
    bandwidth: F,
    kernel: crate::kernelvar::KernelSpec,
    rule: &'a crate::kernelvar::BandwidthRule<F>,
    floor_applied: bool,
}

/// JSON sidecar `{bandwidth, kernel, rule, floor_applied}`.
pub fn variance_path_sidecar<F: Scalar>(path: &VariancePathEstimate<F>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PathSidecar {
        bandwidth: path.bandwidth,
        kernel: path.kernel,
        rule: &path.rule,
        floor_applied: path.floor_applied,
    })?)
}

/// Columns `gamma,rejection_rate,replications`.
pub fn write_calibration_csv<F: Scalar>(mut w: impl Write, cal: &CalibrationResult<F>) -> Result<()> {
    writeln!(w, "gamma,rejection_rate,replications")?;
    for row in &cal.table {
        writeln!(w, "{},{},{}", fmt_num(row.gamma), fmt_num(row.rejection_rate), row.replications)?;
    }
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn with_file<T>(path: impl AsRef<Path>, f: impl FnOnce(&mut std::io::BufWriter<File>) -> Result<T>) -> Result<T> {
    let mut w = std::io::BufWriter::new(File::create(path.as_ref())?);
    let out = f(&mut w)?;
    w.flush()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, DgpSpec, VarianceProfile};

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn differences_and_headers() {
        let f = temp_csv("1\n2\n4\n7\n");
        let s = ingest_csv_min(f.path(), None, 1, 0).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
        let f = temp_csv("cpi\n1.0\n1.5\n");
        assert_eq!(ingest_csv_min(f.path(), None, 0, 0).unwrap().values(), &[1.0, 1.5]);
    }

    #[test]
    fn named_and_indexed_columns() {
        let f = temp_csv("date,m1\n2001,5\n2002,6.5\n2003,9\n");
        let s = ingest_csv_min(f.path(), Some(&Column::Name("m1".into())), 0, 0).unwrap();
        assert_eq!(s.values(), &[5.0, 6.5, 9.0]);
        let s = ingest_csv_min(f.path(), Some(&"1".parse().unwrap()), 1, 0).unwrap();
        assert_eq!(s.values(), &[1.5, 2.5]);
        assert!(matches!(ingest_csv_min(f.path(), Some(&Column::Name("cpi".into())), 0, 0), Err(Error::Data(_))));
    }

    #[test]
    fn bad_cells_report_row() {
        let f = temp_csv("x\n1\n2\nabc\n4\n");
        let err = ingest_csv_min(f.path(), None, 0, 0).unwrap_err().to_string();
        assert!(err.contains("row 4"), "{err}");
    }

    #[test]
    fn too_short_and_missing() {
        let body: String = (0..10).map(|i| format!("{i}\n")).collect();
        let f = temp_csv(&body);
        assert!(matches!(ingest_csv(f.path(), None, 1), Err(Error::Data(_))));
        assert!(matches!(ingest_csv("/nonexistent/file.csv", None, 0), Err(Error::Data(_))));
    }

    #[test]
    fn series_round_trip_is_exact() {
        let s = simulate(&DgpSpec::null(VarianceProfile::<f64>::benchmark_sinusoid(), 500, 7)).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &s).unwrap();
        let f = temp_csv(std::str::from_utf8(&buf).unwrap());
        assert_eq!(ingest_csv(f.path(), None, 0).unwrap(), s);
    }

    #[test]
    fn variance_path_exports() {
        let path =
            crate::kernelvar::estimate_variance_path(&[1.0_f64, 2.0, 3.0, 4.0], 0.3, Default::default()).unwrap();
        let mut buf = Vec::new();
        write_variance_path_csv(&mut buf, &path).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,h2\n1,"));
        assert_eq!(text.lines().count(), 5);
        let v: serde_json::Value = serde_json::from_str(&variance_path_sidecar(&path).unwrap()).unwrap();
        assert_eq!(v["kernel"], "gaussian");
        assert_eq!(v["rule"]["rule"], "fixed");
        assert_eq!(v["floor_applied"], false);
    }
}
