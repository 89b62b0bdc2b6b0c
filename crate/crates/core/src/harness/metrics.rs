use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::{Error, Real, Result};

pub const CSV_HEADER: &str = "experiment,optimizer,epoch,step,wall_time_s,train_loss,eval_metric,alpha,z";

/// One evaluation point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    pub optimizer: String,
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Cumulative time spent inside optimizer steps.
    pub wall_time_s: Real,
    pub train_loss: Real,
    /// Test accuracy for classifiers, held-out loss for regression.
    pub eval_metric: Real,
    /// Step scale of the last step (NaN when the optimizer has none).
    pub alpha: Real,
    /// Metric norm of the last step (NaN when the optimizer has none).
    pub z: Real,
}

/// 17 significant digits, enough to round-trip every double.
fn num(v: Real) -> String {
    format!("{:.16e}", v as f64)
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.optimizer,
            self.epoch,
            self.step,
            num(self.wall_time_s),
            num(self.train_loss),
            num(self.eval_metric),
            num(self.alpha),
            num(self.z)
        )
    }
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        writeln!(out, "{}", row.to_csv()).expect("writing to a string");
    }
    out
}

/// Writes the whole table at once through a sibling temporary file, so an
/// interrupted or failed run never leaves a partial CSV at `path`.
pub fn write_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(to_csv(rows).as_bytes())
        .and_then(|_| file.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> MetricsRow {
        MetricsRow {
            experiment: "matfac".into(),
            optimizer: "adam".into(),
            epoch: 1,
            step: 10,
            wall_time_s: 0.5,
            train_loss: 0.1,
            eval_metric: 1.0 / 3.0,
            alpha: Real::NAN,
            z: Real::NAN,
        }
    }

    #[test]
    fn floats_round_trip() {
        let line = row().to_csv();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 9);
        assert_eq!(fields[6].parse::<f64>().unwrap(), (1.0 / 3.0) as Real as f64);
        assert_eq!(fields[5], "1.0000000000000001e-1");
        assert!(fields[7].parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn table_starts_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("m.csv");
        write_csv(&path, &[row(), row()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(!dir.path().join("sub").join("m.csv.partial").exists());
    }
}
