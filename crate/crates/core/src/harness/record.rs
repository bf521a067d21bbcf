use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One epoch of a training run. Lower scores are better throughout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_score: f64,
    /// Cumulative training time at the end of the epoch, excluding scoring.
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub best_test_score: f64,
    pub best_epoch: usize,
    pub final_test_score: f64,
    /// First time the run came within 1% of its own best score.
    pub time_to_1pct_ms: Option<f64>,
    pub total_wall_ms: f64,
}

/// Per-epoch trace and summary of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub optimizer: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub rows: Vec<EpochRow>,
    pub summary: RunSummary,
    /// Experiment-specific scalars (oracle values, parameter counts, ...).
    pub extras: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn new(experiment: impl Into<String>, optimizer: impl Into<String>, seed: u64, config: serde_json::Value) -> Self {
        Self {
            experiment: experiment.into(),
            optimizer: optimizer.into(),
            seed,
            config,
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: EpochRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(Error::invalid("epoch", format!("rows must increase ({} after {})", row.epoch, last.epoch)));
            }
        }
        if !row.test_score.is_finite() || !row.train_loss.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite metric at epoch {}: train {} test {}",
                row.epoch, row.train_loss, row.test_score
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extra(&mut self, key: &str, value: f64) {
        self.extras.insert(key.to_string(), value);
    }

    /// Recomputes the summary from the rows.
    pub fn finish(&mut self, total_wall_ms: f64) {
        let mut s = RunSummary {
            best_test_score: f64::INFINITY,
            total_wall_ms,
            ..RunSummary::default()
        };
        for row in &self.rows {
            if row.test_score < s.best_test_score {
                s.best_test_score = row.test_score;
                s.best_epoch = row.epoch;
            }
        }
        s.final_test_score = self.rows.last().map(|r| r.test_score).unwrap_or(f64::NAN);
        self.summary = s;
        self.summary.time_to_1pct_ms = self.time_to_within(self.summary.best_test_score, 0.01);
    }

    /// First cumulative time at which the score was within `tol` (relative)
    /// of `reference`.
    pub fn time_to_within(&self, reference: f64, tol: f64) -> Option<f64> {
        let limit = reference + tol * reference.abs();
        self.rows.iter().find(|r| r.test_score <= limit).map(|r| r.wall_ms)
    }

    /// `epoch,train_loss,test_score`; contains no timing so it is
    /// reproducible byte for byte.
    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "test_score"])?;
        for r in &self.rows {
            w.write_record([r.epoch.to_string(), fmt_f64(r.train_loss), fmt_f64(r.test_score)])?;
        }
        w.flush().map_err(|e| Error::io("metrics csv", e))?;
        Ok(())
    }

    /// `epoch,wall_ms`.
    pub fn write_timing_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "wall_ms"])?;
        for r in &self.rows {
            w.write_record([r.epoch.to_string(), format!("{:.3}", r.wall_ms)])?;
        }
        w.flush().map_err(|e| Error::io("timing csv", e))?;
        Ok(())
    }
}

/// Shortest representation that round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, score: f64, ms: f64) -> EpochRow {
        EpochRow { epoch, train_loss: score, test_score: score, wall_ms: ms }
    }

    #[test]
    fn summary_and_time_to_one_percent() {
        let mut r = RunRecord::new("x", "sgld", 1, serde_json::Value::Null);
        for (e, s) in [(1, 2.0), (2, 1.009), (3, 1.0), (4, 1.2)] {
            r.push(row(e, s, e as f64 * 10.0)).unwrap();
        }
        r.finish(40.0);
        assert_eq!(r.summary.best_test_score, 1.0);
        assert_eq!(r.summary.best_epoch, 3);
        assert_eq!(r.summary.final_test_score, 1.2);
        assert_eq!(r.summary.time_to_1pct_ms, Some(20.0));
        assert_eq!(r.time_to_within(0.5, 0.01), None);
    }

    #[test]
    fn rows_must_increase_and_be_finite() {
        let mut r = RunRecord::default();
        r.push(row(2, 1.0, 0.0)).unwrap();
        assert!(r.push(row(2, 1.0, 0.0)).is_err());
        assert!(matches!(r.push(row(3, f64::NAN, 0.0)), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn metrics_csv_has_no_timing() {
        let mut r = RunRecord::default();
        r.push(row(1, 0.5, 123.0)).unwrap();
        let mut buf = Vec::new();
        r.write_metrics_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,test_score\n1,0.5,0.5\n");
    }
}
