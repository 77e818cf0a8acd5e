use std::path::Path;
use std::time::Duration;

use crate::csvutil::{field, fmt_opt, parse_int, parse_opt_f64, writer};
use crate::error::Result;

/// Losses of one epoch. Components that a stage does not optimize are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// `mlp`, `ae` (reconstruction stage), `head` or `dae`.
    pub stage: String,
    /// 1-based within the stage.
    pub epoch: usize,
    pub train_nrr: Option<f64>,
    pub train_rec: Option<f64>,
    pub train_total: f64,
    pub val_nrr: Option<f64>,
    pub val_rec: Option<f64>,
    pub val_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    /// Kept in memory only so that written logs stay byte-reproducible.
    pub wall_time: Duration,
}

const COLUMNS: [&str; 8] = [
    "stage",
    "epoch",
    "train_nrr",
    "train_rec",
    "train_total",
    "val_nrr",
    "val_rec",
    "val_total",
];

impl TrainLog {
    pub fn stage(&self, stage: &str) -> impl Iterator<Item = &EpochLog> {
        let stage = stage.to_string();
        self.epochs.iter().filter(move |e| e.stage == stage)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        w.write_record(COLUMNS)?;
        for e in &self.epochs {
            w.write_record([
                e.stage.clone(),
                e.epoch.to_string(),
                fmt_opt(e.train_nrr),
                fmt_opt(e.train_rec),
                fmt_opt(Some(e.train_total)),
                fmt_opt(e.val_nrr),
                fmt_opt(e.val_rec),
                fmt_opt(e.val_total),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a log written by [`TrainLog::write_csv`]; the seed and wall time
    /// are not stored in the file.
    pub fn read_csv(path: &Path, seed: u64) -> Result<TrainLog> {
        let mut r = csv::Reader::from_path(path)?;
        let mut epochs = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let opt = |i: usize| -> Result<Option<f64>> {
                parse_opt_f64(field(&rec, i, COLUMNS[i])?, COLUMNS[i])
            };
            epochs.push(EpochLog {
                stage: field(&rec, 0, "stage")?.to_string(),
                epoch: parse_int(field(&rec, 1, "epoch")?, "epoch")?,
                train_nrr: opt(2)?,
                train_rec: opt(3)?,
                train_total: opt(4)?.unwrap_or(f64::NAN),
                val_nrr: opt(5)?,
                val_rec: opt(6)?,
                val_total: opt(7)?,
            });
        }
        Ok(TrainLog {
            seed,
            epochs,
            wall_time: Duration::ZERO,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let log = TrainLog {
            seed: 3,
            epochs: vec![EpochLog {
                stage: "dae".into(),
                epoch: 1,
                train_nrr: Some(0.1),
                train_rec: Some(1.0 / 3.0),
                train_total: 0.1 + 1.0 / 3.0,
                val_nrr: None,
                val_rec: None,
                val_total: None,
            }],
            wall_time: Duration::ZERO,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        log.write_csv(&p).unwrap();
        assert_eq!(TrainLog::read_csv(&p, 3).unwrap(), log);
    }
}
