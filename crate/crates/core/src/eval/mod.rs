//! Metrics, monthly residual candles, the operational gate, experiment
//! orchestration over seeds, and report files.

mod experiment;
mod metrics;
mod report;
mod residuals;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::csvutil::{field, fmt_f64, parse_f64, parse_int, writer};
use crate::error::{Error, Result};
use crate::models::ModelKind;

pub use experiment::{
    attach_forest_features, evaluate_model, run_experiment, run_seed, train_model, tune_forest,
    ExperimentOutcome, ForestSpec, ModelSpecs, RunFailure, SiteData, TrainedModel, TrainedRun,
};
pub use metrics::{mae, population_std, quantile, quantile_sorted, r_squared};
pub use report::{build_report, write_report, CandleRow, Report, RunMetrics, REPORT_FILES};
pub use residuals::{
    candle, monthly_residual_stats, operational_gate, Candle, GateVerdict, MonthGate,
    MonthlyResidualStats, GATE_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scenario_id: u64,
    pub fert_year: i32,
    pub fert_month: u32,
    pub target: f64,
    pub prediction: f64,
}

/// Test-set predictions of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: ModelKind,
    pub site: String,
    pub seed: u64,
    /// Mean training target, the constant baseline predictor.
    pub train_mean: f64,
    pub predictions: Vec<Prediction>,
}

impl RunResult {
    pub fn preds(&self) -> Vec<f64> {
        self.predictions.iter().map(|p| p.prediction).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.predictions.iter().map(|p| p.target).collect()
    }
}

/// Metrics of one model at one site, computed on predictions pooled over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: ModelKind,
    pub site: String,
    pub mae: f64,
    /// `None` when the pooled targets have zero variance.
    pub r2: Option<f64>,
    /// Population standard deviation of the pooled predictions.
    pub sigma: f64,
    pub runs: usize,
    pub predictions: usize,
    /// MAE of predicting each run's mean training target.
    pub baseline_mae: f64,
}

fn optional_r2(preds: &[f64], targets: &[f64]) -> Result<Option<f64>> {
    match r_squared(preds, targets) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn prediction_sigma(runs: &[RunResult]) -> Result<f64> {
    let pooled: Vec<f64> = runs.iter().flat_map(|r| r.preds()).collect();
    population_std(&pooled)
}

pub fn metrics_row(runs: &[RunResult]) -> Result<MetricsRow> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Argument("no runs to aggregate".into()))?;
    if runs
        .iter()
        .any(|r| r.model != first.model || r.site != first.site)
    {
        return Err(Error::Argument("runs mix models or sites".into()));
    }
    let preds: Vec<f64> = runs.iter().flat_map(|r| r.preds()).collect();
    let targets: Vec<f64> = runs.iter().flat_map(|r| r.targets()).collect();
    let baseline: Vec<f64> = runs
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.train_mean, r.predictions.len()))
        .collect();
    Ok(MetricsRow {
        model: first.model,
        site: first.site.clone(),
        mae: mae(&preds, &targets)?,
        r2: optional_r2(&preds, &targets)?,
        sigma: population_std(&preds)?,
        runs: runs.len(),
        predictions: preds.len(),
        baseline_mae: mae(&baseline, &targets)?,
    })
}

const RUN_COLUMNS: [&str; 7] = [
    "seed",
    "scenario_id",
    "fert_year",
    "fert_month",
    "target",
    "prediction",
    "train_mean",
];

/// Writes runs of one model/site, ordered by seed.
pub fn write_runs(path: &Path, runs: &[RunResult]) -> Result<()> {
    let mut sorted: Vec<&RunResult> = runs.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    let mut w = writer(path)?;
    w.write_record(RUN_COLUMNS)?;
    for r in sorted {
        for p in &r.predictions {
            w.write_record([
                r.seed.to_string(),
                p.scenario_id.to_string(),
                p.fert_year.to_string(),
                p.fert_month.to_string(),
                fmt_f64(p.target),
                fmt_f64(p.prediction),
                fmt_f64(r.train_mean),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs(path: &Path, model: ModelKind, site: &str) -> Result<Vec<RunResult>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut by_seed: BTreeMap<u64, RunResult> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let seed: u64 = parse_int(field(&rec, 0, "seed")?, "seed")?;
        let train_mean = parse_f64(field(&rec, 6, "train_mean")?, "train_mean")?;
        let run = by_seed.entry(seed).or_insert_with(|| RunResult {
            model,
            site: site.to_string(),
            seed,
            train_mean,
            predictions: Vec::new(),
        });
        run.predictions.push(Prediction {
            scenario_id: parse_int(field(&rec, 1, "scenario_id")?, "scenario_id")?,
            fert_year: parse_int(field(&rec, 2, "fert_year")?, "fert_year")?,
            fert_month: parse_int(field(&rec, 3, "fert_month")?, "fert_month")?,
            target: parse_f64(field(&rec, 4, "target")?, "target")?,
            prediction: parse_f64(field(&rec, 5, "prediction")?, "prediction")?,
        });
    }
    Ok(by_seed.into_values().collect())
}
