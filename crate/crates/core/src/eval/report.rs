use serde::{Deserialize, Serialize};
use std::path::Path;

use super::residuals::{
    monthly_residual_stats, operational_gate, GateVerdict, MonthlyResidualStats,
};
use super::{mae, metrics_row, optional_r2, population_std, MetricsRow, RunResult};
use crate::csvutil::{fmt_f64, fmt_opt, writer};
use crate::error::{Error, Result};
use crate::models::ModelKind;

pub const REPORT_FILES: [&str; 5] = [
    "candles.csv",
    "gate.csv",
    "metrics.csv",
    "metrics_per_run.csv",
    "report.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model: ModelKind,
    pub site: String,
    pub seed: u64,
    pub mae: f64,
    pub r2: Option<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandleRow {
    pub model: ModelKind,
    pub site: String,
    pub months: Vec<MonthlyResidualStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub threshold: f64,
    pub metrics: Vec<MetricsRow>,
    pub per_run: Vec<RunMetrics>,
    pub candles: Vec<CandleRow>,
    pub gates: Vec<GateVerdict>,
}

/// Aggregates each (model, site) group. Groups keep the given order.
pub fn build_report(groups: &[Vec<RunResult>], threshold: f64) -> Result<Report> {
    let mut report = Report {
        threshold,
        metrics: Vec::new(),
        per_run: Vec::new(),
        candles: Vec::new(),
        gates: Vec::new(),
    };
    for runs in groups {
        let Some(first) = runs.first() else {
            return Err(Error::Argument("report group without runs".into()));
        };
        report.metrics.push(metrics_row(runs)?);
        for r in runs {
            let (p, t) = (r.preds(), r.targets());
            report.per_run.push(RunMetrics {
                model: r.model,
                site: r.site.clone(),
                seed: r.seed,
                mae: mae(&p, &t)?,
                r2: optional_r2(&p, &t)?,
                sigma: population_std(&p)?,
            });
        }
        let stats = monthly_residual_stats(runs)?;
        report.gates.push(operational_gate(
            first.model,
            &first.site,
            &stats,
            threshold,
        ));
        report.candles.push(CandleRow {
            model: first.model,
            site: first.site.clone(),
            months: stats,
        });
    }
    Ok(report)
}

/// Writes the delimited reports and their JSON mirror into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    let mut w = writer(&dir.join("metrics.csv"))?;
    w.write_record([
        "model",
        "site",
        "mae",
        "r2",
        "sigma",
        "runs",
        "predictions",
        "baseline_mae",
    ])?;
    for m in &report.metrics {
        w.write_record([
            m.model.name().to_string(),
            m.site.clone(),
            fmt_f64(m.mae),
            fmt_opt(m.r2),
            fmt_f64(m.sigma),
            m.runs.to_string(),
            m.predictions.to_string(),
            fmt_f64(m.baseline_mae),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("metrics_per_run.csv"))?;
    w.write_record(["model", "site", "seed", "mae", "r2", "sigma"])?;
    for m in &report.per_run {
        w.write_record([
            m.model.name().to_string(),
            m.site.clone(),
            m.seed.to_string(),
            fmt_f64(m.mae),
            fmt_opt(m.r2),
            fmt_f64(m.sigma),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("candles.csv"))?;
    w.write_record([
        "model", "site", "month", "count", "p0", "q25", "q50", "q75", "p100",
    ])?;
    for c in &report.candles {
        for s in &c.months {
            let k = s.candle;
            w.write_record([
                c.model.name().to_string(),
                c.site.clone(),
                s.month.to_string(),
                s.count.to_string(),
                fmt_opt(k.map(|k| k.p0)),
                fmt_opt(k.map(|k| k.q25)),
                fmt_opt(k.map(|k| k.q50)),
                fmt_opt(k.map(|k| k.q75)),
                fmt_opt(k.map(|k| k.p100)),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(&dir.join("gate.csv"))?;
    w.write_record([
        "model",
        "site",
        "month",
        "q75",
        "threshold",
        "pass",
        "operational",
    ])?;
    for g in &report.gates {
        for m in &g.months {
            w.write_record([
                g.model.name().to_string(),
                g.site.clone(),
                m.month.to_string(),
                fmt_opt(m.q75),
                fmt_f64(g.threshold),
                m.pass.to_string(),
                g.operational.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(dir.join("report.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Prediction;

    fn group(model: ModelKind, site: &str) -> Vec<RunResult> {
        (1..=2)
            .map(|seed| RunResult {
                model,
                site: site.into(),
                seed,
                train_mean: 2.0,
                predictions: (1..=12)
                    .map(|m| Prediction {
                        scenario_id: m as u64,
                        fert_year: 2011,
                        fert_month: m,
                        target: m as f64,
                        prediction: m as f64 + seed as f64,
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn report_shape_and_files() {
        let groups: Vec<Vec<RunResult>> = [ModelKind::Rf, ModelKind::Mlp]
            .iter()
            .flat_map(|&m| ["a", "b"].map(|s| group(m, s)))
            .collect();
        let r = build_report(&groups, 5.0).unwrap();
        assert_eq!(r.metrics.len(), 4);
        assert_eq!(r.per_run.len(), 8);
        assert!(r.candles.iter().all(|c| c.months.len() == 12));
        assert!(r.gates.iter().all(|g| g.operational));
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &r).unwrap();
        for f in REPORT_FILES {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let json: Report =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(json, r);
        let gate = std::fs::read_to_string(dir.path().join("gate.csv")).unwrap();
        assert_eq!(gate.lines().count(), 1 + 4 * 12);
    }
}
