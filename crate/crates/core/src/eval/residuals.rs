use serde::{Deserialize, Serialize};

use super::metrics::quantile_sorted;
use super::RunResult;
use crate::error::Result;
use crate::models::ModelKind;

pub const GATE_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub p0: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub p100: f64,
}

/// |residual| distribution of one fertilization month; `candle` is `None`
/// when the month has no test samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyResidualStats {
    pub month: u32,
    pub count: usize,
    pub candle: Option<Candle>,
}

pub fn candle(abs_residuals: &[f64]) -> Result<Candle> {
    let mut v = abs_residuals.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(Candle {
        p0: quantile_sorted(&v, 0.0)?,
        q25: quantile_sorted(&v, 0.25)?,
        q50: quantile_sorted(&v, 0.5)?,
        q75: quantile_sorted(&v, 0.75)?,
        p100: quantile_sorted(&v, 1.0)?,
    })
}

/// Absolute residuals pooled over runs and years, grouped by month 1..=12.
pub fn monthly_residual_stats(runs: &[RunResult]) -> Result<Vec<MonthlyResidualStats>> {
    let mut by_month: Vec<Vec<f64>> = vec![Vec::new(); 12];
    for r in runs {
        for p in &r.predictions {
            if (1..=12).contains(&p.fert_month) {
                by_month[p.fert_month as usize - 1].push((p.prediction - p.target).abs());
            }
        }
    }
    by_month
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Ok(MonthlyResidualStats {
                month: i as u32 + 1,
                count: v.len(),
                candle: if v.is_empty() { None } else { Some(candle(v)?) },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthGate {
    pub month: u32,
    pub q75: Option<f64>,
    /// A month without data does not pass.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub model: ModelKind,
    pub site: String,
    pub threshold: f64,
    pub months: Vec<MonthGate>,
    pub operational: bool,
}

/// A month passes iff its q75 of |residual| is at most `threshold`.
pub fn operational_gate(
    model: ModelKind,
    site: &str,
    stats: &[MonthlyResidualStats],
    threshold: f64,
) -> GateVerdict {
    let months: Vec<MonthGate> = stats
        .iter()
        .map(|s| {
            let q75 = s.candle.map(|c| c.q75);
            MonthGate {
                month: s.month,
                q75,
                pass: q75.is_some_and(|q| q <= threshold),
            }
        })
        .collect();
    GateVerdict {
        model,
        site: site.to_string(),
        threshold,
        operational: months.len() == 12 && months.iter().all(|m| m.pass),
        months,
    }
}
