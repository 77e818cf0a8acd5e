//! Regression samples from simulation results.
//!
//! Feature layout (425 values): for day offsets -28..=-1 (oldest first), the
//! 15 daily channels of [`DailyRecord::channels`], so the value of channel `c`
//! on window day `d` (0 = oldest) sits at `d * 15 + c`. The last five slots
//! are the statics `n_amount, fert_month / 12, irrigated, pawc, soil_carbon`.
//!
//! The forest uses 65 values: four 7-day means of every channel (oldest week
//! first, index `week * 15 + c`) followed by the same five statics.

mod io;
mod scaler;
mod split;

pub use io::{read_samples, write_samples};
pub use scaler::{apply_scaler, fit_scaler, Scaler};
pub use split::{split_by_year, SplitSpec};

use chrono::Days;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::{DailyRecord, Scenario, SimulationResult, WINDOW_DAYS};

pub const CHANNELS: usize = DailyRecord::CHANNELS;
pub const STATICS: usize = 5;
pub const FEATURE_WIDTH: usize = WINDOW_DAYS * CHANNELS + STATICS;
pub const WEEKS: usize = WINDOW_DAYS / 7;
pub const RF_WIDTH: usize = WEEKS * CHANNELS + STATICS;

/// Index of channel `channel` on window day `day` (0 = oldest).
pub const fn feature_index(day: usize, channel: usize) -> usize {
    day * CHANNELS + channel
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_WIDTH {
            return Err(Error::shape(format!(
                "feature vector must have {FEATURE_WIDTH} values, got {}",
                values.len()
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn statics(&self) -> &[f64] {
        &self.0[FEATURE_WIDTH - STATICS..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub scenario_id: u64,
    pub scenario_key: String,
    pub site_id: String,
    pub fert_year: i32,
    pub fert_month: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub rf_features: Vec<f64>,
    /// NRR, kg yield/ha/kg N.
    pub target: f64,
    pub meta: SampleMeta,
}

/// The 28 records strictly before the fertilization date, ascending.
pub fn extract_window(result: &SimulationResult) -> Result<Vec<DailyRecord>> {
    let fert = result.scenario.fert_date();
    let mut out = Vec::with_capacity(WINDOW_DAYS);
    for back in (1..=WINDOW_DAYS as u64).rev() {
        let date = fert
            .checked_sub_days(Days::new(back))
            .ok_or_else(|| Error::data("window start out of calendar range"))?;
        let rec = result
            .daily
            .iter()
            .find(|r| r.date == date)
            .ok_or_else(|| {
                Error::data(format!(
                    "scenario {} has no daily record for {date}",
                    result.scenario.key()
                ))
            })?;
        out.push(*rec);
    }
    Ok(out)
}

fn statics(scenario: &Scenario) -> [f64; STATICS] {
    [
        scenario.n_amount,
        f64::from(scenario.fert_month) / 12.0,
        if scenario.irrigated { 1.0 } else { 0.0 },
        scenario.pawc,
        scenario.soil_carbon,
    ]
}

fn check_window(window: &[DailyRecord]) -> Result<()> {
    if window.len() != WINDOW_DAYS {
        return Err(Error::shape(format!(
            "window must span {WINDOW_DAYS} days, got {}",
            window.len()
        )));
    }
    Ok(())
}

pub fn assemble_features(window: &[DailyRecord], scenario: &Scenario) -> Result<FeatureVector> {
    check_window(window)?;
    let mut v = Vec::with_capacity(FEATURE_WIDTH);
    for rec in window {
        v.extend_from_slice(&rec.channels());
    }
    v.extend_from_slice(&statics(scenario));
    FeatureVector::new(v)
}

pub fn weekly_aggregate(window: &[DailyRecord], scenario: &Scenario) -> Result<Vec<f64>> {
    check_window(window)?;
    let mut out = Vec::with_capacity(RF_WIDTH);
    for week in window.chunks(7) {
        let mut sums = [0.0; CHANNELS];
        for rec in week {
            for (s, v) in sums.iter_mut().zip(rec.channels()) {
                *s += v;
            }
        }
        out.extend(sums.iter().map(|s| s / 7.0));
    }
    out.extend_from_slice(&statics(scenario));
    Ok(out)
}

/// Weekly means recomputed from a flat feature vector.
pub fn weekly_from_features(features: &FeatureVector) -> Vec<f64> {
    let v = features.values();
    let mut out = Vec::with_capacity(RF_WIDTH);
    for week in 0..WEEKS {
        for c in 0..CHANNELS {
            let sum: f64 = (0..7).map(|d| v[feature_index(week * 7 + d, c)]).sum();
            out.push(sum / 7.0);
        }
    }
    out.extend_from_slice(features.statics());
    out
}

/// Builds the regression sample of a labeled result; `None` when unlabeled.
pub fn build_sample(result: &SimulationResult) -> Result<Option<Sample>> {
    let Some(target) = result.nrr else {
        return Ok(None);
    };
    let window = extract_window(result)?;
    let s = &result.scenario;
    Ok(Some(Sample {
        features: assemble_features(&window, s)?,
        rf_features: weekly_aggregate(&window, s)?,
        target,
        meta: SampleMeta {
            scenario_id: s.id,
            scenario_key: s.key(),
            site_id: s.site_id.clone(),
            fert_year: s.fert_year,
            fert_month: s.fert_month,
        },
    }))
}

pub fn build_samples(results: &[SimulationResult]) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for r in results {
        if let Some(s) = build_sample(r)? {
            out.push(s);
        }
    }
    Ok(out)
}
