//! Dataset files.
//!
//! - `scenarios.csv`: one row per scenario, `scenario_id, scenario_key,
//!   site_id, pawc, soil_carbon, irrigated, fert_year, fert_month, fert_day,
//!   n_amount`.
//! - `labels.csv`: labeled scenarios only, `scenario_id, scenario_key, nrr`.
//! - `daily_<site>.csv`: one row per (scenario, day), `scenario_id, date`
//!   followed by [`DAILY_COLUMNS`] in that order.

use chrono::NaiveDate;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::grid::Scenario;
use super::sim::{DailyRecord, SimulationResult};
use crate::csvutil::{field, fmt_f64, parse_f64, parse_int, writer};
use crate::error::{Error, Result};

pub const DAILY_COLUMNS: [&str; 15] = DailyRecord::CHANNEL_NAMES;

const SCENARIO_HEADER: [&str; 10] = [
    "scenario_id",
    "scenario_key",
    "site_id",
    "pawc",
    "soil_carbon",
    "irrigated",
    "fert_year",
    "fert_month",
    "fert_day",
    "n_amount",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetCounts {
    pub scenarios: usize,
    pub labeled: usize,
    pub daily_rows: usize,
}

/// Writes the dataset and returns the written file names (sorted) and counts.
pub fn write_dataset(
    dir: &Path,
    results: &[SimulationResult],
) -> Result<(Vec<String>, DatasetCounts)> {
    std::fs::create_dir_all(dir)?;
    let mut counts = DatasetCounts::default();
    let mut files = vec!["scenarios.csv".to_string(), "labels.csv".to_string()];

    let mut scen = writer(&dir.join("scenarios.csv"))?;
    scen.write_record(SCENARIO_HEADER)?;
    let mut labels = writer(&dir.join("labels.csv"))?;
    labels.write_record(["scenario_id", "scenario_key", "nrr"])?;

    let mut by_site: BTreeMap<&str, Vec<&SimulationResult>> = BTreeMap::new();
    for r in results {
        let s = &r.scenario;
        scen.write_record([
            s.id.to_string(),
            s.key(),
            s.site_id.clone(),
            fmt_f64(s.pawc),
            fmt_f64(s.soil_carbon),
            u8::from(s.irrigated).to_string(),
            s.fert_year.to_string(),
            s.fert_month.to_string(),
            s.fert_day.to_string(),
            fmt_f64(s.n_amount),
        ])?;
        if let Some(nrr) = r.nrr {
            labels.write_record([s.id.to_string(), s.key(), fmt_f64(nrr)])?;
            counts.labeled += 1;
        }
        counts.scenarios += 1;
        by_site.entry(s.site_id.as_str()).or_default().push(r);
    }
    scen.flush()?;
    labels.flush()?;

    for (site, rows) in by_site {
        let name = format!("daily_{site}.csv");
        let mut w = writer(&dir.join(&name))?;
        let mut header = vec!["scenario_id", "date"];
        header.extend(DAILY_COLUMNS);
        w.write_record(&header)?;
        for r in rows {
            let id = r.scenario.id.to_string();
            for d in &r.daily {
                let mut rec = Vec::with_capacity(17);
                rec.push(id.clone());
                rec.push(d.date.to_string());
                rec.extend(d.channels().iter().map(|v| fmt_f64(*v)));
                w.write_record(&rec)?;
                counts.daily_rows += 1;
            }
        }
        w.flush()?;
        files.push(name);
    }
    files.sort();
    Ok((files, counts))
}

fn read_scenarios(dir: &Path) -> Result<Vec<Scenario>> {
    let mut rdr = csv::Reader::from_path(dir.join("scenarios.csv"))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let irrigated = match field(&rec, 5, "irrigated")? {
            "1" => true,
            "0" => false,
            other => return Err(Error::data(format!("bad irrigated flag {other:?}"))),
        };
        let s = Scenario {
            id: parse_int(field(&rec, 0, "scenario_id")?, "scenario_id")?,
            site_id: field(&rec, 2, "site_id")?.to_string(),
            pawc: parse_f64(field(&rec, 3, "pawc")?, "pawc")?,
            soil_carbon: parse_f64(field(&rec, 4, "soil_carbon")?, "soil_carbon")?,
            irrigated,
            fert_year: parse_int(field(&rec, 6, "fert_year")?, "fert_year")?,
            fert_month: parse_int(field(&rec, 7, "fert_month")?, "fert_month")?,
            fert_day: parse_int(field(&rec, 8, "fert_day")?, "fert_day")?,
            n_amount: parse_f64(field(&rec, 9, "n_amount")?, "n_amount")?,
        };
        if NaiveDate::from_ymd_opt(s.fert_year, s.fert_month, s.fert_day).is_none() {
            return Err(Error::data(format!(
                "scenario {} has an invalid date",
                s.id
            )));
        }
        out.push(s);
    }
    Ok(out)
}

/// Reads a dataset written by [`write_dataset`].
///
/// Daily series are returned as stored; contiguity and coverage are checked by
/// the consumers that need them.
pub fn read_dataset(dir: &Path) -> Result<Vec<SimulationResult>> {
    let scenarios = read_scenarios(dir)?;

    let mut labels: HashMap<u64, f64> = HashMap::new();
    let mut rdr = csv::Reader::from_path(dir.join("labels.csv"))?;
    for rec in rdr.records() {
        let rec = rec?;
        let id: u64 = parse_int(field(&rec, 0, "scenario_id")?, "scenario_id")?;
        labels.insert(id, parse_f64(field(&rec, 2, "nrr")?, "nrr")?);
    }

    let mut sites: Vec<&str> = scenarios.iter().map(|s| s.site_id.as_str()).collect();
    sites.sort_unstable();
    sites.dedup();
    let mut daily: HashMap<u64, Vec<DailyRecord>> = HashMap::new();
    for site in sites {
        let mut rdr = csv::Reader::from_path(dir.join(format!("daily_{site}.csv")))?;
        for rec in rdr.records() {
            let rec = rec?;
            let id: u64 = parse_int(field(&rec, 0, "scenario_id")?, "scenario_id")?;
            let date: NaiveDate = field(&rec, 1, "date")?
                .parse()
                .map_err(|e| Error::data(format!("bad date: {e}")))?;
            let mut c = [0.0; 15];
            for (j, slot) in c.iter_mut().enumerate() {
                *slot = parse_f64(field(&rec, 2 + j, DAILY_COLUMNS[j])?, DAILY_COLUMNS[j])?;
            }
            daily
                .entry(id)
                .or_default()
                .push(DailyRecord::from_channels(date, c));
        }
    }

    scenarios
        .into_iter()
        .map(|scenario| {
            let nrr = labels.remove(&scenario.id);
            if nrr.is_some() != (scenario.n_amount > 0.0) {
                return Err(Error::data(format!(
                    "label presence for scenario {} does not match its fertilizer amount",
                    scenario.id
                )));
            }
            let daily = daily.remove(&scenario.id).unwrap_or_default();
            Ok(SimulationResult {
                scenario,
                daily,
                nrr,
            })
        })
        .collect()
}
