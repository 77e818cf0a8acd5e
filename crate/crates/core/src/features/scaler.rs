use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{Sample, FEATURE_WIDTH};
use crate::csvutil::{field, fmt_f64, parse_f64, parse_int, writer};
use crate::error::{Error, Result};

/// Per-feature standardization fitted on one location's training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub location: String,
    pub mean: Vec<f64>,
    /// Population standard deviations; constant features carry 1.
    pub std: Vec<f64>,
}

/// Fits means and population standard deviations on the rows of `location`.
pub fn fit_scaler(train: &[Sample], location: &str) -> Result<Scaler> {
    let rows: Vec<&[f64]> = train
        .iter()
        .filter(|s| s.meta.site_id == location)
        .map(|s| s.features.values())
        .collect();
    if rows.len() < 2 {
        return Err(Error::data(format!(
            "location {location} has {} training rows; at least 2 are needed",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; FEATURE_WIDTH];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(*r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; FEATURE_WIDTH];
    for r in &rows {
        for ((acc, v), m) in var.iter_mut().zip(*r).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var
        .iter()
        .zip(&mean)
        .map(|(v, m)| {
            let s = (v / n).sqrt();
            if s <= 1e-12 * m.abs().max(1.0) {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok(Scaler {
        location: location.to_string(),
        mean,
        std,
    })
}

impl Scaler {
    pub fn transform_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    /// Writes the sidecar: `location,index,mean,std`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        w.write_record(["location", "index", "mean", "std"])?;
        for (i, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            w.write_record([
                self.location.clone(),
                i.to_string(),
                fmt_f64(*m),
                fmt_f64(*s),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Scaler> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut location = None;
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let loc = field(&rec, 0, "location")?;
            match &location {
                None => location = Some(loc.to_string()),
                Some(l) if l != loc => {
                    return Err(Error::data("scaler sidecar mixes locations"));
                }
                _ => {}
            }
            let idx: usize = parse_int(field(&rec, 1, "index")?, "index")?;
            if idx != row {
                return Err(Error::data(format!("scaler index {idx} out of order")));
            }
            mean.push(parse_f64(field(&rec, 2, "mean")?, "mean")?);
            std.push(parse_f64(field(&rec, 3, "std")?, "std")?);
        }
        if mean.len() != FEATURE_WIDTH {
            return Err(Error::data(format!(
                "scaler sidecar has {} features, expected {FEATURE_WIDTH}",
                mean.len()
            )));
        }
        Ok(Scaler {
            location: location.unwrap_or_default(),
            mean,
            std,
        })
    }
}

/// Standardizes the features of `samples`, which must all belong to the
/// scaler's location. Targets and weekly forest features are untouched.
pub fn apply_scaler(scaler: &Scaler, samples: &[Sample]) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| {
            if s.meta.site_id != scaler.location {
                return Err(Error::data(format!(
                    "sample {} from {} given to the {} scaler",
                    s.meta.scenario_key, s.meta.site_id, scaler.location
                )));
            }
            let mut out = s.clone();
            scaler.transform_row(out.features.values_mut());
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, SampleMeta};

    fn sample(site: &str, v0: f64, v1: f64) -> Sample {
        let mut f = vec![5.0; FEATURE_WIDTH];
        f[0] = v0;
        f[1] = v1;
        Sample {
            features: FeatureVector::new(f).unwrap(),
            rf_features: vec![],
            target: 0.0,
            meta: SampleMeta {
                scenario_id: 0,
                scenario_key: "k".into(),
                site_id: site.into(),
                fert_year: 2000,
                fert_month: 1,
            },
        }
    }

    #[test]
    fn hand_standardization() {
        let train = vec![
            sample("a", 0.0, 1.0),
            sample("a", 2.0, 3.0),
            sample("b", 100.0, 0.0),
        ];
        let sc = fit_scaler(&train, "a").unwrap();
        assert_eq!(sc.mean[0], 1.0);
        assert_eq!(sc.std[0], 1.0);
        let t = apply_scaler(&sc, &train[..2]).unwrap();
        assert_eq!(t[0].features.values()[0], -1.0);
        assert_eq!(t[1].features.values()[0], 1.0);
        // Constant dimension: centered, divisor forced to 1.
        assert_eq!(sc.std[5], 1.0);
        assert_eq!(t[0].features.values()[5], 0.0);
        // A value equal to the training mean maps to 0.
        let probe = apply_scaler(&sc, &[sample("a", 1.0, 2.0)]).unwrap();
        assert_eq!(probe[0].features.values()[0], 0.0);
        assert_eq!(probe[0].features.values()[1], 0.0);
    }

    #[test]
    fn too_few_rows_is_data_error() {
        let train = vec![sample("a", 0.0, 1.0)];
        assert!(matches!(fit_scaler(&train, "a"), Err(Error::Data(_))));
        assert!(matches!(fit_scaler(&train, "zzz"), Err(Error::Data(_))));
    }

    #[test]
    fn wrong_location_rejected() {
        let train = vec![sample("a", 0.0, 1.0), sample("a", 2.0, 3.0)];
        let sc = fit_scaler(&train, "a").unwrap();
        assert!(apply_scaler(&sc, &[sample("b", 0.0, 0.0)]).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let train = vec![
            sample("a", 0.1, 1.0 / 3.0),
            sample("a", 2.7, 3.0),
            sample("a", -4.0, 1e-9),
        ];
        let sc = fit_scaler(&train, "a").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scaler_a.csv");
        sc.save(&p).unwrap();
        assert_eq!(Scaler::load(&p).unwrap(), sc);
    }
}
