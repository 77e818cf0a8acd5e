//! Sample files: `scenario_id, scenario_key, site_id, fert_year, fert_month,
//! target, f0 .. f424`.

use std::path::Path;

use super::{weekly_from_features, FeatureVector, Sample, SampleMeta, FEATURE_WIDTH};
use crate::csvutil::{field, fmt_f64, parse_f64, parse_int, writer};
use crate::error::{Error, Result};

const META_COLUMNS: [&str; 6] = [
    "scenario_id",
    "scenario_key",
    "site_id",
    "fert_year",
    "fert_month",
    "target",
];

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = META_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..FEATURE_WIDTH).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for s in samples {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(s.meta.scenario_id.to_string());
        rec.push(s.meta.scenario_key.clone());
        rec.push(s.meta.site_id.clone());
        rec.push(s.meta.fert_year.to_string());
        rec.push(s.meta.fert_month.to_string());
        rec.push(fmt_f64(s.target));
        rec.extend(s.features.values().iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample file. Weekly forest features are recomputed from the
/// stored feature vector.
pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let width = rdr.headers()?.len();
    if width != META_COLUMNS.len() + FEATURE_WIDTH {
        return Err(Error::data(format!(
            "{} has {width} columns, expected {}",
            path.display(),
            META_COLUMNS.len() + FEATURE_WIDTH
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut values = Vec::with_capacity(FEATURE_WIDTH);
        for j in 0..FEATURE_WIDTH {
            values.push(parse_f64(
                field(&rec, META_COLUMNS.len() + j, "feature")?,
                "feature",
            )?);
        }
        let features = FeatureVector::new(values)?;
        out.push(Sample {
            rf_features: weekly_from_features(&features),
            features,
            target: parse_f64(field(&rec, 5, "target")?, "target")?,
            meta: SampleMeta {
                scenario_id: parse_int(field(&rec, 0, "scenario_id")?, "scenario_id")?,
                scenario_key: field(&rec, 1, "scenario_key")?.to_string(),
                site_id: field(&rec, 2, "site_id")?.to_string(),
                fert_year: parse_int(field(&rec, 3, "fert_year")?, "fert_year")?,
                fert_month: parse_int(field(&rec, 4, "fert_month")?, "fert_month")?,
            },
        });
    }
    Ok(out)
}
