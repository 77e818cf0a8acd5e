//! Small helpers shared by the delimited-file writers and readers.

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub(crate) fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::data(format!("bad {what} value {s:?}: {e}")))
}

pub(crate) fn parse_opt_f64(s: &str, what: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, what).map(Some)
    }
}

pub(crate) fn parse_int<T: std::str::FromStr>(s: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse::<T>()
        .map_err(|e| Error::data(format!("bad {what} value {s:?}: {e}")))
}

pub(crate) fn field<'r>(rec: &'r csv::StringRecord, idx: usize, what: &str) -> Result<&'r str> {
    rec.get(idx)
        .ok_or_else(|| Error::data(format!("missing column {what} (index {idx})")))
}

pub(crate) fn writer(path: &std::path::Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().from_path(path)?)
}
