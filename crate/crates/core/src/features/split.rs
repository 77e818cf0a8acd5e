use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::Sample;
use crate::error::{Error, Result};

/// Year-based partition; training is every year not listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub validation_years: BTreeSet<i32>,
    pub test_years: BTreeSet<i32>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            validation_years: [1979, 1987, 1999, 2007].into_iter().collect(),
            test_years: (2011..=2018).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(y) = self.validation_years.intersection(&self.test_years).next() {
            return Err(Error::config(format!(
                "year {y} appears in both the validation and the test set"
            )));
        }
        Ok(())
    }

    pub fn partition(&self, year: i32) -> Partition {
        if self.validation_years.contains(&year) {
            Partition::Validation
        } else if self.test_years.contains(&year) {
            Partition::Test
        } else {
            Partition::Train
        }
    }

    /// Training years within `years` (the complement of the other two sets).
    pub fn training_years(&self, years: impl IntoIterator<Item = i32>) -> BTreeSet<i32> {
        years
            .into_iter()
            .filter(|y| self.partition(*y) == Partition::Train)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Splits {
    pub fn get(&self, p: Partition) -> &[Sample] {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }
}

/// Partitions by fertilization year; each part is ordered by scenario id.
pub fn split_by_year(samples: Vec<Sample>, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut out = Splits::default();
    for s in samples {
        match spec.partition(s.meta.fert_year) {
            Partition::Train => out.train.push(s),
            Partition::Validation => out.validation.push(s),
            Partition::Test => out.test.push(s),
        }
    }
    for part in [&mut out.train, &mut out.validation, &mut out.test] {
        part.sort_by_key(|s| s.meta.scenario_id);
    }
    Ok(out)
}
