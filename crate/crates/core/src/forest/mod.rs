//! Bagged CART regression forest with cross-validated Bayesian tuning.

mod bayes;
mod cv;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::seeding::SeedKey;

pub use bayes::{bayes_opt, BoConfig, BoEntry, BoPhase, BoTrace};
pub use cv::{cross_validate, cross_validate_by, cv_folds, CvResult};
pub use tree::{features_per_node, find_best_split, Node, RegressionTree, Rows, SplitChoice};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfHyperparams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features drawn per node, rounded up.
    pub max_features: f64,
}

/// Inclusive integer bounds of the tuned parameters plus the fixed feature
/// fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSpace {
    pub n_estimators: (usize, usize),
    pub max_depth: (usize, usize),
    pub min_samples_split: (usize, usize),
    pub min_samples_leaf: (usize, usize),
    pub max_features: f64,
}

impl Default for ParamSpace {
    fn default() -> Self {
        ParamSpace {
            n_estimators: (50, 800),
            max_depth: (3, 12),
            min_samples_split: (30, 500),
            min_samples_leaf: (30, 500),
            max_features: 0.33,
        }
    }
}

impl ParamSpace {
    pub fn bounds(&self) -> [(usize, usize); 4] {
        [
            self.n_estimators,
            self.max_depth,
            self.min_samples_split,
            self.min_samples_leaf,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.bounds() {
            if lo > hi || lo == 0 {
                return Err(Error::config(format!(
                    "bad forest parameter range [{lo}, {hi}]"
                )));
            }
        }
        if !(self.max_features > 0.0 && self.max_features <= 1.0) {
            return Err(Error::config("max_features must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn contains(&self, hp: &RfHyperparams) -> bool {
        let v = hp.as_array();
        self.bounds()
            .iter()
            .zip(v)
            .all(|(&(lo, hi), x)| (lo..=hi).contains(&x))
            && hp.max_features == self.max_features
    }

    pub fn from_array(&self, v: [usize; 4]) -> RfHyperparams {
        RfHyperparams {
            n_estimators: v[0],
            max_depth: v[1],
            min_samples_split: v[2],
            min_samples_leaf: v[3],
            max_features: self.max_features,
        }
    }
}

impl RfHyperparams {
    pub fn as_array(&self) -> [usize; 4] {
        [
            self.n_estimators,
            self.max_depth,
            self.min_samples_split,
            self.min_samples_leaf,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 || self.min_samples_leaf == 0 {
            return Err(Error::config(
                "n_estimators and min_samples_leaf must be positive",
            ));
        }
        if !(self.max_features > 0.0 && self.max_features <= 1.0) {
            return Err(Error::config("max_features must lie in (0, 1]"));
        }
        Ok(())
    }
}

pub const FOREST_FORMAT: &str = "nrr-forest";
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub hyperparams: RfHyperparams,
    pub seed: u64,
    pub trees: Vec<RegressionTree>,
}

#[derive(Serialize, Deserialize)]
struct ForestCheckpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: ForestModel,
}

/// Bootstrap resample (with replacement, same size) for tree `tree`.
pub fn bootstrap_indices(n: usize, seed: u64, tree: usize) -> Vec<usize> {
    use rand::Rng;
    let mut rng = SeedKey::new(seed)
        .with_str("bootstrap")
        .with(tree as u64)
        .rng();
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Fits `n_estimators` trees on bootstrap resamples. Per-tree seeds derive
/// from `(seed, tree index)`, so the result does not depend on scheduling.
pub fn fit_forest(rows: Rows<'_>, hp: &RfHyperparams, seed: u64) -> Result<ForestModel> {
    hp.validate()?;
    let n = rows.len();
    let trees = (0..hp.n_estimators)
        .into_par_iter()
        .map(|t| {
            let idx = bootstrap_indices(n, seed, t);
            let mut rng = SeedKey::new(seed).with_str("tree").with(t as u64).rng();
            RegressionTree::fit(rows, idx, hp, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        hyperparams: *hp,
        seed,
        trees,
    })
}

/// Single tree on all rows without resampling.
pub fn fit_tree(rows: Rows<'_>, hp: &RfHyperparams, seed: u64) -> Result<RegressionTree> {
    hp.validate()?;
    let mut rng = SeedKey::new(seed).with_str("tree").rng();
    RegressionTree::fit(rows, (0..rows.len()).collect(), hp, &mut rng)
}

impl ForestModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict_one(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let c = ForestCheckpoint {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&c)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: ForestCheckpoint = serde_json::from_str(s)?;
        if c.format != FOREST_FORMAT || c.version != FOREST_VERSION {
            return Err(Error::data(format!(
                "unsupported forest checkpoint {} v{}",
                c.format, c.version
            )));
        }
        if c.model.trees.is_empty() {
            return Err(Error::data("forest checkpoint has no trees"));
        }
        Ok(c.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y = x
            .iter()
            .map(|r| r[0].sin() + r[1] * r[2] + rng.random::<f64>() * 0.1)
            .collect();
        (x, y)
    }

    fn hp(n: usize) -> RfHyperparams {
        RfHyperparams {
            n_estimators: n,
            max_depth: 6,
            min_samples_split: 10,
            min_samples_leaf: 4,
            max_features: 0.6,
        }
    }

    #[test]
    fn default_space_matches_ranges() {
        let s = ParamSpace::default();
        assert_eq!(s.bounds(), [(50, 800), (3, 12), (30, 500), (30, 500)]);
        assert_eq!(s.max_features, 0.33);
    }

    #[test]
    fn single_tree_forest_is_bootstrapped_tree() {
        let (x, y) = data(80, 1);
        let rows = Rows::new(&x, &y).unwrap();
        let f = fit_forest(rows, &hp(1), 9).unwrap();
        let mut rng = SeedKey::new(9).with_str("tree").with(0).rng();
        let t = RegressionTree::fit(rows, bootstrap_indices(80, 9, 0), &hp(1), &mut rng).unwrap();
        assert_eq!(f.trees, [t.clone()]);
        assert_eq!(f.predict_one(&x[3]), t.predict(&x[3]));
    }

    #[test]
    fn deterministic_and_bootstraps_differ() {
        let (x, y) = data(60, 2);
        let rows = Rows::new(&x, &y).unwrap();
        let a = fit_forest(rows, &hp(5), 4).unwrap();
        let b = fit_forest(rows, &hp(5), 4).unwrap();
        assert_eq!(a.predict(&x), b.predict(&x));
        assert_ne!(bootstrap_indices(60, 4, 0), bootstrap_indices(60, 4, 1));
    }

    #[test]
    fn checkpoint_round_trip() {
        let (x, y) = data(50, 3);
        let f = fit_forest(Rows::new(&x, &y).unwrap(), &hp(3), 1).unwrap();
        let back = ForestModel::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn predictions_stay_within_target_range(seed in any::<u64>(), probe in prop::collection::vec(-10.0f64..10.0, 5)) {
            let (x, y) = data(40, seed);
            let f = fit_forest(Rows::new(&x, &y).unwrap(), &hp(4), seed).unwrap();
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let p = f.predict_one(&probe);
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }
}
