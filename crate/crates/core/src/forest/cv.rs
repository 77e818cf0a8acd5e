use rand::seq::SliceRandom;

use super::tree::Rows;
use super::{fit_forest, RfHyperparams};
use crate::error::{Error, Result};
use crate::seeding::SeedKey;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub fold_maes: Vec<f64>,
    pub mean_mae: f64,
}

/// Seeded permutation of `0..n` cut into `k` contiguous folds; fold `f` holds
/// positions `[f*n/k, (f+1)*n/k)`, so sizes differ by at most one.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Argument(format!(
            "cross-validation needs k >= 2, got {k}"
        )));
    }
    if n < k {
        return Err(Error::Argument(format!("{n} rows cannot fill {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut SeedKey::new(seed).with_str("cv").rng());
    Ok((0..k)
        .map(|f| perm[f * n / k..(f + 1) * n / k].to_vec())
        .collect())
}

/// Mean of per-fold MAEs for an arbitrary `fit_predict(train, test, fold)`
/// that returns one prediction per test index.
pub fn cross_validate_by<F>(y: &[f64], k: usize, seed: u64, mut fit_predict: F) -> Result<CvResult>
where
    F: FnMut(&[usize], &[usize], usize) -> Result<Vec<f64>>,
{
    let folds = cv_folds(y.len(), k, seed)?;
    let mut fold_maes = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.clone())
            .collect();
        let pred = fit_predict(&train, test, f)?;
        if pred.len() != test.len() {
            return Err(Error::shape("fold predictions do not match fold size"));
        }
        let mae = test
            .iter()
            .zip(&pred)
            .map(|(&i, p)| (y[i] - p).abs())
            .sum::<f64>()
            / test.len() as f64;
        fold_maes.push(mae);
    }
    let mean_mae = fold_maes.iter().sum::<f64>() / k as f64;
    Ok(CvResult {
        fold_maes,
        mean_mae,
    })
}

/// k-fold CV of a forest; fold `f` fits with a seed derived from `(seed, f)`.
pub fn cross_validate(rows: Rows<'_>, hp: &RfHyperparams, k: usize, seed: u64) -> Result<CvResult> {
    cross_validate_by(rows.y, k, seed, |train, test, f| {
        let x: Vec<Vec<f64>> = train.iter().map(|&i| rows.x[i].clone()).collect();
        let y: Vec<f64> = train.iter().map(|&i| rows.y[i]).collect();
        let fold_seed = SeedKey::new(seed)
            .with_str("cv-fold")
            .with(f as u64)
            .value();
        let model = fit_forest(Rows::new(&x, &y)?, hp, fold_seed)?;
        Ok(test
            .iter()
            .map(|&i| model.predict_one(&rows.x[i]))
            .collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_rows() {
        for n in [5, 17, 100, 101] {
            let folds = cv_folds(n, 5, 3).unwrap();
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1);
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert!(matches!(cv_folds(10, 1, 0), Err(Error::Argument(_))));
        assert!(matches!(cv_folds(3, 5, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn oracle_model_scores_zero() {
        let y: Vec<f64> = (0..23).map(|i| (i as f64).sqrt()).collect();
        let r = cross_validate_by(&y, 5, 1, |_, test, _| {
            Ok(test.iter().map(|&i| y[i]).collect())
        })
        .unwrap();
        assert_eq!(r.mean_mae, 0.0);
    }

    #[test]
    fn mean_matches_fold_values() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = (0..60).map(|i| (i % 7) as f64 + 0.1 * i as f64).collect();
        let hp = RfHyperparams {
            n_estimators: 3,
            max_depth: 3,
            min_samples_split: 4,
            min_samples_leaf: 2,
            max_features: 1.0,
        };
        let r = cross_validate(Rows::new(&x, &y).unwrap(), &hp, 5, 2).unwrap();
        let mut recomputed = 0.0;
        for v in &r.fold_maes {
            recomputed += v;
        }
        assert!((recomputed / 5.0 - r.mean_mae).abs() < 1e-15);
        assert_eq!(
            r,
            cross_validate(Rows::new(&x, &y).unwrap(), &hp, 5, 2).unwrap()
        );
    }
}
