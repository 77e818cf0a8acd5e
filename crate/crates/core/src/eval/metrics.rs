use crate::error::{Error, Result};

fn check_pairs(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Argument("metric of an empty set".into()));
    }
    Ok(())
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pairs(preds, targets)?;
    let s: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / preds.len() as f64)
}

/// `1 - SS_res / SS_tot` with `SS_tot` about the target mean.
pub fn r_squared(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pairs(preds, targets)?;
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::Undefined("R² of targets with zero variance".into()));
    }
    let ss_res: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("standard deviation of an empty set".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Linear interpolation between order statistics at position `q * (n - 1)`.
/// `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Argument("quantile of an empty set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Argument(format!(
            "quantile level {q} outside [0, 1]"
        )));
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(mae(&[], &[]), Err(Error::Argument(_))));
        assert_eq!(r_squared(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(r_squared(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(
            r_squared(&[1.0, 2.0], &[3.0, 3.0]),
            Err(Error::Undefined(_))
        ));
        assert_eq!(population_std(&[0.0, 0.0, 2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(population_std(&[3.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn interpolated_quartiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.25).unwrap(), 1.75);
        assert_eq!(quantile(&v, 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&v, 0.75).unwrap(), 3.25);
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&[7.0], 0.3).unwrap(), 7.0);
    }

    proptest! {
        #[test]
        fn quartiles_are_ordered(v in prop::collection::vec(-100.0f64..100.0, 1..50)) {
            let a = quantile(&v, 0.25).unwrap();
            let b = quantile(&v, 0.5).unwrap();
            let c = quantile(&v, 0.75).unwrap();
            prop_assert!(a <= b && b <= c);
        }

        #[test]
        fn mae_is_permutation_invariant(v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30)) {
            let (p, t): (Vec<f64>, Vec<f64>) = v.iter().cloned().unzip();
            let (rp, rt): (Vec<f64>, Vec<f64>) = v.iter().rev().cloned().unzip();
            prop_assert!((mae(&p, &t).unwrap() - mae(&rp, &rt).unwrap()).abs() < 1e-12);
        }
    }
}
