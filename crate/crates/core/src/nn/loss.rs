//! Regression and reconstruction losses with their output gradients.

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::features::FEATURE_WIDTH;

fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "prediction length {} differs from target length {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Argument("loss over an empty batch".into()));
    }
    Ok(())
}

/// `(1/N) Σ (y_i - ŷ_i)²`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `∂ mse / ∂ ŷ = (2/N)(ŷ - y)`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_pair(pred, target)?;
    let scale = 2.0 / pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| scale * (p - t))
        .collect())
}

/// `(1/N) Σ_i Σ_j (y_ij - ŷ_ij)²`: summed over columns, averaged over rows.
pub fn row_sum_squared_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} differs from target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.rows() == 0 {
        return Err(Error::Argument("loss over an empty batch".into()));
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(sum / pred.rows() as f64)
}

pub fn row_sum_squared_grad(pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    row_sum_squared_loss(pred, target)?;
    let scale = 2.0 / pred.rows() as f64;
    let data = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| scale * (p - t))
        .collect();
    Matrix::from_vec(pred.rows(), pred.cols(), data)
}

fn check_reconstruction_width(m: &Matrix) -> Result<()> {
    if m.cols() != FEATURE_WIDTH {
        return Err(Error::shape(format!(
            "reconstruction needs {FEATURE_WIDTH} columns, got {}",
            m.cols()
        )));
    }
    Ok(())
}

/// Reconstruction loss over the 425-wide feature vectors.
pub fn reconstruction_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    check_reconstruction_width(pred)?;
    check_reconstruction_width(target)?;
    row_sum_squared_loss(pred, target)
}

pub fn reconstruction_grad(pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    check_reconstruction_width(pred)?;
    check_reconstruction_width(target)?;
    row_sum_squared_grad(pred, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mse_hand_values() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 2.5);
        assert!(matches!(mse_loss(&[], &[]), Err(Error::Argument(_))));
        assert!(matches!(mse_loss(&[1.0], &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn mse_gradient_formula() {
        let g = mse_grad(&[0.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![-1.0, 1.0]);
    }

    #[test]
    fn reconstruction_hand_values() {
        let x = Matrix::filled(1, 425, 0.5);
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
        let mut y = x.clone();
        y.set(0, 17, 2.5);
        assert_eq!(reconstruction_loss(&y, &x).unwrap(), 4.0);
    }

    #[test]
    fn reconstruction_duplicated_batch_is_unchanged() {
        let a = Matrix::from_vec(1, 425, (0..425).map(|i| (i as f64).sin()).collect()).unwrap();
        let b = Matrix::from_vec(1, 425, (0..425).map(|i| (i as f64).cos()).collect()).unwrap();
        let single = reconstruction_loss(&a, &b).unwrap();
        let a2 = Matrix::from_rows(&[a.row(0), a.row(0)]).unwrap();
        let b2 = Matrix::from_rows(&[b.row(0), b.row(0)]).unwrap();
        let double = reconstruction_loss(&a2, &b2).unwrap();
        assert!((single - double).abs() <= 1e-12 * single);
    }

    #[test]
    fn reconstruction_requires_feature_width() {
        let x = Matrix::zeros(2, 10);
        assert!(matches!(reconstruction_loss(&x, &x), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn mse_nonnegative_and_permutation_invariant(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40),
            rot in 0usize..40,
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
            let l = mse_loss(&p, &t).unwrap();
            prop_assert!(l >= 0.0);
            let k = rot % pairs.len();
            let mut rotated = pairs.clone();
            rotated.rotate_left(k);
            let (p2, t2): (Vec<f64>, Vec<f64>) = rotated.into_iter().unzip();
            let l2 = mse_loss(&p2, &t2).unwrap();
            prop_assert!((l - l2).abs() <= 1e-9 * l.max(1.0));
            prop_assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
            if p != t {
                prop_assert!(l > 0.0);
            }
        }
    }
}
