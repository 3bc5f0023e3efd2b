use super::DenseMatrix;
use crate::{Error, Result};

const LOG_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn masked_targets(labels: &[Option<usize>], mask: &[usize], classes: usize) -> Result<Vec<(usize, usize)>> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    mask.iter()
        .map(|&i| match labels.get(i).copied().flatten() {
            Some(c) if c < classes => Ok((i, c)),
            Some(c) => Err(Error::Shape(format!("label {c} on node {i} out of range"))),
            None => Err(Error::Shape(format!("masked node {i} has no label"))),
        })
        .collect()
}

/// Mean over masked nodes of `-log q[label]`, with `q` clamped at 1e-12.
pub fn cross_entropy_loss(probs: &DenseMatrix, labels: &[Option<usize>], mask: &[usize]) -> Result<f64> {
    let targets = masked_targets(labels, mask, probs.cols())?;
    let mut total = 0.0;
    for &(i, c) in &targets {
        let row = probs.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!("probabilities of node {i} sum to {sum}")));
        }
        total -= row[c].max(LOG_FLOOR).ln();
    }
    Ok(total / targets.len() as f64)
}

/// Softmax + cross-entropy on logits; returns the loss and its gradient with
/// respect to the logits (zero on unmasked rows).
pub fn softmax_cross_entropy(
    logits: &DenseMatrix,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<(f64, DenseMatrix)> {
    let probs = softmax_rows(logits);
    let loss = cross_entropy_loss(&probs, labels, mask)?;
    let targets = masked_targets(labels, mask, probs.cols())?;
    let scale = 1.0 / targets.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    for &(i, c) in &targets {
        let g = grad.row_mut(i);
        for (gv, &p) in g.iter_mut().zip(probs.row(i)) {
            *gv += p * scale;
        }
        g[c] -= scale;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_prediction_has_zero_loss() {
        let q = DenseMatrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(cross_entropy_loss(&q, &[Some(1)], &[0]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_prediction_costs_ln3() {
        let q = DenseMatrix::from_rows(&[vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3]]).unwrap();
        let l = cross_entropy_loss(&q, &[Some(0), Some(2)], &[0, 1]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!((l - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn wrong_one_hot_is_clamped() {
        let q = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let l = cross_entropy_loss(&q, &[Some(2)], &[0]).unwrap();
        assert!((l + 1e-12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_and_bad_rows() {
        let q = DenseMatrix::from_rows(&[vec![0.5, 0.5, 0.0]]).unwrap();
        assert!(matches!(cross_entropy_loss(&q, &[Some(0)], &[]), Err(Error::EmptyMask)));
        assert!(cross_entropy_loss(&q, &[None], &[0]).is_err());
        let bad = DenseMatrix::from_rows(&[vec![0.5, 0.6, 0.0]]).unwrap();
        assert!(cross_entropy_loss(&bad, &[Some(0)], &[0]).is_err());
    }

    #[test]
    fn random_batch_matches_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let logits = DenseMatrix::glorot(7, 3, &mut rng).map(|v| v * 4.0);
        let labels: Vec<Option<usize>> = (0..7).map(|_| Some(rng.gen_range(0..3))).collect();
        let mask = [0, 2, 3, 6];
        let (loss, _) = softmax_cross_entropy(&logits, &labels, &mask).unwrap();
        let mut expected = 0.0;
        for &i in &mask {
            let row: Vec<f64> = (0..3).map(|c| logits[(i, c)]).collect();
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            expected += -(row[labels[i].unwrap()].exp() / z).ln();
        }
        expected /= mask.len() as f64;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let logits = DenseMatrix::from_rows(&[vec![1000.0, 0.0, -1000.0], vec![0.1, 0.2, 0.3]]).unwrap();
        let p = softmax_rows(&logits);
        for r in 0..2 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
