use serde::{Deserialize, Serialize};

use super::NUM_OUTPUTS;
use crate::{Error, Result};

/// Accuracy, macro-F1 and the confusion matrix (rows = true class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: [[usize; NUM_OUTPUTS]; NUM_OUTPUTS],
}

impl Metrics {
    pub fn support(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Scores `(true, predicted)` pairs. A class with no support has F1 = 0.
pub fn score(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Metrics> {
    let mut confusion = [[0usize; NUM_OUTPUTS]; NUM_OUTPUTS];
    for (t, p) in pairs {
        if t >= NUM_OUTPUTS || p >= NUM_OUTPUTS {
            return Err(Error::Shape(format!("class pair ({t}, {p}) out of range")));
        }
        confusion[t][p] += 1;
    }
    let total: usize = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    let correct: usize = (0..NUM_OUTPUTS).map(|c| confusion[c][c]).sum();
    let f1_sum: f64 = (0..NUM_OUTPUTS)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let fn_ = confusion[c].iter().sum::<usize>() as f64 - tp;
            let fp = (0..NUM_OUTPUTS).map(|r| confusion[r][c]).sum::<usize>() as f64 - tp;
            let support = tp + fn_;
            if support == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        })
        .sum();
    Ok(Metrics {
        accuracy: correct as f64 / total as f64,
        macro_f1: f1_sum / NUM_OUTPUTS as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let pairs = (0..9).map(|i| (i % 3, i % 3));
        let m = score(pairs).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.confusion, [[3, 0, 0], [0, 3, 0], [0, 0, 3]]);
    }

    #[test]
    fn constant_predictions_on_balanced_mask() {
        let m = score((0..9).map(|i| (i % 3, 0))).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        // class 0: precision 1/3, recall 1 -> F1 0.5; the others score 0
        assert!((m.macro_f1 - 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn one_swapped_label_of_ten() {
        let mut pairs: Vec<(usize, usize)> = (0..10).map(|i| (i % 3, i % 3)).collect();
        pairs[4].1 = 2;
        assert!((score(pairs).unwrap().accuracy - 0.9).abs() < 1e-15);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(score(Vec::new()), Err(Error::EmptyMask)));
    }
}
