//! Jenks natural breaks via Fisher's optimal-partition dynamic programme.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct JenksBreaks {
    /// Upper boundary (inclusive) of each class except the last, ascending.
    pub thresholds: Vec<f64>,
    /// Class of each input value, in input order.
    pub classes: Vec<usize>,
    /// Total within-class sum of squared deviations.
    pub ssd: f64,
}

impl JenksBreaks {
    /// Class of an arbitrary value under these thresholds.
    pub fn classify(&self, value: f64) -> usize {
        self.thresholds.iter().take_while(|&&t| value > t).count()
    }
}

/// Within-class sum of squared deviations over sorted slices, O(1) per query.
struct Ssd {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Ssd {
    fn new(sorted: &[f64]) -> Self {
        // centre first so the prefix sums do not lose the small deviations
        let centre = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let mut s1 = vec![0.0; sorted.len() + 1];
        let mut s2 = vec![0.0; sorted.len() + 1];
        for (i, &v) in sorted.iter().enumerate() {
            let d = v - centre;
            s1[i + 1] = s1[i] + d;
            s2[i + 1] = s2[i] + d * d;
        }
        Ssd { s1, s2 }
    }

    /// SSD of `sorted[i..j]`.
    fn range(&self, i: usize, j: usize) -> f64 {
        let n = (j - i) as f64;
        let s = self.s1[j] - self.s1[i];
        (self.s2[j] - self.s2[i] - s * s / n).max(0.0)
    }
}

fn two_pass_ssd(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum()
}

/// Splits `values` into `k` classes of contiguous sorted values minimising
/// the total within-class SSD. Breaks only fall between distinct values and
/// ties between equally good partitions go to the lowest break positions.
pub fn jenks_breaks(values: &[f64], k: usize) -> Result<JenksBreaks> {
    if k < 2 {
        return Err(Error::Config(format!("jenks needs k >= 2, got {k}")));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite value {bad} in jenks input")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // candidate cut positions c mean classes end at sorted[c - 1]
    let cuts: Vec<usize> = (1..n).filter(|&c| sorted[c - 1] < sorted[c]).collect();
    if cuts.len() + 1 < k {
        return Err(Error::DegenerateBreaks(format!(
            "{} distinct values cannot form {k} classes",
            cuts.len() + 1
        )));
    }
    let ssd = Ssd::new(&sorted);
    // ends[e] is the exclusive end of a prefix: every cut, then n
    let ends: Vec<usize> = cuts.iter().copied().chain(std::iter::once(n)).collect();
    let m = ends.len();
    // best[c][e]: minimal SSD of sorted[..ends[e]] in c + 1 classes
    let mut best = vec![vec![f64::INFINITY; m]; k];
    let mut from = vec![vec![usize::MAX; m]; k];
    for e in 0..m {
        best[0][e] = ssd.range(0, ends[e]);
    }
    for c in 1..k {
        for e in c..m {
            for p in (c - 1)..e {
                let cost = best[c - 1][p] + ssd.range(ends[p], ends[e]);
                if cost < best[c][e] {
                    best[c][e] = cost;
                    from[c][e] = p;
                }
            }
        }
    }
    let mut bounds = Vec::with_capacity(k - 1);
    let mut e = m - 1;
    for c in (1..k).rev() {
        e = from[c][e];
        bounds.push(ends[e]);
    }
    bounds.reverse();
    let thresholds: Vec<f64> = bounds.iter().map(|&b| sorted[b - 1]).collect();
    let starts = std::iter::once(0).chain(bounds.iter().copied());
    let stops = bounds.iter().copied().chain(std::iter::once(n));
    let ssd = starts.zip(stops).map(|(i, j)| two_pass_ssd(&sorted[i..j])).sum();
    let result = JenksBreaks { thresholds, classes: Vec::new(), ssd };
    let classes = values.iter().map(|&v| result.classify(v)).collect();
    Ok(JenksBreaks { classes, ..result })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_clusters() {
        let v = [100.0, 1.0, 11.0, 2.0, 3.0, 10.0, 12.0, 101.0, 102.0];
        let j = jenks_breaks(&v, 3).unwrap();
        assert_eq!(j.thresholds, vec![3.0, 12.0]);
        assert_eq!(j.classes, vec![2, 0, 1, 0, 0, 1, 1, 2, 2]);
        assert!((j.ssd - 6.0).abs() < 1e-12);
    }

    #[test]
    fn four_values_two_classes() {
        let j = jenks_breaks(&[1.0, 3.0, 4.0, 9.0], 2).unwrap();
        assert_eq!(j.thresholds, vec![4.0]);
        assert!((j.ssd - 14.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ties_stay_together() {
        let j = jenks_breaks(&[1.0, 1.0, 1.0, 5.0, 5.0, 9.0], 3).unwrap();
        assert_eq!(j.classes, vec![0, 0, 0, 1, 1, 2]);
        assert_eq!(j.ssd, 0.0);
    }

    #[test]
    fn equal_cost_prefers_lowest_break() {
        // {0} | {1, 2} and {0, 1} | {2} both cost 0.5
        let j = jenks_breaks(&[0.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(j.thresholds, vec![0.0]);
    }

    #[test]
    fn too_few_distinct_values() {
        let err = jenks_breaks(&[2.0, 2.0, 3.0, 3.0], 3).unwrap_err();
        assert!(err.to_string().contains("degenerate breaks"));
        assert!(jenks_breaks(&[1.0, 2.0], 1).is_err());
        assert!(jenks_breaks(&[], 2).is_err());
    }
}
