use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE: f64 = 1e-9;
/// Independent k-means++ starts per call; the lowest-SSE run is kept.
pub const RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub k: usize,
    /// Cluster of each input vector, in input order.
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Mean silhouette coefficient of the assignment.
    pub silhouette: f64,
    pub sse: f64,
    /// SSE after each assignment step of the kept run.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_input(vectors: &[Vec<f64>], k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(format!("kmeans needs k >= 2, got {k}")));
    }
    if k > vectors.len() {
        return Err(Error::Config(format!("kmeans k = {k} exceeds {} points", vectors.len())));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("kmeans vectors have differing lengths".into()));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite value in kmeans input".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for v in vectors {
        if !distinct.iter().any(|d| *d == v) {
            distinct.push(v);
            if distinct.len() >= k {
                return Ok(());
            }
        }
    }
    Err(Error::DegenerateData(format!(
        "{} distinct points cannot form {k} clusters",
        distinct.len()
    )))
}

fn plus_plus_init(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![vectors[rng.gen_range(0..vectors.len())].clone()];
    let mut nearest: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        // at least k distinct points exist, so some weight is positive
        let pick = WeightedIndex::new(&nearest).expect("positive total weight").sample(rng);
        centers.push(vectors[pick].clone());
        let c = centers.last().expect("just pushed");
        for (d, v) in nearest.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, c));
        }
    }
    centers
}

fn assign(vectors: &[Vec<f64>], centers: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut sse = 0.0;
    for (a, v) in out.iter_mut().zip(vectors) {
        let (best, d) = centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, sq_dist(v, c)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        *a = best;
        sse += d;
    }
    sse
}

struct Run {
    assignments: Vec<usize>,
    centers: Vec<Vec<f64>>,
    sse: f64,
    history: Vec<f64>,
    iterations: usize,
}

fn lloyd(vectors: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> Run {
    let k = centers.len();
    let dim = vectors[0].len();
    let mut assignments = vec![0; vectors.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let sse = assign(vectors, &centers, &mut assignments);
        history.push(sse);
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let new = if counts[c] == 0 {
                // an emptied cluster takes over the point worst served by its centre
                let far = (0..vectors.len())
                    .map(|i| (i, sq_dist(&vectors[i], &centers[assignments[i]])))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
                    .0;
                vectors[far].clone()
            } else {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            };
            shift = shift.max(sq_dist(&new, &centers[c]).sqrt());
            centers[c] = new;
        }
        if shift < SHIFT_TOLERANCE {
            let sse = assign(vectors, &centers, &mut assignments);
            history.push(sse);
            break;
        }
    }
    let sse = *history.last().expect("at least one pass");
    Run { assignments, centers, sse, history, iterations }
}

fn best_run(vectors: &[Vec<f64>], k: usize, seed: u64) -> Run {
    let mut best: Option<Run> = None;
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let run = lloyd(vectors, plus_plus_init(vectors, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    best.expect("RESTARTS > 0")
}

/// K-Means with k-means++ seeding and Lloyd iterations, keeping the best of
/// [`RESTARTS`] seeded starts.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterResult> {
    if vectors.is_empty() {
        return Err(Error::Config("kmeans needs at least one point".into()));
    }
    check_input(vectors, k)?;
    let run = best_run(vectors, k, seed);
    let silhouette = silhouette(&DistanceMatrix::new(vectors), &run.assignments, k);
    Ok(ClusterResult {
        k,
        assignments: run.assignments,
        centers: run.centers,
        silhouette,
        sse: run.sse,
        sse_history: run.history,
        iterations: run.iterations,
        seed,
    })
}

/// Pairwise Euclidean distances, stored as the upper triangle.
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(vectors: &[Vec<f64>]) -> Self {
        let n = vectors.len();
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(sq_dist(&vectors[i], &vectors[j]).sqrt());
            }
        }
        DistanceMatrix { n, upper }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // rows before a hold n-1, n-2, ... entries
        self.upper[a * (2 * self.n - a - 1) / 2 + (b - a - 1)]
    }
}

/// Mean silhouette coefficient. Points alone in their cluster score 0.
pub fn silhouette(d: &DistanceMatrix, assignments: &[usize], k: usize) -> f64 {
    let n = assignments.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += d.get(i, j);
            }
        }
        let own = assignments[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteSweep {
    pub best_k: usize,
    /// (k, mean silhouette) for every k tried, ascending k.
    pub scores: Vec<(usize, f64)>,
    pub best: ClusterResult,
}

/// Runs [`kmeans`] for every k in `ks` and keeps the k with the highest mean
/// silhouette; ties go to the smaller k.
pub fn silhouette_sweep(vectors: &[Vec<f64>], ks: std::ops::RangeInclusive<usize>, seed: u64) -> Result<SilhouetteSweep> {
    let ks: Vec<usize> = ks.collect();
    let Some(&max_k) = ks.iter().max() else {
        return Err(Error::Config("empty k range".into()));
    };
    if vectors.len() <= max_k {
        return Err(Error::Config(format!(
            "silhouette sweep up to k = {max_k} needs more than {max_k} points, have {}",
            vectors.len()
        )));
    }
    for &k in &ks {
        check_input(vectors, k)?;
    }
    let d = DistanceMatrix::new(vectors);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(ks.len());
    let runs: Vec<(usize, Run, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (ks, d) = (&ks, &d);
                s.spawn(move || {
                    ks.iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|&k| {
                            let run = best_run(vectors, k, seed);
                            let sil = silhouette(d, &run.assignments, k);
                            (k, run, sil)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<_> = handles.into_iter().flat_map(|h| h.join().expect("sweep worker")).collect();
        all.sort_by_key(|r| r.0);
        all
    });
    let scores: Vec<(usize, f64)> = runs.iter().map(|(k, _, s)| (*k, *s)).collect();
    let best_idx = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if s.1 > scores[b].1 { i } else { b });
    let (k, run, sil) = runs.into_iter().nth(best_idx).expect("index in range");
    Ok(SilhouetteSweep {
        best_k: k,
        scores,
        best: ClusterResult {
            k,
            assignments: run.assignments,
            centers: run.centers,
            silhouette: sil,
            sse: run.sse,
            sse_history: run.history,
            iterations: run.iterations,
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clouds() -> Vec<Vec<f64>> {
        let mut v = Vec::new();
        for i in 0..10 {
            let j = i as f64 * 0.01;
            v.push(vec![j, -j]);
            v.push(vec![10.0 + j, 10.0 - j]);
        }
        v
    }

    #[test]
    fn separated_clouds_split_perfectly() {
        let v = two_clouds();
        let r = kmeans(&v, 2, 3).unwrap();
        for pair in r.assignments.chunks(2) {
            assert_ne!(pair[0], pair[1]);
        }
        assert!(r.assignments.iter().step_by(2).all(|&a| a == r.assignments[0]));
        assert!(r.silhouette > 0.99);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let v = vec![vec![1.0, 1.0]; 5];
        let err = kmeans(&v, 2, 0).unwrap_err();
        assert!(err.to_string().contains("degenerate breaks in data"));
        assert!(kmeans(&v[..1], 2, 0).is_err());
    }

    #[test]
    fn distance_matrix_indexing() {
        let v: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * i as f64]).collect();
        let d = DistanceMatrix::new(&v);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(d.get(i, j), (v[i][0] - v[j][0]).abs());
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let v = two_clouds();
        assert_eq!(kmeans(&v, 3, 5).unwrap(), kmeans(&v, 3, 5).unwrap());
    }
}
