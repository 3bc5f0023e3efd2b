//! Clustering and structure-report checks against brute-force oracles.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr_free::gaussian;
use restograph::analysis::{class_structure_graphs, kmeans, silhouette, silhouette_sweep, DistanceMatrix};
use restograph::entity::{build_entity_graph, EntityGraph, EntityNode};

mod rand_distr_free {
    use rand::Rng;

    /// Box–Muller normal draw.
    pub fn gaussian(rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

fn sse_of(points: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(assignment).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        let centre: Vec<f64> = (0..dim).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64).collect();
        total += members.iter().map(|p| p.iter().zip(&centre).map(|(x, m)| (x - m).powi(2)).sum::<f64>()).sum::<f64>();
    }
    total
}

/// Best SSE over all 2^(n-1) − 1 nontrivial two-way partitions.
fn exhaustive_two_partition(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    (1u32..(1 << (n - 1)))
        .map(|mask| {
            let a: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            sse_of(points, &a, 2)
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_points(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn kmeans_reaches_exhaustive_optimum_on_small_instances() {
    let mut hits = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let pts = random_points(8, 2, &mut rng);
        let r = kmeans(&pts, 2, seed).unwrap();
        let oracle = exhaustive_two_partition(&pts);
        assert!((r.sse - sse_of(&pts, &r.assignments, 2)).abs() < 1e-9);
        if r.sse <= oracle + 1e-9 {
            hits += 1;
        }
    }
    assert!(hits >= 9, "{hits}/10 seeds reached the optimum");
}

/// Silhouette written directly from its definition.
fn naive_silhouette(points: &[Vec<f64>], a: &[usize], k: usize) -> f64 {
    let d = |i: usize, j: usize| points[i].iter().zip(&points[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n = points.len();
    let mut s = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && a[j] == a[i]).collect();
        if own.is_empty() {
            continue;
        }
        let ai = own.iter().map(|&j| d(i, j)).sum::<f64>() / own.len() as f64;
        let mut bi = f64::INFINITY;
        for c in 0..k {
            let other: Vec<usize> = (0..n).filter(|&j| a[j] == c && c != a[i]).collect();
            if !other.is_empty() {
                bi = bi.min(other.iter().map(|&j| d(i, j)).sum::<f64>() / other.len() as f64);
            }
        }
        if bi.is_finite() && ai.max(bi) > 0.0 {
            s += (bi - ai) / ai.max(bi);
        }
    }
    s / n as f64
}

fn planted(centres: &[(f64, f64)], per: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    for &(cx, cy) in centres {
        for _ in 0..per {
            pts.push(vec![cx + spread * gaussian(&mut rng), cy + spread * gaussian(&mut rng)]);
        }
    }
    pts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lloyd_sse_never_increases(seed in 0u64..1000, k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(40, 3, &mut rng);
        let r = kmeans(&pts, k, seed).unwrap();
        for w in r.sse_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", r.sse_history);
        }
        prop_assert!(r.silhouette >= -1.0 && r.silhouette <= 1.0);
        prop_assert_eq!(r.assignments.len(), 40);
    }

    #[test]
    fn silhouette_matches_definition(seed in 0u64..500, k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(15, 2, &mut rng);
        let a: Vec<usize> = (0..15).map(|_| rng.gen_range(0..k)).collect();
        let got = silhouette(&DistanceMatrix::new(&pts), &a, k);
        prop_assert!((got - naive_silhouette(&pts, &a, k)).abs() < 1e-12);
    }

    #[test]
    fn separated_clusters_score_near_one(seed in 0u64..200) {
        let pts = planted(&[(0.0, 0.0), (100.0, 0.0)], 20, 0.5, seed);
        prop_assert!(kmeans(&pts, 2, seed).unwrap().silhouette > 0.95);
    }

    #[test]
    fn one_gaussian_split_in_two_scores_low(seed in 0u64..200) {
        // five dimensions: a planar Gaussian cut in half already scores about 0.3
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| gaussian(&mut rng)).collect()).collect();
        prop_assert!(kmeans(&pts, 2, seed).unwrap().silhouette < 0.3);
    }
}

#[test]
fn sweep_recovers_planted_cluster_counts() {
    let four = planted(&[(0.0, 0.0), (20.0, 0.0), (0.0, 20.0), (20.0, 20.0)], 25, 1.0, 1);
    let sweep = silhouette_sweep(&four, 2..=20, 7).unwrap();
    assert_eq!(sweep.best_k, 4, "{:?}", sweep.scores);
    assert_eq!(sweep.scores.len(), 19);
    let two = planted(&[(0.0, 0.0), (30.0, 5.0)], 40, 1.0, 2);
    assert_eq!(silhouette_sweep(&two, 2..=20, 7).unwrap().best_k, 2);
    assert_eq!(silhouette_sweep(&four, 2..=20, 7).unwrap(), sweep);
    assert!(silhouette_sweep(&four[..10], 2..=20, 7).is_err());
}

#[test]
fn sweep_ties_prefer_smaller_k() {
    // the reported k is the first one reaching the maximum score
    let pts = planted(&[(0.0, 0.0), (50.0, 0.0), (100.0, 0.0)], 10, 0.1, 3);
    let sweep = silhouette_sweep(&pts, 2..=4, 1).unwrap();
    let best = sweep.scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let first = sweep.scores.iter().find(|s| s.1 == best).unwrap().0;
    assert_eq!(sweep.best_k, first);
}

fn random_graph(rng: &mut ChaCha8Rng) -> EntityGraph {
    let n = rng.gen_range(2..12);
    let mut ids: Vec<u16> = (0..40).collect();
    let nodes: Vec<EntityNode> = (0..n)
        .map(|_| {
            let c = ids.swap_remove(rng.gen_range(0..ids.len()));
            EntityNode { class_id: c, centroid: (rng.gen_range(0.0..120.0), rng.gen_range(0.0..120.0)) }
        })
        .collect();
    build_entity_graph(&nodes, 45.0).unwrap()
}

#[test]
fn structure_rows_match_recomputed_centrality() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let graphs: Vec<EntityGraph> = (0..24).map(|_| random_graph(&mut rng)).collect();
    let mut groups: BTreeMap<String, Vec<&EntityGraph>> = BTreeMap::new();
    for g in &graphs {
        groups.entry(format!("cluster{}", rng.gen_range(0..4))).or_default().push(g);
    }
    let report = class_structure_graphs(&groups, 10).unwrap();
    for row in &report {
        let members = &groups[&row.group];
        // independent union: node set, edge set, then degree / (n - 1)
        let mut nodes = std::collections::BTreeSet::new();
        let mut edges = std::collections::BTreeSet::new();
        for g in members {
            nodes.extend(g.class_ids());
            edges.extend(g.edges());
        }
        let n = nodes.len();
        let mut ranked: Vec<(u16, f64)> = nodes
            .iter()
            .map(|&c| {
                let deg = edges.iter().filter(|&&(a, b)| a == c || b == c).count();
                (c, deg as f64 / (n - 1) as f64)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        ranked.truncate(10);
        assert_eq!(row.top, ranked, "group {}", row.group);
        assert_eq!(row.roads, members.len());
    }
}

#[test]
fn single_road_group_reports_its_own_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = random_graph(&mut rng);
    let groups = BTreeMap::from([("only".to_string(), vec![&g])]);
    let report = class_structure_graphs(&groups, 10).unwrap();
    assert_eq!(report[0].top, restograph::entity::top_centrality(&g, 10).unwrap());
}
