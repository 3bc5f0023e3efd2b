//! K-Means clustering with silhouette model selection, and merged entity
//! structure reports per road group.

mod kmeans;
mod structure;

pub use kmeans::{
    kmeans, silhouette, silhouette_sweep, ClusterResult, DistanceMatrix, SilhouetteSweep,
    MAX_ITERATIONS, RESTARTS, SHIFT_TOLERANCE,
};
pub use structure::{class_structure_graphs, format_structure_report, format_structure_rows, GroupStructure};

use std::fmt::Write as _;

use crate::format;

/// `k\tsilhouette` rows.
pub fn format_sweep(sweep: &SilhouetteSweep) -> String {
    let mut out = format::header_line("silhouette-sweep");
    let _ = writeln!(out, "# best_k {}", sweep.best_k);
    out.push_str("k\tsilhouette\n");
    for (k, s) in &sweep.scores {
        let _ = writeln!(out, "{k}\t{s}");
    }
    out
}

/// `road_id,cluster` rows; `ids` align with the clustered vectors.
pub fn format_assignments(ids: &[String], result: &ClusterResult) -> String {
    let mut out = format::header_line("cluster-assignments");
    out.push_str("road_id,cluster\n");
    for (id, c) in ids.iter().zip(&result.assignments) {
        let _ = writeln!(out, "{id},{c}");
    }
    out
}
