use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::entity::{merge_road_graphs, top_centrality, ClassId, ClassNames, EntityGraph};
use crate::format;
use crate::Result;

const KIND: &str = "structure-report";

/// Merged entity structure of one group of roads (a predicted class or a cluster).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStructure {
    pub group: String,
    pub roads: usize,
    pub graph: EntityGraph,
    /// Most central entity classes, descending.
    pub top: Vec<(ClassId, f64)>,
}

/// Merges the entity graphs of each group and ranks its entities by degree
/// centrality. Empty groups are skipped with a warning.
pub fn class_structure_graphs(groups: &BTreeMap<String, Vec<&EntityGraph>>, top_k: usize) -> Result<Vec<GroupStructure>> {
    let mut out = Vec::new();
    for (name, graphs) in groups {
        if graphs.is_empty() {
            log::warn!("group {name} has no roads; skipped");
            continue;
        }
        let graph = merge_road_graphs(graphs.iter().copied())?;
        let top = top_centrality(&graph, top_k)?;
        out.push(GroupStructure { group: name.clone(), roads: graphs.len(), graph, top });
    }
    Ok(out)
}

/// One column per group, one row per rank: `name (centrality)`.
pub fn format_structure_report(groups: &[GroupStructure], names: &ClassNames) -> String {
    let cells: Vec<Vec<String>> = groups
        .iter()
        .map(|g| g.top.iter().map(|&(c, v)| format!("{} ({v:.3})", names.name(c))).collect())
        .collect();
    let headers: Vec<String> = groups.iter().map(|g| format!("{} [{} roads]", g.group, g.roads)).collect();
    let widths: Vec<usize> = headers
        .iter()
        .zip(&cells)
        .map(|(h, col)| col.iter().map(String::len).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let rows = cells.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = format::header_line(KIND);
    let mut line = String::from("rank");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(line, "  {h:<w$}");
    }
    out.push_str(line.trim_end());
    out.push('\n');
    for r in 0..rows {
        let mut line = format!("{:<4}", r + 1);
        for (col, w) in cells.iter().zip(&widths) {
            let cell = col.get(r).map(String::as_str).unwrap_or("");
            let _ = write!(line, "  {cell:<w$}");
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Long form of the same report: `group\trank\tclass_id\tname\tcentrality`.
pub fn format_structure_rows(groups: &[GroupStructure], names: &ClassNames) -> String {
    let mut out = format::header_line(KIND);
    out.push_str("group\trank\tclass_id\tname\tcentrality\n");
    for g in groups {
        for (r, &(c, v)) in g.top.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{c}\t{}\t{v}", g.group, r + 1, names.name(c));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::{build_entity_graph, EntityNode};

    fn star() -> EntityGraph {
        let mut nodes = vec![EntityNode { class_id: 5, centroid: (0.0, 0.0) }];
        for (i, c) in [1u16, 9, 20, 33].into_iter().enumerate() {
            let a = i as f64 * std::f64::consts::FRAC_PI_2;
            nodes.push(EntityNode { class_id: c, centroid: (40.0 * a.cos(), 40.0 * a.sin()) });
        }
        build_entity_graph(&nodes, 45.0).unwrap()
    }

    #[test]
    fn star_centre_ranks_first() {
        let g = star();
        let groups = BTreeMap::from([("high".to_string(), vec![&g])]);
        let report = class_structure_graphs(&groups, 3).unwrap();
        assert_eq!(report[0].top[0], (5, 1.0));
        assert_eq!(report[0].top, top_centrality(&g, 3).unwrap());
    }

    #[test]
    fn empty_groups_are_skipped() {
        let g = star();
        let groups = BTreeMap::from([("a".to_string(), vec![]), ("b".to_string(), vec![&g, &g])]);
        let report = class_structure_graphs(&groups, 10).unwrap();
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].roads, 2);
    }

    #[test]
    fn report_layout() {
        let g = star();
        let groups = BTreeMap::from([("c0".to_string(), vec![&g]), ("c1".to_string(), vec![&g])]);
        let report = class_structure_graphs(&groups, 2).unwrap();
        let names = ClassNames::parse("5 tree\n").unwrap();
        let text = format_structure_report(&report, &names);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("rank  c0 [1 roads]"));
        assert!(lines[2].starts_with("1     tree (1.000)"));
        assert!(lines[3].contains("class_1 (0.250)"));
        let rows = format_structure_rows(&report, &names);
        assert!(rows.contains("c1\t1\t5\ttree\t1\n"));
    }
}
