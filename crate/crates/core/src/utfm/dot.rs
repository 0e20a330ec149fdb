use std::fmt::Write as _;

use super::decode::{AssessmentReport, ZERO_MASS_THRESHOLD};
use super::topology::{build_topology, EdgeKind, Row, StateComponentId};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering of a decoded flight: three rows (schedule, decision,
/// outcome) by four phase columns, node labels carrying loop probabilities
/// and edge labels carrying transition probabilities. Zero-mass schedule-row
/// edges are drawn dashed red with the flag text.
pub fn export_dot(report: &AssessmentReport) -> String {
    let topology = build_topology();
    let mut s = String::new();
    s.push_str("digraph utfm {\n");
    let _ = writeln!(
        s,
        "  graph [rankdir=TB, splines=true, nodesep=0.8, ranksep=1.2, label=\"UTFM assessment: flight {} ({})\", labelloc=t];",
        escape(&report.flight_id),
        report.mode.as_str()
    );
    s.push_str("  node [shape=circle, fixedsize=true, width=1.0, fontsize=11];\n");
    s.push_str("  edge [fontsize=10];\n");
    for row in Row::ALL {
        let _ = writeln!(s, "  subgraph row_{} {{", format!("{row:?}").to_lowercase());
        s.push_str("    rank=same;\n");
        for id in StateComponentId::ALL.iter().filter(|id| id.row() == row) {
            let p = report.transition(id.name(), id.name()).unwrap_or(0.0);
            let _ = writeln!(
                s,
                "    {0} [label=\"{0}\\n{1:.2}\", pos=\"{2},{3}!\"];",
                id.name(),
                p,
                id.phase().index() * 2,
                (2 - row.index()) * 2
            );
        }
        s.push_str("  }\n");
    }
    for edge in &topology.inter_edges {
        let p = report
            .transition(edge.from.name(), edge.to.name())
            .unwrap_or(0.0);
        let mut attrs = format!("label=\"{p:.2}\"");
        if edge.kind() == EdgeKind::Alpha && p < ZERO_MASS_THRESHOLD {
            attrs = format!(
                "label=\"{p:.2}\\ntactical measure ineffective\", style=dashed, color=red, fontcolor=red"
            );
        }
        let _ = writeln!(s, "  {} -> {} [{}];", edge.from.name(), edge.to.name(), attrs);
    }
    s.push_str("}\n");
    s
}
