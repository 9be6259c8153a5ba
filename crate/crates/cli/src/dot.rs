//! Graphviz export of a topology, optionally highlighting one tenant's VSN.

use std::fmt::Write;

use vsn_core::network::{TableProjection, TopologyDoc};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n"))
}

/// Renders `doc` as a `digraph`. With a projection, REPs holding entries for
/// the tenant are drawn solid and labelled with their rules; the rest are
/// dashed and grey.
pub fn export_dot(name: &str, doc: &TopologyDoc, projection: Option<&TableProjection>) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(name)).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    writeln!(out, "  node [shape=box, fontname=\"Helvetica\"];").unwrap();
    writeln!(out, "  edge [dir=both, fontname=\"Helvetica\", fontsize=10];").unwrap();
    let style = |rep: &str, label: String| -> String {
        match projection {
            None => format!("label={}", quote(&label)),
            Some(p) => match p.get(rep) {
                Some(rules) => format!("label={}, penwidth=2", quote(&format!("{label}\n{}", rules.join(", ")))),
                None => format!("label={}, style=dashed, color=gray, fontcolor=gray", quote(&label)),
            },
        }
    };
    for n in &doc.nodes {
        writeln!(out, "  {} [{}];", quote(&n.id), style(&n.id, format!("{}\n{}", n.id, n.service))).unwrap();
    }
    for c in &doc.contracts {
        writeln!(out, "  {} -> {} [{}];", quote(&c.from), quote(&c.to), style(&c.id, c.id.clone())).unwrap();
    }
    out.push_str("}\n");
    out
}
