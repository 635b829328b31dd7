//! Graphviz export of a relation graph.

use std::collections::HashMap;
use std::fmt::Write;
use std::sync::Arc;

use crate::relation::{topo_order, Relation};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// One node per relation, labeled with its variant, name, and schema with
/// ranges; one edge from each input to its consumer.
pub fn to_dot(root: &Arc<Relation>) -> String {
    let nodes = topo_order(root);
    let ids: HashMap<*const Relation, String> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (Arc::as_ptr(n), format!("n{i}")))
        .collect();
    let mut out = String::from("digraph relation {\n  rankdir=BT;\n  node [shape=box];\n");
    for node in &nodes {
        let mut label = format!("{} {}", node.variant_name(), node.name());
        for f in node.schema().fields() {
            let _ = write!(label, "\\n{}: {}", f.name, f.data_type);
        }
        let _ = writeln!(
            out,
            "  {} [label=\"{}\"];",
            ids[&Arc::as_ptr(node)],
            escape(&label).replace("\\\\n", "\\n")
        );
    }
    for node in &nodes {
        for input in node.inputs() {
            let _ = writeln!(
                out,
                "  {} -> {};",
                ids[&Arc::as_ptr(input)],
                ids[&Arc::as_ptr(node)]
            );
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_type::DataType;
    use crate::expr::Expr;
    use crate::relation::Visibility;
    use crate::schema::{Field, Schema};

    #[test]
    fn table_gives_one_node_no_edges() {
        let schema = Schema::new(vec![Field::new("a", DataType::integer())]).unwrap();
        let t = Arc::new(Relation::table("t", schema, Visibility::Public));
        let dot = to_dot(&t);
        assert_eq!(dot.matches("label=").count(), 1);
        assert_eq!(dot.matches(" -> ").count(), 0);
        assert!(dot.starts_with("digraph"));
    }

    #[test]
    fn map_over_table_gives_two_nodes_one_edge() {
        let schema = Schema::new(vec![Field::new("a", DataType::integer())]).unwrap();
        let t = Arc::new(Relation::table("t", schema, Visibility::Public));
        let m = Arc::new(
            Relation::map(vec![("a".into(), Expr::col("a"))], None, vec![], None, t).unwrap(),
        );
        let dot = to_dot(&m);
        assert_eq!(dot.matches("label=").count(), 2);
        assert_eq!(dot.matches(" -> ").count(), 1);
    }
}
