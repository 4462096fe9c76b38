use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{GraphEdge, GraphError, GraphNode, NeedGraph, NodeLayer};
use crate::wave::Stamp;

pub const GRAPH_VERSION: &str = "ng/1";

#[derive(Serialize, Deserialize)]
struct GraphFile {
    version: String,
    as_of: Stamp,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
}

impl NeedGraph {
    /// Canonical form: nodes sorted by id, then edges by (src, dst, relation).
    pub fn to_canonical_json(&self) -> String {
        let file = GraphFile {
            version: GRAPH_VERSION.to_string(),
            as_of: self.as_of,
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.values().cloned().collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
        if file.version != GRAPH_VERSION {
            return Err(GraphError::Malformed(format!("unsupported version `{}`", file.version)));
        }
        let mut g = NeedGraph {
            as_of: file.as_of,
            nodes: Default::default(),
            edges: Default::default(),
        };
        for n in file.nodes {
            if g.nodes.insert(n.node_id.clone(), n.clone()).is_some() {
                return Err(GraphError::DuplicateNode(n.node_id));
            }
        }
        for e in file.edges {
            if g.edges.insert(e.key(), e.clone()).is_some() {
                return Err(GraphError::Malformed(format!("duplicate edge {} -> {}", e.src, e.dst)));
            }
        }
        g.validate()?;
        Ok(g)
    }
}

fn shape(layer: NodeLayer) -> &'static str {
    match layer {
        NodeLayer::Category => "box",
        NodeLayer::Need => "ellipse",
        NodeLayer::Obstacle => "octagon",
        NodeLayer::ComB => "diamond",
        NodeLayer::BcioClass => "hexagon",
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering, one shape per layer.
pub fn to_dot(graph: &NeedGraph) -> String {
    let mut out = String::from("digraph needgraph {\n  rankdir=LR;\n");
    for n in graph.nodes() {
        let _ = writeln!(
            out,
            "  {} [label={}, shape={}];",
            quote(&n.node_id),
            quote(&format!("{}\n({})", n.label, n.first_seen)),
            shape(n.layer)
        );
    }
    for e in graph.edges() {
        let _ = writeln!(out, "  {} -> {} [label={}];", quote(&e.src), quote(&e.dst), quote(&e.relation.to_string()));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::needs::Ontology;

    #[test]
    fn canonical_json_round_trip() {
        let g = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        let text = g.to_canonical_json();
        assert!(text.contains("\"version\": \"ng/1\""));
        assert!(text.contains("\"as_of\": \"T0\""));
        let back = NeedGraph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_canonical_json(), text);
        assert!(NeedGraph::from_json(&text.replace("ng/1", "ng/9")).is_err());
    }

    #[test]
    fn dot_has_a_shape_per_layer() {
        let dot = to_dot(&NeedGraph::init_scaffold(&Ontology::sample()).unwrap());
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("shape=diamond"));
        assert!(dot.contains("shape=box"));
        assert!(dot.contains("-> \"comb:"));
    }
}
