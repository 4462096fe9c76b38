use std::collections::{BTreeMap, VecDeque};

use super::{node_id, GraphError, GraphNode, NeedGraph, NodeLayer};

fn describe(n: &GraphNode) -> String {
    format!("{} [{}]", n.label, n.node_id)
}

/// Breadth-first neighbourhood of a need (or obstacle) as text facts.
///
/// The first line describes the centre node. Each further line is one edge
/// `subject relation object` with both endpoints within `radius` hops, sorted
/// by subject id, object id and relation.
pub fn context_for(graph: &NeedGraph, need_label: &str, radius: usize) -> Result<Vec<String>, GraphError> {
    let centre = [NodeLayer::Need, NodeLayer::Obstacle]
        .iter()
        .map(|&l| node_id(l, need_label))
        .find(|id| graph.node(id).is_some())
        .ok_or_else(|| GraphError::UnknownNeed(need_label.to_string()))?;

    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in graph.edges() {
        adj.entry(&e.src).or_default().push(&e.dst);
        adj.entry(&e.dst).or_default().push(&e.src);
    }
    let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
    dist.insert(&centre, 0);
    let mut queue = VecDeque::from([centre.as_str()]);
    while let Some(id) = queue.pop_front() {
        let d = dist[id];
        if d == radius {
            continue;
        }
        for &nb in adj.get(id).map(Vec::as_slice).unwrap_or_default() {
            if !dist.contains_key(nb) {
                dist.insert(nb, d + 1);
                queue.push_back(nb);
            }
        }
    }

    let c = graph.node(&centre).expect("centre exists");
    let mut lines = vec![format!("{} is a {} first seen at {}", describe(c), c.layer, c.first_seen)];
    let mut edges: Vec<_> = graph
        .edges()
        .filter(|e| match (dist.get(e.src.as_str()), dist.get(e.dst.as_str())) {
            (Some(&a), Some(&b)) => a.min(b) < radius,
            _ => false,
        })
        .collect();
    edges.sort_by(|a, b| (&a.src, &a.dst, a.relation).cmp(&(&b.src, &b.dst, b.relation)));
    for e in edges {
        let src = graph.node(&e.src).expect("endpoint exists");
        let dst = graph.node(&e.dst).expect("endpoint exists");
        lines.push(format!("{} {} {}", describe(src), e.relation, describe(dst)));
    }
    Ok(lines)
}

pub fn render_context(lines: &[String]) -> String {
    lines.join("\n")
}
