//! Five-layer, time-stamped need graph with additive delta updates.

mod context;
mod export;

pub use context::{context_for, render_context};
pub use export::{to_dot, GRAPH_VERSION};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::needs::{Ontology, OntologyLayer, COMB_COMPONENTS};
use crate::wave::{Stamp, Wave};

pub const CATEGORY_NEED: &str = "cat:need";
pub const CATEGORY_OBSTACLE: &str = "cat:obstacle";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLayer {
    Category,
    Need,
    Obstacle,
    #[serde(rename = "comb")]
    ComB,
    BcioClass,
}

impl NodeLayer {
    pub const ALL: [NodeLayer; 5] = [
        NodeLayer::Category,
        NodeLayer::Need,
        NodeLayer::Obstacle,
        NodeLayer::ComB,
        NodeLayer::BcioClass,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            NodeLayer::Category => "cat",
            NodeLayer::Need => "need",
            NodeLayer::Obstacle => "obs",
            NodeLayer::ComB => "comb",
            NodeLayer::BcioClass => "bcio",
        }
    }
}

impl fmt::Display for NodeLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeLayer::Category => "category",
            NodeLayer::Need => "need",
            NodeLayer::Obstacle => "obstacle",
            NodeLayer::ComB => "comb",
            NodeLayer::BcioClass => "bcio_class",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    IsA,
    BelongsTo,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::IsA => "is_a",
            Relation::BelongsTo => "belongs_to",
        })
    }
}

/// Lowercase alphanumeric runs joined by hyphens.
pub fn slug(label: &str) -> String {
    label
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

pub fn node_id(layer: NodeLayer, label: &str) -> String {
    format!("{}:{}", layer.prefix(), slug(label))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub node_id: String,
    pub layer: NodeLayer,
    pub label: String,
    pub first_seen: Stamp,
}

impl GraphNode {
    pub fn new(layer: NodeLayer, label: &str, first_seen: Stamp) -> Self {
        Self {
            node_id: node_id(layer, label),
            layer,
            label: label.to_string(),
            first_seen,
        }
    }
}

pub type EdgeKey = (String, String, Relation);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    pub relation: Relation,
    pub first_seen: Stamp,
    /// Originating documents and their waves; empty for scaffold edges.
    #[serde(default)]
    pub provenance: BTreeMap<String, Stamp>,
}

impl GraphEdge {
    pub fn scaffold(src: &str, dst: &str, relation: Relation) -> Self {
        Self {
            src: src.to_string(),
            dst: dst.to_string(),
            relation,
            first_seen: Stamp::Scaffold,
            provenance: BTreeMap::new(),
        }
    }

    /// An edge that inherits its time stamp from the earliest originating document.
    pub fn derived(src: &str, dst: &str, relation: Relation, provenance: BTreeMap<String, Stamp>) -> Self {
        let first_seen = provenance.values().min().copied().unwrap_or(Stamp::Scaffold);
        Self {
            src: src.to_string(),
            dst: dst.to_string(),
            relation,
            first_seen,
            provenance,
        }
    }

    pub fn key(&self) -> EdgeKey {
        (self.src.clone(), self.dst.clone(), self.relation)
    }
}

/// Additive increment for one wave.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub wave: Wave,
    pub add_nodes: Vec<GraphNode>,
    pub add_edges: Vec<GraphEdge>,
}

impl GraphDelta {
    pub fn empty(wave: Wave) -> Self {
        Self {
            wave,
            add_nodes: Vec::new(),
            add_edges: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.add_nodes.is_empty() && self.add_edges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("delta for {found} does not follow graph at {as_of}")]
    OutOfOrderWave { as_of: Stamp, found: Wave },
    #[error("edge {src} -> {dst} references a node that does not exist")]
    DanglingEdge { src: String, dst: String },
    #[error("edge {src} -{relation}-> {dst} violates layer typing")]
    IllTyped { src: String, dst: String, relation: Relation },
    #[error("invalid node `{0}`")]
    InvalidNode(String),
    #[error("node `{0}` conflicts with an existing node of the same id")]
    NodeConflict(String),
    #[error("inconsistent time stamp: {0}")]
    BadTimestamp(String),
    #[error("snapshot at {requested} requested but graph is only at {as_of}")]
    SnapshotBeyond { requested: Stamp, as_of: Stamp },
    #[error("unknown need `{0}`")]
    UnknownNeed(String),
    #[error("malformed graph file: {0}")]
    Malformed(String),
}

/// Whether `src -relation-> dst` is allowed between these layers.
pub fn edge_allowed(src: NodeLayer, dst: NodeLayer, dst_id: &str, relation: Relation) -> bool {
    use NodeLayer::*;
    match (src, dst, relation) {
        (Need, Category, Relation::BelongsTo) => dst_id == CATEGORY_NEED,
        (Obstacle, Category, Relation::BelongsTo) => dst_id == CATEGORY_OBSTACLE,
        (Obstacle, ComB, Relation::BelongsTo) => true,
        (Need | Obstacle, BcioClass, _) => true,
        (BcioClass, ComB, Relation::BelongsTo) => true,
        _ => false,
    }
}

/// Graph node id of an ontology BCIO class.
pub fn bcio_node_id(ontology: &Ontology, ontology_id: &str) -> Option<String> {
    let n = ontology.get(ontology_id)?;
    (n.layer == OntologyLayer::BcioClass).then(|| node_id(NodeLayer::BcioClass, &n.label))
}

/// Graph node id of the COM-B component an ontology node belongs to.
pub fn comb_node_id(ontology: &Ontology, ontology_id: &str) -> Option<String> {
    ontology.comb_component_of(ontology_id).map(|n| n.id.clone())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeedGraph {
    as_of: Stamp,
    nodes: BTreeMap<String, GraphNode>,
    edges: BTreeMap<EdgeKey, GraphEdge>,
}

impl NeedGraph {
    /// The static scaffold: both categories, the six COM-B components and every
    /// BCIO class, with BCIO classes linked to their COM-B component.
    pub fn init_scaffold(ontology: &Ontology) -> Result<Self, GraphError> {
        let mut g = Self {
            as_of: Stamp::Scaffold,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
        };
        let mut add = |node: GraphNode| -> Result<(), GraphError> {
            if g.nodes.contains_key(&node.node_id) {
                return Err(GraphError::DuplicateNode(node.node_id));
            }
            g.nodes.insert(node.node_id.clone(), node);
            Ok(())
        };
        add(GraphNode::new(NodeLayer::Category, "Need", Stamp::Scaffold))?;
        add(GraphNode::new(NodeLayer::Category, "Obstacle", Stamp::Scaffold))?;
        for id in COMB_COMPONENTS {
            add(GraphNode::new(NodeLayer::ComB, id.trim_start_matches("comb:"), Stamp::Scaffold))?;
        }
        let mut scaffold_edges = Vec::new();
        for b in ontology.layer(OntologyLayer::BcioClass) {
            let node = GraphNode::new(NodeLayer::BcioClass, &b.label, Stamp::Scaffold);
            if let Some(comb) = comb_node_id(ontology, &b.id) {
                scaffold_edges.push(GraphEdge::scaffold(&node.node_id, &comb, Relation::BelongsTo));
            }
            add(node)?;
        }
        for e in scaffold_edges {
            g.edges.insert(e.key(), e);
        }
        Ok(g)
    }

    pub fn as_of(&self) -> Stamp {
        self.as_of
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &GraphEdge> {
        self.edges.values()
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.get(id)
    }

    pub fn edge(&self, src: &str, dst: &str, relation: Relation) -> Option<&GraphEdge> {
        self.edges.get(&(src.to_string(), dst.to_string(), relation))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn layer_count(&self, layer: NodeLayer) -> usize {
        self.nodes.values().filter(|n| n.layer == layer).count()
    }

    /// Unions `delta` into the graph at the wave that follows `as_of`.
    pub fn apply_delta(&self, delta: &GraphDelta) -> Result<Self, GraphError> {
        if self.as_of.next() != Some(Stamp::At(delta.wave)) {
            return Err(GraphError::OutOfOrderWave {
                as_of: self.as_of,
                found: delta.wave,
            });
        }
        self.merge(delta, true)
    }

    /// Unions a delta spanning several waves, advancing `as_of` to `delta.wave`.
    pub fn apply_batch(&self, delta: &GraphDelta) -> Result<Self, GraphError> {
        if Stamp::At(delta.wave) <= self.as_of {
            return Err(GraphError::OutOfOrderWave {
                as_of: self.as_of,
                found: delta.wave,
            });
        }
        self.merge(delta, false)
    }

    /// With `single_wave`, every stamp in the delta must be the delta's own
    /// wave, so the graph as it stood before is left untouched by snapshots.
    fn merge(&self, delta: &GraphDelta, single_wave: bool) -> Result<Self, GraphError> {
        let target = Stamp::At(delta.wave);
        let mut g = self.clone();

        for n in &delta.add_nodes {
            if !matches!(n.layer, NodeLayer::Need | NodeLayer::Obstacle) {
                return Err(GraphError::InvalidNode(format!("{} (only need and obstacle nodes are added by deltas)", n.node_id)));
            }
            if n.node_id != node_id(n.layer, &n.label) || slug(&n.label).is_empty() {
                return Err(GraphError::InvalidNode(n.node_id.clone()));
            }
            if n.first_seen == Stamp::Scaffold || n.first_seen > target || (single_wave && n.first_seen != target) {
                return Err(GraphError::BadTimestamp(format!("node {} first seen at {}", n.node_id, n.first_seen)));
            }
            match g.nodes.get_mut(&n.node_id) {
                Some(existing) => {
                    if existing.layer != n.layer || existing.label != n.label {
                        return Err(GraphError::NodeConflict(n.node_id.clone()));
                    }
                    existing.first_seen = existing.first_seen.min(n.first_seen);
                }
                None => {
                    g.nodes.insert(n.node_id.clone(), n.clone());
                }
            }
        }

        for e in &delta.add_edges {
            let (Some(src), Some(dst)) = (g.nodes.get(&e.src), g.nodes.get(&e.dst)) else {
                return Err(GraphError::DanglingEdge {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                });
            };
            let from_delta_layer = matches!(src.layer, NodeLayer::Need | NodeLayer::Obstacle);
            if !from_delta_layer || !edge_allowed(src.layer, dst.layer, &dst.node_id, e.relation) {
                return Err(GraphError::IllTyped {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    relation: e.relation,
                });
            }
            let earliest = e.provenance.values().min().copied();
            if earliest.is_none() || earliest != Some(e.first_seen) {
                return Err(GraphError::BadTimestamp(format!(
                    "edge {} -> {} must carry provenance and inherit its earliest stamp",
                    e.src, e.dst
                )));
            }
            if e.provenance.values().any(|s| *s == Stamp::Scaffold || *s > target || (single_wave && *s != target)) {
                return Err(GraphError::BadTimestamp(format!("edge {} -> {} has provenance after {target}", e.src, e.dst)));
            }
            match g.edges.get_mut(&e.key()) {
                Some(existing) => {
                    existing.first_seen = existing.first_seen.min(e.first_seen);
                    for (doc, s) in &e.provenance {
                        let slot = existing.provenance.entry(doc.clone()).or_insert(*s);
                        *slot = (*slot).min(*s);
                    }
                }
                None => {
                    g.edges.insert(e.key(), e.clone());
                }
            }
        }

        for e in g.edges.values() {
            let later = |id: &str| g.nodes[id].first_seen > e.first_seen;
            if later(&e.src) || later(&e.dst) {
                return Err(GraphError::BadTimestamp(format!(
                    "edge {} -> {} predates one of its endpoints",
                    e.src, e.dst
                )));
            }
        }
        g.as_of = target;
        Ok(g)
    }

    /// The subgraph of elements first seen at or before `t`; edge provenance is
    /// restricted to documents up to `t`.
    pub fn snapshot(&self, t: Stamp) -> Result<Self, GraphError> {
        if t > self.as_of {
            return Err(GraphError::SnapshotBeyond {
                requested: t,
                as_of: self.as_of,
            });
        }
        let nodes = self
            .nodes
            .iter()
            .filter(|(_, n)| n.first_seen <= t)
            .map(|(k, n)| (k.clone(), n.clone()))
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|(_, e)| e.first_seen <= t)
            .map(|(k, e)| {
                let mut e = e.clone();
                e.provenance.retain(|_, s| *s <= t);
                (k.clone(), e)
            })
            .collect();
        Ok(Self { as_of: t, nodes, edges })
    }

    /// Checks every structural invariant; used when loading external files.
    pub fn validate(&self) -> Result<(), GraphError> {
        let cats: Vec<&str> = self
            .nodes
            .values()
            .filter(|n| n.layer == NodeLayer::Category)
            .map(|n| n.node_id.as_str())
            .collect();
        if cats != [CATEGORY_NEED, CATEGORY_OBSTACLE] {
            return Err(GraphError::Malformed("category layer must be exactly {Need, Obstacle}".into()));
        }
        let combs: Vec<&str> = self
            .nodes
            .values()
            .filter(|n| n.layer == NodeLayer::ComB)
            .map(|n| n.node_id.as_str())
            .collect();
        let mut expect = COMB_COMPONENTS.to_vec();
        expect.sort_unstable();
        if combs != expect {
            return Err(GraphError::Malformed("COM-B layer must hold exactly the six components".into()));
        }
        for (id, n) in &self.nodes {
            if *id != n.node_id || n.node_id != node_id(n.layer, &n.label) {
                return Err(GraphError::InvalidNode(id.clone()));
            }
            if n.first_seen > self.as_of {
                return Err(GraphError::BadTimestamp(format!("node {id} is newer than the graph")));
            }
            let dynamic = matches!(n.layer, NodeLayer::Need | NodeLayer::Obstacle);
            if dynamic == (n.first_seen == Stamp::Scaffold) {
                return Err(GraphError::BadTimestamp(format!("node {id} has stamp {}", n.first_seen)));
            }
        }
        for (key, e) in &self.edges {
            if *key != e.key() {
                return Err(GraphError::Malformed(format!("edge key mismatch for {} -> {}", e.src, e.dst)));
            }
            let (Some(src), Some(dst)) = (self.nodes.get(&e.src), self.nodes.get(&e.dst)) else {
                return Err(GraphError::DanglingEdge {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                });
            };
            if !edge_allowed(src.layer, dst.layer, &dst.node_id, e.relation) {
                return Err(GraphError::IllTyped {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    relation: e.relation,
                });
            }
            let inherited = e.provenance.values().min().copied().unwrap_or(Stamp::Scaffold);
            if e.first_seen != inherited || e.first_seen > self.as_of {
                return Err(GraphError::BadTimestamp(format!("edge {} -> {}", e.src, e.dst)));
            }
            if src.first_seen > e.first_seen || dst.first_seen > e.first_seen {
                return Err(GraphError::BadTimestamp(format!("edge {} -> {} predates an endpoint", e.src, e.dst)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov(items: &[(&str, Wave)]) -> BTreeMap<String, Stamp> {
        items.iter().map(|(d, w)| (d.to_string(), Stamp::At(*w))).collect()
    }

    fn need_delta(wave: Wave, label: &str, docs: &[(&str, Wave)]) -> GraphDelta {
        let p = prov(docs);
        let first = *p.values().min().unwrap();
        let node = GraphNode::new(NodeLayer::Need, label, first);
        let edge = GraphEdge::derived(&node.node_id, CATEGORY_NEED, Relation::BelongsTo, p);
        GraphDelta {
            wave,
            add_nodes: vec![node],
            add_edges: vec![edge],
        }
    }

    #[test]
    fn scaffold_layers() {
        let g = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        assert_eq!(g.layer_count(NodeLayer::Category), 2);
        assert_eq!(g.layer_count(NodeLayer::ComB), 6);
        assert_eq!(g.layer_count(NodeLayer::Need), 0);
        assert_eq!(g.layer_count(NodeLayer::BcioClass), Ontology::sample().layer(OntologyLayer::BcioClass).count());
        assert_eq!(g.edge_count(), g.layer_count(NodeLayer::BcioClass));
        assert!(g.edges().all(|e| e.first_seen == Stamp::Scaffold));
        assert_eq!(g.as_of(), Stamp::Scaffold);
        g.validate().unwrap();
        assert_eq!(g.node("comb:motivation-automatic").unwrap().label, "motivation-automatic");
    }

    #[test]
    fn minimal_scaffold_without_bcio() {
        let nodes = Ontology::sample()
            .nodes()
            .filter(|n| n.layer != OntologyLayer::BcioClass)
            .cloned()
            .collect();
        let g = NeedGraph::init_scaffold(&Ontology::new(nodes).unwrap()).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn apply_delta_union_semantics() {
        let g0 = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        let g1 = g0.apply_delta(&GraphDelta::empty(Wave::M3)).unwrap();
        assert_eq!(g1.as_of(), Stamp::At(Wave::M3));
        assert_eq!((g1.node_count(), g1.edge_count()), (g0.node_count(), g0.edge_count()));

        let g1 = g0.apply_delta(&need_delta(Wave::M3, "food needs", &[("d1", Wave::M3)])).unwrap();
        assert_eq!(g1.node_count(), g0.node_count() + 1);
        assert_eq!(g1.edge_count(), g0.edge_count() + 1);

        let g2 = g1.apply_delta(&need_delta(Wave::M6, "food needs", &[("d2", Wave::M6)])).unwrap();
        assert_eq!(g2.node_count(), g1.node_count());
        let e = g2.edge("need:food-needs", CATEGORY_NEED, Relation::BelongsTo).unwrap();
        assert_eq!(e.provenance.len(), 2);
        assert_eq!(e.first_seen, Stamp::At(Wave::M3));
        assert_eq!(g2.node("need:food-needs").unwrap().first_seen, Stamp::At(Wave::M3));
        g2.validate().unwrap();
    }

    #[test]
    fn apply_delta_rejections() {
        let g0 = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        assert!(matches!(
            g0.apply_delta(&GraphDelta::empty(Wave::M6)),
            Err(GraphError::OutOfOrderWave { .. })
        ));
        let mut d = need_delta(Wave::M3, "food needs", &[("d1", Wave::M3)]);
        d.add_nodes.clear();
        assert!(matches!(g0.apply_delta(&d), Err(GraphError::DanglingEdge { .. })));

        let mut d = need_delta(Wave::M3, "food needs", &[("d1", Wave::M3)]);
        d.add_edges[0].dst = CATEGORY_OBSTACLE.into();
        assert!(matches!(g0.apply_delta(&d), Err(GraphError::IllTyped { .. })));

        let mut d = need_delta(Wave::M3, "food needs", &[("d1", Wave::M3)]);
        d.add_edges[0].dst = "comb:opportunity-social".into();
        assert!(matches!(g0.apply_delta(&d), Err(GraphError::IllTyped { .. })));

        let d = need_delta(Wave::M3, "food needs", &[("d1", Wave::M6)]);
        assert!(matches!(g0.apply_delta(&d), Err(GraphError::BadTimestamp(_))));

        // Scaffold edges are not extended by deltas.
        let scaffold_edge = g0.edges().next().unwrap().clone();
        let mut d = GraphDelta::empty(Wave::M3);
        d.add_edges.push(GraphEdge::derived(
            &scaffold_edge.src,
            &scaffold_edge.dst,
            scaffold_edge.relation,
            [("d1".to_string(), Stamp::At(Wave::M3))].into(),
        ));
        assert!(matches!(g0.apply_delta(&d), Err(GraphError::IllTyped { .. })));

        // A single-wave delta cannot backdate.
        let g1 = g0.apply_delta(&GraphDelta::empty(Wave::M3)).unwrap();
        let d = need_delta(Wave::M6, "food needs", &[("d1", Wave::M3)]);
        assert!(matches!(g1.apply_delta(&d), Err(GraphError::BadTimestamp(_))));
    }

    #[test]
    fn snapshots_filter_by_time() {
        let g0 = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        let g = g0
            .apply_delta(&need_delta(Wave::M3, "a", &[("d1", Wave::M3)]))
            .unwrap()
            .apply_delta(&need_delta(Wave::M6, "a", &[("d2", Wave::M6)]))
            .unwrap()
            .apply_delta(&need_delta(Wave::M12, "b", &[("d3", Wave::M12)]))
            .unwrap();
        assert_eq!(g.snapshot(Stamp::Scaffold).unwrap().nodes().count(), g0.node_count());
        let s = g.snapshot(Stamp::Scaffold).unwrap();
        assert_eq!(s.edges().count(), g0.edge_count());

        let s6 = g.snapshot(Stamp::At(Wave::M6)).unwrap();
        assert!(s6.node("need:a").is_some());
        assert!(s6.node("need:b").is_none());
        s6.validate().unwrap();
        let s3 = g.snapshot(Stamp::At(Wave::M3)).unwrap();
        assert_eq!(s3.edge("need:a", CATEGORY_NEED, Relation::BelongsTo).unwrap().provenance.len(), 1);

        assert_eq!(g.snapshot(g.as_of()).unwrap(), g);
        assert!(s6.snapshot(Stamp::At(Wave::M12)).is_err());
    }

    #[test]
    fn slugs() {
        assert_eq!(node_id(NodeLayer::Need, "Mental-health  support!"), "need:mental-health-support");
        assert_eq!(slug("  "), "");
    }
}
