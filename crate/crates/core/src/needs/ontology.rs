//! Declarative behaviour-science ontology: MoA concepts, COM-B components and
//! BCIO intervention classes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::NeedsError;

pub const ONTOLOGY_VERSION: &str = "onto/1";

const SAMPLE_ONTOLOGY: &str = include_str!("../../data/ontology_sample.json");

/// Canonical ids of the six COM-B components; every ontology must define them.
pub const COMB_COMPONENTS: [&str; 6] = [
    "comb:capability-physical",
    "comb:capability-psychological",
    "comb:opportunity-physical",
    "comb:opportunity-social",
    "comb:motivation-reflective",
    "comb:motivation-automatic",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OntologyLayer {
    MoaConcept,
    CombComponent,
    BcioClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyNode {
    pub id: String,
    pub label: String,
    pub layer: OntologyLayer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct OntologyFile {
    version: String,
    nodes: Vec<OntologyNode>,
}

/// Validated ontology: unique ids, resolvable parents, acyclic parent links,
/// all six COM-B components present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    nodes: BTreeMap<String, OntologyNode>,
}

impl Ontology {
    pub fn new(nodes: Vec<OntologyNode>) -> Result<Self, NeedsError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            if node.id.trim().is_empty() {
                return Err(NeedsError::InvalidOntology("node with empty id".into()));
            }
            if let Some(prev) = map.insert(node.id.clone(), node) {
                return Err(NeedsError::InvalidOntology(format!("duplicate node id `{}`", prev.id)));
            }
        }
        for node in map.values() {
            if let Some(p) = &node.parent_id {
                if !map.contains_key(p) {
                    return Err(NeedsError::InvalidOntology(format!(
                        "node `{}` references unknown parent `{p}`",
                        node.id
                    )));
                }
            }
        }
        for start in map.keys() {
            let mut seen = BTreeSet::new();
            let mut cur = Some(start.as_str());
            while let Some(id) = cur {
                if !seen.insert(id) {
                    return Err(NeedsError::InvalidOntology(format!("parent cycle through `{id}`")));
                }
                cur = map[id].parent_id.as_deref();
            }
        }
        for comp in COMB_COMPONENTS {
            match map.get(comp) {
                Some(n) if n.layer == OntologyLayer::CombComponent => {}
                _ => return Err(NeedsError::MissingCombComponent(comp.to_string())),
            }
        }
        Ok(Self { nodes: map })
    }

    pub fn from_json(text: &str) -> Result<Self, NeedsError> {
        let file: OntologyFile =
            serde_json::from_str(text).map_err(|e| NeedsError::InvalidOntology(e.to_string()))?;
        if file.version != ONTOLOGY_VERSION {
            return Err(NeedsError::InvalidOntology(format!("unsupported version `{}`", file.version)));
        }
        Self::new(file.nodes)
    }

    pub fn to_json(&self) -> String {
        let file = OntologyFile {
            version: ONTOLOGY_VERSION.to_string(),
            nodes: self.nodes.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("ontology serializes")
    }

    /// The desk-scale sample shipped with the crate.
    pub fn sample() -> Self {
        Self::from_json(SAMPLE_ONTOLOGY).expect("shipped ontology is valid")
    }

    pub fn get(&self, id: &str) -> Option<&OntologyNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &OntologyNode> {
        self.nodes.values()
    }

    pub fn layer(&self, layer: OntologyLayer) -> impl Iterator<Item = &OntologyNode> {
        self.nodes.values().filter(move |n| n.layer == layer)
    }

    /// Ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: &str) -> Vec<&OntologyNode> {
        let mut out = Vec::new();
        let mut cur = self.nodes.get(id).and_then(|n| n.parent_id.as_deref());
        while let Some(p) = cur {
            let node = &self.nodes[p];
            out.push(node);
            cur = node.parent_id.as_deref();
        }
        out
    }

    /// The COM-B component `id` belongs to: itself, or its nearest COM-B ancestor.
    pub fn comb_component_of(&self, id: &str) -> Option<&OntologyNode> {
        let node = self.nodes.get(id)?;
        if node.layer == OntologyLayer::CombComponent {
            return Some(node);
        }
        self.ancestors(id)
            .into_iter()
            .find(|n| n.layer == OntologyLayer::CombComponent)
    }

    /// BCIO classes that have `id` on their ancestor chain.
    pub fn bcio_classes_under(&self, id: &str) -> Vec<&OntologyNode> {
        self.layer(OntologyLayer::BcioClass)
            .filter(|n| self.ancestors(&n.id).iter().any(|a| a.id == id))
            .collect()
    }
}
