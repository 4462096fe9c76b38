use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::llm::LlmClient;
use super::{align_moa, recognize, Alignment, NeedKind, NeedTag, NeedsError, Ontology, SeedLexicon, DEFAULT_TAU};
use crate::graph::{
    bcio_node_id, comb_node_id, context_for, render_context, GraphDelta, GraphEdge, GraphNode, NeedGraph, NodeLayer,
    Relation, CATEGORY_NEED, CATEGORY_OBSTACLE,
};
use crate::ingest::FeedbackDocument;
use crate::wave::{Stamp, Wave};

/// A document with its fitted topic mixture; `None` for documents that
/// were excluded from the model.
#[derive(Debug, Clone, Copy)]
pub struct DocumentMixture<'a> {
    pub doc: &'a FeedbackDocument,
    pub theta: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSettings {
    pub tau: f64,
    pub num_topics: usize,
    /// Neighbourhood radius of the graph context handed to the LLM.
    pub context_radius: usize,
}

impl ExtractionSettings {
    pub fn new(num_topics: usize) -> Self {
        Self {
            tau: DEFAULT_TAU,
            num_topics,
            context_radius: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveExtraction {
    pub wave: Wave,
    pub tags: Vec<NeedTag>,
    pub obstacle_tags: Vec<NeedTag>,
    pub lexicon: SeedLexicon,
    pub alignments: BTreeMap<String, Alignment>,
    pub delta: GraphDelta,
    /// Tagged obstacles with no COM-B component.
    pub unassigned_obstacles: Vec<String>,
}

type Provenance = BTreeMap<String, Stamp>;

/// Tags documents, aligns the needs they reveal and describes the graph
/// increment relative to `graph`.
///
/// Documents may span several waves up to `wave`; the delta is stamped
/// `wave`. Elements already present in `graph` are left out of the delta,
/// as are provenance documents an existing edge already carries. Nothing is
/// returned unless every step succeeds.
pub fn extract_documents(
    wave: Wave,
    docs: &[DocumentMixture<'_>],
    lexicon: &SeedLexicon,
    ontology: &Ontology,
    llm: Option<&dyn LlmClient>,
    graph: &NeedGraph,
    settings: &ExtractionSettings,
) -> Result<WaveExtraction, NeedsError> {
    lexicon.validate_against(ontology)?;
    if let Some(t) = lexicon.max_topic_id() {
        if t >= settings.num_topics {
            return Err(NeedsError::UnknownTopic {
                topic: t,
                num_topics: settings.num_topics,
            });
        }
    }

    let mut ordered: Vec<&DocumentMixture> = docs.iter().collect();
    ordered.sort_by(|a, b| a.doc.doc_id.cmp(&b.doc.doc_id));

    let mut tags = Vec::with_capacity(ordered.len());
    let mut obstacle_tags = Vec::with_capacity(ordered.len());
    for m in &ordered {
        if m.doc.wave > wave {
            return Err(NeedsError::InvalidLexicon(format!(
                "document `{}` belongs to {} which is after {wave}",
                m.doc.doc_id, m.doc.wave
            )));
        }
        let theta = match m.theta {
            Some(t) if t.len() != settings.num_topics => {
                return Err(NeedsError::MixtureMismatch {
                    doc_id: m.doc.doc_id.clone(),
                    found: t.len(),
                    expected: settings.num_topics,
                })
            }
            Some(t) => t,
            None => &[],
        };
        tags.push(recognize(&m.doc.doc_id, m.doc.wave, theta, lexicon, NeedKind::Need, settings.tau));
        obstacle_tags.push(recognize(&m.doc.doc_id, m.doc.wave, theta, lexicon, NeedKind::Obstacle, settings.tau));
    }

    let mut groups: BTreeMap<(NeedKind, String), Provenance> = BTreeMap::new();
    for (tag, kind) in tags
        .iter()
        .map(|t| (t, NeedKind::Need))
        .chain(obstacle_tags.iter().map(|t| (t, NeedKind::Obstacle)))
    {
        if let Some(label) = &tag.need {
            groups
                .entry((kind, label.clone()))
                .or_default()
                .insert(tag.doc_id.clone(), Stamp::At(tag.wave));
        }
    }

    let mut lex = lexicon.clone();
    let mut alignments = BTreeMap::new();
    let labels: BTreeSet<&String> = groups.keys().map(|(_, l)| l).collect();
    for label in labels {
        let context = context_for(graph, label, settings.context_radius)
            .map(|lines| render_context(&lines))
            .unwrap_or_default();
        let a = align_moa(label, &mut lex, ontology, llm, &context)?;
        alignments.insert(label.clone(), a);
    }

    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut unassigned = Vec::new();
    for ((kind, label), prov) in &groups {
        let (layer, category) = match kind {
            NeedKind::Need => (NodeLayer::Need, CATEGORY_NEED),
            NeedKind::Obstacle => (NodeLayer::Obstacle, CATEGORY_OBSTACLE),
        };
        let first = *prov.values().min().expect("group is non-empty");
        let node = GraphNode::new(layer, label, first);
        let id = node.node_id.clone();
        nodes.push(node);
        edges.push((id.clone(), category.to_string(), Relation::BelongsTo, prov));

        let moa = lex.get(label).and_then(|e| e.moa_concept.clone());
        if *kind == NeedKind::Obstacle {
            match moa.as_deref().and_then(|m| comb_node_id(ontology, m)) {
                Some(comb) => edges.push((id.clone(), comb, Relation::BelongsTo, prov)),
                None => unassigned.push(label.clone()),
            }
        }
        if let Some(m) = &moa {
            for b in ontology.bcio_classes_under(m) {
                let bid = bcio_node_id(ontology, &b.id).expect("bcio class");
                edges.push((id.clone(), bid, Relation::IsA, prov));
            }
        }
    }

    let mut delta = GraphDelta::empty(wave);
    for n in nodes {
        if graph.node(&n.node_id).is_none() {
            delta.add_nodes.push(n);
        }
    }
    for (src, dst, rel, prov) in edges {
        let fresh: Provenance = match graph.edge(&src, &dst, rel) {
            Some(e) => prov
                .iter()
                .filter(|(d, _)| !e.provenance.contains_key(*d))
                .map(|(d, s)| (d.clone(), *s))
                .collect(),
            None => prov.clone(),
        };
        if !fresh.is_empty() {
            delta.add_edges.push(GraphEdge::derived(&src, &dst, rel, fresh));
        }
    }
    delta.add_edges.sort_by_key(GraphEdge::key);

    Ok(WaveExtraction {
        wave,
        tags,
        obstacle_tags,
        lexicon: lex,
        alignments,
        delta,
        unassigned_obstacles: unassigned,
    })
}
