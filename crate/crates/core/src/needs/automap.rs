use std::collections::BTreeMap;

use super::SeedLexicon;

/// Default share of a topic's probability mass that an entry's keywords must
/// carry before the topic is mapped to it.
pub const DEFAULT_MIN_KEYWORD_MASS: f64 = 0.1;

/// Proposes a need for every topic no entry owns yet: the entry whose
/// keywords carry the most of the topic's word mass, ties to the smallest
/// label. Mappings below `min_mass` are not made. Returns the new mappings.
pub fn auto_map_topics(
    lexicon: &mut SeedLexicon,
    phi: &[Vec<f64>],
    vocabulary: &[String],
    min_mass: f64,
) -> Vec<(usize, String)> {
    let index: BTreeMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut proposals: Vec<(usize, String)> = Vec::new();
    for (k, row) in phi.iter().enumerate() {
        if lexicon.owner_of(k).is_some() {
            continue;
        }
        let mut best: Option<(&str, f64)> = None;
        for (label, entry) in lexicon.entries() {
            let mass: f64 = entry
                .keywords
                .iter()
                .filter_map(|kw| index.get(kw.as_str()))
                .map(|&w| row[w])
                .sum();
            if best.is_none_or(|(_, b)| mass > b) {
                best = Some((label, mass));
            }
        }
        if let Some((label, mass)) = best {
            if mass >= min_mass {
                proposals.push((k, label.to_string()));
            }
        }
    }
    for (k, label) in &proposals {
        lexicon.map_unowned(label, &[*k]);
    }
    proposals
}
