use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AuditEntry, AuditLog, NeedsError, Ontology};
use crate::wave::Wave;

pub const LEXICON_VERSION: &str = "lex/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeedKind {
    Need,
    Obstacle,
}

impl fmt::Display for NeedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeedKind::Need => "need",
            NeedKind::Obstacle => "obstacle",
        })
    }
}

/// When an entry entered the lexicon: shipped with the seed, or added during a wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Origin {
    Seed,
    Wave(Wave),
}

impl From<Origin> for String {
    fn from(o: Origin) -> String {
        match o {
            Origin::Seed => "seed".into(),
            Origin::Wave(w) => w.as_str().into(),
        }
    }
}

impl TryFrom<String> for Origin {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "seed" {
            Ok(Origin::Seed)
        } else {
            s.parse().map(Origin::Wave).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    #[serde(default)]
    pub keywords: BTreeSet<String>,
    #[serde(default)]
    pub topic_ids: BTreeSet<usize>,
    #[serde(default)]
    pub moa_concept: Option<String>,
    pub kind: NeedKind,
    pub created_at: Origin,
}

impl LexiconEntry {
    pub fn new(kind: NeedKind, created_at: Origin) -> Self {
        Self {
            keywords: BTreeSet::new(),
            topic_ids: BTreeSet::new(),
            moa_concept: None,
            kind,
            created_at,
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
struct LexiconFile {
    version: String,
    entries: BTreeMap<String, LexiconEntry>,
}

/// Need label to keywords, mapped topics and MoA concept.
///
/// Invariants: labels are non-empty and normalized, and each topic id is
/// owned by at most one entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "LexiconFile", try_from = "LexiconFile")]
pub struct SeedLexicon {
    entries: BTreeMap<String, LexiconEntry>,
}

impl From<SeedLexicon> for LexiconFile {
    fn from(lex: SeedLexicon) -> Self {
        LexiconFile {
            version: LEXICON_VERSION.to_string(),
            entries: lex.entries,
        }
    }
}

impl TryFrom<LexiconFile> for SeedLexicon {
    type Error = NeedsError;

    fn try_from(file: LexiconFile) -> Result<Self, Self::Error> {
        if file.version != LEXICON_VERSION {
            return Err(NeedsError::InvalidLexicon(format!("unsupported version `{}`", file.version)));
        }
        SeedLexicon::from_entries(file.entries)
    }
}

/// Trims, collapses inner whitespace and lowercases a label.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SeedLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: BTreeMap<String, LexiconEntry>) -> Result<Self, NeedsError> {
        let lex = Self { entries };
        lex.validate()?;
        Ok(lex)
    }

    pub fn validate(&self) -> Result<(), NeedsError> {
        let mut owners: BTreeMap<usize, &str> = BTreeMap::new();
        for (label, entry) in &self.entries {
            if label.is_empty() {
                return Err(NeedsError::EmptyLabel);
            }
            if *label != normalize_label(label) {
                return Err(NeedsError::InvalidLexicon(format!("label `{label}` is not normalized")));
            }
            if entry.keywords.iter().any(|k| k.is_empty() || *k != k.to_lowercase()) {
                return Err(NeedsError::InvalidLexicon(format!("`{label}` has an empty or non-lowercase keyword")));
            }
            for &t in &entry.topic_ids {
                if let Some(other) = owners.insert(t, label) {
                    return Err(NeedsError::InvalidLexicon(format!(
                        "topic {t} mapped to both `{other}` and `{label}`"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that every resolved MoA concept exists in `ontology`.
    pub fn validate_against(&self, ontology: &Ontology) -> Result<(), NeedsError> {
        for (label, entry) in &self.entries {
            if let Some(m) = &entry.moa_concept {
                if !ontology.contains(m) {
                    return Err(NeedsError::InvalidLexicon(format!(
                        "`{label}` references unknown ontology node `{m}`"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, NeedsError> {
        serde_json::from_str(text).map_err(|e| NeedsError::InvalidLexicon(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serializes")
    }

    pub fn get(&self, label: &str) -> Option<&LexiconEntry> {
        self.entries.get(label)
    }

    pub fn entries(&self) -> &BTreeMap<String, LexiconEntry> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn of_kind(&self, kind: NeedKind) -> impl Iterator<Item = (&String, &LexiconEntry)> {
        self.entries.iter().filter(move |(_, e)| e.kind == kind)
    }

    pub fn owner_of(&self, topic: usize) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, e)| e.topic_ids.contains(&topic))
            .map(|(l, _)| l.as_str())
    }

    pub fn max_topic_id(&self) -> Option<usize> {
        self.entries.values().filter_map(|e| e.topic_ids.last().copied()).max()
    }

    /// Inserts a fresh entry; the label must not exist yet.
    pub fn insert(&mut self, label: &str, entry: LexiconEntry) -> Result<(), NeedsError> {
        let label = normalize_label(label);
        if label.is_empty() {
            return Err(NeedsError::EmptyLabel);
        }
        if self.entries.contains_key(&label) {
            return Err(NeedsError::InvalidLexicon(format!("duplicate label `{label}`")));
        }
        let mut next = self.clone();
        next.entries.insert(label, entry);
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// Records a MoA concept for an unresolved entry. Resolved entries are
    /// never overwritten; the existing mapping is returned instead.
    pub(crate) fn resolve_moa(&mut self, label: &str, moa: &str) -> Result<String, NeedsError> {
        let entry = self
            .entries
            .get_mut(label)
            .ok_or_else(|| NeedsError::UnknownNeed(label.to_string()))?;
        Ok(entry.moa_concept.get_or_insert_with(|| moa.to_string()).clone())
    }

    /// Adds topic-to-need mappings for unowned topics. Returns the topics mapped.
    pub(crate) fn map_unowned(&mut self, label: &str, topics: &[usize]) -> Vec<usize> {
        let owned: BTreeSet<usize> = self.entries.values().flat_map(|e| e.topic_ids.iter().copied()).collect();
        let Some(entry) = self.entries.get_mut(label) else {
            return Vec::new();
        };
        let fresh: Vec<usize> = topics.iter().copied().filter(|t| !owned.contains(t)).collect();
        entry.topic_ids.extend(fresh.iter().copied());
        fresh
    }
}

/// An expert's decision to (re)label one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEdit {
    pub topic_id: usize,
    pub need_label: String,
    #[serde(default = "default_kind")]
    pub kind: NeedKind,
    #[serde(default)]
    pub keywords: Vec<String>,
}

fn default_kind() -> NeedKind {
    NeedKind::Need
}

/// Assigns `edit.topic_id` to `edit.need_label`, removing it from any prior
/// owner. New labels get an unresolved MoA concept and `origin` as creation
/// time. The mutation is logged before it is committed; on any error the
/// lexicon is left untouched.
pub fn apply_expert_label(
    lexicon: &mut SeedLexicon,
    edit: &LabelEdit,
    num_topics: usize,
    origin: Origin,
    actor: &str,
    audit: &mut AuditLog,
) -> Result<(), NeedsError> {
    let label = normalize_label(&edit.need_label);
    if label.is_empty() {
        return Err(NeedsError::EmptyLabel);
    }
    if edit.topic_id >= num_topics {
        return Err(NeedsError::UnknownTopic {
            topic: edit.topic_id,
            num_topics,
        });
    }
    if let Some(existing) = lexicon.get(&label) {
        if existing.kind != edit.kind {
            return Err(NeedsError::KindMismatch {
                label,
                existing: existing.kind,
            });
        }
    }

    let prev_owner = lexicon.owner_of(edit.topic_id).map(str::to_string);
    let before = json!({
        "topic_id": edit.topic_id,
        "owner": prev_owner,
        "entry": lexicon.get(&label),
    });

    let mut next = lexicon.clone();
    for entry in next.entries.values_mut() {
        entry.topic_ids.remove(&edit.topic_id);
    }
    let entry = next
        .entries
        .entry(label.clone())
        .or_insert_with(|| LexiconEntry::new(edit.kind, origin));
    entry.topic_ids.insert(edit.topic_id);
    for kw in &edit.keywords {
        let kw = kw.trim().to_lowercase();
        if !kw.is_empty() {
            entry.keywords.insert(kw);
        }
    }
    next.validate()?;

    let after = json!({
        "topic_id": edit.topic_id,
        "owner": label,
        "entry": next.get(&label),
    });
    audit.append(AuditEntry::now(actor, "label_topic", before, after))?;
    *lexicon = next;
    Ok(())
}

/// An expert's edit of one lexicon entry; topic mappings are kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryEdit {
    pub label: String,
    #[serde(default = "default_kind")]
    pub kind: NeedKind,
    /// Replaces the entry's keywords.
    #[serde(default)]
    pub keywords: Vec<String>,
    /// Replaces the MoA concept when given; it must name a MoA concept of `ontology`.
    #[serde(default)]
    pub moa_concept: Option<String>,
}

/// Creates or updates an entry, logging the change. Transactional like
/// [`apply_expert_label`].
pub fn apply_entry_edit(
    lexicon: &mut SeedLexicon,
    edit: &EntryEdit,
    ontology: &Ontology,
    origin: Origin,
    actor: &str,
    audit: &mut AuditLog,
) -> Result<(), NeedsError> {
    let label = normalize_label(&edit.label);
    if label.is_empty() {
        return Err(NeedsError::EmptyLabel);
    }
    if let Some(existing) = lexicon.get(&label) {
        if existing.kind != edit.kind {
            return Err(NeedsError::KindMismatch {
                label,
                existing: existing.kind,
            });
        }
    }
    let before = json!({"label": label, "entry": lexicon.get(&label)});
    let mut next = lexicon.clone();
    let entry = next
        .entries
        .entry(label.clone())
        .or_insert_with(|| LexiconEntry::new(edit.kind, origin));
    entry.keywords = edit
        .keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    if let Some(moa) = &edit.moa_concept {
        let moa = moa.trim();
        if ontology.get(moa).map(|n| n.layer) != Some(super::OntologyLayer::MoaConcept) {
            return Err(NeedsError::InvalidLexicon(format!("`{moa}` is not a MoA concept")));
        }
        entry.moa_concept = Some(moa.to_string());
    }
    next.validate()?;
    next.validate_against(ontology)?;
    let after = json!({"label": label, "entry": next.get(&label)});
    audit.append(AuditEntry::now(actor, "edit_entry", before, after))?;
    *lexicon = next;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edit(topic: usize, label: &str) -> LabelEdit {
        LabelEdit {
            topic_id: topic,
            need_label: label.into(),
            kind: NeedKind::Need,
            keywords: vec!["Talk".into(), "anxiety".into()],
        }
    }

    #[test]
    fn labeling_creates_entry_and_logs() {
        let mut lex = SeedLexicon::new();
        let mut log = AuditLog::in_memory();
        apply_expert_label(&mut lex, &edit(3, "Mental-health  Support"), 5, Origin::Wave(Wave::M6), "ann", &mut log)
            .unwrap();
        let e = lex.get("mental-health support").unwrap();
        assert_eq!(e.topic_ids, BTreeSet::from([3]));
        assert_eq!(e.moa_concept, None);
        assert_eq!(e.created_at, Origin::Wave(Wave::M6));
        assert!(e.keywords.contains("talk"));
        assert_eq!(log.entries().len(), 1);
        assert_eq!(log.entries()[0].after["owner"], "mental-health support");
    }

    #[test]
    fn relabel_moves_topic_between_owners() {
        let mut lex = SeedLexicon::new();
        let mut log = AuditLog::in_memory();
        apply_expert_label(&mut lex, &edit(3, "a"), 5, Origin::Seed, "x", &mut log).unwrap();
        apply_expert_label(&mut lex, &edit(3, "b"), 5, Origin::Seed, "x", &mut log).unwrap();
        assert!(lex.get("a").unwrap().topic_ids.is_empty());
        assert_eq!(lex.owner_of(3), Some("b"));
        assert_eq!(log.entries()[1].before["owner"], "a");
        lex.validate().unwrap();
    }

    #[test]
    fn rejects_bad_edits_without_mutation() {
        let mut lex = SeedLexicon::new();
        let mut log = AuditLog::in_memory();
        assert!(matches!(
            apply_expert_label(&mut lex, &edit(0, "  "), 5, Origin::Seed, "x", &mut log),
            Err(NeedsError::EmptyLabel)
        ));
        assert!(matches!(
            apply_expert_label(&mut lex, &edit(5, "a"), 5, Origin::Seed, "x", &mut log),
            Err(NeedsError::UnknownTopic { topic: 5, .. })
        ));
        apply_expert_label(&mut lex, &edit(1, "a"), 5, Origin::Seed, "x", &mut log).unwrap();
        let mut obstacle = edit(2, "a");
        obstacle.kind = NeedKind::Obstacle;
        let before = lex.clone();
        assert!(apply_expert_label(&mut lex, &obstacle, 5, Origin::Seed, "x", &mut log).is_err());
        assert_eq!(lex, before);
        assert_eq!(log.entries().len(), 1);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let text = r#"{"version":"lex/1","entries":{
            "food needs":{"keywords":["food","groceries"],"topic_ids":[0],"moa_concept":null,"kind":"need","created_at":"seed"},
            "money worries":{"keywords":["money"],"topic_ids":[1],"moa_concept":"moa:x","kind":"obstacle","created_at":"6m"}}}"#;
        let lex = SeedLexicon::from_json(text).unwrap();
        assert_eq!(lex.get("money worries").unwrap().created_at, Origin::Wave(Wave::M6));
        assert_eq!(SeedLexicon::from_json(&lex.to_json()).unwrap(), lex);
        assert!(lex.validate_against(&Ontology::sample()).is_err());

        let dup = text.replace("\"topic_ids\":[1]", "\"topic_ids\":[0]");
        assert!(SeedLexicon::from_json(&dup).is_err());
        let upper = text.replace("\"food needs\"", "\"Food needs\"");
        assert!(SeedLexicon::from_json(&upper).is_err());
    }

    #[test]
    fn resolve_moa_retains_existing() {
        let mut lex = SeedLexicon::new();
        lex.insert("a", LexiconEntry::new(NeedKind::Need, Origin::Seed)).unwrap();
        assert_eq!(lex.resolve_moa("a", "moa:one").unwrap(), "moa:one");
        assert_eq!(lex.resolve_moa("a", "moa:two").unwrap(), "moa:one");
        assert!(lex.resolve_moa("zz", "moa:one").is_err());
    }

    #[test]
    fn entry_edit_replaces_keywords_and_keeps_topics() {
        let mut lex = SeedLexicon::new();
        let mut log = AuditLog::in_memory();
        let onto = Ontology::sample();
        apply_expert_label(&mut lex, &edit(2, "food"), 5, Origin::Seed, "x", &mut log).unwrap();
        let e = EntryEdit {
            label: "Food".into(),
            kind: NeedKind::Need,
            keywords: vec!["Groceries".into(), " ".into()],
            moa_concept: Some("moa:environmental-resources".into()),
        };
        apply_entry_edit(&mut lex, &e, &onto, Origin::Seed, "x", &mut log).unwrap();
        let entry = lex.get("food").unwrap();
        assert_eq!(entry.keywords, BTreeSet::from(["groceries".to_string()]));
        assert_eq!(entry.topic_ids, BTreeSet::from([2]));
        assert_eq!(log.entries()[1].action, "edit_entry");

        let before = lex.clone();
        let bad = EntryEdit {
            moa_concept: Some("comb:capability-physical".into()),
            ..e.clone()
        };
        assert!(apply_entry_edit(&mut lex, &bad, &onto, Origin::Seed, "x", &mut log).is_err());
        let wrong_kind = EntryEdit {
            kind: NeedKind::Obstacle,
            ..e
        };
        assert!(apply_entry_edit(&mut lex, &wrong_kind, &onto, Origin::Seed, "x", &mut log).is_err());
        assert_eq!(lex, before);
    }
}
