use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{prevalence, AnalyticsError, CountTable, Dimension, SentimentClass, SentimentSummary, StratifiedPrevalence};
use crate::graph::{node_id, NeedGraph, NodeLayer, Relation};
use crate::needs::llm::{request_conforming, LlmClient, LlmOutcome, LlmRequest, LlmTask};
use crate::wave::Wave;

pub const DEFAULT_DISPARITY_THRESHOLD: f64 = 1.25;
pub const DASHBOARD_VERSION: &str = "dash/1";
pub const REPORT_VERSION: &str = "report/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub disparity_threshold: f64,
    pub top_n: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            disparity_threshold: DEFAULT_DISPARITY_THRESHOLD,
            top_n: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNeed {
    pub need: String,
    pub p: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSummary {
    pub wave: Wave,
    pub scored: usize,
    pub unmapped: usize,
    pub top_needs: Vec<TopNeed>,
    pub mean_valence: Option<f64>,
}

/// A need whose prevalence differs across subgroups by at least the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disparity {
    pub need: String,
    pub dimension: Dimension,
    pub wave: Wave,
    pub high_group: String,
    pub low_group: String,
    pub p_high: f64,
    pub p_low: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarrativeSource {
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Narrative {
    pub needs: String,
    pub causes: String,
    pub solutions: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub narrative_source: Option<NarrativeSource>,
    /// An LLM was configured but its narrative was unusable.
    pub llm_fallback: bool,
    /// Documents whose LLM need scoring degraded to keyword overlap.
    pub degraded_scores: usize,
    /// `dimension@wave` to subgroups with no scored document.
    pub omitted_subgroups: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightReport {
    pub version: String,
    pub waves: Vec<WaveSummary>,
    pub disparities: Vec<Disparity>,
    pub sentiment: Vec<SentimentSummary>,
    /// Computed facts handed to the narrative writer.
    pub facts: Vec<String>,
    pub narrative: Narrative,
    pub metadata: ReportMetadata,
}

pub struct ReportInputs<'a> {
    pub counts: &'a CountTable,
    pub strata: &'a [StratifiedPrevalence],
    pub sentiment: &'a [SentimentSummary],
    pub graph: &'a NeedGraph,
    pub degraded_scores: usize,
}

fn wave_summaries(inputs: &ReportInputs, top_n: usize) -> Vec<WaveSummary> {
    let waves: BTreeSet<Wave> = inputs
        .counts
        .counts
        .iter()
        .map(|c| c.wave)
        .chain(inputs.counts.unmapped.keys().copied())
        .collect();
    waves
        .into_iter()
        .map(|wave| {
            let cells: BTreeMap<&str, usize> = inputs
                .counts
                .counts
                .iter()
                .filter(|c| c.wave == wave)
                .map(|c| (c.need.as_str(), c.count))
                .collect();
            let mut top: Vec<TopNeed> = prevalence(&inputs.counts.counts, wave)
                .map(|p| {
                    p.into_iter()
                        .filter(|(_, v)| *v > 0.0)
                        .map(|(need, p)| TopNeed {
                            count: cells[need.as_str()],
                            need,
                            p,
                        })
                        .collect()
                })
                .unwrap_or_default();
            top.sort_by(|a, b| b.p.total_cmp(&a.p).then_with(|| a.need.cmp(&b.need)));
            top.truncate(top_n);
            WaveSummary {
                wave,
                scored: cells.values().sum(),
                unmapped: inputs.counts.unmapped.get(&wave).copied().unwrap_or(0),
                top_needs: top,
                mean_valence: inputs.sentiment.iter().find(|s| s.wave == wave).map(|s| s.mean_valence),
            }
        })
        .collect()
}

/// For each need in each stratification, the max/min prevalence ratio over
/// subgroups with non-zero prevalence, kept when it reaches `threshold`.
pub fn find_disparities(strata: &[StratifiedPrevalence], threshold: f64) -> Vec<Disparity> {
    let mut out = Vec::new();
    for s in strata {
        let mut by_need: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
        for c in &s.cells {
            if c.p > 0.0 {
                by_need.entry(&c.need).or_default().push((&c.subgroup, c.p));
            }
        }
        for (need, groups) in by_need {
            if groups.len() < 2 {
                continue;
            }
            let hi = groups
                .iter()
                .fold(groups[0], |acc, &g| if g.1 > acc.1 { g } else { acc });
            let lo = groups
                .iter()
                .fold(groups[0], |acc, &g| if g.1 < acc.1 { g } else { acc });
            let ratio = hi.1 / lo.1;
            if ratio >= threshold {
                out.push(Disparity {
                    need: need.to_string(),
                    dimension: s.dimension,
                    wave: s.wave,
                    high_group: hi.0.to_string(),
                    low_group: lo.0.to_string(),
                    p_high: hi.1,
                    p_low: lo.1,
                    ratio,
                });
            }
        }
    }
    out.sort_by(|a, b| (a.wave, a.dimension, &a.need).cmp(&(b.wave, b.dimension, &b.need)));
    out
}

fn percent(p: f64) -> String {
    format!("{:.1}%", p * 100.0)
}

struct NeedLinks {
    bcio: Vec<String>,
    comb: BTreeSet<String>,
}

fn links(graph: &NeedGraph, need: &str) -> NeedLinks {
    let id = node_id(NodeLayer::Need, need);
    let mut bcio = Vec::new();
    let mut comb = BTreeSet::new();
    for e in graph.edges().filter(|e| e.src == id) {
        let Some(dst) = graph.node(&e.dst) else { continue };
        if dst.layer == NodeLayer::BcioClass {
            bcio.push(dst.label.clone());
            for up in graph.edges().filter(|u| u.src == dst.node_id && u.relation == Relation::BelongsTo) {
                if let Some(c) = graph.node(&up.dst) {
                    comb.insert(c.label.clone());
                }
            }
        }
    }
    NeedLinks { bcio, comb }
}

fn facts(waves: &[WaveSummary], disparities: &[Disparity], graph: &NeedGraph) -> Vec<String> {
    let mut out = Vec::new();
    for w in waves {
        out.push(format!("wave {}: {} documents scored, {} unmapped", w.wave, w.scored, w.unmapped));
        for t in &w.top_needs {
            out.push(format!("wave {}: need `{}` prevalence {:.4} ({} documents)", w.wave, t.need, t.p, t.count));
        }
        if let Some(v) = w.mean_valence {
            out.push(format!("wave {}: mean valence {v:.4}", w.wave));
        }
    }
    for d in disparities {
        out.push(format!(
            "wave {}: need `{}` by {}: {} {:.4} vs {} {:.4}, ratio {:.2}",
            d.wave, d.need, d.dimension, d.high_group, d.p_high, d.low_group, d.p_low, d.ratio
        ));
    }
    let tops: BTreeSet<&str> = waves.iter().flat_map(|w| w.top_needs.iter().map(|t| t.need.as_str())).collect();
    for need in tops {
        let l = links(graph, need);
        for b in &l.bcio {
            out.push(format!("graph: need `{need}` is_a intervention class `{b}`"));
        }
        for c in &l.comb {
            out.push(format!("graph: need `{need}` relates to COM-B component `{c}`"));
        }
    }
    out
}

fn template(waves: &[WaveSummary], disparities: &[Disparity], sentiment: &[SentimentSummary], graph: &NeedGraph) -> Narrative {
    let mut needs = String::new();
    for w in waves {
        if w.top_needs.is_empty() {
            let _ = write!(needs, "At {}, no document was assigned a need. ", w.wave);
        } else {
            let list: Vec<String> = w.top_needs.iter().map(|t| format!("{} ({})", t.need, percent(t.p))).collect();
            let _ = write!(needs, "At {}, the leading needs were {}. ", w.wave, list.join(", "));
        }
    }
    if let (Some(first), Some(last)) = (sentiment.first(), sentiment.last()) {
        if first.wave != last.wave {
            let _ = write!(
                needs,
                "Mean valence moved from {:.2} at {} to {:.2} at {}.",
                first.mean_valence, first.wave, last.mean_valence, last.wave
            );
        } else {
            let neg = first.class_counts.get(&SentimentClass::Negative).copied().unwrap_or(0);
            let _ = write!(needs, "Mean valence was {:.2} with {neg} negative documents.", first.mean_valence);
        }
    }

    let tops: BTreeSet<&str> = waves.iter().flat_map(|w| w.top_needs.iter().map(|t| t.need.as_str())).collect();
    let mut causes = String::new();
    let mut solutions = String::new();
    for need in &tops {
        let l = links(graph, need);
        if l.comb.is_empty() {
            let _ = write!(causes, "{need} has no behavioural alignment yet. ");
        } else {
            let comb: Vec<&str> = l.comb.iter().map(String::as_str).collect();
            let _ = write!(causes, "{need} is linked to {}. ", comb.join(", "));
        }
        if !l.bcio.is_empty() {
            let _ = write!(solutions, "For {need}, candidate intervention classes are {}. ", l.bcio.join(", "));
        }
    }
    for d in disparities {
        let _ = write!(
            causes,
            "At {}, {} was reported {:.2} times as often in {} ({}) as in {} ({}). ",
            d.wave,
            d.need,
            d.ratio,
            d.high_group,
            d.dimension,
            d.low_group,
            d.dimension
        );
    }
    if solutions.is_empty() {
        solutions.push_str("No intervention classes are linked to the current leading needs.");
    }
    Narrative {
        needs: needs.trim_end().to_string(),
        causes: causes.trim_end().to_string(),
        solutions: solutions.trim_end().to_string(),
    }
}

fn parse_narrative(r: &crate::needs::llm::LlmResponse) -> Option<Narrative> {
    let v = r.structured_or_content()?;
    let field = |k: &str| {
        v.get(k)
            .and_then(|x| x.as_str())
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
    };
    Some(Narrative {
        needs: field("needs")?,
        causes: field("causes")?,
        solutions: field("solutions")?,
    })
}

/// Summarizes analyzed waves. Without an LLM the narrative comes from a
/// deterministic template and the report is a pure function of its inputs.
pub fn build_report(
    inputs: &ReportInputs,
    config: &ReportConfig,
    llm: Option<&dyn LlmClient>,
) -> Result<InsightReport, AnalyticsError> {
    let waves = wave_summaries(inputs, config.top_n);
    if waves.is_empty() {
        return Err(AnalyticsError::NoWaves);
    }
    let disparities = find_disparities(inputs.strata, config.disparity_threshold);
    let facts = facts(&waves, &disparities, inputs.graph);
    let mut metadata = ReportMetadata {
        degraded_scores: inputs.degraded_scores,
        omitted_subgroups: inputs
            .strata
            .iter()
            .filter(|s| !s.omitted_subgroups.is_empty())
            .map(|s| (format!("{}@{}", s.dimension, s.wave), s.omitted_subgroups.clone()))
            .collect(),
        ..Default::default()
    };

    let mut narrative = None;
    if let Some(client) = llm {
        let req = LlmRequest {
            task: LlmTask::WriteReport,
            context: facts.join("\n"),
            payload: "Write three short sections from the facts only: the needs identified, their likely \
                      underlying causes, and potential solutions. Do not introduce numbers that are not in the facts."
                .to_string(),
            schema: json!({
                "type": "object",
                "properties": {
                    "needs": {"type": "string"},
                    "causes": {"type": "string"},
                    "solutions": {"type": "string"}
                },
                "required": ["needs", "causes", "solutions"]
            }),
        };
        match request_conforming(client, &req, parse_narrative) {
            LlmOutcome::Accepted(n) => {
                metadata.narrative_source = Some(NarrativeSource::Llm);
                narrative = Some(n);
            }
            LlmOutcome::None | LlmOutcome::Unavailable(_) => metadata.llm_fallback = true,
        }
    }
    let narrative = narrative.unwrap_or_else(|| {
        metadata.narrative_source = Some(NarrativeSource::Template);
        template(&waves, &disparities, inputs.sentiment, inputs.graph)
    });

    Ok(InsightReport {
        version: REPORT_VERSION.to_string(),
        waves,
        disparities,
        sentiment: inputs.sentiment.to_vec(),
        facts,
        narrative,
        metadata,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalencePoint {
    pub need: String,
    pub wave: Wave,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumPoint {
    pub need: String,
    pub dim: Dimension,
    pub subgroup: String,
    pub wave: Wave,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentPointSummary {
    pub wave: Wave,
    pub mean_valence: f64,
    pub class_counts: BTreeMap<SentimentClass, usize>,
}

/// Dataset consumed by the expert console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub version: String,
    pub waves: Vec<Wave>,
    pub prevalence: Vec<PrevalencePoint>,
    pub strata: Vec<StratumPoint>,
    pub sentiment: Vec<SentimentPointSummary>,
    pub disparities: Vec<Disparity>,
}

pub fn dashboard(inputs: &ReportInputs, report: &InsightReport) -> Dashboard {
    let waves: Vec<Wave> = report.waves.iter().map(|w| w.wave).collect();
    let mut prevalence_points = Vec::new();
    for &w in &waves {
        if let Ok(p) = prevalence(&inputs.counts.counts, w) {
            prevalence_points.extend(p.into_iter().map(|(need, p)| PrevalencePoint { need, wave: w, p }));
        }
    }
    let strata = inputs
        .strata
        .iter()
        .flat_map(|s| {
            s.cells.iter().map(move |c| StratumPoint {
                need: c.need.clone(),
                dim: s.dimension,
                subgroup: c.subgroup.clone(),
                wave: s.wave,
                p: c.p,
            })
        })
        .collect();
    Dashboard {
        version: DASHBOARD_VERSION.to_string(),
        waves,
        prevalence: prevalence_points,
        strata,
        sentiment: inputs
            .sentiment
            .iter()
            .map(|s| SentimentPointSummary {
                wave: s.wave,
                mean_valence: s.mean_valence,
                class_counts: s.class_counts.clone(),
            })
            .collect(),
        disparities: report.disparities.clone(),
    }
}

/// Markdown report led by a fenced JSON block holding the full report data.
pub fn render_markdown(report: &InsightReport) -> String {
    let mut out = String::new();
    out.push_str("```json\n");
    out.push_str(&serde_json::to_string_pretty(report).expect("report serializes"));
    out.push_str("\n```\n\n# Need report\n\n");
    for w in &report.waves {
        let _ = writeln!(out, "## Wave {}\n", w.wave);
        let _ = writeln!(out, "{} documents scored, {} unmapped.\n", w.scored, w.unmapped);
        if !w.top_needs.is_empty() {
            out.push_str("| need | prevalence | documents |\n|---|---|---|\n");
            for t in &w.top_needs {
                let _ = writeln!(out, "| {} | {} | {} |", t.need, percent(t.p), t.count);
            }
            out.push('\n');
        }
    }
    if !report.disparities.is_empty() {
        out.push_str("## Subgroup disparities\n\n| wave | need | dimension | higher | lower | ratio |\n|---|---|---|---|---|---|\n");
        for d in &report.disparities {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {:.2} |",
                d.wave, d.need, d.dimension, d.high_group, d.low_group, d.ratio
            );
        }
        out.push('\n');
    }
    let _ = write!(
        out,
        "## Needs\n\n{}\n\n## Causes\n\n{}\n\n## Solutions\n\n{}\n",
        report.narrative.needs, report.narrative.causes, report.narrative.solutions
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{NeedCount, StratumCell};
    use crate::needs::llm::{LlmResponse, ScriptedLlm};
    use crate::needs::Ontology;

    fn table(items: &[(&str, Wave, usize)]) -> CountTable {
        CountTable {
            counts: items
                .iter()
                .map(|(n, w, c)| NeedCount {
                    need: n.to_string(),
                    wave: *w,
                    count: *c,
                })
                .collect(),
            unmapped: BTreeMap::new(),
        }
    }

    fn gender_strata(women: usize, men: usize, denom: usize) -> StratifiedPrevalence {
        let cell = |sub: &str, c: usize| StratumCell {
            need: "mental-health support".into(),
            subgroup: sub.into(),
            count: c,
            p: c as f64 / denom as f64,
        };
        StratifiedPrevalence {
            dimension: Dimension::Gender,
            wave: Wave::M6,
            cells: vec![cell("female", women), cell("male", men)],
            omitted_subgroups: vec!["other_or_unknown".into()],
        }
    }

    #[test]
    fn single_need_single_wave() {
        let graph = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        let counts = table(&[("food needs", Wave::M3, 4)]);
        let inputs = ReportInputs {
            counts: &counts,
            strata: &[],
            sentiment: &[],
            graph: &graph,
            degraded_scores: 0,
        };
        let r = build_report(&inputs, &ReportConfig::default(), None).unwrap();
        assert_eq!(r.waves[0].top_needs[0].need, "food needs");
        assert_eq!(r.waves[0].top_needs[0].p, 1.0);
        assert!(r.narrative.needs.contains("food needs (100.0%)"));
        assert_eq!(r.metadata.narrative_source, Some(NarrativeSource::Template));
        assert_eq!(build_report(&inputs, &ReportConfig::default(), None).unwrap(), r);
        let md = render_markdown(&r);
        assert!(md.starts_with("```json\n{"));
    }

    #[test]
    fn disparity_detected_at_ratio() {
        let graph = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        let counts = table(&[("mental-health support", Wave::M6, 24)]);
        let strata = [gender_strata(14, 10, 40)];
        let inputs = ReportInputs {
            counts: &counts,
            strata: &strata,
            sentiment: &[],
            graph: &graph,
            degraded_scores: 0,
        };
        let r = build_report(&inputs, &ReportConfig::default(), None).unwrap();
        assert_eq!(r.disparities.len(), 1);
        let d = &r.disparities[0];
        assert_eq!((d.need.as_str(), d.dimension, d.high_group.as_str()), ("mental-health support", Dimension::Gender, "female"));
        assert!((d.ratio - 1.4).abs() < 1e-12);
        assert_eq!(r.metadata.omitted_subgroups["gender@6m"], vec!["other_or_unknown".to_string()]);

        let strict = ReportConfig {
            disparity_threshold: 1.5,
            ..Default::default()
        };
        assert!(build_report(&inputs, &strict, None).unwrap().disparities.is_empty());

        let dash = dashboard(&inputs, &r);
        assert_eq!(dash.version, "dash/1");
        assert_eq!(dash.strata.len(), 2);
        let v = serde_json::to_value(&dash).unwrap();
        assert_eq!(v["strata"][0]["dim"], "gender");
    }

    #[test]
    fn llm_narrative_and_fallback() {
        let graph = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        let counts = table(&[("food needs", Wave::M3, 4)]);
        let inputs = ReportInputs {
            counts: &counts,
            strata: &[],
            sentiment: &[],
            graph: &graph,
            degraded_scores: 2,
        };
        let llm = ScriptedLlm::new([Ok(LlmResponse::json(json!({"needs": "n", "causes": "c", "solutions": "s"})))]);
        let r = build_report(&inputs, &ReportConfig::default(), Some(&llm)).unwrap();
        assert_eq!(r.narrative.causes, "c");
        assert!(llm.requests()[0].context.contains("prevalence 1.0000"));

        let llm = ScriptedLlm::new([Ok(LlmResponse::text("{not json")), Ok(LlmResponse::text("{\"needs\": 1}"))]);
        let r = build_report(&inputs, &ReportConfig::default(), Some(&llm)).unwrap();
        assert!(r.metadata.llm_fallback);
        assert_eq!(r.metadata.narrative_source, Some(NarrativeSource::Template));
        assert_eq!(r.metadata.degraded_scores, 2);
    }

    #[test]
    fn no_waves_is_an_error() {
        let graph = NeedGraph::init_scaffold(&Ontology::sample()).unwrap();
        let counts = CountTable::default();
        let inputs = ReportInputs {
            counts: &counts,
            strata: &[],
            sentiment: &[],
            graph: &graph,
            degraded_scores: 0,
        };
        assert!(build_report(&inputs, &ReportConfig::default(), None).is_err());
    }
}
