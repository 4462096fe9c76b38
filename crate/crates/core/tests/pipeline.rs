use std::collections::BTreeMap;
use std::path::Path;

use needgraph::pipeline::artifacts::*;
use needgraph::pipeline::demo::write_demo;
use needgraph::pipeline::{load_artifact, Pipeline, PipelineConfig, PipelineError, Stage};

fn demo_pipeline(dir: &Path) -> Pipeline {
    let cfg = PipelineConfig::load(write_demo(dir).unwrap()).unwrap().without_llm();
    Pipeline::new(cfg)
}

fn digests(p: &Pipeline) -> BTreeMap<String, String> {
    let m = p.manifest().unwrap().unwrap();
    m.stages.values().flat_map(|s| s.outputs.clone()).collect()
}

#[test]
fn demo_runs_end_to_end_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = demo_pipeline(a.path());
    let pb = demo_pipeline(b.path());
    pa.run_all().unwrap();
    pb.run_all().unwrap();

    for stage in Stage::ALL {
        for name in stage.outputs() {
            assert!(pa.output_dir().join(name).is_file(), "{name} missing");
        }
    }
    let da = digests(&pa);
    assert_eq!(da.len(), 17);
    assert_eq!(da, digests(&pb));
    assert_eq!(pa.manifest().unwrap().unwrap().run_id, pb.manifest().unwrap().unwrap().run_id);

    let topics: TopicsArtifact = load_artifact(pa.output_dir(), TOPICS).unwrap();
    assert_eq!(topics.num_topics, 5);
    assert!(topics.topics.iter().all(|t| t.top_terms.len() == 10 && t.representative_docs.len() == 5));

    let prev: PrevalenceArtifact = load_artifact(pa.output_dir(), PREVALENCE).unwrap();
    assert_eq!(prev.by_wave.len(), 4);
    for p in prev.by_wave.values() {
        assert!((p.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let report = std::fs::read_to_string(pa.output_dir().join(REPORT_MD)).unwrap();
    assert!(report.starts_with("```json\n"));
}

#[test]
fn stages_refuse_missing_or_stale_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = demo_pipeline(dir.path());
    let err = p.analyze().unwrap_err();
    assert!(matches!(err, PipelineError::MissingArtifacts { stage: Stage::Ingest }));

    p.ingest().unwrap();
    p.train().unwrap();
    let err = p.analyze().unwrap_err();
    assert!(err.to_string().starts_with("needs extraction artifacts missing"), "{err}");

    p.extract().unwrap();
    p.analyze().unwrap();

    // Retraining with another seed invalidates extraction.
    let reseeded = Pipeline::new(p.config().clone().with_seed(7));
    reseeded.train().unwrap();
    let err = reseeded.analyze().unwrap_err();
    assert!(
        matches!(&err, PipelineError::StaleArtifacts { stage: Stage::Extract, .. }),
        "{err}"
    );

    // A hand-edited artifact is detected.
    reseeded.extract().unwrap();
    std::fs::write(reseeded.output_dir().join(GRAPH), "{}").unwrap();
    let err = reseeded.analyze().unwrap_err();
    assert!(err.to_string().contains("`graph.json` was modified"), "{err}");
}

#[test]
fn expert_labels_take_precedence_over_seed_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    let p = demo_pipeline(dir.path());
    p.run_all().unwrap();

    let mut lex = p.input_lexicon().unwrap();
    let mut audit = needgraph::needs::AuditLog::in_memory();
    let edit = needgraph::needs::LabelEdit {
        topic_id: 2,
        need_label: "Housing Support".into(),
        kind: needgraph::needs::NeedKind::Need,
        keywords: vec!["rent".into()],
    };
    needgraph::needs::apply_expert_label(&mut lex, &edit, 5, needgraph::needs::Origin::Seed, "t", &mut audit)
        .unwrap();
    needgraph::pipeline::write_atomic(&p.output_dir().join(LABELS), lex.to_json().as_bytes()).unwrap();

    let err = p.analyze().unwrap_err();
    assert!(matches!(err, PipelineError::StaleArtifacts { stage: Stage::Extract, .. }), "{err}");
    p.run_from(Stage::Extract).unwrap();
    let out = needgraph::needs::SeedLexicon::from_json(
        &std::fs::read_to_string(p.output_dir().join(LEXICON)).unwrap(),
    )
    .unwrap();
    assert_eq!(out.owner_of(2), Some("housing support"));
}

