use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use needgraph::analytics::{Dashboard, InsightReport};
use needgraph::graph::NeedGraph;
use needgraph::needs::{AuditLog, Ontology, SeedLexicon};
use needgraph::pipeline::artifacts::*;
use needgraph::pipeline::{load_artifact, Pipeline, PipelineError, Stage};

/// Analysis outputs; absent until `analyze` has run.
#[derive(Debug, Clone)]
pub struct Analytics {
    pub prevalence: PrevalenceArtifact,
    pub strata: StrataArtifact,
    pub sentiment: SentimentArtifact,
}

#[derive(Debug, Clone)]
pub struct Reports {
    pub report: InsightReport,
    pub dashboard: Dashboard,
    pub markdown: String,
}

/// Immutable view of the artifacts on disk.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub run_id: Option<String>,
    pub topics: TopicsArtifact,
    pub tags: TagsArtifact,
    pub graph: NeedGraph,
    pub analytics: Option<Analytics>,
    pub reports: Option<Reports>,
}

fn artifacts_current(pipeline: &Pipeline, stage: Stage) -> bool {
    let all_present = stage.outputs().iter().all(|o| pipeline.output_dir().join(o).is_file());
    let next = Stage::ALL.iter().copied().find(|s| *s > stage);
    all_present && next.is_none_or(|n| pipeline.verify_upstream(n).is_ok())
}

impl Snapshot {
    /// Loads the artifacts of a pipeline whose extraction is current.
    pub fn load(pipeline: &Pipeline) -> Result<Self, PipelineError> {
        pipeline.verify_upstream(Stage::Analyze)?;
        let dir = pipeline.output_dir();
        let analytics = if artifacts_current(pipeline, Stage::Analyze) {
            Some(Analytics {
                prevalence: load_artifact(dir, PREVALENCE)?,
                strata: load_artifact(dir, STRATA)?,
                sentiment: load_artifact(dir, SENTIMENT)?,
            })
        } else {
            None
        };
        let reports = if analytics.is_some() && artifacts_current(pipeline, Stage::Report) {
            let md = dir.join(REPORT_MD);
            Some(Reports {
                report: load_artifact(dir, REPORT_JSON)?,
                dashboard: load_artifact(dir, DASHBOARD)?,
                markdown: std::fs::read_to_string(&md).map_err(|e| PipelineError::Io { path: md, source: e })?,
            })
        } else {
            None
        };
        Ok(Self {
            run_id: pipeline.manifest()?.map(|m| m.run_id),
            topics: load_artifact(dir, TOPICS)?,
            tags: load_artifact(dir, TAGS)?,
            graph: pipeline.load_graph()?,
            analytics,
            reports,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Idle,
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub code: String,
    pub message: String,
}

/// Progress of the background re-extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub state: RunState,
    /// Runs started so far.
    pub job: u64,
    pub stage: Option<Stage>,
    /// Lexicon revision the latest run started from.
    pub revision: u64,
    /// A further run is queued behind the current one.
    pub pending: bool,
    pub error: Option<RunError>,
}

/// The working lexicon, ahead of the artifacts while a re-extraction is pending.
#[derive(Debug, Clone)]
pub struct Working {
    pub lexicon: SeedLexicon,
    pub revision: u64,
}

pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub ontology: Ontology,
    snapshot: RwLock<Arc<Snapshot>>,
    working: RwLock<Working>,
    /// Held by the single writer while a lexicon mutation is applied.
    pub audit: tokio::sync::Mutex<AuditLog>,
    status: RwLock<RunStatus>,
    queued: AtomicU64,
    jobs: mpsc::UnboundedSender<()>,
}

impl AppState {
    /// Loads artifacts and starts the re-extraction worker on the current runtime.
    pub fn start(pipeline: Pipeline) -> Result<Arc<Self>, PipelineError> {
        let pipeline = Arc::new(pipeline);
        let snapshot = Snapshot::load(&pipeline)?;
        let ontology = pipeline.load_ontology()?;
        let dir = pipeline.output_dir();
        let lexicon = if dir.join(LABELS).is_file() {
            pipeline.input_lexicon()?
        } else {
            let text = std::fs::read_to_string(dir.join(LEXICON)).map_err(|e| PipelineError::Io {
                path: dir.join(LEXICON),
                source: e,
            })?;
            SeedLexicon::from_json(&text)?
        };
        let audit_path = dir.join(AUDIT);
        let audit = AuditLog::open(&audit_path).map_err(|e| PipelineError::Io {
            path: audit_path,
            source: e,
        })?;
        let (tx, rx) = mpsc::unbounded_channel();
        let state = Arc::new(Self {
            pipeline,
            ontology,
            snapshot: RwLock::new(Arc::new(snapshot)),
            working: RwLock::new(Working { lexicon, revision: 0 }),
            audit: tokio::sync::Mutex::new(audit),
            status: RwLock::new(RunStatus {
                state: RunState::Idle,
                job: 0,
                stage: None,
                revision: 0,
                pending: false,
                error: None,
            }),
            queued: AtomicU64::new(0),
            jobs: tx,
        });
        tokio::spawn(worker(Arc::clone(&state), rx));
        Ok(state)
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot.read().expect("snapshot lock"))
    }

    pub fn working(&self) -> Working {
        self.working.read().expect("working lock").clone()
    }

    pub fn status(&self) -> RunStatus {
        self.status.read().expect("status lock").clone()
    }

    /// Installs a new lexicon revision. Callers hold the audit lock.
    pub fn commit_lexicon(&self, lexicon: SeedLexicon) -> Result<u64, PipelineError> {
        needgraph::pipeline::write_atomic(
            &self.pipeline.output_dir().join(LABELS),
            lexicon.to_json().as_bytes(),
        )?;
        let mut w = self.working.write().expect("working lock");
        w.lexicon = lexicon;
        w.revision += 1;
        Ok(w.revision)
    }

    /// Queues a re-extraction; queued requests coalesce into one run.
    pub fn enqueue_extraction(&self) -> RunStatus {
        self.queued.fetch_add(1, Ordering::SeqCst);
        {
            let mut s = self.status.write().expect("status lock");
            if s.state == RunState::Running {
                s.pending = true;
            } else {
                s.state = RunState::Queued;
            }
        }
        let _ = self.jobs.send(());
        self.status()
    }

    fn set_status(&self, f: impl FnOnce(&mut RunStatus)) {
        f(&mut self.status.write().expect("status lock"));
    }
}

async fn worker(state: Arc<AppState>, mut rx: mpsc::UnboundedReceiver<()>) {
    while rx.recv().await.is_some() {
        while rx.try_recv().is_ok() {}
        if state.queued.swap(0, Ordering::SeqCst) == 0 {
            continue;
        }
        let revision = state.working().revision;
        state.set_status(|s| {
            s.state = RunState::Running;
            s.job += 1;
            s.stage = None;
            s.revision = revision;
            s.pending = false;
            s.error = None;
        });

        let mut failure = None;
        for stage in Stage::ALL.into_iter().filter(|s| *s >= Stage::Extract) {
            state.set_status(|s| s.stage = Some(stage));
            let p = Arc::clone(&state.pipeline);
            match tokio::task::spawn_blocking(move || p.run(stage)).await {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => {
                    failure = Some(RunError {
                        code: e.code().into(),
                        message: e.to_string(),
                    });
                    break;
                }
                Err(e) => {
                    failure = Some(RunError {
                        code: "internal".into(),
                        message: e.to_string(),
                    });
                    break;
                }
            }
        }
        if failure.is_none() {
            let p = Arc::clone(&state.pipeline);
            match tokio::task::spawn_blocking(move || Snapshot::load(&p)).await {
                Ok(Ok(snap)) => {
                    let lexicon = std::fs::read_to_string(state.pipeline.output_dir().join(LEXICON))
                        .ok()
                        .and_then(|t| SeedLexicon::from_json(&t).ok());
                    *state.snapshot.write().expect("snapshot lock") = Arc::new(snap);
                    let mut w = state.working.write().expect("working lock");
                    if let (true, Some(lex)) = (w.revision == revision, lexicon) {
                        w.lexicon = lex;
                    }
                }
                Ok(Err(e)) => {
                    failure = Some(RunError {
                        code: e.code().into(),
                        message: e.to_string(),
                    })
                }
                Err(e) => {
                    failure = Some(RunError {
                        code: "internal".into(),
                        message: e.to_string(),
                    })
                }
            }
        }
        if let Some(e) = &failure {
            log::error!("re-extraction failed: {}", e.message);
        }
        state.set_status(|s| {
            s.stage = None;
            s.state = if failure.is_some() { RunState::Failed } else { RunState::Succeeded };
            s.error = failure;
            if s.pending {
                s.state = RunState::Queued;
            }
        });
    }
}
