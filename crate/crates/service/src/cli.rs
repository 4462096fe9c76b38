use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use needgraph::pipeline::demo::write_demo;
use needgraph::pipeline::{Pipeline, PipelineConfig, PipelineError, Stage};

use crate::ServeError;

#[derive(Debug, Parser)]
#[command(name = "needgraph", version, about = "Need analytics over longitudinal free-text feedback")]
pub struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "needgraph.toml")]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Disables the LLM client; every LLM step uses its offline fallback.
    #[arg(long, global = true)]
    pub no_llm: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean and link the registry and feedback streams.
    Ingest,
    /// Fit the topic model.
    Train,
    /// Tag documents wave by wave and grow the need graph.
    Extract,
    /// Score needs, prevalence, strata and sentiment.
    Analyze,
    /// Write the insight report, dashboard data and graph rendering.
    Report,
    /// Serve the HTTP API.
    Serve,
    /// Write the bundled demo dataset and run every stage on it.
    Demo {
        /// Directory for demo inputs; artifacts go to `<dir>/out`.
        #[arg(long, default_value = "needgraph-demo")]
        dir: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Serve(#[from] ServeError),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Pipeline(e) => e.code(),
            CliError::Serve(e) => e.code(),
        }
    }

    /// One-line machine-readable form.
    pub fn to_json_line(&self) -> String {
        json!({"error": {"code": self.code(), "message": self.to_string()}}).to_string()
    }
}

impl Cli {
    fn pipeline(&self, config: PathBuf) -> Result<Pipeline, PipelineError> {
        let mut cfg = PipelineConfig::load(config)?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if self.no_llm {
            cfg = cfg.without_llm();
        }
        Ok(Pipeline::new(cfg))
    }

    /// Runs a batch command and returns its summary; `serve` is handled by the binary.
    pub fn run_batch(&self) -> Result<Value, CliError> {
        let stage = match &self.command {
            Command::Ingest => Stage::Ingest,
            Command::Train => Stage::Train,
            Command::Extract => Stage::Extract,
            Command::Analyze => Stage::Analyze,
            Command::Report => Stage::Report,
            Command::Demo { dir } => {
                let cfg = write_demo(dir)?;
                let p = self.pipeline(cfg)?;
                let stages = p.run_all()?;
                let manifest = p.manifest()?;
                return Ok(json!({
                    "output_dir": p.output_dir(),
                    "run_id": manifest.map(|m| m.run_id),
                    "stages": stages,
                }));
            }
            Command::Serve => unreachable!("serve is not a batch command"),
        };
        let p = self.pipeline(self.config.clone())?;
        let summary = p.run(stage)?;
        Ok(serde_json::to_value(summary).expect("summary serializes"))
    }

    pub async fn serve(&self) -> Result<(), CliError> {
        let p = self.pipeline(self.config.clone())?;
        crate::serve(p).await?;
        Ok(())
    }
}
