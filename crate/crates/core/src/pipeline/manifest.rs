use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::digest::sha256_hex;

pub const MANIFEST_VERSION: &str = "manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// What one stage consumed and produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub duration_ms: u64,
    /// Input name to SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file name to SHA-256 digest.
    pub outputs: BTreeMap<String, String>,
}

/// Record of the latest run of every stage in an output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    /// Digests of external input files.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        let mut m = Self {
            version: MANIFEST_VERSION.into(),
            run_id: String::new(),
            config_hash: config_hash.into(),
            seed,
            inputs: BTreeMap::new(),
            stages: BTreeMap::new(),
        };
        m.run_id = m.compute_run_id();
        m
    }

    /// Loads the manifest of `output_dir`, or `None` if there is none yet.
    pub fn load(output_dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = output_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| PipelineError::corrupt(&path, e))?;
        if m.version != MANIFEST_VERSION {
            return Err(PipelineError::corrupt(&path, format!("unsupported version `{}`", m.version)));
        }
        Ok(Some(m))
    }

    pub fn save(&self, output_dir: &Path) -> Result<(), PipelineError> {
        super::write_json(&output_dir.join(MANIFEST_FILE), self)
    }

    /// Identifies a run by its configuration and input digests.
    pub fn compute_run_id(&self) -> String {
        let mut material = self.config_hash.clone();
        for (name, digest) in &self.inputs {
            material.push('\n');
            material.push_str(name);
            material.push('=');
            material.push_str(digest);
        }
        sha256_hex(material)[..16].to_string()
    }

    pub fn record(
        &mut self,
        stage: &str,
        record: StageRecord,
        external_inputs: &BTreeMap<String, String>,
        config_hash: &str,
        seed: u64,
    ) {
        self.inputs.extend(external_inputs.iter().map(|(k, v)| (k.clone(), v.clone())));
        self.stages.insert(stage.to_string(), record);
        self.config_hash = config_hash.to_string();
        self.seed = seed;
        self.run_id = self.compute_run_id();
    }
}
