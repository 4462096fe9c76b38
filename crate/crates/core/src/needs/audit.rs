use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One reviewable mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub time: String,
    pub actor: String,
    pub action: String,
    pub before: Value,
    pub after: Value,
}

impl AuditEntry {
    pub fn now(actor: &str, action: &str, before: Value, after: Value) -> Self {
        Self {
            time: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            actor: actor.to_string(),
            action: action.to_string(),
            before,
            after,
        }
    }
}

/// Append-only JSON-lines log. Without a backing file entries are kept in memory only.
#[derive(Debug, Default)]
pub struct AuditLog {
    path: Option<PathBuf>,
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a log file, loading the entries already in it.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry = serde_json::from_str(&line).map_err(|e| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
                })?;
                entries.push(entry);
            }
        }
        Ok(Self {
            path: Some(path),
            entries,
        })
    }

    pub fn append(&mut self, entry: AuditEntry) -> io::Result<()> {
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&entry).map_err(io::Error::other)?;
            line.push('\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}
