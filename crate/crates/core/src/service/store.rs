//! Append-only JSON-lines event files, one per session.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::session::{Session, SessionEvent};
use super::ServiceError;

#[derive(Debug, Clone)]
pub struct EventStore {
    dir: Option<PathBuf>,
}

impl EventStore {
    /// Persists under `dir`, creating it if needed.
    pub fn open(dir: &Path) -> crate::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(EventStore { dir: Some(dir.to_path_buf()) })
    }

    /// Keeps nothing on disk.
    pub fn in_memory() -> Self {
        EventStore { dir: None }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn path_for(&self, session_id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{session_id}.events.jsonl")))
    }

    pub fn append(&self, session_id: &str, events: &[SessionEvent]) -> Result<(), ServiceError> {
        let Some(path) = self.path_for(session_id) else {
            return Ok(());
        };
        let mut buf = Vec::new();
        for ev in events {
            serde_json::to_writer(&mut buf, ev).map_err(|e| ServiceError::Internal(e.to_string()))?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?;
        f.write_all(&buf)
            .and_then(|_| f.flush())
            .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))
    }

    /// Reads every persisted session and replays it.
    pub fn load_all(&self) -> Result<Vec<(Session, Vec<SessionEvent>)>, ServiceError> {
        let Some(dir) = &self.dir else {
            return Ok(Vec::new());
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| ServiceError::Internal(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".events.jsonl"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let events = read_events(p)?;
                let session = Session::replay(&events)
                    .map_err(|e| ServiceError::Internal(format!("{}: {e}", p.display())))?;
                Ok((session, events))
            })
            .collect()
    }
}

pub fn read_events(path: &Path) -> Result<Vec<SessionEvent>, ServiceError> {
    let io = |e: std::io::Error| ServiceError::Internal(format!("{}: {e}", path.display()));
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| {
            ServiceError::Internal(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(events)
}
