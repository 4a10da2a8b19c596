//! One JSON state file per session, replaced atomically.
//!
//! A save writes `.<id>.json.tmp`, syncs it, and renames it over
//! `<id>.json`. A crash at any point leaves either the old or the new file,
//! never a mix; stray temp files are ignored on load.

use crate::config::SessionSpec;
use crate::error::{ServiceError, ServiceResult};
use seqdesign_core::smc::SessionState;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const RECORD_FORMAT: &str = "seqdesign-session v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub format: String,
    pub id: String,
    pub created_ms: u64,
    pub updated_ms: u64,
    /// Resolved spec; rebuilding the model needs nothing else.
    pub spec: SessionSpec,
    pub state: SessionState,
}

/// Called after the temp file is written and before it replaces the live
/// file; an error aborts the save. Used to simulate crashes.
pub type FaultHook = Arc<dyn Fn(&Path) -> std::io::Result<()> + Send + Sync>;

#[derive(Clone)]
pub struct SessionStore {
    dir: PathBuf,
    fault: Option<FaultHook>,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore").field("dir", &self.dir).finish()
    }
}

/// Session ids double as file names.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionStore {
    /// Open (creating if needed) and check that the directory is writable.
    pub fn open(dir: impl Into<PathBuf>) -> ServiceResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| ServiceError::Storage(format!("cannot create state dir {}: {e}", dir.display())))?;
        let probe = dir.join(".write-probe");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| ServiceError::Storage(format!("state dir {} is not writable: {e}", dir.display())))?;
        Ok(SessionStore { dir, fault: None })
    }

    pub fn with_fault(mut self, hook: FaultHook) -> Self {
        self.fault = Some(hook);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn encode(record: &SessionRecord) -> ServiceResult<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(record).map_err(|e| ServiceError::Storage(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn decode(bytes: &[u8]) -> ServiceResult<SessionRecord> {
        let record: SessionRecord =
            serde_json::from_slice(bytes).map_err(|e| ServiceError::Storage(format!("corrupt session file: {e}")))?;
        if record.format != RECORD_FORMAT {
            return Err(ServiceError::Storage(format!(
                "unsupported session format `{}`",
                record.format
            )));
        }
        Ok(record)
    }

    pub fn save(&self, record: &SessionRecord) -> ServiceResult<()> {
        if !valid_id(&record.id) {
            return Err(ServiceError::BadRequest(format!("invalid session id `{}`", record.id)));
        }
        let bytes = Self::encode(record)?;
        let tmp = self.dir.join(format!(".{}.json.tmp", record.id));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        if let Some(hook) = &self.fault {
            hook(&tmp)?;
        }
        fs::rename(&tmp, self.path(&record.id))?;
        // Persist the rename itself; not every platform can open a directory.
        if let Ok(d) = fs::File::open(&self.dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    pub fn load(&self, id: &str) -> ServiceResult<SessionRecord> {
        if !valid_id(id) {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        match fs::read(self.path(id)) {
            Ok(bytes) => Self::decode(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ServiceError::NotFound(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_id(id) && self.path(id).is_file()
    }

    /// Ids of stored sessions, sorted.
    pub fn list(&self) -> ServiceResult<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let id = name.strip_suffix(".json")?;
                valid_id(id).then(|| id.to_string())
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}
