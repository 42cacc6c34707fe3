//! Mapping sessions: the reviewable record of one pipeline run, human
//! corrections, finalization, and on-disk storage.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detect::{ColumnPartition, KeyVerdict};
use crate::filters::FilterConfig;
use crate::prompt::PromptBudget;
use crate::schema::{MappingResult, ObjectType, Provenance, SourceColumn, UNMAPPED};

pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    PendingReview,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub column: String,
    /// Attribute before this correction; `None` when it was unmapped.
    #[serde(default)]
    pub previous_attribute: Option<String>,
    pub corrected_attribute: String,
    pub timestamp: DateTime<Utc>,
}

/// Prompt lengths for one column, with the compressed and the uncompressed
/// choice sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub column: String,
    pub object_type: String,
    pub filtered: PromptBudget,
    pub unfiltered: PromptBudget,
    pub ner_bypassed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSession {
    pub format_version: u32,
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    /// SHA-256 of the input columns as JSON.
    pub fingerprint: String,
    pub status: SessionStatus,
    pub filters: FilterConfig,
    pub columns: Vec<SourceColumn>,
    pub partition: ColumnPartition,
    /// Current mapping state, one entry per input column in input order.
    pub mappings: Vec<MappingResult>,
    /// What the pipeline produced before any correction.
    pub machine_mappings: Vec<MappingResult>,
    pub keys: Vec<KeyVerdict>,
    pub corrections: Vec<Correction>,
    pub ledger: Vec<LedgerEntry>,
    pub errors: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("session has no column `{0}`")]
    UnknownColumn(String),
    #[error("`{attribute}` is not an attribute of object type `{object_type}`")]
    UnknownAttribute { attribute: String, object_type: String },
    #[error("session is finalized")]
    Finalized,
    #[error("session is not finalized")]
    NotFinalized,
}

pub fn fingerprint(columns: &[SourceColumn]) -> String {
    let json = serde_json::to_vec(columns).expect("columns serialize");
    hex::encode(Sha256::digest(&json))
}

impl MappingSession {
    pub fn new(columns: Vec<SourceColumn>, filters: FilterConfig) -> Self {
        let now = Utc::now();
        Self {
            format_version: SESSION_FORMAT_VERSION,
            id: uuid::Uuid::new_v4().to_string(),
            created_at: now,
            updated_at: now,
            fingerprint: fingerprint(&columns),
            status: SessionStatus::PendingReview,
            filters,
            columns,
            partition: ColumnPartition::default(),
            mappings: Vec::new(),
            machine_mappings: Vec::new(),
            keys: Vec::new(),
            corrections: Vec::new(),
            ledger: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn is_finalized(&self) -> bool {
        self.status == SessionStatus::Finalized
    }

    pub fn mapping(&self, column: &str) -> Option<&MappingResult> {
        self.mappings.iter().find(|m| m.source == column)
    }

    /// Copy with id and timestamps blanked, for comparing runs.
    pub fn content(&self) -> Self {
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        Self {
            id: String::new(),
            created_at: epoch,
            updated_at: epoch,
            corrections: self
                .corrections
                .iter()
                .map(|c| Correction {
                    timestamp: epoch,
                    ..c.clone()
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Overrides a column's attribute. The attribute must belong to the
    /// column's object type.
    pub fn apply_correction(
        &mut self,
        column: &str,
        attribute: &str,
        schema: &[ObjectType],
    ) -> Result<&MappingResult, SessionError> {
        if self.is_finalized() {
            return Err(SessionError::Finalized);
        }
        let pos = self
            .mappings
            .iter()
            .position(|m| m.source == column)
            .ok_or_else(|| SessionError::UnknownColumn(column.to_string()))?;
        let object_type = self.mappings[pos].object_type.clone();
        let valid = schema
            .iter()
            .find(|o| o.name == object_type)
            .is_some_and(|o| o.attribute(attribute).is_some());
        if !valid {
            return Err(SessionError::UnknownAttribute {
                attribute: attribute.to_string(),
                object_type,
            });
        }
        let now = Utc::now();
        self.corrections.push(Correction {
            column: column.to_string(),
            previous_attribute: self.mappings[pos].predicted_attribute.clone(),
            corrected_attribute: attribute.to_string(),
            timestamp: now,
        });
        apply_one(&mut self.mappings[pos], attribute);
        self.updated_at = now;
        Ok(&self.mappings[pos])
    }

    pub fn finalize(&mut self) -> Result<FinalDocument, SessionError> {
        if self.is_finalized() {
            return Err(SessionError::Finalized);
        }
        self.status = SessionStatus::Finalized;
        self.updated_at = Utc::now();
        Ok(self.final_document())
    }

    pub fn reopen(&mut self) -> Result<(), SessionError> {
        if !self.is_finalized() {
            return Err(SessionError::NotFinalized);
        }
        self.status = SessionStatus::PendingReview;
        self.updated_at = Utc::now();
        Ok(())
    }

    pub fn final_document(&self) -> FinalDocument {
        FinalDocument {
            session_id: self.id.clone(),
            fingerprint: self.fingerprint.clone(),
            finalized_at: self.updated_at,
            mappings: self
                .mappings
                .iter()
                .map(|m| FinalMapping {
                    source_column: m.source.clone(),
                    object_type: m.object_type.clone(),
                    target_attribute: m.predicted_attribute.clone().unwrap_or_else(|| UNMAPPED.to_string()),
                    provenance: m.provenance,
                    unmapped: m.is_unmapped(),
                })
                .collect(),
            keys: self
                .keys
                .iter()
                .filter(|k| k.is_key)
                .map(|k| FinalKey {
                    object_type: k.object_type.clone(),
                    column: k.column.clone(),
                })
                .collect(),
        }
    }
}

fn apply_one(m: &mut MappingResult, attribute: &str) {
    m.predicted_attribute = Some(attribute.to_string());
    m.provenance = Provenance::HumanOverride;
    m.confidence = 1.0;
    m.error = None;
}

/// Rebuilds the current mapping state from the machine output and the
/// correction log.
pub fn replay(machine: &[MappingResult], corrections: &[Correction]) -> Vec<MappingResult> {
    let mut state = machine.to_vec();
    for c in corrections {
        if let Some(m) = state.iter_mut().find(|m| m.source == c.column) {
            apply_one(m, &c.corrected_attribute);
        }
    }
    state
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMapping {
    pub source_column: String,
    pub object_type: String,
    pub target_attribute: String,
    pub provenance: Provenance,
    pub unmapped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalKey {
    pub object_type: String,
    pub column: String,
}

/// The deliverable of a reviewed session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDocument {
    pub session_id: String,
    pub fingerprint: String,
    pub finalized_at: DateTime<Utc>,
    pub mappings: Vec<FinalMapping>,
    pub keys: Vec<FinalKey>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no session `{0}`")]
    NotFound(String),
    #[error("`{0}` is not a valid session id")]
    InvalidId(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("session storage I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt session file {path}: {source}")]
    Corrupt {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// One JSON file per session under a directory. Writes to the same session
/// are serialized; distinct sessions proceed independently.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn session_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn document_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.final.json"))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    fn check(&self, id: &str) -> Result<(), StoreError> {
        if valid_id(id) {
            Ok(())
        } else {
            Err(StoreError::InvalidId(id.to_string()))
        }
    }

    pub fn save(&self, session: &MappingSession) -> Result<(), StoreError> {
        self.check(&session.id)?;
        let lock = self.lock(&session.id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.write_json(&self.session_path(&session.id), session)
    }

    pub fn load(&self, id: &str) -> Result<MappingSession, StoreError> {
        self.check(id)?;
        self.read(id)
    }

    fn read(&self, id: &str) -> Result<MappingSession, StoreError> {
        let path = self.session_path(id);
        let text = match fs::read(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&text).map_err(|source| StoreError::Corrupt {
            path: path.display().to_string(),
            source,
        })
    }

    /// Loads, mutates and saves a session under its lock. Nothing is written
    /// if `f` fails.
    pub fn update<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut MappingSession) -> Result<T, SessionError>,
    ) -> Result<(MappingSession, T), StoreError> {
        self.check(id)?;
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut session = self.read(id)?;
        let out = f(&mut session)?;
        self.write_json(&self.session_path(id), &session)?;
        Ok((session, out))
    }

    pub fn apply_correction(
        &self,
        id: &str,
        column: &str,
        attribute: &str,
        schema: &[ObjectType],
    ) -> Result<MappingSession, StoreError> {
        self.update(id, |s| s.apply_correction(column, attribute, schema).map(|_| ()))
            .map(|(s, _)| s)
    }

    /// Finalizes and writes the final document next to the session file.
    pub fn finalize(&self, id: &str) -> Result<(MappingSession, FinalDocument), StoreError> {
        let (session, doc) = self.update(id, MappingSession::finalize)?;
        self.write_json(&self.document_path(id), &doc)?;
        Ok((session, doc))
    }

    pub fn reopen(&self, id: &str) -> Result<MappingSession, StoreError> {
        self.update(id, MappingSession::reopen).map(|(s, _)| s)
    }

    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".json") {
                if valid_id(id) {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(value).expect("session serializes");
        let tmp = path.with_extension(format!("tmp-{}", uuid::Uuid::new_v4()));
        fs::write(&tmp, bytes)?;
        if let Err(e) = fs::rename(&tmp, path) {
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        Ok(())
    }
}
