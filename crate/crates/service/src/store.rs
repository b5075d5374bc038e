//! File-backed review store.
//!
//! Layout under the data dir:
//!
//! - `documents/<sha256(doc_id)>.json`: uploaded documents
//! - `explanations/<digest>.json`: canonical explanations, content-addressed
//! - `submissions.jsonl`: one line per upload or reclassification
//! - `verdicts.jsonl`: the review log, one verdict per line
//!
//! Both logs are append-only and synced on every write. Opening a store
//! replays them, so the queue after a restart is the queue before it.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use corelink_core::{explanation_digest, parse_document_json, render_json, ClassificationExplanation, Document, Label};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("document {0:?} already exists")]
    Duplicate(String),
    #[error("unknown document {0:?}")]
    NotFound(String),
    #[error("stale explanation digest; current is {current}")]
    StaleDigest { current: String },
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn now_timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    ConfirmHarmful,
    ConfirmNonHarmful,
    OverrideHarmful,
    OverrideNonHarmful,
    Escalate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Reviewed,
}

impl FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Status::Pending),
            "reviewed" => Ok(Status::Reviewed),
            other => Err(format!("unknown status {other:?} (expected pending or reviewed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub doc_id: String,
    pub verdict: VerdictKind,
    pub moderator_id: String,
    /// UTC, RFC 3339.
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub explanation_digest: String,
}

/// Verdict as submitted, before the store fills `doc_id` and defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictInput {
    pub verdict: VerdictKind,
    #[serde(default)]
    pub moderator_id: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
    #[serde(default)]
    pub note: Option<String>,
    pub explanation_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub doc_id: String,
    pub predicted_label: Label,
    pub score: i64,
    pub cluster_count: usize,
    pub status: Status,
    pub submitted_at: String,
    pub explanation_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_verdict: Option<VerdictKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SubmissionKind {
    Submitted,
    Reclassified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SubmissionRecord {
    kind: SubmissionKind,
    doc_id: String,
    explanation_digest: String,
    at: String,
}

#[derive(Debug, Clone)]
struct DocState {
    submitted_at: String,
    digest: String,
    label: Label,
    score: i64,
    cluster_count: usize,
    latest_verdict: Option<VerdictKind>,
}

pub struct Store {
    dir: PathBuf,
    order: Vec<String>,
    docs: BTreeMap<String, DocState>,
    submissions: File,
    verdicts: File,
}

const SUBMISSIONS: &str = "submissions.jsonl";
const VERDICTS: &str = "verdicts.jsonl";

fn read_log<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    let mut lines = BufReader::new(file).lines().peekable();
    let mut n = 0;
    while let Some(line) = lines.next() {
        n += 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            // a torn final line from a crash mid-append is dropped
            Err(e) if lines.peek().is_none() => {
                tracing::warn!(path = %path.display(), line = n, error = %e, "ignoring torn final log line");
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    message: format!("line {n}: {e}"),
                })
            }
        }
    }
    Ok(out)
}

/// Cuts an unterminated final line so later appends start on a fresh line.
fn trim_torn_tail(path: &Path) -> Result<(), StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io_err(path)(e)),
    };
    if bytes.last().is_none_or(|&b| b == b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "truncating torn final log line");
    let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
    f.set_len(keep as u64).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

fn open_append(path: &Path) -> Result<File, StoreError> {
    trim_torn_tail(path)?;
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))
}

fn append_line<T: Serialize>(file: &mut File, path: &Path, record: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(record).expect("records serialize");
    line.push(b'\n');
    file.write_all(&line).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn doc_file_name(doc_id: &str) -> String {
    format!("{}.json", hex::encode(Sha256::digest(doc_id.as_bytes())))
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let dir = dir.into();
        for sub in ["documents", "explanations"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let mut store = Store {
            order: Vec::new(),
            docs: BTreeMap::new(),
            submissions: open_append(&dir.join(SUBMISSIONS))?,
            verdicts: open_append(&dir.join(VERDICTS))?,
            dir,
        };
        for rec in read_log::<SubmissionRecord>(&store.dir.join(SUBMISSIONS))? {
            let ex = store.load_explanation(&rec.explanation_digest)?;
            match rec.kind {
                SubmissionKind::Submitted => {
                    store.order.push(rec.doc_id.clone());
                    store
                        .docs
                        .insert(rec.doc_id.clone(), state_for(&ex, rec.explanation_digest, rec.at));
                }
                SubmissionKind::Reclassified => {
                    let prev = store.docs.get(&rec.doc_id).ok_or_else(|| StoreError::Corrupt {
                        path: store.dir.join(SUBMISSIONS),
                        message: format!("reclassification of unknown document {:?}", rec.doc_id),
                    })?;
                    let mut next = state_for(&ex, rec.explanation_digest, prev.submitted_at.clone());
                    next.latest_verdict = prev.latest_verdict;
                    store.docs.insert(rec.doc_id, next);
                }
            }
        }
        for v in read_log::<ReviewVerdict>(&store.dir.join(VERDICTS))? {
            if let Some(d) = store.docs.get_mut(&v.doc_id) {
                d.latest_verdict = Some(v.verdict);
            }
        }
        Ok(store)
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    pub fn verdict_log_path(&self) -> PathBuf {
        self.dir.join(VERDICTS)
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.docs.contains_key(doc_id)
    }

    fn load_explanation(&self, digest: &str) -> Result<ClassificationExplanation, StoreError> {
        let path = self.dir.join("explanations").join(format!("{digest}.json"));
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let ex: ClassificationExplanation = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if explanation_digest(&ex) != digest {
            return Err(StoreError::Corrupt {
                path,
                message: "content does not match its digest".into(),
            });
        }
        Ok(ex)
    }

    fn save_explanation(&self, ex: &ClassificationExplanation) -> Result<String, StoreError> {
        let digest = explanation_digest(ex);
        let path = self.dir.join("explanations").join(format!("{digest}.json"));
        if !path.exists() {
            write_synced(&path, &render_json(ex))?;
        }
        Ok(digest)
    }

    /// Stores a new document with its explanation; the queue entry is pending.
    pub fn insert(&mut self, doc: &Document, ex: &ClassificationExplanation) -> Result<QueueEntry, StoreError> {
        if self.contains(&doc.doc_id) {
            return Err(StoreError::Duplicate(doc.doc_id.clone()));
        }
        let path = self.dir.join("documents").join(doc_file_name(&doc.doc_id));
        write_synced(&path, doc.to_json_pretty().as_bytes())?;
        let digest = self.save_explanation(ex)?;
        let rec = SubmissionRecord {
            kind: SubmissionKind::Submitted,
            doc_id: doc.doc_id.clone(),
            explanation_digest: digest.clone(),
            at: now_timestamp(),
        };
        append_line(&mut self.submissions, &self.dir.join(SUBMISSIONS), &rec)?;
        self.order.push(doc.doc_id.clone());
        self.docs.insert(doc.doc_id.clone(), state_for(ex, digest, rec.at));
        Ok(self.entry(&doc.doc_id).expect("just inserted"))
    }

    /// Replaces the current explanation. Earlier verdicts stay in the log,
    /// but verdicts carrying the old digest are now stale.
    pub fn replace_explanation(
        &mut self,
        doc_id: &str,
        ex: &ClassificationExplanation,
    ) -> Result<QueueEntry, StoreError> {
        let prev = self
            .docs
            .get(doc_id)
            .ok_or_else(|| StoreError::NotFound(doc_id.into()))?
            .clone();
        let digest = self.save_explanation(ex)?;
        if digest != prev.digest {
            let rec = SubmissionRecord {
                kind: SubmissionKind::Reclassified,
                doc_id: doc_id.into(),
                explanation_digest: digest.clone(),
                at: now_timestamp(),
            };
            append_line(&mut self.submissions, &self.dir.join(SUBMISSIONS), &rec)?;
            let mut next = state_for(ex, digest, prev.submitted_at);
            next.latest_verdict = prev.latest_verdict;
            self.docs.insert(doc_id.into(), next);
        }
        Ok(self.entry(doc_id).expect("exists"))
    }

    pub fn document(&self, doc_id: &str) -> Result<Document, StoreError> {
        if !self.contains(doc_id) {
            return Err(StoreError::NotFound(doc_id.into()));
        }
        let path = self.dir.join("documents").join(doc_file_name(doc_id));
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        parse_document_json(&bytes).map_err(|e| StoreError::Corrupt {
            path,
            message: e.to_string(),
        })
    }

    /// Current explanation and its digest.
    pub fn explanation(&self, doc_id: &str) -> Result<(ClassificationExplanation, String), StoreError> {
        let state = self
            .docs
            .get(doc_id)
            .ok_or_else(|| StoreError::NotFound(doc_id.into()))?;
        Ok((self.load_explanation(&state.digest)?, state.digest.clone()))
    }

    pub fn record_verdict(&mut self, doc_id: &str, input: VerdictInput) -> Result<ReviewVerdict, StoreError> {
        let state = self
            .docs
            .get(doc_id)
            .ok_or_else(|| StoreError::NotFound(doc_id.into()))?;
        if input.explanation_digest != state.digest {
            return Err(StoreError::StaleDigest {
                current: state.digest.clone(),
            });
        }
        let moderator_id = input
            .moderator_id
            .filter(|m| !m.trim().is_empty())
            .ok_or_else(|| StoreError::InvalidVerdict("moderator_id is required".into()))?;
        let timestamp = match input.timestamp {
            Some(t) => {
                let parsed = DateTime::parse_from_rfc3339(&t)
                    .map_err(|e| StoreError::InvalidVerdict(format!("timestamp {t:?}: {e}")))?;
                parsed.with_timezone(&Utc).to_rfc3339_opts(SecondsFormat::Millis, true)
            }
            None => now_timestamp(),
        };
        let verdict = ReviewVerdict {
            doc_id: doc_id.into(),
            verdict: input.verdict,
            moderator_id,
            timestamp,
            note: input.note,
            explanation_digest: input.explanation_digest,
        };
        append_line(&mut self.verdicts, &self.dir.join(VERDICTS), &verdict)?;
        self.docs.get_mut(doc_id).expect("checked").latest_verdict = Some(verdict.verdict);
        Ok(verdict)
    }

    /// All verdicts for a document, oldest first.
    pub fn verdicts(&self, doc_id: &str) -> Result<Vec<ReviewVerdict>, StoreError> {
        if !self.contains(doc_id) {
            return Err(StoreError::NotFound(doc_id.into()));
        }
        Ok(read_log::<ReviewVerdict>(&self.dir.join(VERDICTS))?
            .into_iter()
            .filter(|v| v.doc_id == doc_id)
            .collect())
    }

    pub fn entry(&self, doc_id: &str) -> Option<QueueEntry> {
        self.docs.get(doc_id).map(|d| QueueEntry {
            doc_id: doc_id.into(),
            predicted_label: d.label,
            score: d.score,
            cluster_count: d.cluster_count,
            status: if d.latest_verdict.is_some() {
                Status::Reviewed
            } else {
                Status::Pending
            },
            submitted_at: d.submitted_at.clone(),
            explanation_digest: d.digest.clone(),
            latest_verdict: d.latest_verdict,
        })
    }

    /// Entries in submission order, optionally filtered by status.
    pub fn queue(&self, status: Option<Status>) -> Vec<QueueEntry> {
        self.order
            .iter()
            .filter_map(|id| self.entry(id))
            .filter(|e| status.is_none_or(|s| e.status == s))
            .collect()
    }
}

fn state_for(ex: &ClassificationExplanation, digest: String, submitted_at: String) -> DocState {
    DocState {
        submitted_at,
        digest,
        label: ex.label,
        score: ex.score,
        cluster_count: ex.clusters.len(),
        latest_verdict: None,
    }
}
