use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalSession};
use crate::store::{read_jsonl_or_empty, JsonlAppender};

pub const SCORE_MIN: u8 = 1;
pub const SCORE_MAX: u8 = 5;

/// One line of the rating log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub session_id: String,
    pub image_id: u64,
    pub quality: u8,
    pub representativeness: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// Unix milliseconds.
    pub timestamp: u64,
}

/// A rating as submitted by a client.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub image_id: u64,
    pub quality: i64,
    pub representativeness: i64,
    #[serde(default)]
    pub comment: Option<String>,
}

fn check_score(field: &'static str, value: i64) -> Result<u8, EvalError> {
    if (i64::from(SCORE_MIN)..=i64::from(SCORE_MAX)).contains(&value) {
        Ok(value as u8)
    } else {
        Err(EvalError::OutOfRange { field, value })
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Reads a rating log without resolving resubmissions.
pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>, EvalError> {
    Ok(read_jsonl_or_empty(path)?)
}

/// Latest record per `(session, image)`, in log order of first appearance.
pub fn resolve_latest(log: &[RatingRecord]) -> Vec<RatingRecord> {
    let mut slot: HashMap<(&str, u64), usize> = HashMap::new();
    let mut out: Vec<RatingRecord> = Vec::new();
    for r in log {
        match slot.get(&(r.session_id.as_str(), r.image_id)) {
            Some(&i) => out[i] = r.clone(),
            None => {
                slot.insert((r.session_id.as_str(), r.image_id), out.len());
                out.push(r.clone());
            }
        }
    }
    out
}

/// Append-only JSON-lines rating log with replace-on-resubmit semantics
/// resolved at read time.
pub struct RatingLog {
    path: PathBuf,
    appender: JsonlAppender,
    entries: Vec<RatingRecord>,
    sessions: BTreeMap<String, EvalSession>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

impl RatingLog {
    /// Opens (or creates) the log and replays existing entries.
    pub fn open(path: &Path, sessions: Vec<EvalSession>) -> Result<Self, EvalError> {
        let entries: Vec<RatingRecord> = read_jsonl_or_empty(path)?;
        let appender = JsonlAppender::open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            appender,
            entries,
            sessions: sessions
                .into_iter()
                .map(|s| (s.session_id.clone(), s))
                .collect(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn sessions(&self) -> impl Iterator<Item = &EvalSession> {
        self.sessions.values()
    }

    pub fn session(&self, id: &str) -> Result<&EvalSession, EvalError> {
        self.sessions
            .get(id)
            .ok_or_else(|| EvalError::UnknownSession(id.to_string()))
    }

    pub fn replace_sessions(&mut self, sessions: Vec<EvalSession>) {
        self.sessions = sessions
            .into_iter()
            .map(|s| (s.session_id.clone(), s))
            .collect();
    }

    /// Raw log lines in append order.
    pub fn entries(&self) -> &[RatingRecord] {
        &self.entries
    }

    pub fn resolved(&self) -> Vec<RatingRecord> {
        resolve_latest(&self.entries)
    }

    pub fn submit(
        &mut self,
        session_id: &str,
        submission: RatingSubmission,
    ) -> Result<RatingRecord, EvalError> {
        let session = self.session(session_id)?;
        if !session.contains(submission.image_id) {
            return Err(EvalError::ForeignImage {
                session_id: session_id.to_string(),
                image_id: submission.image_id,
            });
        }
        let record = RatingRecord {
            session_id: session_id.to_string(),
            image_id: submission.image_id,
            quality: check_score("quality", submission.quality)?,
            representativeness: check_score("representativeness", submission.representativeness)?,
            comment: submission.comment.filter(|c| !c.trim().is_empty()),
            timestamp: now_ms(),
        };
        self.appender.append(&record)?;
        self.entries.push(record.clone());
        Ok(record)
    }

    /// Next unrated image in presentation order, or `None` when done.
    pub fn next(&self, session_id: &str) -> Result<(Option<u64>, Progress), EvalError> {
        let session = self.session(session_id)?;
        let rated: std::collections::HashSet<u64> = self
            .entries
            .iter()
            .filter(|r| r.session_id == session_id)
            .map(|r| r.image_id)
            .collect();
        let next = session
            .image_ids
            .iter()
            .copied()
            .find(|id| !rated.contains(id));
        let done = session
            .image_ids
            .iter()
            .filter(|id| rated.contains(id))
            .count();
        Ok((
            next,
            Progress {
                done,
                total: session.image_ids.len(),
            },
        ))
    }
}
