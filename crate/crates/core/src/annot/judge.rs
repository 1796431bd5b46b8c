//! Semantic grounding through a pluggable judge.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frames shown to the judge per interval unless overridden.
pub const DEFAULT_JUDGE_FRAMES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub trajectory_id: String,
    pub index: u32,
    pub sub_task: String,
    pub frames: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
}

/// Returns the judge's raw reply; decoding and validation happen here.
pub trait Judge: Send + Sync {
    fn judge(&self, req: &JudgeRequest) -> Result<String, JudgeError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub consistent: bool,
    pub evidence_frames: Vec<u32>,
    pub confidence: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SemanticVerdict {
    Judged(JudgeVerdict),
    Skipped { note: SkipNote },
}

impl SemanticVerdict {
    pub fn judged(&self) -> Option<&JudgeVerdict> {
        match self {
            Self::Judged(v) => Some(v),
            Self::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum SkipNote {
    NoJudge,
    JudgeUnavailable(String),
    MalformedJudgeOutput(String),
}

/// Up to `n` frames spread evenly over `[start, end)`, both ends included
/// when there is room; every frame when the interval is shorter than `n`.
pub fn sample_frames(start: u32, end: u32, n: usize) -> Vec<u32> {
    let len = end.saturating_sub(start) as usize;
    if len <= n {
        return (start..end).collect();
    }
    if n == 1 {
        return vec![start];
    }
    let span = (len - 1) as f64;
    let mut out: Vec<u32> = (0..n).map(|i| start + (span * i as f64 / (n - 1) as f64).round() as u32).collect();
    out.dedup();
    out
}

/// Decode and range-check a raw judge reply against its interval.
pub fn decode_verdict(raw: &str, start: u32, end: u32) -> Result<JudgeVerdict, String> {
    let v: JudgeVerdict = serde_json::from_str(raw.trim()).map_err(|e| e.to_string())?;
    if !(0.0..=1.0).contains(&v.confidence) {
        return Err(format!("confidence {} outside [0, 1]", v.confidence));
    }
    if let Some(f) = v.evidence_frames.iter().find(|&&f| f < start || f >= end) {
        return Err(format!("evidence frame {f} outside [{start}, {end})"));
    }
    Ok(v)
}

/// Run one interval through `judge`. Failures become `Skipped`, never errors.
pub fn judge_semantic(judge: &dyn Judge, req: &JudgeRequest, start: u32, end: u32) -> SemanticVerdict {
    match judge.judge(req) {
        Err(JudgeError::Unavailable(m)) => SemanticVerdict::Skipped { note: SkipNote::JudgeUnavailable(m) },
        Ok(raw) => match decode_verdict(&raw, start, end) {
            Ok(v) => SemanticVerdict::Judged(v),
            Err(m) => SemanticVerdict::Skipped { note: SkipNote::MalformedJudgeOutput(m) },
        },
    }
}

/// Deterministic judge replaying canned replies keyed by `(trajectory_id, index)`.
#[derive(Debug, Clone, Default)]
pub struct FixtureJudge {
    replies: HashMap<(String, u32), String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureReply {
    pub trajectory_id: String,
    pub index: u32,
    /// Raw reply text, passed through undecoded.
    pub reply: String,
}

impl FixtureJudge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, trajectory_id: &str, index: u32, reply: impl Into<String>) {
        self.replies.insert((trajectory_id.to_string(), index), reply.into());
    }

    /// One [`FixtureReply`] per line.
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut j = Self::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let r: FixtureReply = serde_json::from_str(line)?;
            j.insert(&r.trajectory_id, r.index, r.reply);
        }
        Ok(j)
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl Judge for FixtureJudge {
    fn judge(&self, req: &JudgeRequest) -> Result<String, JudgeError> {
        self.replies
            .get(&(req.trajectory_id.clone(), req.index))
            .cloned()
            .ok_or_else(|| JudgeError::Unavailable(format!("no fixture for {}#{}", req.trajectory_id, req.index)))
    }
}
