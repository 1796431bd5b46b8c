//! Grounding annotations: grammar, the three quality gates (format,
//! temporal, semantic), corpus-level quality figures and the planning
//! sample labeler.

pub mod grammar;
pub mod judge;
pub mod label;
pub mod synth;
pub mod temporal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grammar::{parse_grounding, parse_grounding_raw, serialize_grounding, FormatViolation, IntervalEnd, SubTaskInterval};
pub use judge::{
    judge_semantic, sample_frames, FixtureJudge, Judge, JudgeError, JudgeRequest, JudgeVerdict, SemanticVerdict,
    SkipNote, DEFAULT_JUDGE_FRAMES,
};
pub use label::{label_samples, LabelError, PlanningSample, DEFAULT_HISTORY_LEN, DEFAULT_WINDOW};
pub use temporal::{check_temporal, TemporalReport, TemporalViolation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub num_frames: u32,
    pub actions: Vec<String>,
    pub instruction: String,
    /// Sub-task `i` (1-based in annotations) is `sub_instructions[i - 1]`.
    pub sub_instructions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("trajectory {id}: {actions} actions for {frames} frames")]
    ActionCount { id: String, actions: usize, frames: u32 },
}

impl TrajectoryRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.actions.len() != self.num_frames as usize {
            return Err(RecordError::ActionCount {
                id: self.id.clone(),
                actions: self.actions.len(),
                frames: self.num_frames,
            });
        }
        Ok(())
    }
}

/// Verdicts of the three gates for one annotation.
///
/// Later gates run only when earlier ones pass: `temporal` is `None` after
/// a format failure and `semantic` is empty unless both passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TqcmReport {
    pub trajectory_id: String,
    pub format_ok: bool,
    pub format_violation: Option<FormatViolation>,
    pub temporal: Option<TemporalReport>,
    pub semantic: Vec<SemanticVerdict>,
    pub retained: bool,
}

impl TqcmReport {
    pub fn temporal_ok(&self) -> Option<bool> {
        self.temporal.as_ref().map(|t| t.ok)
    }
}

/// Run format, temporal and semantic checks on one annotation block.
///
/// Without a judge every interval is `Skipped { NoJudge }`. Retention needs
/// every executed check to pass; a skipped interval was not executed.
pub fn validate_annotation(
    record: &TrajectoryRecord,
    text: &str,
    judge: Option<&dyn Judge>,
    judge_frames: usize,
) -> TqcmReport {
    let mut report = TqcmReport {
        trajectory_id: record.id.clone(),
        format_ok: false,
        format_violation: None,
        temporal: None,
        semantic: Vec::new(),
        retained: false,
    };
    let ivs = match parse_grounding(text, record.num_frames).and_then(|ivs| check_sub_tasks(&ivs, record).map(|_| ivs)) {
        Ok(ivs) => ivs,
        Err(v) => {
            report.format_violation = Some(v);
            return report;
        }
    };
    report.format_ok = true;
    let temporal = check_temporal(&ivs, record.num_frames);
    let temporal_ok = temporal.ok;
    report.temporal = Some(temporal);
    if !temporal_ok {
        return report;
    }
    report.semantic = ivs
        .iter()
        .map(|iv| {
            let end = iv.end_frame(record.num_frames);
            match judge {
                None => SemanticVerdict::Skipped { note: SkipNote::NoJudge },
                Some(j) => {
                    let req = JudgeRequest {
                        trajectory_id: record.id.clone(),
                        index: iv.index,
                        sub_task: record.sub_instructions[iv.index as usize - 1].clone(),
                        frames: sample_frames(iv.start, end, judge_frames),
                    };
                    judge_semantic(j, &req, iv.start, end)
                }
            }
        })
        .collect();
    report.retained = report.semantic.iter().all(|s| s.judged().is_none_or(|v| v.consistent));
    report
}

fn check_sub_tasks(ivs: &[SubTaskInterval], record: &TrajectoryRecord) -> Result<(), FormatViolation> {
    let available = record.sub_instructions.len();
    match ivs.iter().find(|iv| iv.index as usize > available) {
        Some(iv) => Err(FormatViolation::UnknownSubTask { index: iv.index, available }),
        None => Ok(()),
    }
}

/// Running counts behind [`QualityMetrics`]; tallies over disjoint shards merge by addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityTally {
    pub samples: u64,
    pub format_pass: u64,
    pub temporal_checked: u64,
    pub temporal_pass: u64,
    pub judged_intervals: u64,
    pub consistent_intervals: u64,
    pub retained: u64,
}

impl QualityTally {
    pub fn add(&mut self, r: &TqcmReport) {
        self.samples += 1;
        self.format_pass += u64::from(r.format_ok);
        if let Some(ok) = r.temporal_ok() {
            self.temporal_checked += 1;
            self.temporal_pass += u64::from(ok);
        }
        for v in r.semantic.iter().filter_map(SemanticVerdict::judged) {
            self.judged_intervals += 1;
            self.consistent_intervals += u64::from(v.consistent);
        }
        self.retained += u64::from(r.retained);
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            samples: self.samples + o.samples,
            format_pass: self.format_pass + o.format_pass,
            temporal_checked: self.temporal_checked + o.temporal_checked,
            temporal_pass: self.temporal_pass + o.temporal_pass,
            judged_intervals: self.judged_intervals + o.judged_intervals,
            consistent_intervals: self.consistent_intervals + o.consistent_intervals,
            retained: self.retained + o.retained,
        }
    }

    pub fn metrics(&self) -> QualityMetrics {
        let pct = |num: u64, den: u64| (den > 0).then(|| 100.0 * num as f64 / den as f64);
        QualityMetrics {
            samples: self.samples,
            format_pct: pct(self.format_pass, self.samples),
            temporal_pct: pct(self.temporal_pass, self.temporal_checked),
            semantic_pct: pct(self.consistent_intervals, self.judged_intervals),
            retained: self.retained,
        }
    }
}

/// Percentages in `[0, 100]`; `None` when the stage saw nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub samples: u64,
    /// Over all annotations.
    pub format_pct: Option<f64>,
    /// Over annotations that passed the format gate.
    pub temporal_pct: Option<f64>,
    /// Over judged intervals; skipped intervals are excluded.
    pub semantic_pct: Option<f64>,
    pub retained: u64,
}

pub fn quality_metrics(reports: &[TqcmReport]) -> QualityMetrics {
    let mut t = QualityTally::default();
    reports.iter().for_each(|r| t.add(r));
    t.metrics()
}
