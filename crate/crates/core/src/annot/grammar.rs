//! Line grammar for grounding annotations.
//!
//! Accepted lines, after trimming, with any run of blanks where one space is
//! shown and the final semicolon optional:
//!
//! ```text
//! # Instruction<N>: from frame <S> to frame <E>;
//! # Instruction<N>: from frame <S> onwards;
//! ```

use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^#[ \t]+Instruction(\d+):[ \t]+from[ \t]+frame[ \t]+(\d+)[ \t]+(?:to[ \t]+frame[ \t]+(\d+)|onwards)[ \t]*;?$")
        .expect("static pattern")
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalEnd {
    /// First frame past the interval.
    Exclusive(u32),
    /// Runs to the last available frame.
    Onwards,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubTaskInterval {
    /// 1-based position in the sub-task list.
    pub index: u32,
    pub start: u32,
    pub end: IntervalEnd,
}

impl SubTaskInterval {
    pub fn exclusive(index: u32, start: u32, end: u32) -> Self {
        Self { index, start, end: IntervalEnd::Exclusive(end) }
    }

    /// End frame with `Onwards` resolved against the clip length.
    pub fn end_frame(&self, num_frames: u32) -> u32 {
        match self.end {
            IntervalEnd::Exclusive(e) => e,
            IntervalEnd::Onwards => num_frames,
        }
    }

    pub fn resolve(self, num_frames: u32) -> Self {
        Self { end: IntervalEnd::Exclusive(self.end_frame(num_frames)), ..self }
    }
}

/// Format-stage failure. Only the first violation in a block is reported.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FormatViolation {
    #[error("line {line_no} does not match the grammar: {line:?}")]
    MalformedLine { line_no: usize, line: String },
    #[error("line {line_no}: end frame {end} precedes start frame {start}")]
    InvertedInterval { line_no: usize, start: u32, end: u32 },
    #[error("instruction index {index} appears twice")]
    DuplicateIndex { index: u32 },
    #[error("instruction indices must run 1..=n; expected {expected}, found {found}")]
    NonContinuousIndices { expected: u32, found: u32 },
    #[error("annotation contains no instructions")]
    NoIntervals,
    #[error("instruction {index} has no matching sub-task ({available} available)")]
    UnknownSubTask { index: u32, available: usize },
}

/// Parse a block without resolving `Onwards`; intervals come back in line order.
pub fn parse_grounding_raw(text: &str) -> Result<Vec<SubTaskInterval>, FormatViolation> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let malformed = || FormatViolation::MalformedLine { line_no, line: line.to_string() };
        let caps = LINE.captures(line).ok_or_else(malformed)?;
        let num = |g: usize| caps.get(g).map(|m| m.as_str().parse::<u32>().map_err(|_| malformed())).transpose();
        let index = num(1)?.expect("group 1 always matches");
        let start = num(2)?.expect("group 2 always matches");
        let end = match num(3)? {
            Some(e) if e < start => return Err(FormatViolation::InvertedInterval { line_no, start, end: e }),
            Some(e) => IntervalEnd::Exclusive(e),
            None => IntervalEnd::Onwards,
        };
        out.push(SubTaskInterval { index, start, end });
    }
    check_indices(&out)?;
    Ok(out)
}

/// Parse a block and resolve `Onwards` to `num_frames`.
pub fn parse_grounding(text: &str, num_frames: u32) -> Result<Vec<SubTaskInterval>, FormatViolation> {
    Ok(parse_grounding_raw(text)?.into_iter().map(|iv| iv.resolve(num_frames)).collect())
}

// Indices, read in line order, must be exactly 1, 2, ..., n.
fn check_indices(ivs: &[SubTaskInterval]) -> Result<(), FormatViolation> {
    if ivs.is_empty() {
        return Err(FormatViolation::NoIntervals);
    }
    let mut seen = std::collections::HashSet::new();
    for iv in ivs {
        if !seen.insert(iv.index) {
            return Err(FormatViolation::DuplicateIndex { index: iv.index });
        }
    }
    for (pos, iv) in ivs.iter().enumerate() {
        let expected = pos as u32 + 1;
        if iv.index != expected {
            return Err(FormatViolation::NonContinuousIndices { expected, found: iv.index });
        }
    }
    Ok(())
}

/// Canonical text: single spaces, one line per interval, trailing semicolons.
pub fn serialize_grounding(ivs: &[SubTaskInterval]) -> String {
    let mut s = String::new();
    for iv in ivs {
        match iv.end {
            IntervalEnd::Exclusive(e) => {
                writeln!(s, "# Instruction{}: from frame {} to frame {};", iv.index, iv.start, e)
            }
            IntervalEnd::Onwards => writeln!(s, "# Instruction{}: from frame {} onwards;", iv.index, iv.start),
        }
        .expect("writing to a String");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_interval_line() {
        let ivs = parse_grounding("# Instruction1: from frame 0 to frame 8;", 20).unwrap();
        assert_eq!(ivs, vec![SubTaskInterval::exclusive(1, 0, 8)]);
    }

    #[test]
    fn onwards_resolves_to_clip_length() {
        let ivs = parse_grounding("# Instruction1: from frame 0 onwards;", 20).unwrap();
        assert_eq!(ivs, vec![SubTaskInterval::exclusive(1, 0, 20)]);
        let raw = parse_grounding_raw("# Instruction1: from frame 0 onwards;").unwrap();
        assert_eq!(raw[0].end, IntervalEnd::Onwards);
    }

    #[test]
    fn missing_index_is_non_continuous() {
        let text = "# Instruction1: from frame 0 to frame 4;\n# Instruction3: from frame 4 to frame 9;";
        assert_eq!(
            parse_grounding_raw(text),
            Err(FormatViolation::NonContinuousIndices { expected: 2, found: 3 })
        );
    }

    #[test]
    fn duplicate_index_reported_before_gaps() {
        let text = "# Instruction1: from frame 0 to frame 4;\n# Instruction1: from frame 4 to frame 9;";
        assert_eq!(parse_grounding_raw(text), Err(FormatViolation::DuplicateIndex { index: 1 }));
    }

    #[test]
    fn whitespace_and_semicolon_leniency() {
        let text = "  #   Instruction1:  from   frame 0  to frame   8  \n\n#\tInstruction2: from frame 8 onwards";
        let ivs = parse_grounding_raw(text).unwrap();
        assert_eq!(ivs.len(), 2);
        assert_eq!(ivs[1], SubTaskInterval { index: 2, start: 8, end: IntervalEnd::Onwards });
    }

    #[test]
    fn keyword_drift_is_malformed() {
        for bad in [
            "# Instruction 1: from frame 0 to frame 8;",
            "# instruction1: from frame 0 to frame 8;",
            "# Instruction1: from frames 0 to frame 8;",
            "# Instruction1: from frame 0 to 8;",
            "Instruction1: from frame 0 to frame 8;",
            "# Instruction1: from frame -1 to frame 8;",
            "# Instruction1: from frame 0 to frame 8;;",
            "# Instruction1: from frame 0 to frame 99999999999;",
        ] {
            assert!(
                matches!(parse_grounding_raw(bad), Err(FormatViolation::MalformedLine { line_no: 1, .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn malformed_line_number_counts_blank_lines() {
        let text = "# Instruction1: from frame 0 to frame 8;\n\n garbage ";
        assert_eq!(
            parse_grounding_raw(text),
            Err(FormatViolation::MalformedLine { line_no: 3, line: "garbage".into() })
        );
    }

    #[test]
    fn inverted_and_empty_blocks() {
        assert_eq!(
            parse_grounding_raw("# Instruction1: from frame 9 to frame 3;"),
            Err(FormatViolation::InvertedInterval { line_no: 1, start: 9, end: 3 })
        );
        assert_eq!(parse_grounding_raw(" \n\n"), Err(FormatViolation::NoIntervals));
        // Zero-length intervals are a temporal matter, not a format one.
        assert!(parse_grounding_raw("# Instruction1: from frame 3 to frame 3;").is_ok());
    }

    fn interval_list() -> impl Strategy<Value = Vec<SubTaskInterval>> {
        prop::collection::vec((0u32..500, prop::option::of(0u32..500)), 1..8).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (s, e))| SubTaskInterval {
                    index: i as u32 + 1,
                    start: s,
                    end: e.map_or(IntervalEnd::Onwards, |e| IntervalEnd::Exclusive(s + e)),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn canonical_form_is_a_fixed_point(ivs in interval_list(), pad in 1usize..4) {
            let canon = serialize_grounding(&ivs);
            let parsed = parse_grounding_raw(&canon).unwrap();
            prop_assert_eq!(&parsed, &ivs);
            prop_assert_eq!(serialize_grounding(&parsed), canon.clone());
            let noisy = canon.replace(' ', &" ".repeat(pad)).replace(';', "");
            prop_assert_eq!(parse_grounding_raw(&noisy).unwrap(), ivs);
        }

        #[test]
        fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
            let _ = parse_grounding(&text, 100);
        }
    }
}
