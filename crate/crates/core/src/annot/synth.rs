//! Seeded synthetic annotation corpora with known, injected defects.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{serialize_grounding, IntervalEnd, SubTaskInterval};
use super::judge::FixtureJudge;
use super::TrajectoryRecord;

const SUB_TASKS: [&str; 8] = [
    "walk out of the bedroom",
    "turn left into the hallway",
    "follow the corridor to the end",
    "pass the dining table",
    "enter the kitchen",
    "approach the refrigerator",
    "go around the sofa",
    "stop in front of the bookshelf",
];
const ACTIONS: [&str; 3] = ["move_forward", "turn_left", "turn_right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatDefect {
    KeywordTypo,
    MissingColon,
    SkippedIndex,
    DuplicateIndex,
    InvertedRange,
    ChattyPreamble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalDefect {
    Overlap,
    RepeatedStart,
    PastLastFrame,
    EmptyInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", content = "kind", rename_all = "snake_case")]
pub enum Defect {
    Format(FormatDefect),
    Temporal(TemporalDefect),
}

const FORMAT_KINDS: [FormatDefect; 6] = [
    FormatDefect::KeywordTypo,
    FormatDefect::MissingColon,
    FormatDefect::SkippedIndex,
    FormatDefect::DuplicateIndex,
    FormatDefect::InvertedRange,
    FormatDefect::ChattyPreamble,
];
const TEMPORAL_KINDS: [TemporalDefect; 4] =
    [TemporalDefect::Overlap, TemporalDefect::RepeatedStart, TemporalDefect::PastLastFrame, TemporalDefect::EmptyInterval];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthItem {
    pub record: TrajectoryRecord,
    pub annotation: String,
    pub defect: Option<Defect>,
}

/// `n` annotations of which exactly `n_format` carry one format defect and
/// `n_temporal` one temporal defect; the rest tile their clip cleanly.
pub fn synth_corpus(n: usize, n_format: usize, n_temporal: usize, seed: u64) -> Vec<SynthItem> {
    assert!(n_format + n_temporal <= n, "more defects than annotations");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<Option<Defect>> = (0..n)
        .map(|i| match i {
            i if i < n_format => Some(Defect::Format(FORMAT_KINDS[i % FORMAT_KINDS.len()])),
            i if i < n_format + n_temporal => {
                Some(Defect::Temporal(TEMPORAL_KINDS[(i - n_format) % TEMPORAL_KINDS.len()]))
            }
            _ => None,
        })
        .collect();
    slots.shuffle(&mut rng);
    slots.into_iter().enumerate().map(|(i, d)| item(&mut rng, i, d)).collect()
}

fn item(rng: &mut ChaCha8Rng, i: usize, defect: Option<Defect>) -> SynthItem {
    let subs = rng.gen_range(2..=5usize);
    // Segments of at least 3 frames leave room for every injection.
    let num_frames = rng.gen_range(3 * subs as u32 + 10..=120);
    let mut cuts: Vec<u32> = Vec::new();
    while cuts.len() < subs - 1 {
        let c = rng.gen_range(3..num_frames - 2);
        let spaced = cuts.iter().chain(&[0, num_frames]).all(|&x| x.abs_diff(c) >= 3);
        if spaced {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let bounds: Vec<u32> = std::iter::once(0).chain(cuts).chain(std::iter::once(num_frames)).collect();
    let mut ivs: Vec<SubTaskInterval> =
        bounds.windows(2).enumerate().map(|(k, w)| SubTaskInterval::exclusive(k as u32 + 1, w[0], w[1])).collect();
    if rng.gen_bool(0.5) {
        ivs.last_mut().expect("at least two intervals").end = IntervalEnd::Onwards;
    }
    let pick = |rng: &mut ChaCha8Rng| rng.gen_range(1..subs);

    let annotation = match defect {
        None => serialize_grounding(&ivs),
        Some(Defect::Temporal(t)) => {
            match t {
                TemporalDefect::Overlap => {
                    let k = pick(rng);
                    ivs[k].start -= 1;
                }
                TemporalDefect::RepeatedStart => {
                    let k = pick(rng);
                    ivs[k].start = ivs[k - 1].start;
                }
                TemporalDefect::PastLastFrame => {
                    ivs.last_mut().expect("non-empty").end = IntervalEnd::Exclusive(num_frames + rng.gen_range(1..=5));
                }
                TemporalDefect::EmptyInterval => {
                    let k = rng.gen_range(0..subs - 1);
                    ivs[k].end = IntervalEnd::Exclusive(ivs[k].start);
                }
            }
            serialize_grounding(&ivs)
        }
        Some(Defect::Format(f)) => {
            let canon = serialize_grounding(&ivs);
            let mut lines: Vec<String> = canon.lines().map(str::to_string).collect();
            let k = pick(rng);
            match f {
                FormatDefect::KeywordTypo => lines[k] = lines[k].replace("Instruction", "Instrution"),
                FormatDefect::MissingColon => lines[k] = lines[k].replacen(':', "", 1),
                FormatDefect::SkippedIndex => {
                    ivs[k].index += 1;
                    for iv in &mut ivs[k + 1..] {
                        iv.index += 1;
                    }
                    lines = serialize_grounding(&ivs).lines().map(str::to_string).collect();
                }
                FormatDefect::DuplicateIndex => {
                    ivs[k].index = ivs[k - 1].index;
                    lines = serialize_grounding(&ivs).lines().map(str::to_string).collect();
                }
                FormatDefect::InvertedRange => {
                    let (s, e) = (ivs[0].start, ivs[0].end_frame(num_frames));
                    lines[0] = format!("# Instruction1: from frame {e} to frame {s};");
                }
                FormatDefect::ChattyPreamble => lines.insert(0, "Sure! Here are the sub-task intervals:".into()),
            }
            lines.join("\n") + "\n"
        }
    };

    let record = TrajectoryRecord {
        id: format!("traj-{i:05}"),
        num_frames,
        actions: (0..num_frames).map(|_| ACTIONS[rng.gen_range(0..ACTIONS.len())].to_string()).collect(),
        instruction: "navigate to the goal shown in the final frame".into(),
        sub_instructions: (0..subs).map(|_| SUB_TASKS[rng.gen_range(0..SUB_TASKS.len())].to_string()).collect(),
    };
    SynthItem { record, annotation, defect }
}

/// A judge calling every interval of `items` consistent.
pub fn consistent_judge(items: &[SynthItem]) -> FixtureJudge {
    let mut j = FixtureJudge::new();
    for it in items {
        for k in 0..it.record.sub_instructions.len() {
            let reply = serde_json::json!({
                "consistent": true,
                "evidence_frames": [],
                "confidence": 0.9,
                "reason": "fixture",
            });
            j.insert(&it.record.id, k as u32 + 1, reply.to_string());
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::{check_temporal, parse_grounding, validate_annotation};

    #[test]
    fn deterministic_and_counted() {
        let a = synth_corpus(200, 20, 10, 3);
        assert_eq!(a, synth_corpus(200, 20, 10, 3));
        assert_eq!(a.iter().filter(|x| matches!(x.defect, Some(Defect::Format(_)))).count(), 20);
        assert_eq!(a.iter().filter(|x| matches!(x.defect, Some(Defect::Temporal(_)))).count(), 10);
        assert!(a.iter().all(|x| x.record.validate().is_ok()));
    }

    #[test]
    fn each_item_fails_exactly_at_its_stage() {
        for it in synth_corpus(300, 60, 60, 11) {
            let parsed = parse_grounding(&it.annotation, it.record.num_frames);
            match it.defect {
                Some(Defect::Format(_)) => assert!(parsed.is_err(), "{:?}\n{}", it.defect, it.annotation),
                Some(Defect::Temporal(_)) => {
                    let ivs = parsed.unwrap();
                    assert!(!check_temporal(&ivs, it.record.num_frames).ok, "{:?}\n{}", it.defect, it.annotation);
                }
                None => {
                    let r = validate_annotation(&it.record, &it.annotation, None, 4);
                    assert!(r.retained, "{}", it.annotation);
                }
            }
        }
    }
}
