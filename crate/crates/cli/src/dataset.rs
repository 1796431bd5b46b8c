//! `validate` and `make-dataset` over an annotated trajectory corpus.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use navlab_core::annot::{
    check_temporal, label_samples, parse_grounding, quality_metrics, validate_annotation, FixtureJudge, Judge,
    TqcmReport, TrajectoryRecord,
};
use serde::Serialize;

use crate::config::hash_json;
use crate::run::write_json;
use crate::{Classify, CmdResult, Failure};

fn read_manifest(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let f = File::open(path).with_context(|| format!("opening manifest {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TrajectoryRecord =
            serde_json::from_str(&line).with_context(|| format!("manifest line {}", i + 1))?;
        r.validate()?;
        out.push(r);
    }
    if out.is_empty() {
        bail!("manifest {} lists no trajectories", path.display());
    }
    Ok(out)
}

/// Annotation text per trajectory; a missing file reads as empty and fails the format gate.
fn read_annotations(dir: &Path, records: &[TrajectoryRecord]) -> Result<Vec<String>> {
    let has_any = std::fs::read_dir(dir)
        .with_context(|| format!("reading annotation dir {}", dir.display()))?
        .filter_map(Result::ok)
        .any(|e| e.path().extension().is_some_and(|x| x == "txt"));
    if !has_any {
        bail!("annotation dir {} holds no .txt files", dir.display());
    }
    records
        .iter()
        .map(|r| {
            let p = dir.join(format!("{}.txt", r.id));
            match std::fs::read_to_string(&p) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
                Err(e) => Err(e).with_context(|| format!("reading {}", p.display())),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ReportLine<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    report: &'a TqcmReport,
}

pub fn cmd_validate(manifest: &Path, annotations: &Path, judge: Option<&Path>, frames: usize, out: &Path) -> CmdResult {
    if frames == 0 {
        return Err(Failure::Input(anyhow::anyhow!("--frames must be positive")));
    }
    let records = read_manifest(manifest).input()?;
    let texts = read_annotations(annotations, &records).input()?;
    let judge = judge
        .map(|p| -> Result<FixtureJudge> {
            let s = std::fs::read_to_string(p).with_context(|| format!("reading judge fixture {}", p.display()))?;
            Ok(FixtureJudge::from_jsonl(&s)?)
        })
        .transpose()
        .input()?;
    let hash = hash_json(&("validate", manifest, annotations, judge.is_some(), frames));
    let reports: Vec<TqcmReport> = records
        .iter()
        .zip(&texts)
        .map(|(r, t)| validate_annotation(r, t, judge.as_ref().map(|j| j as &dyn Judge), frames))
        .collect();

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).runtime()?;
    let mut w = BufWriter::new(File::create(out.join("reports.jsonl")).runtime()?);
    for r in &reports {
        serde_json::to_writer(&mut w, &ReportLine { config_hash: &hash, report: r }).runtime()?;
        w.write_all(b"\n").runtime()?;
    }
    w.flush().runtime()?;

    let m = quality_metrics(&reports);
    let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
    let mut q = BufWriter::new(File::create(out.join("quality.csv")).runtime()?);
    writeln!(q, "samples,format,temporal,semantic,retained,config_hash").runtime()?;
    writeln!(
        q,
        "{},{},{},{},{},{hash}",
        m.samples,
        pct(m.format_pct),
        pct(m.temporal_pct),
        pct(m.semantic_pct),
        m.retained
    )
    .runtime()?;
    q.flush().runtime()?;
    eprintln!(
        "validate: {} annotations, format {}, temporal {}, semantic {}, retained {}",
        m.samples,
        pct(m.format_pct),
        pct(m.temporal_pct),
        pct(m.semantic_pct),
        m.retained
    );
    Ok(())
}

#[derive(Serialize)]
struct SampleLine<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    sample: &'a T,
}

#[derive(Serialize)]
struct DatasetSummary<'a> {
    config_hash: &'a str,
    trajectories: usize,
    labelled: usize,
    samples: usize,
    skipped: BTreeMap<String, usize>,
}

pub fn cmd_make_dataset(manifest: &Path, annotations: &Path, window: i64, history: usize, out: &Path) -> CmdResult {
    if window < 0 {
        return Err(Failure::Input(anyhow::anyhow!("--window must be non-negative")));
    }
    let records = read_manifest(manifest).input()?;
    let texts = read_annotations(annotations, &records).input()?;
    let hash = hash_json(&("make-dataset", manifest, annotations, window, history));
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).runtime()?;
    let mut w = BufWriter::new(File::create(out.join("samples.jsonl")).runtime()?);
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    let (mut labelled, mut samples) = (0, 0);
    for (r, text) in records.iter().zip(&texts) {
        let ivs = match parse_grounding(text, r.num_frames) {
            Ok(ivs) => ivs,
            Err(_) => {
                *skipped.entry("format".into()).or_default() += 1;
                continue;
            }
        };
        if !check_temporal(&ivs, r.num_frames).ok {
            *skipped.entry("temporal".into()).or_default() += 1;
            continue;
        }
        match label_samples(r, &ivs, window, history) {
            Ok(ss) => {
                labelled += 1;
                samples += ss.len();
                for s in &ss {
                    serde_json::to_writer(&mut w, &SampleLine { config_hash: &hash, sample: s }).runtime()?;
                    w.write_all(b"\n").runtime()?;
                }
            }
            Err(e) => *skipped.entry(format!("label: {e}")).or_default() += 1,
        }
    }
    w.flush().runtime()?;
    let summary = DatasetSummary { config_hash: &hash, trajectories: records.len(), labelled, samples, skipped };
    write_json(&out.join("dataset_summary.json"), &summary).runtime()?;
    eprintln!("make-dataset: {samples} samples from {labelled}/{} trajectories", records.len());
    Ok(())
}
