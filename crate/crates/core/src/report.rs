//! Aggregation of per-run results into comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{FrameMetrics, PSNR_CAP};
use crate::pipeline::SegmentDiagnostics;

pub const CSV_HEADER: &str = "scenario,label,psnr,ssim,time_s,hole_frac,top1_score";
pub const LPIPS_NOTE: &str = "LPIPS needs a learned perceptual network and is not computed";

/// Everything one run contributes to a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub label: String,
    pub frames: Vec<FrameMetrics>,
    /// Conditioning hole fraction of each segment.
    pub segment_holes: Vec<f64>,
    /// Top retrieval score of each segment.
    pub segment_top1: Vec<f64>,
    /// Wall time, when it was recorded.
    pub time_s: Option<f64>,
}

impl RunRecord {
    pub fn new(
        scenario: impl Into<String>,
        label: impl Into<String>,
        frames: Vec<FrameMetrics>,
        diagnostics: &[SegmentDiagnostics],
        time_s: Option<f64>,
    ) -> Self {
        Self {
            scenario: scenario.into(),
            label: label.into(),
            frames,
            segment_holes: diagnostics.iter().map(|d| d.hole_fraction_before).collect(),
            segment_top1: diagnostics.iter().map(|d| d.top1_score).collect(),
            time_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub label: String,
    pub psnr: f64,
    pub ssim: f64,
    pub time_s: Option<f64>,
    pub hole_frac: f64,
    pub top1_score: f64,
}

/// A row compared with the first row (by label) of its scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowDiff {
    pub scenario: String,
    pub label: String,
    pub baseline: String,
    pub psnr: f64,
    pub ssim: f64,
    pub hole_frac: f64,
    pub top1_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub diffs: Vec<RowDiff>,
    pub lpips: Option<f64>,
    pub lpips_note: String,
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    xs.sum::<f64>() / n as f64
}

/// One row per (scenario, label), sorted by both. Runs of a scenario must
/// all cover the same number of frames.
pub fn aggregate(runs: &[RunRecord]) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one run".into()));
    }
    let mut frame_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut keyed: BTreeMap<(&str, &str), &RunRecord> = BTreeMap::new();
    for r in runs {
        if r.frames.is_empty() {
            return Err(Error::InvalidArgument(format!("run {}/{} has no frames", r.scenario, r.label)));
        }
        let count = *frame_counts.entry(&r.scenario).or_insert(r.frames.len());
        if count != r.frames.len() {
            return Err(Error::mismatch("frames per run", count, format!("{} in {}/{}", r.frames.len(), r.scenario, r.label)));
        }
        if keyed.insert((&r.scenario, &r.label), r).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate run {}/{}", r.scenario, r.label)));
        }
        if let Some(t) = r.time_s {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument(format!("negative time in {}/{}", r.scenario, r.label)));
            }
        }
    }

    let rows: Vec<ReportRow> = keyed
        .values()
        .map(|r| ReportRow {
            scenario: r.scenario.clone(),
            label: r.label.clone(),
            psnr: mean(r.frames.iter().map(|f| f.psnr.min(PSNR_CAP))),
            ssim: mean(r.frames.iter().map(|f| f.ssim)),
            time_s: r.time_s,
            hole_frac: mean(r.segment_holes.iter().copied()),
            top1_score: mean(r.segment_top1.iter().copied()),
        })
        .collect();

    let mut diffs = Vec::new();
    let mut baseline: Option<&ReportRow> = None;
    for row in &rows {
        match baseline {
            Some(b) if b.scenario == row.scenario => diffs.push(RowDiff {
                scenario: row.scenario.clone(),
                label: row.label.clone(),
                baseline: b.label.clone(),
                psnr: row.psnr - b.psnr,
                ssim: row.ssim - b.ssim,
                hole_frac: row.hole_frac - b.hole_frac,
                top1_score: row.top1_score - b.top1_score,
            }),
            _ => baseline = Some(row),
        }
    }

    Ok(Report {
        rows,
        diffs,
        lpips: None,
        lpips_note: LPIPS_NOTE.into(),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let time = r.time_s.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&r.scenario),
                csv_field(&r.label),
                r.psnr,
                r.ssim,
                time,
                r.hole_frac,
                r.top1_score
            )
            .expect("write to string");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        for (ext, text) in [("csv", self.to_csv()), ("json", self.to_json())] {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Per-frame metrics as CSV (`frame,psnr,ssim`).
pub fn frames_csv(frames: &[FrameMetrics]) -> String {
    let mut out = String::from("frame,psnr,ssim\n");
    for (i, f) in frames.iter().enumerate() {
        writeln!(out, "{i},{},{}", f.psnr, f.ssim).expect("write to string");
    }
    out
}

pub fn parse_frames_csv(text: &str, context: &str) -> Result<Vec<FrameMetrics>> {
    let mut lines = text.lines();
    if lines.next() != Some("frame,psnr,ssim") {
        return Err(Error::parse(context, "expected header frame,psnr,ssim"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::parse(context, format!("bad row {l:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(context, e));
            Ok(FrameMetrics { psnr: num(cols[1])?, ssim: num(cols[2])? })
        })
        .collect()
}
