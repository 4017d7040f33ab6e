//! Geometry-driven reference view selection.
//!
//! A capture view's score for a set of target cameras is the share of
//! memory points visible from those targets that were created from that
//! view. Views whose points are all occluded score zero and are never
//! selected.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, ViewId};
use crate::memory::GeoMemory;
use crate::render::{render_points, RenderOutput};

/// Memory indices that win at least one pixel in some target render.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisibleSet(BTreeSet<usize>);

impl VisibleSet {
    pub fn from_renders<'a>(renders: impl IntoIterator<Item = &'a RenderOutput>) -> Self {
        let mut set = BTreeSet::new();
        for r in renders {
            set.extend(
                r.winner_point
                    .as_slice()
                    .iter()
                    .filter(|&&w| w >= 0)
                    .map(|&w| w as usize),
            );
        }
        Self(set)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

/// Union of winning points over all cameras.
pub fn visible_set(mem: &GeoMemory, cams: &[Camera], radius: u32) -> VisibleSet {
    let renders: Vec<RenderOutput> = cams.iter().map(|c| render_points(mem, c, radius)).collect();
    VisibleSet::from_renders(&renders)
}

/// How visible geometry is counted towards a view's score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Each distinct visible point counts once.
    #[default]
    DistinctPoints,
    /// Each winning pixel counts once (a point covering many pixels weighs more).
    Pixels,
}

/// Per-view scores in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable(BTreeMap<ViewId, f64>);

impl ScoreTable {
    pub fn from_map(scores: BTreeMap<ViewId, f64>) -> Self {
        Self(scores)
    }

    pub fn get(&self, view: ViewId) -> f64 {
        self.0.get(&view).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ViewId, f64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    /// Restricts the table to views accepted by `keep`.
    pub fn restricted(&self, mut keep: impl FnMut(ViewId) -> bool) -> ScoreTable {
        ScoreTable(self.0.iter().filter(|(k, _)| keep(**k)).map(|(&k, &v)| (k, v)).collect())
    }

    /// Entries sorted by descending score then ascending id.
    pub fn ranked(&self) -> Vec<(ViewId, f64)> {
        let mut v: Vec<(ViewId, f64)> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// JSON rows `{view_id, score, selected}` in ranked order.
    pub fn to_rows(&self, selected: &[ViewId]) -> Vec<ScoreRow> {
        self.ranked()
            .into_iter()
            .map(|(view, score)| ScoreRow {
                view_id: view.0,
                score,
                selected: selected.contains(&view),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRow {
    pub view_id: u32,
    pub score: f64,
    pub selected: bool,
}

/// `s_i = |vis ∩ S_i| / |vis|` for every source view present in the
/// memory; all zero when nothing is visible.
pub fn score_views(mem: &GeoMemory, vis: &VisibleSet) -> ScoreTable {
    let mut counts: BTreeMap<ViewId, f64> = mem.source_views().into_iter().map(|v| (v, 0.0)).collect();
    let points = mem.points();
    for i in vis.iter() {
        *counts.get_mut(&points[i].source_view).expect("visible index is in memory") += 1.0;
    }
    let n = vis.len() as f64;
    if n > 0.0 {
        counts.values_mut().for_each(|c| *c /= n);
    }
    ScoreTable(counts)
}

/// Pixel-weighted variant: the share of covered target pixels whose winning
/// point came from each view.
pub fn score_pixels(mem: &GeoMemory, renders: &[RenderOutput]) -> ScoreTable {
    let mut counts: BTreeMap<ViewId, f64> = mem.source_views().into_iter().map(|v| (v, 0.0)).collect();
    let mut total = 0.0;
    for r in renders {
        for &s in r.source_index.as_slice() {
            if s >= 0 {
                *counts.entry(ViewId(s as u32)).or_insert(0.0) += 1.0;
                total += 1.0;
            }
        }
    }
    if total > 0.0 {
        counts.values_mut().for_each(|c| *c /= total);
    }
    ScoreTable(counts)
}

/// Scores the memory against a set of target cameras.
pub fn score_targets(mem: &GeoMemory, targets: &[Camera], radius: u32, weighting: Weighting) -> ScoreTable {
    let renders: Vec<RenderOutput> = targets.iter().map(|c| render_points(mem, c, radius)).collect();
    score_renders(mem, &renders, weighting)
}

/// Scores existing renders of `mem`.
pub fn score_renders(mem: &GeoMemory, renders: &[RenderOutput], weighting: Weighting) -> ScoreTable {
    match weighting {
        Weighting::DistinctPoints => score_views(mem, &VisibleSet::from_renders(renders)),
        Weighting::Pixels => score_pixels(mem, renders),
    }
}

/// Up to `k` views by descending score (ties by ascending id). Zero-score
/// views are dropped even when fewer than `k` remain; `k == 0` selects
/// nothing.
pub fn select_topk(scores: &ScoreTable, k: usize) -> Vec<ViewId> {
    scores
        .ranked()
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .take(k)
        .map(|(v, _)| v)
        .collect()
}

/// Field-of-view overlap baseline: the fraction of targets whose look-at
/// point (the point `focus_depth` along the optical axis) falls inside a
/// capture's image. Ignores occlusion; used only for comparisons.
pub fn fov_overlap_scores(captures: &[Camera], targets: &[Camera], focus_depth: f64) -> ScoreTable {
    let mut scores = BTreeMap::new();
    for cap in captures {
        let hits = targets
            .iter()
            .filter(|t| {
                let focus = t.pose.center() + t.pose.forward() * focus_depth;
                cap.project(&focus).is_some()
            })
            .count();
        let s = if targets.is_empty() {
            0.0
        } else {
            hits as f64 / targets.len() as f64
        };
        scores.insert(cap.view_id, s);
    }
    ScoreTable(scores)
}
