//! Segment-by-segment generation with a growing geometry memory.
//!
//! For each segment of the target trajectory: score the capture views
//! against the current memory, render the memory into every target camera,
//! hand both to the generator, add its frames to the view bank and rebuild
//! the memory from the enlarged bank.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, ViewId};
use crate::error::{Error, Result};
use crate::image_io::{self, DepthMap, Grid, RgbImage};
use crate::memory::{self, GeoMemory, ViewBank};
use crate::render::{render_points, RenderOutput};
use crate::retrieval::{self, ScoreRow, Weighting};
use crate::rng::substream;
use crate::scene::{raycast, CaptureFrame, SyntheticScene};

pub const DEFAULT_SEGMENT_LENGTH: usize = 40;

/// Trajectory split into consecutive chunks.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPlan {
    segments: Vec<Vec<Camera>>,
}

impl SegmentPlan {
    pub fn segments(&self) -> &[Vec<Camera>] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

pub fn plan_segments(trajectory: &[Camera], seg_len: usize) -> Result<SegmentPlan> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if seg_len == 0 {
        return Err(Error::InvalidArgument("segment length must be at least 1".into()));
    }
    Ok(SegmentPlan {
        segments: trajectory.chunks(seg_len).map(<[Camera]>::to_vec).collect(),
    })
}

/// Everything the generator sees for one segment.
#[derive(Clone, Debug)]
pub struct ConditioningBundle {
    pub segment: usize,
    /// Retrieved reference frames, best first.
    pub references: Vec<CaptureFrame>,
    /// Memory renders, one per target, from the memory current at assembly.
    pub renders: Vec<RenderOutput>,
    pub targets: Vec<Camera>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedFrame {
    pub color: RgbImage,
    /// Camera depth of the generated content, if the generator knows it.
    pub depth: Option<DepthMap>,
}

/// Produces one frame per target camera of a bundle.
pub trait Generator {
    fn generate(&mut self, bundle: &ConditioningBundle) -> Result<Vec<GeneratedFrame>>;
}

/// Exact ray-cast renderings of a known scene.
#[derive(Clone, Debug)]
pub struct OracleGenerator {
    pub scene: SyntheticScene,
}

impl OracleGenerator {
    pub fn new(scene: SyntheticScene) -> Self {
        Self { scene }
    }
}

impl Generator for OracleGenerator {
    fn generate(&mut self, bundle: &ConditioningBundle) -> Result<Vec<GeneratedFrame>> {
        Ok(bundle
            .targets
            .iter()
            .map(|cam| {
                let f = raycast(&self.scene, cam);
                GeneratedFrame {
                    color: f.color,
                    depth: Some(f.depth),
                }
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeConfig {
    /// Gaussian pixel noise, in 8-bit units.
    pub noise_std: f64,
    /// Square dropout holes per frame.
    pub holes_per_frame: usize,
    pub hole_size: u32,
    /// Return depth (zeroed inside holes) or leave depth to the loop.
    pub return_depth: bool,
    pub seed: u64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            noise_std: 5.0,
            holes_per_frame: 4,
            hole_size: 8,
            return_depth: true,
            seed: 0,
        }
    }
}

/// Oracle frames with pixel noise and black dropout squares.
#[derive(Clone, Debug)]
pub struct DegradedOracle {
    pub scene: SyntheticScene,
    pub config: DegradeConfig,
}

impl DegradedOracle {
    pub fn new(scene: SyntheticScene, config: DegradeConfig) -> Result<Self> {
        if !(config.noise_std >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise std must be non-negative, got {}", config.noise_std)));
        }
        Ok(Self { scene, config })
    }

    fn degrade(&self, cam: &Camera) -> GeneratedFrame {
        let cfg = &self.config;
        // One stream per target view keeps frames independent of segmenting.
        let mut rng = substream(cfg.seed, &format!("degrade/{}", cam.view_id));
        let frame = raycast(&self.scene, cam);
        let noise = Normal::new(0.0, cfg.noise_std).expect("validated std");
        let mut color = frame.color.map(|p| p.map(|c| (c as f64 + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8));
        let mut depth = frame.depth;
        let (w, h) = (cam.width(), cam.height());
        let size = cfg.hole_size.min(w).min(h);
        if size > 0 {
            for _ in 0..cfg.holes_per_frame {
                let x0 = rng.random_range(0..=w - size);
                let y0 = rng.random_range(0..=h - size);
                for y in y0..y0 + size {
                    for x in x0..x0 + size {
                        color.set(x, y, [0, 0, 0]);
                        depth.set(x, y, 0.0);
                    }
                }
            }
        }
        GeneratedFrame {
            color,
            depth: cfg.return_depth.then_some(depth),
        }
    }
}

impl Generator for DegradedOracle {
    fn generate(&mut self, bundle: &ConditioningBundle) -> Result<Vec<GeneratedFrame>> {
        Ok(bundle.targets.iter().map(|c| self.degrade(c)).collect())
    }
}

/// Depth for generated frames that arrive without it: the memory's own
/// depth rendered at the frame's camera.
pub struct MemoryDepth<'a> {
    pub memory: &'a GeoMemory,
    pub radius: u32,
}

impl memory::DepthProvider for MemoryDepth<'_> {
    fn depth(&self, camera: &Camera, _color: &RgbImage) -> Result<DepthMap> {
        Ok(render_points(self.memory, camera, self.radius).depth.map(|&d| d as f32))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    /// Reference views retrieved per segment.
    pub k: usize,
    pub seg_len: usize,
    /// Pixel stride when back-projecting frames into the memory.
    pub stride: u32,
    pub splat_radius: u32,
    /// Rebuild the memory after each segment. Off reproduces the no-update
    /// ablation.
    pub update_memory: bool,
    /// Let retrieval pick previously generated frames, not only captures.
    pub widen_pool: bool,
    pub weighting: Weighting,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            k: 3,
            seg_len: DEFAULT_SEGMENT_LENGTH,
            stride: 1,
            splat_radius: 1,
            update_memory: true,
            widen_pool: false,
            weighting: Weighting::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentDiagnostics {
    pub segment: usize,
    pub targets: Vec<ViewId>,
    pub scores: Vec<ScoreRow>,
    pub selected: Vec<ViewId>,
    pub top1_score: f64,
    /// Mean hole fraction of the conditioning renders.
    pub hole_fraction_before: f64,
    /// Mean hole fraction at the same targets after the memory update.
    pub hole_fraction_after: f64,
    /// Frames whose depth came from the memory instead of the generator.
    pub depth_fallbacks: usize,
    pub memory_points: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct LoopOutput {
    /// Generated frames in trajectory order.
    pub generated: Vec<CaptureFrame>,
    pub memory: GeoMemory,
    /// Captures plus every generated frame.
    pub bank: ViewBank,
    pub diagnostics: Vec<SegmentDiagnostics>,
}

fn mean_holes(renders: &[RenderOutput]) -> f64 {
    renders.iter().map(RenderOutput::hole_fraction).sum::<f64>() / renders.len().max(1) as f64
}

fn render_all(mem: &GeoMemory, cams: &[Camera], radius: u32) -> Vec<RenderOutput> {
    cams.par_iter().map(|c| render_points(mem, c, radius)).collect()
}

/// Runs the closed generation loop over `trajectory`.
pub fn run_loop(bank: &ViewBank, trajectory: &[Camera], generator: &mut dyn Generator, cfg: &LoopConfig) -> Result<LoopOutput> {
    let plan = plan_segments(trajectory, cfg.seg_len)?;
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let mut seen = BTreeSet::new();
    for cam in trajectory {
        if bank.contains(cam.view_id) || !seen.insert(cam.view_id) {
            return Err(Error::DuplicateView(cam.view_id));
        }
    }
    let captures: BTreeSet<ViewId> = bank.ids().collect();
    let mut work = bank.clone();
    let mut mem = memory::init_from_captures(bank, cfg.stride)?;
    let mut generated = Vec::with_capacity(trajectory.len());
    let mut diagnostics = Vec::with_capacity(plan.len());

    for (seg, targets) in plan.segments().iter().enumerate() {
        let start = Instant::now();
        let renders = render_all(&mem, targets, cfg.splat_radius);
        let mut scores = retrieval::score_renders(&mem, &renders, cfg.weighting);
        if !cfg.widen_pool {
            scores = scores.restricted(|v| captures.contains(&v));
        }
        let selected = retrieval::select_topk(&scores, cfg.k);
        let references = selected
            .iter()
            .map(|id| work.get(*id).cloned().expect("scored views are in the bank"))
            .collect();
        let hole_before = mean_holes(&renders);
        let bundle = ConditioningBundle {
            segment: seg,
            references,
            renders,
            targets: targets.clone(),
        };

        let frames = generator.generate(&bundle)?;
        if frames.len() != targets.len() {
            return Err(Error::GeneratorContract {
                segment: seg,
                expected: targets.len(),
                got: frames.len(),
            });
        }

        let mut fallbacks = 0;
        let fallback = MemoryDepth {
            memory: &mem,
            radius: cfg.splat_radius,
        };
        for (cam, frame) in targets.iter().zip(frames) {
            let depth = match frame.depth {
                Some(d) => d,
                None => {
                    fallbacks += 1;
                    memory::DepthProvider::depth(&fallback, cam, &frame.color)?
                }
            };
            let cf = CaptureFrame::new(*cam, frame.color, depth)?;
            work.insert(cf.clone())?;
            generated.push(cf);
        }

        if cfg.update_memory {
            mem = memory::update_memory(&mem, &work)?;
        }
        let hole_after = mean_holes(&render_all(&mem, targets, cfg.splat_radius));
        let top1_score = selected.first().map_or(0.0, |&v| scores.get(v));
        diagnostics.push(SegmentDiagnostics {
            segment: seg,
            targets: targets.iter().map(|c| c.view_id).collect(),
            scores: scores.to_rows(&selected),
            selected,
            top1_score,
            hole_fraction_before: hole_before,
            hole_fraction_after: hole_after,
            depth_fallbacks: fallbacks,
            memory_points: mem.len(),
            elapsed: start.elapsed(),
        });
    }

    Ok(LoopOutput {
        generated,
        memory: mem,
        bank: work,
        diagnostics,
    })
}

/// Image container used when writing frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    #[default]
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

impl LoopOutput {
    /// Writes `segNN/frame_<id>.<ext>` plus depth for every generated
    /// frame, `memory.ply` and `diagnostics.json`.
    pub fn write(&self, dir: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
        let dir = dir.as_ref();
        let mut frames = self.generated.iter();
        for d in &self.diagnostics {
            let seg_dir = dir.join(format!("seg{:02}", d.segment));
            std::fs::create_dir_all(&seg_dir).map_err(|e| Error::io(&seg_dir, e))?;
            for _ in &d.targets {
                let f = frames.next().expect("one frame per target");
                let stem = format!("frame_{}", f.camera.view_id);
                image_io::write_color(seg_dir.join(format!("{stem}.{}", format.extension())), &f.color)?;
                image_io::write_depth(seg_dir.join(format!("{stem}.depth")), &f.depth)?;
            }
        }
        memory::write_ply(dir.join("memory.ply"), &self.memory)?;
        let path = dir.join("diagnostics.json");
        let text = serde_json::to_string_pretty(&self.diagnostics).expect("diagnostics serialize");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn generated_colors(&self) -> Vec<RgbImage> {
        self.generated.iter().map(|f| f.color.clone()).collect()
    }
}

/// Ray-cast ground-truth colors for `cams`.
pub fn ground_truth(scene: &SyntheticScene, cams: &[Camera]) -> Vec<RgbImage> {
    cams.iter().map(|c| raycast(scene, c).color).collect()
}

/// Memory render colors at `cams` (holes black).
pub fn memory_renders(mem: &GeoMemory, cams: &[Camera], radius: u32) -> Vec<RgbImage> {
    render_all(mem, cams, radius).into_iter().map(|r| r.color).collect()
}

/// Boolean grid of pixels where `a` is set and `b` is not.
pub fn mask_difference(a: &Grid<bool>, b: &Grid<bool>) -> Result<Grid<bool>> {
    if a.dims() != b.dims() {
        return Err(Error::mismatch("mask size", format!("{:?}", a.dims()), format!("{:?}", b.dims())));
    }
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| x && !y).collect();
    Grid::from_vec(a.width(), a.height(), data)
}
