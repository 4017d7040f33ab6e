//! Subcommand options and implementations.
//!
//! Every option struct doubles as the schema of the `--config` file: keys
//! are the flag names with underscores, and flags given on the command line
//! win over the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use geoloop::attention::{self, BlockSize, MaskConfig, RefQueries, WindowMode};
use geoloop::bank::{read_bank, write_bank};
use geoloop::camera::{read_trajectory, write_trajectory};
use geoloop::distill::{self, GaussianModel, SigmaNorm, TimeSampling, TrainConfig};
use geoloop::memory::{self, ViewBank};
use geoloop::metrics::evaluate;
use geoloop::pipeline::{self, DegradeConfig, DegradedOracle, Generator, ImageFormat, LoopConfig, OracleGenerator};
use geoloop::report::{self, RunRecord};
use geoloop::retrieval::{self, Weighting};
use geoloop::rng::subseed;
use geoloop::scenario::{preset_scenario, Preset};
use geoloop::{image_io, Camera, RgbImage, SyntheticScene};

use crate::failure::ConfigError;

/// File written by `run-loop` for later use by `report`.
pub const RUN_FILE: &str = "run.json";

/// Settings shared by every subcommand.
pub struct Ctx {
    pub out: PathBuf,
    pub format: ImageFormat,
}

/// What a command reports for the manifest besides its resolved config.
#[derive(Default, Serialize)]
pub struct Outcome {
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub timings: BTreeMap<String, f64>,
    pub summary: Value,
}

impl Outcome {
    fn new(config: &impl Serialize) -> Self {
        Self {
            config: serde_json::to_value(config).expect("config serializes"),
            ..Self::default()
        }
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(name.into(), start.elapsed().as_secs_f64());
        out
    }
}

/// Parses a snake_case serde enum from a flag value (dashes allowed).
fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_scene(path: &Path) -> Result<SyntheticScene> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?;
    let scene: SyntheticScene = serde_json::from_str(&text).with_context(|| format!("parsing scene {}", path.display()))?;
    scene.validate()?;
    Ok(scene)
}

fn nonzero(name: &str, v: impl Into<u64>) -> Result<()> {
    if v.into() == 0 {
        return Err(ConfigError(format!("{name} must be positive")).into());
    }
    Ok(())
}

// ---------------------------------------------------------------- synth-scene

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSceneOpts {
    /// Root seed; the scene uses its "scene" sub-stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Which orbit frames become captures: interpolation or extrapolation.
    #[arg(long, value_parser = serde_enum::<Preset>)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
}

#[derive(Debug, Serialize)]
struct SynthScene {
    seed: u64,
    preset: Preset,
    width: u32,
    height: u32,
}

pub fn synth_scene(ctx: &Ctx, o: SynthSceneOpts) -> Result<Outcome> {
    let cfg = SynthScene {
        seed: o.seed.unwrap_or(0),
        preset: o.preset.unwrap_or(Preset::Interpolation),
        width: o.width.unwrap_or(224),
        height: o.height.unwrap_or(128),
    };
    let mut out = Outcome::new(&cfg);
    let scene_seed = subseed(cfg.seed, "scene");
    out.seeds.insert("root".into(), cfg.seed);
    out.seeds.insert("scene".into(), scene_seed);
    let s = preset_scenario(cfg.preset, scene_seed, cfg.width, cfg.height)?;
    write_json(&ctx.out.join("scene.json"), &s.scene)?;
    write_trajectory(ctx.out.join("captures.json"), &s.captures.cameras())?;
    write_trajectory(ctx.out.join("targets.json"), &s.targets)?;
    out.summary = json!({ "boxes": s.scene.boxes.len(), "captures": s.captures.len(), "targets": s.targets.len() });
    Ok(out)
}

// -------------------------------------------------------------------- capture

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureOpts {
    /// Scene JSON written by synth-scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Cameras to ray-cast (JSON array).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

pub fn capture(ctx: &Ctx, o: CaptureOpts) -> Result<Outcome> {
    let (Some(scene_path), Some(traj_path)) = (o.scene.clone(), o.trajectory.clone()) else {
        return Err(ConfigError("capture needs --scene and --trajectory".into()).into());
    };
    let mut out = Outcome::new(&o);
    let cams = read_trajectory(&traj_path)?;
    let scene = read_scene(&scene_path)?;
    let frames: Vec<_> = out.time("raycast", || cams.par_iter().map(|c| geoloop::raycast(&scene, c)).collect());
    let bank = ViewBank::from_frames(frames)?;
    write_bank(&ctx.out, &bank, ctx.format)?;
    out.inputs.insert("scene".into(), scene_path);
    out.inputs.insert("trajectory".into(), traj_path);
    out.summary = json!({ "views": bank.len() });
    Ok(out)
}

// ---------------------------------------------------------------- init-memory

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitMemoryOpts {
    /// Bank directory written by capture.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Back-project every n-th pixel in each direction.
    #[arg(long)]
    pub stride: Option<u32>,
}

pub fn init_memory(ctx: &Ctx, o: InitMemoryOpts) -> Result<Outcome> {
    let Some(bank_dir) = o.bank.clone() else {
        return Err(ConfigError("init-memory needs --bank".into()).into());
    };
    let stride = o.stride.unwrap_or(1);
    nonzero("stride", stride)?;
    let mut out = Outcome::new(&json!({ "bank": bank_dir, "stride": stride }));
    let bank = read_bank(&bank_dir)?;
    let mem = out.time("init", || memory::init_from_captures(&bank, stride))?;
    memory::write_ply(ctx.out.join("memory.ply"), &mem)?;
    out.inputs.insert("bank".into(), bank_dir);
    out.summary = json!({ "points": mem.len(), "per_view": mem.partition_counts() });
    Ok(out)
}

// ---------------------------------------------------------------- render-view

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderViewOpts {
    /// Memory PLY.
    #[arg(long)]
    pub memory: Option<PathBuf>,
    /// Cameras to render (JSON array).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Splat radius in pixels.
    #[arg(long)]
    pub radius: Option<u32>,
}

fn memory_and_cameras(memory: &Option<PathBuf>, trajectory: &Option<PathBuf>, cmd: &str) -> Result<(PathBuf, PathBuf)> {
    match (memory, trajectory) {
        (Some(m), Some(t)) => Ok((m.clone(), t.clone())),
        _ => Err(ConfigError(format!("{cmd} needs --memory and --trajectory")).into()),
    }
}

pub fn render_view(ctx: &Ctx, o: RenderViewOpts) -> Result<Outcome> {
    let (mem_path, traj_path) = memory_and_cameras(&o.memory, &o.trajectory, "render-view")?;
    let radius = o.radius.unwrap_or(1);
    let mut out = Outcome::new(&json!({ "memory": mem_path, "trajectory": traj_path, "radius": radius }));
    let cams = read_trajectory(&traj_path)?;
    let mem = memory::read_ply(&mem_path)?;
    let renders: Vec<_> = out.time("render", || cams.par_iter().map(|c| geoloop::render_points(&mem, c, radius)).collect());
    let mut holes = String::from("view_id,hole_fraction\n");
    for (cam, r) in cams.iter().zip(&renders) {
        let stem = format!("view_{:04}", cam.view_id.0);
        match ctx.format {
            ImageFormat::Png => r.write_files(&ctx.out, &stem)?,
            ImageFormat::Ppm => {
                image_io::write_ppm(ctx.out.join(format!("{stem}_color.ppm")), &r.color)?;
                image_io::write_depth(ctx.out.join(format!("{stem}.depth")), &r.depth.map(|&d| d as f32))?;
            }
        }
        writeln!(holes, "{},{}", cam.view_id.0, r.hole_fraction())?;
    }
    write_text(&ctx.out.join("holes.csv"), &holes)?;
    out.inputs.insert("memory".into(), mem_path);
    out.inputs.insert("trajectory".into(), traj_path);
    out.summary = json!({ "views": renders.len() });
    Ok(out)
}

// ---------------------------------------------------------------- score-views

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreViewsOpts {
    /// Memory PLY.
    #[arg(long)]
    pub memory: Option<PathBuf>,
    /// Target cameras (JSON array).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long)]
    pub radius: Option<u32>,
    /// Number of views to select.
    #[arg(long)]
    pub k: Option<usize>,
    /// distinct-points or pixels.
    #[arg(long, value_parser = serde_enum::<Weighting>)]
    pub weighting: Option<Weighting>,
}

pub fn score_views(ctx: &Ctx, o: ScoreViewsOpts) -> Result<Outcome> {
    let (mem_path, traj_path) = memory_and_cameras(&o.memory, &o.trajectory, "score-views")?;
    let radius = o.radius.unwrap_or(1);
    let k = o.k.unwrap_or(3);
    let weighting = o.weighting.unwrap_or_default();
    let mut out = Outcome::new(&json!({
        "memory": mem_path, "trajectory": traj_path, "radius": radius, "k": k, "weighting": weighting,
    }));
    let cams = read_trajectory(&traj_path)?;
    if cams.is_empty() {
        return Err(geoloop::Error::EmptyTrajectory.into());
    }
    let mem = memory::read_ply(&mem_path)?;
    let scores = out.time("score", || retrieval::score_targets(&mem, &cams, radius, weighting));
    let selected = retrieval::select_topk(&scores, k);
    let rows = scores.to_rows(&selected);
    let mut csv = String::from("view_id,score,selected\n");
    for r in &rows {
        writeln!(csv, "{},{},{}", r.view_id, r.score, r.selected)?;
    }
    write_text(&ctx.out.join("scores.csv"), &csv)?;
    write_json(&ctx.out.join("scores.json"), &json!({ "selected": selected, "scores": rows }))?;
    out.inputs.insert("memory".into(), mem_path);
    out.inputs.insert("trajectory".into(), traj_path);
    out.summary = json!({ "selected": selected });
    Ok(out)
}

// ------------------------------------------------------------------- run-loop

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Exact ray-cast frames.
    #[default]
    Oracle,
    /// Ray-cast frames with pixel noise and dropout holes.
    Degraded,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLoopOpts {
    /// Built-in scenario (default interpolation unless --scene/--bank/--trajectory are given).
    #[arg(long, value_parser = serde_enum::<Preset>, conflicts_with_all = ["scene", "bank", "trajectory"])]
    pub preset: Option<Preset>,
    /// Scene JSON, used by the generator and for ground truth.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Capture bank directory.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Target cameras (JSON array).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Image size for presets.
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorKind>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seg_len: Option<usize>,
    #[arg(long)]
    pub stride: Option<u32>,
    #[arg(long)]
    pub splat_radius: Option<u32>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub update_memory: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub widen_pool: Option<bool>,
    #[arg(long, value_parser = serde_enum::<Weighting>)]
    pub weighting: Option<Weighting>,
    /// Degraded generator: pixel noise std in 8-bit units.
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub holes_per_frame: Option<usize>,
    #[arg(long)]
    pub hole_size: Option<u32>,
    /// Degraded generator: return depth, or let the loop fall back to memory depth.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub return_depth: Option<bool>,
    /// Row label in metrics.csv.
    #[arg(long)]
    pub label: Option<String>,
    /// Put wall time into metrics.csv (makes reruns differ).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub record_time: Option<bool>,
}

#[derive(Debug, Serialize)]
struct RunLoop {
    source: Value,
    seed: u64,
    generator: GeneratorKind,
    #[serde(rename = "loop")]
    loop_cfg: LoopConfig,
    degrade: Option<DegradeConfig>,
    scenario: String,
    label: String,
    record_time: bool,
}

struct Inputs {
    name: String,
    scene: SyntheticScene,
    bank: ViewBank,
    targets: Vec<Camera>,
    seg_len: usize,
}

fn loop_inputs(o: &RunLoopOpts, seed: u64, out: &mut Outcome) -> Result<(Inputs, Value)> {
    let files = o.scene.is_some() || o.bank.is_some() || o.trajectory.is_some();
    if o.preset.is_some() && files {
        return Err(ConfigError("preset cannot be combined with scene, bank or trajectory".into()).into());
    }
    if files {
        let (Some(scene), Some(bank), Some(traj)) = (&o.scene, &o.bank, &o.trajectory) else {
            return Err(ConfigError("run-loop needs all of --scene, --bank and --trajectory".into()).into());
        };
        let targets = read_trajectory(traj)?;
        let bank_frames = read_bank(bank)?;
        let scene_doc = read_scene(scene)?;
        out.inputs.insert("scene".into(), scene.clone());
        out.inputs.insert("bank".into(), bank.clone());
        out.inputs.insert("trajectory".into(), traj.clone());
        let source = json!({ "scene": scene, "bank": bank, "trajectory": traj });
        let name = traj.file_stem().map_or_else(|| "custom".into(), |s| s.to_string_lossy().into_owned());
        return Ok((
            Inputs { name, scene: scene_doc, bank: bank_frames, targets, seg_len: pipeline::DEFAULT_SEGMENT_LENGTH },
            source,
        ));
    }
    let preset = o.preset.unwrap_or(Preset::Interpolation);
    let (w, h) = (o.width.unwrap_or(224), o.height.unwrap_or(128));
    let scene_seed = subseed(seed, "scene");
    out.seeds.insert("scene".into(), scene_seed);
    let s = preset_scenario(preset, scene_seed, w, h)?;
    let source = json!({ "preset": preset, "width": w, "height": h });
    Ok((
        Inputs { name: s.name, scene: s.scene, bank: s.captures, targets: s.targets, seg_len: s.seg_len },
        source,
    ))
}

pub fn run_loop(ctx: &Ctx, o: RunLoopOpts) -> Result<Outcome> {
    let seed = o.seed.unwrap_or(0);
    let mut out = Outcome::default();
    out.seeds.insert("root".into(), seed);
    let (inputs, source) = loop_inputs(&o, seed, &mut out)?;

    let defaults = LoopConfig::default();
    let loop_cfg = LoopConfig {
        k: o.k.unwrap_or(defaults.k),
        seg_len: o.seg_len.unwrap_or(inputs.seg_len),
        stride: o.stride.unwrap_or(defaults.stride),
        splat_radius: o.splat_radius.unwrap_or(defaults.splat_radius),
        update_memory: o.update_memory.unwrap_or(defaults.update_memory),
        widen_pool: o.widen_pool.unwrap_or(defaults.widen_pool),
        weighting: o.weighting.unwrap_or(defaults.weighting),
    };
    nonzero("k", loop_cfg.k as u64)?;
    nonzero("seg_len", loop_cfg.seg_len as u64)?;
    nonzero("stride", loop_cfg.stride)?;
    let kind = o.generator.unwrap_or_default();
    let degrade = match kind {
        GeneratorKind::Oracle => None,
        GeneratorKind::Degraded => {
            let d = DegradeConfig::default();
            let gen_seed = subseed(seed, "generator");
            out.seeds.insert("generator".into(), gen_seed);
            Some(DegradeConfig {
                noise_std: o.noise_std.unwrap_or(d.noise_std),
                holes_per_frame: o.holes_per_frame.unwrap_or(d.holes_per_frame),
                hole_size: o.hole_size.unwrap_or(d.hole_size),
                return_depth: o.return_depth.unwrap_or(d.return_depth),
                seed: gen_seed,
            })
        }
    };
    let label = o.label.clone().unwrap_or_else(|| {
        let upd = if loop_cfg.update_memory { "update" } else { "no_update" };
        format!("{}_k{}_{upd}", serde_json::to_value(kind).unwrap().as_str().unwrap(), loop_cfg.k)
    });
    let cfg = RunLoop {
        source,
        seed,
        generator: kind,
        loop_cfg,
        degrade,
        scenario: inputs.name.clone(),
        label,
        record_time: o.record_time.unwrap_or(false),
    };
    out.config = serde_json::to_value(&cfg)?;

    let mut generator: Box<dyn Generator> = match cfg.degrade {
        None => Box::new(OracleGenerator::new(inputs.scene.clone())),
        Some(d) => Box::new(DegradedOracle::new(inputs.scene.clone(), d)?),
    };
    let start = Instant::now();
    let result = pipeline::run_loop(&inputs.bank, &inputs.targets, generator.as_mut(), &cfg.loop_cfg)?;
    let loop_time = start.elapsed().as_secs_f64();
    out.timings.insert("loop".into(), loop_time);
    for d in &result.diagnostics {
        out.timings.insert(format!("segment_{:02}", d.segment), d.elapsed.as_secs_f64());
    }

    result.write(&ctx.out, ctx.format)?;
    let truth = out.time("ground_truth", || pipeline::ground_truth(&inputs.scene, &inputs.targets));
    let eval = out.time("evaluate", || evaluate(&result.generated_colors(), &truth))?;
    write_text(&ctx.out.join("frames.csv"), &report::frames_csv(&eval.frames))?;
    let time_s = cfg.record_time.then_some(loop_time);
    let record = RunRecord::new(&cfg.scenario, &cfg.label, eval.frames.clone(), &result.diagnostics, time_s);
    write_json(&ctx.out.join(RUN_FILE), &record)?;
    report::aggregate(std::slice::from_ref(&record))?.write(&ctx.out, "metrics")?;
    std::fs::remove_file(ctx.out.join("metrics.json")).ok();

    out.summary = json!({
        "frames": result.generated.len(),
        "segments": result.diagnostics.len(),
        "mean_psnr": eval.mean_psnr,
        "mean_ssim": eval.mean_ssim,
        "memory_points": result.memory.len(),
    });
    Ok(out)
}

// ------------------------------------------------------------------ attn-mask

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttnMaskOpts {
    /// Reference frames.
    #[arg(long)]
    pub refs: Option<usize>,
    /// Target frames.
    #[arg(long)]
    pub targets: Option<usize>,
    /// Token grid height per frame.
    #[arg(long)]
    pub grid_h: Option<usize>,
    /// Token grid width per frame.
    #[arg(long)]
    pub grid_w: Option<usize>,
    /// Block size as frames,height,width.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub block: Option<Vec<usize>>,
    /// Neighbors on each side of a target frame.
    #[arg(long)]
    pub window: Option<usize>,
    /// clamped or centered.
    #[arg(long, value_parser = serde_enum::<WindowMode>)]
    pub window_mode: Option<WindowMode>,
    /// refs-only or all-frames.
    #[arg(long, value_parser = serde_enum::<RefQueries>)]
    pub ref_queries: Option<RefQueries>,
    /// Target counts for density.csv (default: --targets).
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
}

#[derive(Debug, Serialize)]
struct AttnMask {
    refs: usize,
    targets: usize,
    grid: [usize; 2],
    block: BlockSize,
    mask: MaskConfig,
    sweep: Vec<usize>,
}

pub fn attn_mask(ctx: &Ctx, o: AttnMaskOpts) -> Result<Outcome> {
    let defaults = MaskConfig::default();
    let block = match o.block.as_deref() {
        None => BlockSize::default(),
        Some(&[frames, height, width]) => BlockSize { frames, height, width },
        Some(other) => bail!(ConfigError(format!("block needs 3 values, got {}", other.len()))),
    };
    let targets = o.targets.unwrap_or(40);
    let cfg = AttnMask {
        refs: o.refs.unwrap_or(3),
        targets,
        grid: [o.grid_h.unwrap_or(32), o.grid_w.unwrap_or(56)],
        block,
        mask: MaskConfig {
            window: o.window.unwrap_or(defaults.window),
            mode: o.window_mode.unwrap_or(defaults.mode),
            ref_queries: o.ref_queries.unwrap_or(defaults.ref_queries),
        },
        sweep: o.sweep.clone().unwrap_or_else(|| vec![targets]),
    };
    let mut out = Outcome::new(&cfg);
    let layout = attention::build_layout(cfg.refs, cfg.targets, cfg.grid[0], cfg.grid[1], cfg.block)?;
    let frames = attention::FrameMask::build(&layout, cfg.mask);
    let blocks = out.time("block_mask", || frames.to_block_mask());
    blocks.write_json(ctx.out.join("mask.json"))?;
    write_text(&ctx.out.join("density.csv"), &attention::density_csv(cfg.refs, &cfg.sweep, cfg.mask)?)?;
    let f = layout.frames();
    let density = json!({
        "frames": { "allowed_pairs": frames.allowed_pairs(), "total_pairs": f * f, "density": frames.density() },
        "blocks": blocks.density(),
        "tokens": layout.total_tokens(),
    });
    write_json(&ctx.out.join("density.json"), &density)?;
    out.summary = density;
    Ok(out)
}

// ------------------------------------------------------------------- dmd-demo

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SigmaNormKind {
    BatchMeanAbs,
    SampleDistance,
    Constant,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmdDemoOpts {
    #[arg(long, allow_negative_numbers = true)]
    pub teacher_mean: Option<f64>,
    #[arg(long)]
    pub teacher_std: Option<f64>,
    /// Initial student mean.
    #[arg(long, allow_negative_numbers = true)]
    pub init_mean: Option<f64>,
    /// Initial student std.
    #[arg(long)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum)]
    pub sigma_norm: Option<SigmaNormKind>,
    /// Normalizer value when --sigma-norm constant.
    #[arg(long)]
    pub sigma_const: Option<f64>,
    /// discrete or uniform.
    #[arg(long, value_parser = serde_enum::<TimeSampling>)]
    pub time_sampling: Option<TimeSampling>,
    #[arg(long)]
    pub critic_refresh: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Root seed; training uses its "distill" sub-stream.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct DmdDemo {
    teacher: GaussianModel,
    init: [f64; 2],
    seed: u64,
    train: TrainConfig,
}

pub fn dmd_demo(ctx: &Ctx, o: DmdDemoOpts) -> Result<Outcome> {
    let d = TrainConfig::default();
    let seed = o.seed.unwrap_or(0);
    let sigma_norm = match (o.sigma_norm, o.sigma_const) {
        (None, None) => d.sigma_norm,
        (Some(SigmaNormKind::BatchMeanAbs), None) => SigmaNorm::BatchMeanAbs,
        (Some(SigmaNormKind::SampleDistance), None) => SigmaNorm::SampleDistance,
        (Some(SigmaNormKind::Constant) | None, Some(c)) => SigmaNorm::Constant(c),
        (Some(SigmaNormKind::Constant), None) => bail!(ConfigError("constant normalizer needs sigma_const".into())),
        (Some(_), Some(_)) => bail!(ConfigError("sigma_const only applies to the constant normalizer".into())),
    };
    let cfg = DmdDemo {
        teacher: GaussianModel::new(o.teacher_mean.unwrap_or(2.0), o.teacher_std.unwrap_or(0.5))?,
        init: [o.init_mean.unwrap_or(0.0), o.init_std.unwrap_or(1.0)],
        seed,
        train: TrainConfig {
            iters: o.iters.unwrap_or(d.iters),
            batch: o.batch.unwrap_or(d.batch),
            eta: o.eta.unwrap_or(d.eta),
            lr: o.lr.unwrap_or(d.lr),
            sigma_norm,
            time_sampling: o.time_sampling.unwrap_or(d.time_sampling),
            critic_refresh: o.critic_refresh.unwrap_or(d.critic_refresh),
            seed: subseed(seed, "distill"),
            tol: o.tol.unwrap_or(d.tol),
        },
    };
    let mut out = Outcome::new(&cfg);
    out.seeds.insert("root".into(), seed);
    out.seeds.insert("distill".into(), cfg.train.seed);
    let res = out.time("train", || distill::toy_dmd_train(cfg.teacher, (cfg.init[0], cfg.init[1]), &cfg.train))?;
    write_text(&ctx.out.join("curve.csv"), &res.curve_csv())?;
    let summary = json!({
        "teacher_mean": cfg.teacher.mean,
        "teacher_std": cfg.teacher.std,
        "m_final": res.summary.m_final,
        "s_final": res.summary.s_final,
        "converged": res.summary.converged,
        "iters": cfg.train.iters,
        "tol": cfg.train.tol,
    });
    write_json(&ctx.out.join("summary.json"), &summary)?;
    out.summary = summary;
    Ok(out)
}

// ----------------------------------------------------------------------- eval

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOpts {
    /// Directory of generated images (.png or .ppm).
    #[arg(long)]
    pub generated: Option<PathBuf>,
    /// Directory of ground-truth images with the same file names.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("ppm"));
        if is_image {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.insert(name, path);
        }
    }
    Ok(files)
}

pub fn eval(ctx: &Ctx, o: EvalOpts) -> Result<Outcome> {
    let (Some(gen_dir), Some(truth_dir)) = (o.generated.clone(), o.truth.clone()) else {
        return Err(ConfigError("eval needs --generated and --truth".into()).into());
    };
    let mut out = Outcome::new(&o);
    let generated = image_files(&gen_dir)?;
    let truth = image_files(&truth_dir)?;
    if generated.keys().ne(truth.keys()) {
        let missing: Vec<_> = generated.keys().filter(|k| !truth.contains_key(*k)).chain(truth.keys().filter(|k| !generated.contains_key(*k))).collect();
        return Err(geoloop::Error::Parse {
            context: format!("{} vs {}", gen_dir.display(), truth_dir.display()),
            message: format!("image sets differ: {missing:?}"),
        }
        .into());
    }
    let load = |files: &BTreeMap<String, PathBuf>| -> Result<Vec<RgbImage>> {
        files.values().map(|p| Ok(image_io::read_color(p)?)).collect()
    };
    let (g, t) = (load(&generated)?, load(&truth)?);
    let ev = out.time("evaluate", || evaluate(&g, &t))?;
    write_text(&ctx.out.join("frames.csv"), &report::frames_csv(&ev.frames))?;
    let names: Vec<&String> = generated.keys().collect();
    write_json(&ctx.out.join("eval.json"), &json!({ "files": names, "evaluation": ev }))?;
    out.inputs.insert("generated".into(), gen_dir);
    out.inputs.insert("truth".into(), truth_dir);
    out.summary = json!({ "frames": ev.frames.len(), "mean_psnr": ev.mean_psnr, "mean_ssim": ev.mean_ssim });
    Ok(out)
}

// --------------------------------------------------------------------- report

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOpts {
    /// run-loop output directories (repeatable).
    #[arg(long = "run")]
    pub runs: Option<Vec<PathBuf>>,
}

pub fn report(ctx: &Ctx, o: ReportOpts) -> Result<Outcome> {
    let runs = o.runs.clone().unwrap_or_default();
    if runs.is_empty() {
        return Err(ConfigError("report needs at least one --run".into()).into());
    }
    let mut out = Outcome::new(&o);
    let records = runs
        .iter()
        .map(|dir| {
            let path = dir.join(RUN_FILE);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<RunRecord>(&text).with_context(|| format!("parsing {}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let rep = report::aggregate(&records)?;
    rep.write(&ctx.out, "report")?;
    for (i, dir) in runs.into_iter().enumerate() {
        out.inputs.insert(format!("run_{i:02}"), dir);
    }
    out.summary = json!({ "rows": rep.rows.len() });
    Ok(out)
}
