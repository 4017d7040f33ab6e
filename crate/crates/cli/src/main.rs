//! `geoloop` command-line driver.

mod commands;
mod config;
mod failure;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use commands::{Ctx, Outcome};
use failure::{ConfigError, Kind};
use geoloop::pipeline::ImageFormat;

#[derive(Parser, Debug)]
#[command(name = "geoloop", version, about = "Geometry-memory view generation loop at desk scale")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "GEOLOOP_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GEOLOOP_THREADS")]
    threads: Option<usize>,
    /// JSON file with subcommand settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write PPM instead of PNG images.
    #[arg(long, global = true)]
    ppm: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random room with a capture set and target orbit.
    SynthScene(commands::SynthSceneOpts),
    /// Ray-cast a scene at given cameras into a view bank.
    Capture(commands::CaptureOpts),
    /// Back-project a view bank into a point memory.
    InitMemory(commands::InitMemoryOpts),
    /// Splat a point memory into cameras.
    RenderView(commands::RenderViewOpts),
    /// Score memory source views against target cameras.
    ScoreViews(commands::ScoreViewsOpts),
    /// Run the segment-by-segment generation loop.
    RunLoop(commands::RunLoopOpts),
    /// Build a block-sparse attention mask.
    AttnMask(commands::AttnMaskOpts),
    /// Train a one-dimensional student against a Gaussian teacher.
    DmdDemo(commands::DmdDemoOpts),
    /// PSNR and SSIM between two image directories.
    Eval(commands::EvalOpts),
    /// Aggregate run-loop outputs into one table.
    Report(commands::ReportOpts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthScene(_) => "synth-scene",
            Command::Capture(_) => "capture",
            Command::InitMemory(_) => "init-memory",
            Command::RenderView(_) => "render-view",
            Command::ScoreViews(_) => "score-views",
            Command::RunLoop(_) => "run-loop",
            Command::AttnMask(_) => "attn-mask",
            Command::DmdDemo(_) => "dmd-demo",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    config_file: Option<&'a Path>,
    threads: usize,
    image_format: ImageFormat,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    elapsed_s: f64,
    #[serde(flatten)]
    outcome: Outcome,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let started = unix_ms();
    let clock = Instant::now();
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let ctx = Ctx {
        out: cli.out.clone(),
        format: if cli.ppm { ImageFormat::Ppm } else { ImageFormat::Png },
    };
    let file = cli.config.as_deref();
    let outcome = match &cli.command {
        Command::SynthScene(o) => commands::synth_scene(&ctx, config::merge(o, file)?),
        Command::Capture(o) => commands::capture(&ctx, config::merge(o, file)?),
        Command::InitMemory(o) => commands::init_memory(&ctx, config::merge(o, file)?),
        Command::RenderView(o) => commands::render_view(&ctx, config::merge(o, file)?),
        Command::ScoreViews(o) => commands::score_views(&ctx, config::merge(o, file)?),
        Command::RunLoop(o) => commands::run_loop(&ctx, config::merge(o, file)?),
        Command::AttnMask(o) => commands::attn_mask(&ctx, config::merge(o, file)?),
        Command::DmdDemo(o) => commands::dmd_demo(&ctx, config::merge(o, file)?),
        Command::Eval(o) => commands::eval(&ctx, config::merge(o, file)?),
        Command::Report(o) => commands::report(&ctx, config::merge(o, file)?),
    }?;
    let manifest = Manifest {
        tool: "geoloop",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        argv: std::env::args().collect(),
        config_file: file,
        threads: rayon::current_num_threads(),
        image_format: ctx.format,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        elapsed_s: clock.elapsed().as_secs_f64(),
        outcome,
    };
    let path = cli.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", json!({ "command": manifest.command, "out": cli.out, "summary": manifest.outcome.summary }));
    Ok(())
}

fn fail(kind: Kind, message: String) -> ExitCode {
    eprintln!("{}", failure::render(kind, message));
    ExitCode::from(kind.code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail(Kind::Usage, e.to_string().trim().to_string()),
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(failure::classify(&e), failure::message(&e)),
    }
}
