//! Token layout and context-window block-sparse attention masks.
//!
//! The sequence holds the retrieved reference frames first (a global memory
//! every target can read), then the target frames. Every frame occupies its
//! own slot of `h_tokens × w_tokens` tokens; nothing is pooled over time.
//! Tokens are ordered frame-major, then row-major within the frame.
//!
//! Attention is decided per frame pair and lifted to `(bt, bh, bw)` blocks:
//! a query block may read a key block when any frame it spans may read any
//! frame the key block spans. Partial blocks at the edges are padded
//! virtually; padded positions hold no tokens and never enter a softmax.

use std::collections::BTreeMap;
use std::path::Path;

use base64::Engine;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSize {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for BlockSize {
    fn default() -> Self {
        Self {
            frames: 2,
            height: 8,
            width: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameRole {
    Reference(usize),
    Target(usize),
}

/// Per-frame input channels stacked by the denoiser for each role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    CleanImage,
    NoisyLatent,
    Render,
    VisibilityMask,
}

const REFERENCE_CHANNELS: &[ChannelRole] = &[ChannelRole::CleanImage];
const TARGET_CHANNELS: &[ChannelRole] = &[
    ChannelRole::NoisyLatent,
    ChannelRole::Render,
    ChannelRole::VisibilityMask,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceLayout {
    pub num_refs: usize,
    pub num_targets: usize,
    pub h_tokens: usize,
    pub w_tokens: usize,
    pub block: BlockSize,
}

pub fn build_layout(
    num_refs: usize,
    num_targets: usize,
    h_tokens: usize,
    w_tokens: usize,
    block: BlockSize,
) -> Result<SequenceLayout> {
    if num_targets == 0 {
        return Err(Error::InvalidArgument("layout needs at least one target frame".into()));
    }
    if h_tokens == 0 || w_tokens == 0 {
        return Err(Error::InvalidArgument("token grid must be nonempty".into()));
    }
    if block.frames == 0 || block.height == 0 || block.width == 0 {
        return Err(Error::InvalidArgument("block dimensions must be positive".into()));
    }
    Ok(SequenceLayout {
        num_refs,
        num_targets,
        h_tokens,
        w_tokens,
        block,
    })
}

impl SequenceLayout {
    pub fn frames(&self) -> usize {
        self.num_refs + self.num_targets
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.h_tokens * self.w_tokens
    }

    pub fn total_tokens(&self) -> usize {
        self.frames() * self.tokens_per_frame()
    }

    pub fn temporal_blocks(&self) -> usize {
        self.frames().div_ceil(self.block.frames)
    }

    /// Spatial blocks per frame along (height, width).
    pub fn spatial_grid(&self) -> (usize, usize) {
        (
            self.h_tokens.div_ceil(self.block.height),
            self.w_tokens.div_ceil(self.block.width),
        )
    }

    pub fn spatial_blocks(&self) -> usize {
        let (h, w) = self.spatial_grid();
        h * w
    }

    pub fn num_blocks(&self) -> usize {
        self.temporal_blocks() * self.spatial_blocks()
    }

    pub fn frame_role(&self, frame: usize) -> FrameRole {
        if frame < self.num_refs {
            FrameRole::Reference(frame)
        } else {
            FrameRole::Target(frame - self.num_refs)
        }
    }

    pub fn channel_roles(&self, frame: usize) -> &'static [ChannelRole] {
        match self.frame_role(frame) {
            FrameRole::Reference(_) => REFERENCE_CHANNELS,
            FrameRole::Target(_) => TARGET_CHANNELS,
        }
    }

    pub fn token_frame(&self, token: usize) -> usize {
        token / self.tokens_per_frame()
    }

    pub fn token_block(&self, token: usize) -> usize {
        let frame = self.token_frame(token);
        let within = token % self.tokens_per_frame();
        let (y, x) = (within / self.w_tokens, within % self.w_tokens);
        let (_, bw) = self.spatial_grid();
        let spatial = (y / self.block.height) * bw + x / self.block.width;
        (frame / self.block.frames) * self.spatial_blocks() + spatial
    }

    /// Frame range `[start, end)` covered by temporal block `tb`.
    pub fn block_frames(&self, tb: usize) -> std::ops::Range<usize> {
        let start = tb * self.block.frames;
        start..(start + self.block.frames).min(self.frames())
    }
}

/// How the temporal window is placed near the ends of the target range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// A span of `2w + 1` targets (or all of them, if fewer) centered on the
    /// query and shifted inward at the ends, so every target sees the same
    /// number of neighbors.
    #[default]
    Clamped,
    /// Targets with `|g − f| ≤ w`, truncated at the ends.
    Centered,
}

/// What reference-frame queries may read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefQueries {
    /// References read only references.
    #[default]
    RefsOnly,
    /// References read every frame.
    AllFrames,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub window: usize,
    pub mode: WindowMode,
    pub ref_queries: RefQueries,
}

impl MaskConfig {
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            window: 8,
            mode: WindowMode::default(),
            ref_queries: RefQueries::default(),
        }
    }
}

/// Target indices `[start, end)` that target `t` may read.
pub fn target_window(t: usize, num_targets: usize, window: usize, mode: WindowMode) -> std::ops::Range<usize> {
    match mode {
        WindowMode::Centered => t.saturating_sub(window)..(t + window + 1).min(num_targets),
        WindowMode::Clamped => {
            let span = (2 * window + 1).min(num_targets);
            let start = t.saturating_sub(window).min(num_targets - span);
            start..start + span
        }
    }
}

/// Frame-level attention pattern (`frames × frames`, row = query).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameMask {
    pub layout: SequenceLayout,
    pub config: MaskConfig,
    allowed: Vec<bool>,
}

impl FrameMask {
    pub fn build(layout: &SequenceLayout, config: MaskConfig) -> Self {
        let f = layout.frames();
        let r = layout.num_refs;
        let mut allowed = vec![false; f * f];
        for q in 0..f {
            let row = &mut allowed[q * f..(q + 1) * f];
            match layout.frame_role(q) {
                FrameRole::Reference(_) => match config.ref_queries {
                    RefQueries::RefsOnly => row[..r].fill(true),
                    RefQueries::AllFrames => row.fill(true),
                },
                FrameRole::Target(t) => {
                    row[..r].fill(true);
                    for g in target_window(t, layout.num_targets, config.window, config.mode) {
                        row[r + g] = true;
                    }
                    row[q] = true;
                }
            }
        }
        Self {
            layout: *layout,
            config,
            allowed,
        }
    }

    pub fn allows(&self, query_frame: usize, key_frame: usize) -> bool {
        self.allowed[query_frame * self.layout.frames() + key_frame]
    }

    /// Frames readable by `query_frame`, ascending.
    pub fn attended(&self, query_frame: usize) -> Vec<usize> {
        let f = self.layout.frames();
        (0..f).filter(|&k| self.allows(query_frame, k)).collect()
    }

    pub fn allowed_pairs(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }

    pub fn density(&self) -> f64 {
        self.allowed_pairs() as f64 / self.allowed.len() as f64
    }

    pub fn to_block_mask(&self) -> BlockMask {
        let layout = &self.layout;
        let nt = layout.temporal_blocks();
        let mut temporal = vec![false; nt * nt];
        for tq in 0..nt {
            for tk in 0..nt {
                temporal[tq * nt + tk] = layout
                    .block_frames(tq)
                    .any(|fq| layout.block_frames(tk).any(|fk| self.allows(fq, fk)));
            }
        }
        let ns = layout.spatial_blocks();
        let nb = nt * ns;
        let mut bits = vec![false; nb * nb];
        for bq in 0..nb {
            for bk in 0..nb {
                bits[bq * nb + bk] = temporal[(bq / ns) * nt + bk / ns];
            }
        }
        BlockMask {
            layout: *layout,
            config: self.config,
            blocks: nb,
            bits,
        }
    }
}

/// Block-level attention mask (`blocks × blocks`, row = query block).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMask {
    pub layout: SequenceLayout,
    pub config: MaskConfig,
    blocks: usize,
    bits: Vec<bool>,
}

pub fn build_sparse_mask(layout: &SequenceLayout, window: usize) -> BlockMask {
    FrameMask::build(layout, MaskConfig::with_window(window)).to_block_mask()
}

/// A mask where every block reads every block.
pub fn full_mask(layout: &SequenceLayout) -> BlockMask {
    let nb = layout.num_blocks();
    BlockMask {
        layout: *layout,
        config: MaskConfig {
            window: layout.num_targets,
            mode: WindowMode::Clamped,
            ref_queries: RefQueries::AllFrames,
        },
        blocks: nb,
        bits: vec![true; nb * nb],
    }
}

/// Density summary of a block mask.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskDensity {
    pub allowed_pairs: usize,
    pub total_pairs: usize,
    pub density: f64,
    /// Number of readable key blocks → number of query blocks with that count.
    pub histogram: BTreeMap<usize, usize>,
}

impl BlockMask {
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn allows(&self, query_block: usize, key_block: usize) -> bool {
        self.bits[query_block * self.blocks + key_block]
    }

    pub fn density(&self) -> MaskDensity {
        let mut histogram = BTreeMap::new();
        for row in self.bits.chunks(self.blocks) {
            *histogram.entry(row.iter().filter(|&&b| b).count()).or_insert(0) += 1;
        }
        let allowed = self.bits.iter().filter(|&&b| b).count();
        MaskDensity {
            allowed_pairs: allowed,
            total_pairs: self.bits.len(),
            density: allowed as f64 / self.bits.len() as f64,
            histogram,
        }
    }

    /// Row-major bitset, least significant bit first within each byte.
    pub fn packed_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn to_doc(&self) -> MaskDoc {
        let l = &self.layout;
        MaskDoc {
            refs: l.num_refs,
            targets: l.num_targets,
            grid: [l.h_tokens, l.w_tokens],
            block_size: [l.block.frames, l.block.height, l.block.width],
            window: self.config.window,
            window_mode: self.config.mode,
            ref_queries: self.config.ref_queries,
            blocks: self.blocks,
            bits: base64::engine::general_purpose::STANDARD.encode(self.packed_bits()),
        }
    }

    pub fn from_doc(doc: &MaskDoc) -> Result<Self> {
        let layout = build_layout(
            doc.refs,
            doc.targets,
            doc.grid[0],
            doc.grid[1],
            BlockSize {
                frames: doc.block_size[0],
                height: doc.block_size[1],
                width: doc.block_size[2],
            },
        )?;
        if layout.num_blocks() != doc.blocks {
            return Err(Error::mismatch("mask block count", layout.num_blocks(), doc.blocks));
        }
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&doc.bits)
            .map_err(|e| Error::parse("mask bits", e))?;
        let n = doc.blocks * doc.blocks;
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::mismatch("mask byte length", n.div_ceil(8), bytes.len()));
        }
        let bits = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self {
            layout,
            config: MaskConfig {
                window: doc.window,
                mode: doc.window_mode,
                ref_queries: doc.ref_queries,
            },
            blocks: doc.blocks,
            bits,
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_doc()).expect("mask doc serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: MaskDoc = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        Self::from_doc(&doc)
    }
}

/// Serialized mask: layout header plus base64 bitset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskDoc {
    #[serde(rename = "R")]
    pub refs: usize,
    #[serde(rename = "T")]
    pub targets: usize,
    pub grid: [usize; 2],
    pub block_size: [usize; 3],
    pub window: usize,
    pub window_mode: WindowMode,
    pub ref_queries: RefQueries,
    pub blocks: usize,
    pub bits: String,
}

/// Masked scaled dot-product attention over token rows.
///
/// Token `i` reads token `j` when the mask allows their blocks. Softmax
/// subtracts the row maximum before exponentiating.
pub fn reference_attention(
    queries: &DMatrix<f64>,
    keys: &DMatrix<f64>,
    values: &DMatrix<f64>,
    mask: &BlockMask,
) -> Result<DMatrix<f64>> {
    let layout = &mask.layout;
    let n = layout.total_tokens();
    if queries.nrows() != n || keys.nrows() != n || values.nrows() != n {
        return Err(Error::mismatch(
            "token count",
            n,
            format!("q {}, k {}, v {}", queries.nrows(), keys.nrows(), values.nrows()),
        ));
    }
    if queries.ncols() != keys.ncols() {
        return Err(Error::mismatch("query/key width", queries.ncols(), keys.ncols()));
    }
    let scale = 1.0 / (queries.ncols() as f64).sqrt();
    let block_of: Vec<usize> = (0..n).map(|t| layout.token_block(t)).collect();
    let dv = values.ncols();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q = queries.row(i);
            let readable: Vec<usize> = (0..n).filter(|&j| mask.allows(block_of[i], block_of[j])).collect();
            let logits: Vec<f64> = readable.iter().map(|&j| q.dot(&keys.row(j)) * scale).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = weights.iter().sum();
            let mut out = vec![0.0; dv];
            for (&j, w) in readable.iter().zip(&weights) {
                for (o, v) in out.iter_mut().zip(values.row(j).iter()) {
                    *o += w / z * v;
                }
            }
            out
        })
        .collect();
    Ok(DMatrix::from_row_iterator(n, dv, rows.into_iter().flatten()))
}

/// Density CSV: `T,allowed_pairs,density` using frame-level pair counts for
/// each target count.
pub fn density_csv(num_refs: usize, target_counts: &[usize], config: MaskConfig) -> Result<String> {
    let mut out = String::from("T,allowed_pairs,density\n");
    for &t in target_counts {
        let layout = build_layout(num_refs, t, 1, 1, BlockSize::default())?;
        let mask = FrameMask::build(&layout, config);
        out.push_str(&format!("{t},{},{}\n", mask.allowed_pairs(), mask.density()));
    }
    Ok(out)
}
