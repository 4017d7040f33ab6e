//! Z-buffer point splatting of the geometry memory into a target camera.
//!
//! Each visible point covers the square of pixels within Chebyshev distance
//! `radius` of the pixel its projection falls in. Per pixel the covering
//! point with the smallest depth wins; equal depths go to the smaller point
//! index. The winner is the lexicographic minimum of `(depth, index)`, so
//! the parallel row-band traversal below gives the same result as a
//! sequential pass in index order.

use std::path::Path;

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::Result;
use crate::image_io::{self, Grid, Rgb8, RgbImage};
use crate::memory::GeoMemory;

pub const EMPTY_COLOR: Rgb8 = [0, 0, 0];

/// Conditioning channels rendered from the memory.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub color: RgbImage,
    /// True where at least one point was splatted.
    pub mask: Grid<bool>,
    /// Winning depth; 0 where `mask` is false.
    pub depth: Grid<f64>,
    /// Source view id of the winning point, -1 where empty.
    pub source_index: Grid<i64>,
    /// Index of the winning point in the memory, -1 where empty.
    pub winner_point: Grid<i64>,
}

impl RenderOutput {
    pub fn width(&self) -> u32 {
        self.mask.width()
    }

    pub fn height(&self) -> u32 {
        self.mask.height()
    }

    /// Fraction of pixels no point reached.
    pub fn hole_fraction(&self) -> f64 {
        hole_fraction(self)
    }

    pub fn write_files(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        image_io::write_png_rgb(dir.join(format!("{stem}_color.png")), &self.color)?;
        image_io::write_mask_png(dir.join(format!("{stem}_mask.png")), &self.mask)?;
        let ids = self.source_index.map(|&s| (s + 1).clamp(0, u16::MAX as i64) as u16);
        image_io::write_u16_png(dir.join(format!("{stem}_source.png")), &ids)?;
        let depth = self.depth.map(|&d| d as f32);
        image_io::write_depth(dir.join(format!("{stem}.depth")), &depth)
    }
}

pub fn hole_fraction(out: &RenderOutput) -> f64 {
    let total = out.mask.len();
    if total == 0 {
        return 0.0;
    }
    let holes = out.mask.as_slice().iter().filter(|&&m| !m).count();
    holes as f64 / total as f64
}

#[derive(Clone, Copy)]
struct Splat {
    col: u32,
    row: u32,
    depth: f64,
    index: u32,
}

/// Renders the memory into `cam` with square splats of the given radius.
pub fn render_points(mem: &GeoMemory, cam: &Camera, radius: u32) -> RenderOutput {
    let (w, h) = (cam.width(), cam.height());
    let points = mem.points();

    let projected: Vec<Option<Splat>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let proj = cam.project(&p.position)?;
            let (col, row) = proj.pixel(w, h)?;
            Some(Splat {
                col,
                row,
                depth: proj.depth,
                index: i as u32,
            })
        })
        .collect();

    // Bucket splats by center row; each bucket stays in ascending index order.
    let mut by_row: Vec<Vec<Splat>> = vec![Vec::new(); h as usize];
    for s in projected.into_iter().flatten() {
        by_row[s.row as usize].push(s);
    }

    let r = radius as i64;
    let mut zbuf = vec![(f64::INFINITY, u32::MAX); w as usize * h as usize];
    zbuf.par_chunks_mut(w as usize)
        .enumerate()
        .for_each(|(row, line)| {
            let row = row as i64;
            let lo = (row - r).max(0) as usize;
            let hi = (row + r).min(h as i64 - 1) as usize;
            for bucket in &by_row[lo..=hi] {
                for s in bucket {
                    let c0 = (s.col as i64 - r).max(0) as usize;
                    let c1 = (s.col as i64 + r).min(w as i64 - 1) as usize;
                    for slot in &mut line[c0..=c1] {
                        if s.depth < slot.0 || (s.depth == slot.0 && s.index < slot.1) {
                            *slot = (s.depth, s.index);
                        }
                    }
                }
            }
        });

    let n = zbuf.len();
    let mut color = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    let mut source = Vec::with_capacity(n);
    let mut winner = Vec::with_capacity(n);
    for &(d, idx) in &zbuf {
        if idx == u32::MAX {
            color.push(EMPTY_COLOR);
            mask.push(false);
            depth.push(0.0);
            source.push(-1);
            winner.push(-1);
        } else {
            let p = &points[idx as usize];
            color.push(p.color);
            mask.push(true);
            depth.push(d);
            source.push(p.source_view.0 as i64);
            winner.push(idx as i64);
        }
    }
    RenderOutput {
        color: Grid::from_vec(w, h, color).expect("sized"),
        mask: Grid::from_vec(w, h, mask).expect("sized"),
        depth: Grid::from_vec(w, h, depth).expect("sized"),
        source_index: Grid::from_vec(w, h, source).expect("sized"),
        winner_point: Grid::from_vec(w, h, winner).expect("sized"),
    }
}
