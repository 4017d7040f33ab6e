//! Explicit point-cloud geometry memory.
//!
//! The memory is rebuilt from a view bank by back-projecting every sampled
//! pixel with positive depth. Each point remembers which view created it,
//! which partitions the cloud into per-view subsets used for retrieval
//! scoring. Updating after a generated segment rebuilds from the grown bank
//! and replaces the previous cloud.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{Camera, ViewId};
use crate::error::{Error, Result};
use crate::image_io::{DepthMap, Rgb8, RgbImage};
use crate::scene::CaptureFrame;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoPoint {
    pub position: Vector3<f64>,
    pub color: Rgb8,
    pub source_view: ViewId,
}

/// Frames keyed by view id; iteration is in ascending id order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ViewBank {
    frames: BTreeMap<ViewId, CaptureFrame>,
}

impl ViewBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_frames(frames: impl IntoIterator<Item = CaptureFrame>) -> Result<Self> {
        let mut bank = Self::new();
        for f in frames {
            bank.insert(f)?;
        }
        Ok(bank)
    }

    pub fn insert(&mut self, frame: CaptureFrame) -> Result<()> {
        let id = frame.camera.view_id;
        if self.frames.contains_key(&id) {
            return Err(Error::DuplicateView(id));
        }
        self.frames.insert(id, frame);
        Ok(())
    }

    pub fn get(&self, id: ViewId) -> Option<&CaptureFrame> {
        self.frames.get(&id)
    }

    pub fn contains(&self, id: ViewId) -> bool {
        self.frames.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ViewId> + '_ {
        self.frames.keys().copied()
    }

    pub fn frames(&self) -> impl Iterator<Item = &CaptureFrame> {
        self.frames.values()
    }

    pub fn cameras(&self) -> Vec<Camera> {
        self.frames.values().map(|f| f.camera).collect()
    }
}

/// Source of per-pixel depth for frames that arrive without one.
pub trait DepthProvider {
    fn depth(&self, camera: &Camera, color: &RgbImage) -> Result<DepthMap>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoMemory {
    points: Vec<GeoPoint>,
    generation: u32,
    stride: u32,
}

impl GeoMemory {
    pub fn empty(stride: u32) -> Self {
        Self {
            points: Vec::new(),
            generation: 0,
            stride: stride.max(1),
        }
    }

    /// Builds a memory directly from points (already ordered by the caller).
    pub fn from_points(points: Vec<GeoPoint>) -> Self {
        Self {
            points,
            generation: 0,
            stride: 1,
        }
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of updates applied since construction.
    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    /// Indices of points created from `view`, ascending.
    pub fn source_subset(&self, view: ViewId) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.source_view == view)
            .map(|(i, _)| i)
            .collect()
    }

    /// Point count per source view.
    pub fn partition_counts(&self) -> BTreeMap<ViewId, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.points {
            *counts.entry(p.source_view).or_insert(0) += 1;
        }
        counts
    }

    pub fn source_views(&self) -> Vec<ViewId> {
        self.partition_counts().into_keys().collect()
    }

    /// Keeps points for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&GeoPoint) -> bool) -> GeoMemory {
        GeoMemory {
            points: self.points.iter().copied().filter(|p| keep(p)).collect(),
            ..*self
        }
    }
}

fn back_project(frame: &CaptureFrame, stride: u32) -> Vec<GeoPoint> {
    let cam = &frame.camera;
    let mut out = Vec::new();
    for row in (0..frame.depth.height()).step_by(stride as usize) {
        for col in (0..frame.depth.width()).step_by(stride as usize) {
            let d = *frame.depth.get(col, row);
            if d > 0.0 && d.is_finite() {
                out.push(GeoPoint {
                    position: cam.unproject_unchecked(col as f64, row as f64, d as f64),
                    color: *frame.color.get(col, row),
                    source_view: cam.view_id,
                });
            }
        }
    }
    out
}

fn rebuild(bank: &ViewBank, stride: u32) -> Result<Vec<GeoPoint>> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let frames: Vec<&CaptureFrame> = bank.frames().collect();
    for f in &frames {
        let dims = (f.camera.width(), f.camera.height());
        if f.depth.dims() != dims || f.color.dims() != dims {
            return Err(Error::mismatch(
                "frame size",
                format!("{dims:?}"),
                format!("color {:?}, depth {:?}", f.color.dims(), f.depth.dims()),
            ));
        }
    }
    let per_frame: Vec<Vec<GeoPoint>> = frames.par_iter().map(|f| back_project(f, stride)).collect();
    Ok(per_frame.concat())
}

/// Back-projects every `stride`-th pixel (rows and columns) with positive
/// depth. Points are ordered by (view id, row, col).
pub fn init_from_captures(bank: &ViewBank, stride: u32) -> Result<GeoMemory> {
    Ok(GeoMemory {
        points: rebuild(bank, stride)?,
        generation: 0,
        stride,
    })
}

/// Replaces the memory with one rebuilt from `bank` (original captures plus
/// generated frames), keeping the stride and bumping the generation count.
pub fn update_memory(mem: &GeoMemory, bank: &ViewBank) -> Result<GeoMemory> {
    Ok(GeoMemory {
        points: rebuild(bank, mem.stride)?,
        generation: mem.generation + 1,
        stride: mem.stride,
    })
}

const PLY_PROPERTIES: [&str; 7] = ["x", "y", "z", "red", "green", "blue", "source_view"];

/// ASCII PLY with `x y z red green blue source_view`. Coordinates are
/// written in shortest round-trip form, so reading back is exact.
pub fn write_ply(path: impl AsRef<Path>, mem: &GeoMemory) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ply_to(BufWriter::new(file), mem).map_err(|e| Error::io(path, e))
}

pub fn write_ply_to(mut out: impl Write, mem: &GeoMemory) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "comment generation {}", mem.generation)?;
    writeln!(out, "comment stride {}", mem.stride)?;
    writeln!(out, "element vertex {}", mem.points.len())?;
    for name in ["x", "y", "z"] {
        writeln!(out, "property double {name}")?;
    }
    for name in ["red", "green", "blue"] {
        writeln!(out, "property uchar {name}")?;
    }
    writeln!(out, "property int source_view")?;
    writeln!(out, "end_header")?;
    for p in &mem.points {
        writeln!(
            out,
            "{:?} {:?} {:?} {} {} {} {}",
            p.position.x, p.position.y, p.position.z, p.color[0], p.color[1], p.color[2], p.source_view.0
        )?;
    }
    out.flush()
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<GeoMemory> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply_from(BufReader::new(file), &path.display().to_string())
}

pub fn read_ply_from(input: impl BufRead, context: &str) -> Result<GeoMemory> {
    let err = |m: String| Error::parse(context, m);
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::parse(context, e)),
            None => Err(Error::parse(context, "unexpected end of file")),
        }
    };
    if next()?.trim() != "ply" {
        return Err(err("missing ply magic".into()));
    }
    let mut count = None;
    let mut properties = Vec::new();
    let (mut generation, mut stride) = (0, 1);
    loop {
        let line = next()?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(err(format!("unsupported format {other}"))),
            ["comment", "generation", g] => generation = g.parse().map_err(|e| err(format!("{e}")))?,
            ["comment", "stride", s] => stride = s.parse().map_err(|e| err(format!("{e}")))?,
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|e| err(format!("{e}")))?),
            ["element", other, ..] => return Err(err(format!("unexpected element {other}"))),
            ["property", _ty, name] => properties.push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(err(format!("unrecognized header line {line:?}"))),
        }
    }
    if properties != PLY_PROPERTIES {
        return Err(err(format!("expected properties {PLY_PROPERTIES:?}, found {properties:?}")));
    }
    let count = count.ok_or_else(|| err("missing vertex element".into()))?;
    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let line = next()?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(err(format!("vertex {i}: expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("vertex {i}: {e}")));
        let byte = |s: &str| s.parse::<u8>().map_err(|e| err(format!("vertex {i}: {e}")));
        let view = f[6]
            .parse::<u32>()
            .map_err(|e| err(format!("vertex {i}: {e}")))?;
        points.push(GeoPoint {
            position: Vector3::new(num(f[0])?, num(f[1])?, num(f[2])?),
            color: [byte(f[3])?, byte(f[4])?, byte(f[5])?],
            source_view: ViewId(view),
        });
    }
    Ok(GeoMemory {
        points,
        generation,
        stride: stride.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Intrinsics, Pose};
    use crate::image_io::Grid;
    use crate::scene::{raycast, Aabb, Pattern, Primitive, SyntheticScene, Texture};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cam(id: u32, eye: [f64; 3], target: [f64; 3]) -> Camera {
        let k = Intrinsics::with_hfov(48, 32, 70.0).unwrap();
        let pose = Pose::look_at(eye.into(), target.into(), Vector3::y()).unwrap();
        Camera::new(k, pose, ViewId(id)).unwrap()
    }

    fn wall_scene() -> SyntheticScene {
        let room = Primitive {
            bounds: Aabb::new([-20.0, -20.0, -20.0], [20.0, 20.0, 6.0]),
            texture: Texture {
                pattern: Pattern::Checker,
                frequency: 1.0,
                palette: [[40, 40, 40], [200, 200, 200]],
            },
        };
        SyntheticScene::from_parts(Some(room), vec![])
    }

    fn frame_with_depth(id: u32, depth: Vec<f32>) -> CaptureFrame {
        let c = cam(id, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let color = Grid::filled(48, 32, [7, 8, 9]);
        CaptureFrame::new(c, color, Grid::from_vec(48, 32, depth).unwrap()).unwrap()
    }

    #[test]
    fn all_zero_depth_gives_empty_memory() {
        let bank = ViewBank::from_frames([frame_with_depth(0, vec![0.0; 48 * 32])]).unwrap();
        let mem = init_from_captures(&bank, 1).unwrap();
        assert!(mem.is_empty());
        assert_eq!(mem.generation(), 0);
    }

    #[test]
    fn one_point_per_valid_pixel() {
        let mut depth = vec![0.0; 48 * 32];
        for i in (0..depth.len()).step_by(5) {
            depth[i] = 2.0 + i as f32 * 0.001;
        }
        let k = depth.iter().filter(|&&d| d > 0.0).count();
        let bank = ViewBank::from_frames([frame_with_depth(4, depth)]).unwrap();
        let mem = init_from_captures(&bank, 1).unwrap();
        assert_eq!(mem.len(), k);
        assert!(mem.points().iter().all(|p| p.source_view == ViewId(4)));
    }

    #[test]
    fn stride_subsamples_rows_and_columns() {
        let bank = ViewBank::from_frames([frame_with_depth(0, vec![1.0; 48 * 32])]).unwrap();
        assert_eq!(init_from_captures(&bank, 2).unwrap().len(), 24 * 16);
        assert_eq!(init_from_captures(&bank, 5).unwrap().len(), 10 * 7);
        assert!(init_from_captures(&bank, 0).is_err());
    }

    #[test]
    fn empty_bank_is_rejected() {
        assert!(matches!(init_from_captures(&ViewBank::new(), 1), Err(Error::EmptyBank)));
        let mem = GeoMemory::empty(1);
        assert!(matches!(update_memory(&mem, &ViewBank::new()), Err(Error::EmptyBank)));
    }

    #[test]
    fn duplicate_views_are_rejected() {
        let f = frame_with_depth(1, vec![1.0; 48 * 32]);
        let mut bank = ViewBank::from_frames([f.clone()]).unwrap();
        assert!(matches!(bank.insert(f), Err(Error::DuplicateView(ViewId(1)))));
    }

    #[test]
    fn two_views_of_a_wall_coincide_on_its_plane() {
        let scene = wall_scene();
        let a = raycast(&scene, &cam(0, [0.0, 0.0, 0.0], [0.0, 0.0, 6.0]));
        let b = raycast(&scene, &cam(1, [1.0, 0.5, 1.0], [0.3, 0.0, 6.0]));
        let bank = ViewBank::from_frames([a, b]).unwrap();
        let mem = init_from_captures(&bank, 1).unwrap();
        assert_eq!(mem.partition_counts().len(), 2);
        for p in mem.points() {
            assert!((p.position.z - 6.0).abs() < 1e-5, "{}", p.position.z);
        }
    }

    #[test]
    fn back_projection_reprojects_to_its_pixel() {
        let scene = crate::scene::build_scene(2);
        let frame = raycast(&scene, &cam(3, [4.0, 1.5, 4.0], [0.0, 0.7, 0.0]));
        let bank = ViewBank::from_frames([frame.clone()]).unwrap();
        let mem = init_from_captures(&bank, 1).unwrap();
        let mut i = 0;
        for row in 0..32 {
            for col in 0..48 {
                let d = *frame.depth.get(col, row) as f64;
                if d <= 0.0 {
                    continue;
                }
                let p = frame.camera.project(&mem.points()[i].position).unwrap();
                assert_relative_eq!(p.u, col as f64, epsilon = 1e-6);
                assert_relative_eq!(p.v, row as f64, epsilon = 1e-6);
                assert_relative_eq!(p.depth, d, max_relative = 1e-6);
                i += 1;
            }
        }
        assert_eq!(i, mem.len());
    }

    #[test]
    fn source_subsets_partition_the_memory() {
        let scene = crate::scene::build_scene(4);
        let frames = [
            raycast(&scene, &cam(10, [4.0, 1.5, 4.0], [0.0, 0.7, 0.0])),
            raycast(&scene, &cam(20, [-4.0, 1.5, 4.0], [0.0, 0.7, 0.0])),
        ];
        let valid: Vec<usize> = frames
            .iter()
            .map(|f| f.depth.as_slice().iter().filter(|&&d| d > 0.0).count())
            .collect();
        let bank = ViewBank::from_frames(frames).unwrap();
        let mem = init_from_captures(&bank, 1).unwrap();
        let s1 = mem.source_subset(ViewId(10));
        let s2 = mem.source_subset(ViewId(20));
        assert_eq!(s1.len(), valid[0]);
        assert_eq!(s2.len(), valid[1]);
        assert!(mem.source_subset(ViewId(99)).is_empty());
        let mut all: Vec<usize> = s1.into_iter().chain(s2).collect();
        all.sort_unstable();
        assert_eq!(all, (0..mem.len()).collect::<Vec<_>>());
    }

    #[test]
    fn update_replaces_and_counts_generations() {
        let scene = crate::scene::build_scene(5);
        let a = raycast(&scene, &cam(0, [4.0, 1.5, 4.0], [0.0, 0.7, 0.0]));
        let b = raycast(&scene, &cam(1, [-4.0, 1.5, -4.0], [0.0, 0.7, 0.0]));
        let bank = ViewBank::from_frames([a.clone(), b.clone()]).unwrap();
        let mem = init_from_captures(&bank, 2).unwrap();

        let same = update_memory(&mem, &bank).unwrap();
        assert_eq!(same.generation(), 1);
        assert_eq!(same.points(), mem.points());

        // A bank without view 1 removes every point attributed to it.
        let smaller = ViewBank::from_frames([a]).unwrap();
        let replaced = update_memory(&same, &smaller).unwrap();
        assert_eq!(replaced.generation(), 2);
        assert!(replaced.points().iter().all(|p| smaller.contains(p.source_view)));
    }

    #[test]
    fn ply_round_trip_preserves_fields() {
        let scene = crate::scene::build_scene(6);
        let bank = ViewBank::from_frames([
            raycast(&scene, &cam(2, [4.0, 1.5, 4.0], [0.0, 0.7, 0.0])),
            raycast(&scene, &cam(9, [-3.0, 2.0, 4.0], [0.0, 0.7, 0.0])),
        ])
        .unwrap();
        let mem = update_memory(&init_from_captures(&bank, 3).unwrap(), &bank).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        write_ply(&path, &mem).unwrap();
        assert_eq!(read_ply(&path).unwrap(), mem);
    }

    #[test]
    fn ply_rejects_unexpected_layout() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n";
        assert!(read_ply_from(text.as_bytes(), "t").is_err());
        let text = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(read_ply_from(text.as_bytes(), "t").is_err());
    }

    proptest! {
        #[test]
        fn ply_round_trip_arbitrary_points(
            pts in proptest::collection::vec(
                (-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, any::<[u8; 3]>(), 0u32..50), 0..40)
        ) {
            let mem = GeoMemory::from_points(pts.iter().map(|&(x, y, z, color, v)| GeoPoint {
                position: Vector3::new(x, y, z),
                color,
                source_view: ViewId(v),
            }).collect());
            let mut buf = Vec::new();
            write_ply_to(&mut buf, &mem).unwrap();
            let back = read_ply_from(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, mem);
        }
    }
}
