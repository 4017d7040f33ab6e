//! Ready-made scenes, capture banks and trajectories for loop experiments.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Intrinsics, Pose, ViewId};
use crate::error::Result;
use crate::memory::ViewBank;
use crate::scene::{build_scene, raycast, Aabb, Pattern, Primitive, SyntheticScene, Texture, ROOM};

/// Frames in a preset trajectory.
pub const TRAJECTORY_FRAMES: usize = 40;
/// View ids of trajectory frames start here; capture ids stay below it.
pub const TARGET_ID_BASE: u32 = 1000;
pub const DEFAULT_HFOV: f64 = 70.0;

/// Cameras on a horizontal arc around `center`, all looking at `center`.
/// Angles are in degrees, measured from the -z axis towards +x.
pub fn orbit(
    intrinsics: Intrinsics,
    frames: usize,
    radius: f64,
    height: f64,
    center: Vector3<f64>,
    degrees: (f64, f64),
    first_id: u32,
) -> Result<Vec<Camera>> {
    (0..frames)
        .map(|i| {
            let f = if frames > 1 { i as f64 / (frames - 1) as f64 } else { 0.0 };
            let a = (degrees.0 + f * (degrees.1 - degrees.0)).to_radians();
            let eye = Vector3::new(center.x + radius * a.sin(), height, center.z - radius * a.cos());
            let pose = Pose::look_at(eye, center, Vector3::y())?;
            Camera::new(intrinsics, pose, ViewId(first_id + i as u32))
        })
        .collect()
}

/// Which trajectory frames are given as captures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Frames 1, 21 and 40 of 40 (0-based 0, 20, 39).
    Interpolation,
    /// Frames 1, 11, 21 and 31 of 40 (0-based 0, 10, 20, 30).
    Extrapolation,
}

impl Preset {
    pub fn conditioning_frames(self) -> &'static [usize] {
        match self {
            Preset::Interpolation => &[0, 20, 39],
            Preset::Extrapolation => &[0, 10, 20, 30],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Interpolation => "interpolation",
            Preset::Extrapolation => "extrapolation",
        }
    }
}

/// A scene, the captures the loop starts from and the frames it must
/// generate.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub scene: SyntheticScene,
    pub captures: ViewBank,
    pub targets: Vec<Camera>,
    pub seg_len: usize,
}

/// The 40-frame orbit of a random room, split into captures and targets.
///
/// Captures get ids `0..n` in trajectory order; every other frame `i` is a
/// target with id `TARGET_ID_BASE + i`.
pub fn preset_scenario(preset: Preset, scene_seed: u64, width: u32, height: u32) -> Result<Scenario> {
    let scene = build_scene(scene_seed);
    let k = Intrinsics::with_hfov(width, height, DEFAULT_HFOV)?;
    let traj = orbit(k, TRAJECTORY_FRAMES, 4.8, 2.8, Vector3::new(0.0, 0.6, 0.0), (-45.0, 45.0), TARGET_ID_BASE)?;
    let cond = preset.conditioning_frames();
    let captures = ViewBank::from_frames(
        cond.iter()
            .enumerate()
            .map(|(j, &i)| raycast(&scene, &traj[i].with_view_id(ViewId(j as u32)))),
    )?;
    let targets = traj
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !cond.contains(i))
        .map(|(_, c)| c)
        .collect();
    Ok(Scenario {
        name: preset.name().into(),
        scene,
        captures,
        targets,
        seg_len: TRAJECTORY_FRAMES,
    })
}

fn wall_texture() -> Texture {
    Texture {
        pattern: Pattern::Checker,
        frequency: 1.0,
        palette: [[80, 90, 110], [190, 180, 160]],
    }
}

fn box_texture() -> Texture {
    Texture {
        pattern: Pattern::Gradient,
        frequency: 1.5,
        palette: [[200, 60, 40], [240, 200, 60]],
    }
}

fn look(k: Intrinsics, id: u32, eye: [f64; 3], target: [f64; 3]) -> Result<Camera> {
    Camera::new(k, Pose::look_at(eye.into(), target.into(), Vector3::y())?, ViewId(id))
}

/// Frames per segment of [`occluder_reveal`].
pub const REVEAL_SEGMENT: usize = 10;

/// A box hides part of the far wall from every capture. The first segment
/// swings round the box and sees the hidden wall obliquely; the second looks
/// straight at it from between the box and the wall.
pub fn occluder_reveal(width: u32, height: u32) -> Result<Scenario> {
    let scene = SyntheticScene::from_parts(
        Some(Primitive { bounds: ROOM, texture: wall_texture() }),
        vec![Primitive {
            bounds: Aabb::centered([0.0, 1.2, 1.0], [1.2, 1.2, 0.3]),
            texture: box_texture(),
        }],
    );
    let k = Intrinsics::with_hfov(width, height, DEFAULT_HFOV)?;
    let captures = [-0.4, 0.0, 0.4]
        .iter()
        .enumerate()
        .map(|(i, &x)| look(k, i as u32, [x, 1.3, -4.5], [x, 1.2, 6.0]).map(|c| raycast(&scene, &c)))
        .collect::<Result<Vec<_>>>()?;
    let n = REVEAL_SEGMENT;
    let lerp = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
    let mut targets = Vec::with_capacity(2 * n);
    for i in 0..n {
        targets.push(look(k, TARGET_ID_BASE + i as u32, [lerp(4.5, 2.0, i), 1.3, 2.5], [0.0, 1.2, 6.0])?);
    }
    for i in 0..n {
        let x = lerp(-0.5, 0.5, i);
        targets.push(look(k, TARGET_ID_BASE + (n + i) as u32, [x, 1.3, 3.0], [x, 1.2, 6.0])?);
    }
    Ok(Scenario {
        name: "occluder_reveal".into(),
        scene,
        captures: ViewBank::from_frames(captures)?,
        targets,
        seg_len: n,
    })
}

/// Retrieval scene with one capture that sees only geometry the targets
/// cannot see.
#[derive(Clone, Debug)]
pub struct OcclusionCase {
    pub scene: SyntheticScene,
    pub captures: ViewBank,
    pub targets: Vec<Camera>,
    /// The capture facing the hidden back of the box.
    pub occluded: ViewId,
}

/// Two captures and the targets face a box from the front; a third
/// capture sits just behind the box looking at its back face, which fills
/// its whole image.
pub fn occlusion_case(width: u32, height: u32) -> Result<OcclusionCase> {
    let scene = SyntheticScene::from_parts(
        Some(Primitive { bounds: ROOM, texture: wall_texture() }),
        vec![Primitive {
            bounds: Aabb::centered([0.0, 1.0, 0.0], [1.0, 1.0, 1.0]),
            texture: box_texture(),
        }],
    );
    let k = Intrinsics::with_hfov(width, height, DEFAULT_HFOV)?;
    let center = [0.0, 1.0, 0.0];
    let caps = [
        look(k, 0, [-1.5, 1.5, -4.5], center)?,
        look(k, 1, [1.5, 1.5, -4.5], center)?,
        look(k, 2, [0.0, 1.0, 1.3], [0.0, 1.0, -5.0])?,
    ];
    let targets = (0..5)
        .map(|i| look(k, TARGET_ID_BASE + i, [-1.0 + 0.5 * i as f64, 1.4, -4.0], center))
        .collect::<Result<Vec<_>>>()?;
    Ok(OcclusionCase {
        captures: ViewBank::from_frames(caps.iter().map(|c| raycast(&scene, c)))?,
        scene,
        targets,
        occluded: ViewId(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::raycast_ids;

    #[test]
    fn presets_split_forty_frames() {
        let s = preset_scenario(Preset::Interpolation, 1, 32, 24).unwrap();
        assert_eq!(s.captures.len(), 3);
        assert_eq!(s.targets.len(), 37);
        assert_eq!(s.targets[0].view_id, ViewId(TARGET_ID_BASE + 1));
        assert_eq!(s.targets[19].view_id, ViewId(TARGET_ID_BASE + 21));
        let e = preset_scenario(Preset::Extrapolation, 1, 32, 24).unwrap();
        assert_eq!(e.captures.len(), 4);
        assert_eq!(e.targets.len(), 36);
        assert_eq!(e.targets.last().unwrap().view_id, ViewId(TARGET_ID_BASE + 39));
    }

    #[test]
    fn orbit_cameras_look_at_center() {
        let k = Intrinsics::with_hfov(32, 24, 70.0).unwrap();
        let cams = orbit(k, 5, 4.0, 2.0, Vector3::new(0.0, 0.5, 0.0), (-30.0, 30.0), 7).unwrap();
        for c in &cams {
            let p = c.project(&Vector3::new(0.0, 0.5, 0.0)).unwrap();
            assert!((p.u - 15.5).abs() < 1e-9 && (p.v - 11.5).abs() < 1e-9);
        }
        assert_eq!(cams[4].view_id, ViewId(11));
    }

    #[test]
    fn orbit_stays_inside_the_room_and_above_boxes() {
        let s = preset_scenario(Preset::Interpolation, 5, 16, 12).unwrap();
        for c in &s.targets {
            let e = c.pose.center();
            assert!(ROOM.contains_point(&e, 0.0));
            assert!(s.scene.boxes.iter().all(|b| !b.bounds.contains_point(&e, 0.0)));
        }
    }

    #[test]
    fn hidden_capture_sees_only_the_back_face() {
        let case = occlusion_case(48, 32).unwrap();
        let cam = case.captures.get(case.occluded).unwrap().camera;
        let ids = raycast_ids(&case.scene, &cam);
        assert!(ids.as_slice().iter().all(|&i| i == 1));
    }

    #[test]
    fn reveal_targets_see_the_hidden_wall() {
        let s = occluder_reveal(56, 32).unwrap();
        assert_eq!(s.targets.len(), 2 * REVEAL_SEGMENT);
        let last = s.targets.last().unwrap();
        let ids = raycast_ids(&s.scene, last);
        assert!(ids.as_slice().iter().all(|&i| i == 0));
    }
}
