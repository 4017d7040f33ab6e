//! Pinhole camera model.
//!
//! Conventions used everywhere in the crate:
//! - poses map world points into the camera frame (`p_cam = R * p_world + t`),
//! - the camera looks down +z, +x is to the right and +y points down,
//! - the image origin is the top-left pixel and pixel centers sit at integer
//!   coordinates, so pixel `(col, row)` is sampled at `(u, v) = (col, row)`.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Identifier of a view (capture or generated frame).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViewId(pub u32);

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Focal lengths and principal point in pixels plus the image size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image center and the given
    /// horizontal field of view in degrees.
    pub fn with_hfov(width: u32, height: u32, hfov_deg: f64) -> Result<Self> {
        let f = 0.5 * width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidCamera("non-finite intrinsics".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be nonzero".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl Default for Intrinsics {
    /// 896×512 with a 90° horizontal field of view.
    fn default() -> Self {
        Self::with_hfov(896, 512, 90.0).expect("default intrinsics are valid")
    }
}

/// Rigid world→camera transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite translation".into()));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if !(err < ORTHONORMAL_TOL) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max deviation {err:e})"
            )));
        }
        if self.rotation.determinant() <= 0.0 {
            return Err(Error::InvalidCamera("rotation has negative determinant".into()));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` is the world direction that
    /// should appear upward in the image.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::InvalidCamera("eye and target coincide".into()));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::InvalidCamera("up vector is parallel to the view direction".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Self {
            rotation,
            translation: -(rotation * eye),
        })
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Optical axis (+z of the camera) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }
}

/// Result of projecting a world point into an image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Camera-space z.
    pub depth: f64,
}

impl Projection {
    /// Pixel whose center is nearest to `(u, v)`, if it lies in the image.
    pub fn pixel(&self, width: u32, height: u32) -> Option<(u32, u32)> {
        let col = (self.u + 0.5).floor();
        let row = (self.v + 0.5).floor();
        if col < 0.0 || row < 0.0 || col >= width as f64 || row >= height as f64 {
            return None;
        }
        Some((col as u32, row as u32))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub view_id: ViewId,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose, view_id: ViewId) -> Result<Self> {
        intrinsics.validate()?;
        pose.validate()?;
        Ok(Self {
            intrinsics,
            pose,
            view_id,
        })
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    /// Projects a world point. `None` when the point is not in front of the
    /// camera or lands outside the image, whose pixel centers sit at integer
    /// coordinates: `[-0.5, width - 0.5) × [-0.5, height - 0.5)`.
    pub fn project(&self, p_world: &Vector3<f64>) -> Option<Projection> {
        let p = self.pose.transform(p_world);
        if !(p.z > 0.0) {
            return None;
        }
        let k = &self.intrinsics;
        let u = k.fx * p.x / p.z + k.cx;
        let v = k.fy * p.y / p.z + k.cy;
        if !(u >= -0.5 && u < k.width as f64 - 0.5 && v >= -0.5 && v < k.height as f64 - 0.5) {
            return None;
        }
        Some(Projection { u, v, depth: p.z })
    }

    /// Back-projects pixel coordinates at camera-space depth into the world.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.unproject_unchecked(u, v, depth))
    }

    pub(crate) fn unproject_unchecked(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let ray = self.ray_direction_cam(u, v);
        let p_cam = ray * depth;
        self.pose.rotation.transpose() * (p_cam - self.pose.translation)
    }

    /// Ray through `(u, v)` in camera coordinates, scaled so that z = 1.
    pub fn ray_direction_cam(&self, u: f64, v: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0)
    }

    /// World-space ray through `(u, v)`: origin at the camera center and a
    /// direction whose camera-space z component is 1, so the ray parameter
    /// equals camera depth.
    pub fn world_ray(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>) {
        let dir = self.pose.rotation.transpose() * self.ray_direction_cam(u, v);
        (self.pose.center(), dir)
    }

    pub fn with_view_id(mut self, view_id: ViewId) -> Self {
        self.view_id = view_id;
        self
    }
}

/// JSON form of a camera: `{view_id, fx, fy, cx, cy, width, height,
/// rotation (row-major, 9), translation (3)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub view_id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Camera> for CameraDoc {
    fn from(cam: &Camera) -> Self {
        let r = &cam.pose.rotation;
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        let t = &cam.pose.translation;
        Self {
            view_id: cam.view_id.0,
            fx: cam.intrinsics.fx,
            fy: cam.intrinsics.fy,
            cx: cam.intrinsics.cx,
            cy: cam.intrinsics.cy,
            width: cam.intrinsics.width,
            height: cam.intrinsics.height,
            rotation,
            translation: [t.x, t.y, t.z],
        }
    }
}

impl TryFrom<&CameraDoc> for Camera {
    type Error = Error;

    fn try_from(doc: &CameraDoc) -> Result<Self> {
        let intrinsics = Intrinsics::new(doc.fx, doc.fy, doc.cx, doc.cy, doc.width, doc.height)?;
        let pose = Pose::new(
            Matrix3::from_row_slice(&doc.rotation),
            Vector3::from_row_slice(&doc.translation),
        )?;
        Camera::new(intrinsics, pose, ViewId(doc.view_id))
    }
}

impl Serialize for Camera {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CameraDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Camera {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = CameraDoc::deserialize(d)?;
        Camera::try_from(&doc).map_err(serde::de::Error::custom)
    }
}

/// Reads a trajectory file (a JSON array of camera documents).
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

pub fn write_trajectory(path: impl AsRef<Path>, cameras: &[Camera]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(cameras).expect("cameras serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn unit_camera() -> Camera {
        let k = Intrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4).unwrap();
        Camera::new(k, Pose::identity(), ViewId(0)).unwrap()
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let t = Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        Pose::from_axis_angle(axis, rng.random_range(-3.0..3.0), t)
    }

    fn random_camera(rng: &mut impl Rng) -> Camera {
        let k = Intrinsics::new(
            rng.random_range(100.0..600.0),
            rng.random_range(100.0..600.0),
            rng.random_range(100.0..300.0),
            rng.random_range(100.0..250.0),
            448,
            256,
        )
        .unwrap();
        Camera::new(k, random_pose(rng), ViewId(3)).unwrap()
    }

    #[test]
    fn principal_ray_projects_to_principal_point() {
        let p = unit_camera().project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (0.0, 0.0, 1.0));
    }

    #[test]
    fn behind_camera_is_absent() {
        assert!(unit_camera().project(&Vector3::new(0.0, 0.0, -1.0)).is_none());
        assert!(unit_camera().project(&Vector3::new(0.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn outside_image_is_absent() {
        let cam = unit_camera();
        assert!(cam.project(&Vector3::new(-0.6, 0.0, 1.0)).is_none());
        assert!(cam.project(&Vector3::new(-0.5, -0.5, 1.0)).is_some());
        assert!(cam.project(&Vector3::new(3.5, 0.0, 1.0)).is_none());
        assert!(cam.project(&Vector3::new(3.4, 3.4, 1.0)).is_some());
    }

    #[test]
    fn rotated_camera_looking_at_origin() {
        // Camera at world (2,0,0), optical axis along -x.
        let rotation = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        let pose = Pose::new(rotation, Vector3::new(0.0, 0.0, 2.0)).unwrap();
        let k = Intrinsics::new(100.0, 100.0, 50.0, 40.0, 100, 80).unwrap();
        let cam = Camera::new(k, pose, ViewId(1)).unwrap();

        // Independent route: the same rotation from an axis-angle about +y.
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2);
        assert_relative_eq!(*ry.matrix(), rotation, epsilon = 1e-15);
        assert_relative_eq!(pose.center(), Vector3::new(2.0, 0.0, 0.0), epsilon = 1e-15);

        let p = cam.project(&Vector3::zeros()).unwrap();
        assert_relative_eq!(p.depth, 2.0);
        assert_relative_eq!(p.u, 50.0);
        assert_relative_eq!(p.v, 40.0);

        let via_look_at = Pose::look_at(
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::zeros(),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(via_look_at.rotation, rotation, epsilon = 1e-12);
        assert_relative_eq!(via_look_at.translation, pose.translation, epsilon = 1e-12);
    }

    #[test]
    fn unproject_principal_point() {
        let k = Intrinsics::new(300.0, 310.0, 120.0, 90.0, 240, 180).unwrap();
        let cam = Camera::new(k, Pose::identity(), ViewId(0)).unwrap();
        let p = cam.unproject(120.0, 90.0, 1.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn unproject_rejects_non_positive_depth() {
        let cam = unit_camera();
        assert!(matches!(cam.unproject(0.0, 0.0, 0.0), Err(Error::NonPositiveDepth(_))));
        assert!(cam.unproject(0.0, 0.0, -2.0).is_err());
        assert!(cam.unproject(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn unproject_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cam = random_camera(&mut rng);
        let got = cam.unproject(100.0, 200.0, 3.5).unwrap();

        // X = R⁻¹ (d · K⁻¹ [u v 1]ᵀ − t), with K and R inverted as matrices.
        let k = &cam.intrinsics;
        let kmat = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
        let kinv = kmat.try_inverse().unwrap();
        let rinv = cam.pose.rotation.try_inverse().unwrap();
        let expected = rinv * (kinv * Vector3::new(100.0, 200.0, 1.0) * 3.5 - cam.pose.translation);
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn project_unproject_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let cam = random_camera(&mut rng);
            let u = rng.random_range(-0.5..447.5);
            let v = rng.random_range(-0.5..255.5);
            let d = rng.random_range(0.05..50.0);
            let world = cam.unproject(u, v, d).unwrap();
            let p = cam.project(&world).expect("round trip stays visible");
            assert_relative_eq!(p.u, u, max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(p.v, v, max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(p.depth, d, max_relative = 1e-6);
        }
    }

    #[test]
    fn invert_identity_is_identity() {
        assert_eq!(Pose::identity().inverse(), Pose::identity());
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            let id = p.compose(&p.inverse());
            assert!((id.rotation - Matrix3::identity()).amax() < 1e-9);
            assert!(id.translation.amax() < 1e-9);
        }
    }

    #[test]
    fn compose_axis_rotations_matches_matrix_product() {
        let a = Pose::from_axis_angle(Vector3::x(), 0.3, Vector3::new(1.0, 0.0, 0.0));
        let b = Pose::from_axis_angle(Vector3::z(), -1.1, Vector3::new(0.0, 2.0, 0.0));
        let c = a.compose(&b);

        let (s, co) = 0.3f64.sin_cos();
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, co, -s, 0.0, s, co);
        let (s, co) = (-1.1f64).sin_cos();
        let rz = Matrix3::new(co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0);
        let mut product = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                product[(i, j)] = (0..3).map(|k| rx[(i, k)] * rz[(k, j)]).sum();
            }
        }
        assert_relative_eq!(c.rotation, product, epsilon = 1e-12);
        let p = Vector3::new(0.2, -0.7, 1.9);
        assert_relative_eq!(c.transform(&p), a.transform(&b.transform(&p)), epsilon = 1e-12);
    }

    #[test]
    fn rigid_transforms_preserve_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let a = Vector3::new(rng.random(), rng.random(), rng.random()) * 10.0;
            let b = Vector3::new(rng.random(), rng.random(), rng.random()) * 10.0;
            let before = (a - b).norm();
            let after = (pose.transform(&a) - pose.transform(&b)).norm();
            assert_relative_eq!(before, after, max_relative = 1e-9);
        }
    }

    #[test]
    fn rejects_invalid_intrinsics_and_poses() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, -0.5, 4, 4).is_err());
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(skew, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflection, Vector3::zeros()).is_err());
    }

    #[test]
    fn default_intrinsics_match_working_resolution() {
        let k = Intrinsics::default();
        assert_eq!((k.width, k.height), (896, 512));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cams: Vec<Camera> = (0..5)
            .map(|i| random_camera(&mut rng).with_view_id(ViewId(i)))
            .collect();
        let text = serde_json::to_string(&cams).unwrap();
        let back: Vec<Camera> = serde_json::from_str(&text).unwrap();
        assert_eq!(cams, back);
    }

    #[test]
    fn json_rejects_unknown_keys_and_bad_rotation() {
        let good = serde_json::to_value(CameraDoc::from(&unit_camera())).unwrap();
        let mut extra = good.clone();
        extra["skew"] = serde_json::json!(0.0);
        assert!(serde_json::from_value::<Camera>(extra).is_err());
        let mut bad = good;
        bad["rotation"] = serde_json::json!([2, 0, 0, 0, 1, 0, 0, 0, 1]);
        assert!(serde_json::from_value::<Camera>(bad).is_err());
    }
}
