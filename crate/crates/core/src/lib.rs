//! Geometry-conditioned novel view generation loop at desk scale.
//!
//! A point memory built from posed RGB-D captures is splatted into target
//! views, the captures that contribute most visible points are retrieved as
//! references, and a pluggable generator fills the target frames. Generated
//! frames are folded back into the memory before the next segment.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod bank;
pub mod camera;
pub mod distill;
pub mod error;
pub mod image_io;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod report;
pub mod retrieval;
pub mod rng;
pub mod scenario;
pub mod scene;

pub use camera::{Camera, Intrinsics, Pose, ViewId};
pub use error::{Error, Result};
pub use image_io::{DepthMap, Grid, Rgb8, RgbImage};
pub use memory::{GeoMemory, GeoPoint, ViewBank};
pub use render::{render_points, RenderOutput};
pub use scene::{build_scene, raycast, CaptureFrame, SyntheticScene};
