//! Synthetic cuboid scenes with exact ground truth.
//!
//! The world frame coincides with the first camera pose (x right, y down,
//! z forward). Cameras and objects move with constant per-frame velocity and
//! yaw rate. Depth is rendered by casting one ray through each pixel center;
//! pixel index `(u, v)` is the continuous image coordinate of that center,
//! which is the same convention [`CameraIntrinsics::unproject`] uses.
//!
//! Occlusions are modelled as a virtual occluder in front of the object: the
//! mask loses a band of columns and tracked points landing there become
//! invisible, while the rendered depth is left untouched.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::DepthRaster;
use crate::ingest::{self, Detection, Frame, KittiLabel, SceneBundle, TrackKey};
use crate::types::{
    box_from_mask, Box2D, Box3D, CameraIntrinsics, Dimensions, InstanceMask, Pixel, PixelSet,
    TrackPoint, TrackedMask,
};

/// Depth written where no object is hit.
pub const BACKGROUND_DEPTH: f32 = 1000.0;

/// Height of the ground plane below the first camera.
pub const GROUND_Y: f64 = 1.65;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("scene spec: {0}")]
    Spec(String),
    #[error("scene spec parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, OracleError>;

fn default_width() -> u32 {
    640
}
fn default_height() -> u32 {
    360
}
fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 500.0,
        fy: 500.0,
        cx: 319.5,
        cy: 179.5,
    }
}
fn default_confidence() -> f64 {
    0.9
}
fn default_min_pixels() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraMotion {
    /// World position at frame 0.
    #[serde(default)]
    pub start: [f64; 3],
    /// Displacement per frame, world coordinates.
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

impl Default for CameraMotion {
    fn default() -> Self {
        Self {
            start: [0.0; 3],
            velocity: [0.0; 3],
            yaw: 0.0,
            yaw_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub class: String,
    /// `[w, h, l]` in meters.
    pub dims: [f64; 3],
    /// World `(x, z)` of the center at frame 0.
    pub position: [f64; 2],
    /// World y of the center; defaults to resting on the ground.
    #[serde(default)]
    pub center_y: Option<f64>,
    #[serde(default)]
    pub yaw: f64,
    /// Per-frame `(x, z)` displacement.
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default)]
    pub yaw_rate: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of additive depth noise, meters.
    #[serde(default)]
    pub depth_sigma: f64,
    /// Standard deviation of Gaussian track jitter, pixels.
    #[serde(default)]
    pub track_jitter_px: f64,
    /// Probability that a visible object's detection is missing in a frame.
    #[serde(default)]
    pub drop_prob: f64,
    /// Masks smaller than this are not reported.
    #[serde(default = "default_min_pixels")]
    pub min_mask_pixels: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            depth_sigma: 0.0,
            track_jitter_px: 0.0,
            drop_prob: 0.0,
            min_mask_pixels: default_min_pixels(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occlusion {
    pub frame: usize,
    pub object: usize,
    /// Fraction of mask pixels hidden, taken as whole columns.
    pub fraction: f64,
    #[serde(default = "default_side")]
    pub side: Side,
}

fn default_side() -> Side {
    Side::Right
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub frames: usize,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default = "default_intrinsics")]
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub camera: CameraMotion,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
}

pub const BUNDLED_SCENES: [&str; 3] = ["static_car", "crossing_pair", "occluded_ped"];

/// Text of a scene spec shipped with the crate.
pub fn bundled_spec(name: &str) -> Option<&'static str> {
    match name {
        "static_car" => Some(include_str!("../scenes/static_car.toml")),
        "crossing_pair" => Some(include_str!("../scenes/crossing_pair.toml")),
        "occluded_ped" => Some(include_str!("../scenes/occluded_ped.toml")),
        _ => None,
    }
}

/// Frames in an [`occlusion_benchmark`] scene; the occluded frame is the
/// middle one.
pub const BENCHMARK_FRAMES: usize = 10;
pub const BENCHMARK_TARGET: usize = (BENCHMARK_FRAMES - 1) / 2;

/// A seeded single-car scene for comparing multi-frame labelling against a
/// single observation: forward-driving camera, car of random pose whose
/// dimensions are the Car prior scaled by a random factor, noisy depth and
/// half of the car hidden in the middle frame.
pub fn occlusion_benchmark(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = rng.random_range(0.9..1.1);
    let side = if rng.random_bool(0.5) {
        Side::Left
    } else {
        Side::Right
    };
    SceneSpec {
        seed,
        frames: BENCHMARK_FRAMES,
        width: default_width(),
        height: default_height(),
        intrinsics: default_intrinsics(),
        camera: CameraMotion {
            velocity: [rng.random_range(-0.3..0.3), 0.0, rng.random_range(0.3..0.8)],
            ..CameraMotion::default()
        },
        objects: vec![ObjectSpec {
            class: "Car".into(),
            dims: [1.63 * scale, 1.53 * scale, 3.88 * scale],
            position: [rng.random_range(-5.0..5.0), rng.random_range(14.0..22.0)],
            center_y: None,
            yaw: rng.random_range(0.0..PI),
            velocity: [0.0, 0.0],
            yaw_rate: 0.0,
            confidence: 0.9,
        }],
        noise: NoiseSpec {
            depth_sigma: 0.05,
            ..NoiseSpec::default()
        },
        occlusions: vec![Occlusion {
            frame: BENCHMARK_TARGET,
            object: 0,
            fraction: 0.5,
            side,
        }],
    }
}

fn rot_y(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a)
}

/// Object pose in one camera frame.
#[derive(Debug, Clone, Copy)]
struct Pose {
    center: Point3<f64>,
    rotation: Rotation3<f64>,
    yaw: f64,
    /// Half extents along local x (length), y (height), z (width).
    half: Vector3<f64>,
}

impl Pose {
    /// Entry distance along `dir` from the camera origin, if the ray hits.
    fn ray_hit(&self, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.rotation.inverse() * (-self.center.coords);
        let d = self.rotation.inverse() * dir;
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if o[k].abs() > self.half[k] {
                    return None;
                }
                continue;
            }
            let a = (-self.half[k] - o[k]) / d[k];
            let b = (self.half[k] - o[k]) / d[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1 && t0 > 0.0).then_some(t0)
    }
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let text = bundled_spec(name)
            .ok_or_else(|| OracleError::Spec(format!("no bundled scene named {name:?}")))?;
        Self::from_toml(text)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(OracleError::Spec(m));
        if self.frames == 0 {
            return err("frames must be at least 1".into());
        }
        if self.width == 0 || self.height == 0 {
            return err("image size must be positive".into());
        }
        self.intrinsics
            .validate()
            .map_err(|e| OracleError::Spec(e.to_string()))?;
        let n = &self.noise;
        if !(n.depth_sigma >= 0.0 && n.track_jitter_px >= 0.0) {
            return err("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&n.drop_prob) {
            return err(format!("drop_prob {} outside [0, 1]", n.drop_prob));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !o.dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
                return err(format!("object {i}: dimensions must be positive"));
            }
            if !(0.0..=1.0).contains(&o.confidence) {
                return err(format!("object {i}: confidence outside [0, 1]"));
            }
            if !(0..self.frames).any(|f| self.pose(i, f).center.z > 0.0) {
                return err(format!("object {i} is never in front of the camera"));
            }
        }
        for occ in &self.occlusions {
            if occ.object >= self.objects.len() || occ.frame >= self.frames {
                return err(format!(
                    "occlusion references object {} in frame {}",
                    occ.object, occ.frame
                ));
            }
            if !(0.0..=1.0).contains(&occ.fraction) {
                return err(format!("occlusion fraction {} outside [0, 1]", occ.fraction));
            }
        }
        Ok(())
    }

    fn camera_pose(&self, frame: usize) -> (Point3<f64>, Rotation3<f64>) {
        let c = &self.camera;
        let f = frame as f64;
        let pos = Point3::new(
            c.start[0] + f * c.velocity[0],
            c.start[1] + f * c.velocity[1],
            c.start[2] + f * c.velocity[2],
        );
        (pos, rot_y(c.yaw + f * c.yaw_rate))
    }

    fn pose(&self, object: usize, frame: usize) -> Pose {
        let o = &self.objects[object];
        let f = frame as f64;
        let y = o.center_y.unwrap_or(GROUND_Y - 0.5 * o.dims[1]);
        let world = Point3::new(
            o.position[0] + f * o.velocity[0],
            y,
            o.position[1] + f * o.velocity[1],
        );
        let world_yaw = o.yaw + f * o.yaw_rate;
        let (cam_pos, cam_rot) = self.camera_pose(frame);
        let center = Point3::from(cam_rot.inverse() * (world - cam_pos));
        let yaw = world_yaw - (self.camera.yaw + f * self.camera.yaw_rate);
        Pose {
            center,
            rotation: rot_y(yaw),
            yaw,
            half: Vector3::new(0.5 * o.dims[2], 0.5 * o.dims[1], 0.5 * o.dims[0]),
        }
    }

    /// Ground-truth box of an object in a frame's camera coordinates.
    pub fn truth_box(&self, object: usize, frame: usize) -> Box3D {
        let o = &self.objects[object];
        let p = self.pose(object, frame);
        Box3D::new(
            o.class.clone(),
            p.center,
            Dimensions::new(o.dims[0], o.dims[1], o.dims[2]),
            p.yaw,
            1.0,
        )
        .expect("validated spec")
    }

    fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0)
    }

    /// Nearest object hit along the ray through image point `(u, v)`, as
    /// `(object, depth)`.
    fn cast(&self, poses: &[Pose], u: f64, v: f64) -> Option<(usize, f64)> {
        let d = self.ray(u, v);
        poses
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.ray_hit(&d).map(|t| (i, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    fn poses(&self, frame: usize) -> Vec<Pose> {
        (0..self.objects.len()).map(|i| self.pose(i, frame)).collect()
    }
}

/// Noiseless depth and per-pixel object ids of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Render {
    pub depth: DepthRaster,
    pub ids: Vec<Option<usize>>,
}

impl Render {
    pub fn id(&self, u: u32, v: u32) -> Option<usize> {
        self.ids[(v * self.depth.width() + u) as usize]
    }

    /// Pixels whose nearest hit is `object`.
    pub fn silhouette(&self, object: usize) -> PixelSet {
        let w = self.depth.width();
        self.ids
            .iter()
            .enumerate()
            .filter(|(_, id)| **id == Some(object))
            .map(|(i, _)| Pixel::new(i as u32 % w, i as u32 / w))
            .collect()
    }
}

/// Z-buffered ray casting of all cuboids; background depth elsewhere.
pub fn render_depth(spec: &SceneSpec, frame: usize) -> Render {
    let poses = spec.poses(frame);
    let (w, h) = (spec.width, spec.height);
    let mut depth = DepthRaster::filled(w, h, BACKGROUND_DEPTH);
    let mut ids = vec![None; (w * h) as usize];
    for v in 0..h {
        for u in 0..w {
            if let Some((id, t)) = spec.cast(&poses, u as f64, v as f64) {
                depth.set(u, v, t as f32);
                ids[(v * w + u) as usize] = Some(id);
            }
        }
    }
    Render { depth, ids }
}

/// Columns removed from a mask by an occlusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnCrop {
    pub side: Side,
    /// First hidden column (right side) or last hidden column (left side).
    pub column: u32,
}

impl ColumnCrop {
    pub fn hides(&self, u: f64) -> bool {
        match self.side {
            Side::Right => u >= self.column as f64 - 0.5,
            Side::Left => u < self.column as f64 + 0.5,
        }
    }
}

/// Whole columns from one side until at least `fraction` of the pixels are
/// hidden.
fn crop_columns(pixels: &PixelSet, fraction: f64, side: Side) -> Option<ColumnCrop> {
    if fraction <= 0.0 || pixels.is_empty() {
        return None;
    }
    let mut per_col: BTreeMap<u32, usize> = BTreeMap::new();
    for p in pixels.iter() {
        *per_col.entry(p.u).or_default() += 1;
    }
    let target = (fraction * pixels.len() as f64).round() as usize;
    let cols: Vec<(u32, usize)> = match side {
        Side::Right => per_col.into_iter().rev().collect(),
        Side::Left => per_col.into_iter().collect(),
    };
    let mut removed = 0;
    for (u, n) in cols {
        // Stop at the column boundary closest to the requested fraction.
        if removed + n / 2 >= target {
            if removed == 0 {
                return None;
            }
            let column = match side {
                Side::Right => u + 1,
                Side::Left => u - 1,
            };
            return Some(ColumnCrop { side, column });
        }
        removed += n;
    }
    let column = match side {
        Side::Right => 0,
        Side::Left => u32::MAX,
    };
    Some(ColumnCrop { side, column })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub object: usize,
    pub box3d: Box3D,
    /// Box of the unoccluded silhouette; `None` when nothing is visible.
    pub box2d: Option<Box2D>,
    /// Mask id of the reported detection, if any.
    pub mask_id: Option<u32>,
    /// The detection was removed by the drop model.
    pub dropped: bool,
    pub silhouette_pixels: usize,
    pub crop: Option<ColumnCrop>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: usize,
    pub objects: Vec<ObjectTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub seed: u64,
    pub frames: Vec<FrameTruth>,
}

impl SceneTruth {
    /// Object behind a reported detection.
    pub fn object_of(&self, frame: usize, mask_id: u32) -> Option<usize> {
        self.frames
            .get(frame)?
            .objects
            .iter()
            .find(|o| o.mask_id == Some(mask_id))
            .map(|o| o.object)
    }

    /// KITTI ground-truth labels of a frame: every object with a visible
    /// silhouette, 2D box from the unoccluded silhouette.
    pub fn kitti_labels(&self, frame: usize) -> Vec<KittiLabel> {
        self.frames
            .get(frame)
            .map(|f| {
                f.objects
                    .iter()
                    .filter_map(|o| {
                        Some(KittiLabel {
                            box3d: o.box3d.clone(),
                            box2d: o.box2d?,
                        })
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub spec: SceneSpec,
    pub bundle: SceneBundle,
    pub truth: SceneTruth,
}

/// Independent RNG stream per frame and purpose.
fn frame_rng(seed: u64, frame: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64 * 4 + purpose);
    rng
}

const STREAM_DEPTH: u64 = 0;
const STREAM_DROP: u64 = 1;
const STREAM_JITTER: u64 = 2;

/// Detections of one frame (after occlusion, size filter and drops) and
/// their truth records.
pub fn render_masks(spec: &SceneSpec, frame: usize, render: &Render) -> (Vec<Detection>, FrameTruth) {
    let mut drop_rng = frame_rng(spec.seed, frame, STREAM_DROP);
    let mut detections = Vec::new();
    let mut objects = Vec::new();
    for (i, o) in spec.objects.iter().enumerate() {
        // Always draw, so drops of one object do not shift the others.
        let dropped = drop_rng.random::<f64>() < spec.noise.drop_prob;
        let silhouette = render.silhouette(i);
        let crop = spec
            .occlusions
            .iter()
            .filter(|c| c.frame == frame && c.object == i)
            .find_map(|c| crop_columns(&silhouette, c.fraction, c.side));
        let visible: PixelSet = silhouette
            .iter()
            .filter(|p| crop.is_none_or(|c| !c.hides(p.u as f64)))
            .copied()
            .collect();
        let reportable = visible.len() >= spec.noise.min_mask_pixels.max(1);
        let mask_id = (reportable && !dropped).then_some(detections.len() as u32);
        if let Some(id) = mask_id {
            let bbox = box_from_mask(&visible).expect("non-empty");
            let mask = InstanceMask::new(frame, visible, o.confidence, o.class.clone())
                .expect("valid mask");
            detections.push(Detection {
                mask_id: id,
                mask,
                bbox,
            });
        }
        objects.push(ObjectTruth {
            object: i,
            box3d: spec.truth_box(i, frame),
            box2d: box_from_mask(&silhouette).ok(),
            mask_id,
            dropped: reportable && dropped,
            silhouette_pixels: silhouette.len(),
            crop,
        });
    }
    (detections, FrameTruth { frame, objects })
}

/// Moves each mask pixel's surface point with its object into `target` and
/// reprojects it. A point is visible when it is the nearest hit along its
/// target ray and not behind a virtual occluder.
pub fn generate_tracks(
    spec: &SceneSpec,
    source: usize,
    object: usize,
    pixels: &PixelSet,
    target: usize,
    target_crop: Option<ColumnCrop>,
    jitter: &mut impl Rng,
) -> TrackedMask {
    let tgt_poses = spec.poses(target);
    let src = spec.pose(object, source);
    let tgt = tgt_poses[object];
    let k = &spec.intrinsics;
    let noise = (spec.noise.track_jitter_px > 0.0)
        .then(|| Normal::new(0.0, spec.noise.track_jitter_px).expect("sigma >= 0"));
    let points = pixels
        .iter()
        .map(|&p| {
            let (u, v) = (p.u as f64, p.v as f64);
            let dir = spec.ray(u, v);
            let Some(t) = src.ray_hit(&dir) else {
                return TrackPoint {
                    source: p,
                    target: [f64::NAN, f64::NAN],
                    visible: false,
                };
            };
            let local = src.rotation.inverse() * (dir * t - src.center.coords);
            let moved = tgt.center + tgt.rotation * local;
            let Some([tu, tv]) = k.project(&moved) else {
                return TrackPoint {
                    source: p,
                    target: [f64::NAN, f64::NAN],
                    visible: false,
                };
            };
            let in_image = tu >= -0.5
                && tv >= -0.5
                && tu < spec.width as f64 - 0.5
                && tv < spec.height as f64 - 0.5;
            let unoccluded = spec
                .cast(&tgt_poses, tu, tv)
                .is_some_and(|(id, d)| id == object && (d - moved.z).abs() <= 1e-6 * moved.z.max(1.0));
            let cropped = target_crop.is_some_and(|c| c.hides(tu));
            let visible = in_image && unoccluded && !cropped;
            let mut target = [tu, tv];
            if let (true, Some(n)) = (visible, &noise) {
                target[0] += n.sample(jitter);
                target[1] += n.sample(jitter);
            }
            TrackPoint {
                source: p,
                target,
                visible,
            }
        })
        .collect();
    TrackedMask {
        source_frame: source,
        target_frame: target,
        points,
    }
}

/// Renders every frame, adds noise, cuts masks and generates tracks from
/// each detection to every other frame.
pub fn generate(spec: &SceneSpec) -> Result<GeneratedScene> {
    spec.validate()?;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth_frames = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let render = render_depth(spec, f);
        let (detections, truth) = render_masks(spec, f, &render);
        let mut depth = render.depth.clone();
        if spec.noise.depth_sigma > 0.0 {
            let mut rng = frame_rng(spec.seed, f, STREAM_DEPTH);
            let n = Normal::new(0.0, spec.noise.depth_sigma).expect("sigma >= 0");
            for d in depth.data_mut() {
                *d = (*d as f64 + n.sample(&mut rng)).max(1e-3) as f32;
            }
        }
        frames.push(Frame {
            index: f,
            depth,
            detections,
        });
        truth_frames.push(truth);
    }
    let mut tracks = BTreeMap::new();
    for (f, truth) in truth_frames.iter().enumerate() {
        let mut rng = frame_rng(spec.seed, f, STREAM_JITTER);
        for o in &truth.objects {
            let Some(id) = o.mask_id else { continue };
            let det = frames[f]
                .detections
                .iter()
                .find(|d| d.mask_id == id)
                .expect("detection exists");
            let per_target: Vec<TrackedMask> = (0..spec.frames)
                .filter(|&t| t != f)
                .map(|t| {
                    let crop = truth_frames[t].objects[o.object].crop;
                    generate_tracks(spec, f, o.object, &det.mask.pixels, t, crop, &mut rng)
                })
                .collect();
            if !per_target.is_empty() {
                tracks.insert(TrackKey { frame: f, mask_id: id }, per_target);
            }
        }
    }
    let mut bundle = SceneBundle {
        intrinsics: spec.intrinsics,
        width: spec.width,
        height: spec.height,
        frames,
        tracks,
    };
    bundle.canonicalize().map_err(OracleError::Spec)?;
    bundle.validate().map_err(OracleError::Spec)?;
    Ok(GeneratedScene {
        spec: spec.clone(),
        bundle,
        truth: SceneTruth {
            seed: spec.seed,
            frames: truth_frames,
        },
    })
}

/// Writes the scene directory layout, `truth.json` and KITTI ground truth
/// under `truth/`.
pub fn emit_scene(scene: &GeneratedScene, dir: &Path) -> Result<()> {
    ingest::write_scene(&scene.bundle, dir)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| OracleError::Io { path, source }
    };
    let truth_path = dir.join("truth.json");
    let json = serde_json::to_string_pretty(&scene.truth).expect("truth serializes");
    fs::write(&truth_path, json + "\n").map_err(io(&truth_path))?;
    let truth_dir = dir.join("truth");
    fs::create_dir_all(&truth_dir).map_err(io(&truth_dir))?;
    for f in &scene.truth.frames {
        ingest::write_kitti_labels(
            &scene.truth.kitti_labels(f.frame),
            &truth_dir.join(format!("{:06}.txt", f.frame)),
        )?;
    }
    Ok(())
}

pub fn read_truth(dir: &Path) -> Result<SceneTruth> {
    let path = dir.join("truth.json");
    let text = fs::read_to_string(&path).map_err(|source| OracleError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| OracleError::Spec(format!("{}: {e}", path.display())))
}
