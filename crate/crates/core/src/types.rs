//! Domain types and geometric primitives shared by every pipeline stage.
//!
//! Coordinates follow the KITTI camera convention: x right, y down, z forward.
//! Yaw is a rotation about +y; a box with yaw θ has its length axis along
//! `(cos θ, -sin θ)` in the (x, z) bird's-eye-view plane.
//!
//! Pixels are addressed by integer indices `(u, v)`; the continuous image
//! coordinate of a pixel's center equals its index.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypeError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid 2D box: {0}")]
    InvalidBox2D(String),
    #[error("invalid 3D box: {0}")]
    InvalidBox3D(String),
    #[error("invalid similarity transform: {0}")]
    InvalidTransform(String),
    #[error("invalid dimension prior for {class}: {reason}")]
    InvalidPrior { class: String, reason: String },
    #[error("invalid instance mask: {0}")]
    InvalidMask(String),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

/// Pinhole intrinsics (the matrix K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, TypeError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if ![self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite()) {
            return Err(TypeError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(TypeError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K^-1 [u v 1]^T z`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Point3<f64> {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Perspective projection; `None` for points at or behind the camera plane.
    #[inline]
    pub fn project(&self, p: &Point3<f64>) -> Option<[f64; 2]> {
        if p.z <= 0.0 {
            return None;
        }
        Some([self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }
}

/// Integer pixel index. Ordered row-major: by `v`, then `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub u: u32,
    pub v: u32,
}

impl Pixel {
    pub const fn new(u: u32, v: u32) -> Self {
        Self { u, v }
    }
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.v, self.u).cmp(&(other.v, other.u))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A set of pixels stored as a sorted, deduplicated row-major list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Pixel>", into = "Vec<Pixel>")]
pub struct PixelSet {
    pixels: Vec<Pixel>,
}

impl From<Vec<Pixel>> for PixelSet {
    fn from(mut pixels: Vec<Pixel>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        Self { pixels }
    }
}

impl From<PixelSet> for Vec<Pixel> {
    fn from(set: PixelSet) -> Self {
        set.pixels
    }
}

impl FromIterator<Pixel> for PixelSet {
    fn from_iter<I: IntoIterator<Item = Pixel>>(iter: I) -> Self {
        Self::from(iter.into_iter().collect::<Vec<_>>())
    }
}

impl PixelSet {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pixel> {
        self.pixels.iter()
    }

    pub fn as_slice(&self) -> &[Pixel] {
        &self.pixels
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.pixels.binary_search(&p).is_ok()
    }

    /// Size of the intersection, by a linear merge of the two sorted lists.
    pub fn intersection_len(&self, other: &PixelSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        let (a, b) = (&self.pixels, &other.pixels);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Inclusive pixel extrema `(u_min, v_min, u_max, v_max)`.
    pub fn extrema(&self) -> Option<(u32, u32, u32, u32)> {
        let first = self.pixels.first()?;
        let last = self.pixels.last()?;
        let (umin, umax) = self
            .pixels
            .iter()
            .fold((u32::MAX, 0), |(lo, hi), p| (lo.min(p.u), hi.max(p.u)));
        Some((umin, first.v, umax, last.v))
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.pixels.iter().all(|p| p.u < width && p.v < height)
    }
}

/// IoU of two pixel sets. Two empty sets have no defined IoU.
pub fn mask_iou(a: &PixelSet, b: &PixelSet) -> Result<f64, TypeError> {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Err(TypeError::Degenerate("IoU of two empty masks"));
    }
    Ok(inter as f64 / union as f64)
}

/// One detected instance mask in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMask {
    pub frame_index: usize,
    pub pixels: PixelSet,
    pub confidence: f64,
    pub class_label: String,
}

impl InstanceMask {
    pub fn new(
        frame_index: usize,
        pixels: PixelSet,
        confidence: f64,
        class_label: impl Into<String>,
    ) -> Result<Self, TypeError> {
        if pixels.is_empty() {
            return Err(TypeError::InvalidMask("empty pixel set".into()));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(TypeError::InvalidMask(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            frame_index,
            pixels,
            confidence,
            class_label: class_label.into(),
        })
    }

    pub fn iou(&self, other: &InstanceMask) -> Result<f64, TypeError> {
        mask_iou(&self.pixels, &other.pixels)
    }
}

/// Axis-aligned 2D box as center plus size, in pixel-index coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub u_c: f64,
    pub v_c: f64,
    pub w: f64,
    pub h: f64,
}

impl Box2D {
    pub fn new(u_c: f64, v_c: f64, w: f64, h: f64) -> Result<Self, TypeError> {
        if ![u_c, v_c, w, h].iter().all(|x| x.is_finite()) {
            return Err(TypeError::InvalidBox2D("non-finite value".into()));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(TypeError::InvalidBox2D(format!(
                "non-positive size {w}x{h}"
            )));
        }
        Ok(Self { u_c, v_c, w, h })
    }

    pub fn from_corners(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<Self, TypeError> {
        Self::new(
            0.5 * (u_min + u_max),
            0.5 * (v_min + v_max),
            u_max - u_min,
            v_max - v_min,
        )
    }

    pub fn u_min(&self) -> f64 {
        self.u_c - 0.5 * self.w
    }
    pub fn v_min(&self) -> f64 {
        self.v_c - 0.5 * self.h
    }
    pub fn u_max(&self) -> f64 {
        self.u_c + 0.5 * self.w
    }
    pub fn v_max(&self) -> f64 {
        self.v_c + 0.5 * self.h
    }
    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

pub fn box2d_iou(a: &Box2D, b: &Box2D) -> f64 {
    if a == b {
        return 1.0;
    }
    let iw = (a.u_max().min(b.u_max()) - a.u_min().max(b.u_min())).max(0.0);
    let ih = (a.v_max().min(b.v_max()) - a.v_min().max(b.v_min())).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.area() + b.area() - inter)).min(1.0)
}

/// Box spanned by the mask's pixel extrema. Extents are inclusive, so a
/// single pixel yields a 1x1 box centered on it.
pub fn box_from_mask(pixels: &PixelSet) -> Result<Box2D, TypeError> {
    let (umin, vmin, umax, vmax) = pixels
        .extrema()
        .ok_or(TypeError::Degenerate("box of an empty mask"))?;
    let (umin, vmin, umax, vmax) = (umin as f64, vmin as f64, umax as f64, vmax as f64);
    Box2D::new(
        0.5 * (umin + umax),
        0.5 * (vmin + vmax),
        umax - umin + 1.0,
        vmax - vmin + 1.0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub source: Pixel,
    /// Sub-pixel location in the target frame.
    pub target: [f64; 2],
    pub visible: bool,
}

/// A mask propagated from `source_frame` to `target_frame` by a point tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedMask {
    pub source_frame: usize,
    pub target_frame: usize,
    pub points: Vec<TrackPoint>,
}

impl TrackedMask {
    pub fn visible_count(&self) -> usize {
        self.points.iter().filter(|p| p.visible).count()
    }

    pub fn visible_fraction(&self) -> f64 {
        if self.points.is_empty() {
            0.0
        } else {
            self.visible_count() as f64 / self.points.len() as f64
        }
    }

    /// Discrete mask in the target frame: visible points rounded to the
    /// nearest pixel, clipped to the image.
    pub fn rasterize(&self, width: u32, height: u32) -> PixelSet {
        self.points
            .iter()
            .filter(|p| p.visible)
            .filter_map(|p| {
                let u = p.target[0].round();
                let v = p.target[1].round();
                (u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64)
                    .then(|| Pixel::new(u as u32, v as u32))
            })
            .collect()
    }
}

/// Pseudo-LiDAR points in camera coordinates (meters).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    /// Source frame of each point, when the cloud merges several frames.
    pub frames: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            frames: None,
        }
    }

    pub fn tagged(points: Vec<Point3<f64>>, frame: usize) -> Self {
        let frames = Some(vec![frame; points.len()]);
        Self { points, frames }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }

    /// Appends `other`, keeping per-point frame tags when both sides have them.
    pub fn extend(&mut self, other: PointCloud) {
        match (&mut self.frames, other.frames) {
            (Some(mine), Some(theirs)) => mine.extend(theirs),
            (None, Some(theirs)) if self.points.is_empty() => self.frames = Some(theirs),
            _ => self.frames = None,
        }
        self.points.extend(other.points);
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            frames: self.frames.clone(),
        }
    }

    /// Keeps the points whose index satisfies `keep`.
    pub fn filter_indexed(&self, mut keep: impl FnMut(usize, &Point3<f64>) -> bool) -> PointCloud {
        let mut points = Vec::new();
        let mut frames = self.frames.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            if keep(i, p) {
                points.push(*p);
                if let (Some(out), Some(tags)) = (frames.as_mut(), self.frames.as_ref()) {
                    out.push(tags[i]);
                }
            }
        }
        PointCloud { points, frames }
    }
}

/// `p ↦ s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

const ROTATION_TOL: f64 = 1e-9;

impl SimilarityTransform {
    pub fn new(
        scale: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, TypeError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(TypeError::InvalidTransform(format!("scale {scale}")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(TypeError::InvalidTransform("non-finite translation".into()));
        }
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(orth <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
            return Err(TypeError::InvalidTransform(format!(
                "not a proper rotation (|RᵀR - I| = {orth:e}, det = {det})"
            )));
        }
        Ok(Self {
            scale,
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rot = self.rotation.inverse();
        let scale = 1.0 / self.scale;
        SimilarityTransform {
            scale,
            rotation: rot,
            translation: -(scale * (rot * self.translation)),
        }
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.scale, *self.rotation.matrix(), self.translation).is_ok()
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Box extents in meters: width (lateral), height (vertical), length (heading).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub w: f64,
    pub h: f64,
    pub l: f64,
}

impl Dimensions {
    pub fn new(w: f64, h: f64, l: f64) -> Self {
        Self { w, h, l }
    }

    pub fn volume(&self) -> f64 {
        self.w * self.h * self.l
    }

    fn is_valid(&self) -> bool {
        [self.w, self.h, self.l]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// A 3D label. `center` is the geometric center of the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub class_label: String,
    pub center: Point3<f64>,
    pub dims: Dimensions,
    pub yaw: f64,
    pub score: f64,
}

impl Box3D {
    pub fn new(
        class_label: impl Into<String>,
        center: Point3<f64>,
        dims: Dimensions,
        yaw: f64,
        score: f64,
    ) -> Result<Self, TypeError> {
        if !dims.is_valid() {
            return Err(TypeError::InvalidBox3D(format!("dimensions {dims:?}")));
        }
        if !center.coords.iter().all(|v| v.is_finite()) || !yaw.is_finite() {
            return Err(TypeError::InvalidBox3D("non-finite pose".into()));
        }
        Ok(Self {
            class_label: class_label.into(),
            center,
            dims,
            yaw: normalize_angle(yaw),
            score,
        })
    }

    /// Unit BEV direction `(x, z)` of the length axis.
    pub fn length_axis(&self) -> [f64; 2] {
        [self.yaw.cos(), -self.yaw.sin()]
    }

    /// Unit BEV direction `(x, z)` of the width axis.
    pub fn width_axis(&self) -> [f64; 2] {
        [self.yaw.sin(), self.yaw.cos()]
    }

    /// BEV footprint corners `(x, z)`, counter-clockwise in the (x, z) plane.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let [lx, lz] = self.length_axis();
        let [wx, wz] = self.width_axis();
        let (hl, hw) = (0.5 * self.dims.l, 0.5 * self.dims.w);
        let c = [self.center.x, self.center.z];
        let corner = |a: f64, b: f64| [c[0] + a * lx + b * wx, c[1] + a * lz + b * wz];
        [
            corner(-hl, -hw),
            corner(hl, -hw),
            corner(hl, hw),
            corner(-hl, hw),
        ]
    }

    /// Vertical extent `[y_top, y_bottom]` (y points down).
    pub fn y_range(&self) -> (f64, f64) {
        (
            self.center.y - 0.5 * self.dims.h,
            self.center.y + 0.5 * self.dims.h,
        )
    }
}

/// Typical size of an object class, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionPrior {
    pub class_label: String,
    pub height: f64,
    pub width: f64,
    pub length: f64,
}

impl DimensionPrior {
    pub fn new(
        class_label: impl Into<String>,
        height: f64,
        width: f64,
        length: f64,
    ) -> Result<Self, TypeError> {
        let class_label = class_label.into();
        for (name, v) in [("height", height), ("width", width), ("length", length)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(TypeError::InvalidPrior {
                    class: class_label,
                    reason: format!("{name} must be positive, got {v}"),
                });
            }
        }
        Ok(Self {
            class_label,
            height,
            width,
            length,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(u0: u32, v0: u32, w: u32, h: u32) -> PixelSet {
        (v0..v0 + h)
            .flat_map(|v| (u0..u0 + w).map(move |u| Pixel::new(u, v)))
            .collect()
    }

    #[test]
    fn mask_iou_examples() {
        let a = block(0, 0, 2, 2);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &block(10, 10, 2, 2)).unwrap(), 0.0);
        // 2 shared of 6 total pixels
        let shifted = block(1, 0, 2, 2);
        assert!((mask_iou(&a, &shifted).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(mask_iou(&PixelSet::default(), &PixelSet::default()).is_err());
    }

    #[test]
    fn box2d_iou_examples() {
        let a = Box2D::from_corners(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = Box2D::from_corners(0.5, 0.0, 1.5, 1.0).unwrap();
        assert_eq!(box2d_iou(&a, &a), 1.0);
        assert!((box2d_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        let far = Box2D::from_corners(5.0, 5.0, 6.0, 6.0).unwrap();
        assert_eq!(box2d_iou(&a, &far), 0.0);
    }

    #[test]
    fn box_from_mask_inclusive_extents() {
        let single: PixelSet = vec![Pixel::new(5, 7)].into();
        let b = box_from_mask(&single).unwrap();
        assert_eq!((b.u_c, b.v_c, b.w, b.h), (5.0, 7.0, 1.0, 1.0));

        let two: PixelSet = vec![Pixel::new(0, 0), Pixel::new(4, 2)].into();
        let b = box_from_mask(&two).unwrap();
        assert_eq!((b.u_c, b.v_c, b.w, b.h), (2.0, 1.0, 5.0, 3.0));

        let b = box_from_mask(&block(0, 0, 10, 10)).unwrap();
        assert_eq!((b.u_c, b.v_c, b.w, b.h), (4.5, 4.5, 10.0, 10.0));

        assert!(box_from_mask(&PixelSet::default()).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, f64::NAN, 0.0).is_err());
        assert!(Box2D::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(DimensionPrior::new("Car", -1.0, 1.0, 1.0).is_err());
        assert!(InstanceMask::new(0, PixelSet::default(), 0.5, "Car").is_err());
        assert!(InstanceMask::new(0, block(0, 0, 1, 1), 1.5, "Car").is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(SimilarityTransform::new(1.0, reflect, Vector3::zeros()).is_err());
        assert!(SimilarityTransform::new(0.0, Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn yaw_wrapped_into_half_open_interval() {
        let eps = 1e-3;
        let b = Box3D::new(
            "Car",
            Point3::new(0.0, 0.0, 10.0),
            Dimensions::new(1.0, 1.0, 1.0),
            PI + eps,
            1.0,
        )
        .unwrap();
        assert!((b.yaw - (-PI + eps)).abs() < 1e-12);
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
    }

    #[test]
    fn rasterize_keeps_visible_in_bounds() {
        let tm = TrackedMask {
            source_frame: 0,
            target_frame: 1,
            points: vec![
                TrackPoint { source: Pixel::new(0, 0), target: [1.4, 2.6], visible: true },
                TrackPoint { source: Pixel::new(1, 0), target: [3.0, 3.0], visible: false },
                TrackPoint { source: Pixel::new(2, 0), target: [-2.0, 0.0], visible: true },
            ],
        };
        let r = tm.rasterize(10, 10);
        assert_eq!(r.as_slice(), &[Pixel::new(1, 3)]);
        assert!((tm.visible_fraction() - 2.0 / 3.0).abs() < 1e-15);
    }

    fn arb_rotation() -> impl Strategy<Value = Rotation3<f64>> {
        (-PI..PI, -PI..PI, -PI..PI).prop_map(|(r, p, y)| Rotation3::from_euler_angles(r, p, y))
    }

    fn arb_transform() -> impl Strategy<Value = SimilarityTransform> {
        (0.2f64..5.0, arb_rotation(), prop::array::uniform3(-50.0f64..50.0)).prop_map(
            |(s, r, t)| SimilarityTransform {
                scale: s,
                rotation: r,
                translation: Vector3::from(t),
            },
        )
    }

    fn arb_pixels() -> impl Strategy<Value = PixelSet> {
        prop::collection::vec((0u32..12, 0u32..12), 0..40)
            .prop_map(|v| v.into_iter().map(|(u, v)| Pixel::new(u, v)).collect())
    }

    proptest! {
        #[test]
        fn composition_preserves_validity(a in arb_transform(), b in arb_transform(),
                                          p in prop::array::uniform3(-10.0f64..10.0)) {
            let c = a.compose(&b);
            prop_assert!(c.is_valid());
            prop_assert!((c.scale - a.scale * b.scale).abs() < 1e-12);
            let p = Point3::from(p);
            let direct = a.apply(&b.apply(&p));
            prop_assert!((c.apply(&p) - direct).norm() < 1e-9);
            let back = c.inverse().apply(&c.apply(&p));
            prop_assert!((back - p).norm() < 1e-8);
        }

        #[test]
        fn mask_iou_symmetric_bounded(a in arb_pixels(), b in arb_pixels()) {
            prop_assume!(!(a.is_empty() && b.is_empty()));
            let ab = mask_iou(&a, &b).unwrap();
            prop_assert_eq!(ab, mask_iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
        }

        #[test]
        fn box2d_iou_symmetric_bounded(a in prop::array::uniform4(0.1f64..10.0),
                                       b in prop::array::uniform4(0.1f64..10.0)) {
            let a = Box2D::new(a[0], a[1], a[2], a[3]).unwrap();
            let b = Box2D::new(b[0], b[1], b[2], b[3]).unwrap();
            let ab = box2d_iou(&a, &b);
            prop_assert!((ab - box2d_iou(&b, &a)).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(box2d_iou(&a, &a), 1.0);
        }

        #[test]
        fn yaw_normalization_idempotent(a in -100.0f64..100.0) {
            let n = normalize_angle(a);
            prop_assert!(n > -PI && n <= PI);
            prop_assert_eq!(normalize_angle(n), n);
        }
    }
}
