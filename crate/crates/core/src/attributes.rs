//! 3D box attributes from a completed pseudo-LiDAR cloud: depth clipping,
//! BEV PCA orientation, uniform-scale dimensions and face-anchored center.

use std::f64::consts::PI;

use log::warn;
use nalgebra::Point3;
use thiserror::Error;

use crate::types::{Box3D, DimensionPrior, Dimensions, PointCloud, TypeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttributeError {
    #[error("{stage}: empty point cloud")]
    Empty { stage: &'static str },
    #[error("invalid clip config: {0}")]
    InvalidClipConfig(String),
    #[error("estimate_orientation: all points coincide in bird's-eye view")]
    ZeroSpread,
    #[error("estimate_dimensions: no prior for class {0:?}")]
    MissingPrior(String),
    #[error("estimate_box: {0}")]
    InvalidBox(#[from] TypeError),
}

type Result<T> = std::result::Result<T, AttributeError>;

/// Depth histogram clipping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig {
    pub bins: usize,
    /// Fraction of the bins beyond the densest one that are kept.
    pub tau: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self { bins: 64, tau: 0.6 }
    }
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(AttributeError::InvalidClipConfig(format!(
                "bin count {} < 2",
                self.bins
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(AttributeError::InvalidClipConfig(format!(
                "tau {} outside (0, 1]",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Upper bin bound `j* + τ (N_b - j*)`, rounded down.
pub fn upper_bin_index(j_star: usize, tau: f64, bins: usize) -> usize {
    j_star + (tau * (bins - j_star) as f64).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipResult {
    pub cloud: PointCloud,
    /// Densest bin.
    pub j_star: usize,
    /// Upper bin bound.
    pub j_bar: usize,
    /// Depth interval kept.
    pub z_range: (f64, f64),
    /// All points shared one depth; nothing was clipped.
    pub degenerate: bool,
}

/// Keeps the points from the densest depth bin up to the `j_bar` bin edge.
///
/// Bins are uniform over `[z_min, z_max]`; edge `j` sits at
/// `z_min + j * width` and edge `N_b` is `z_max`. The densest bin itself is
/// always kept, and the lower edge is inclusive.
pub fn depth_clip(cloud: &PointCloud, cfg: &ClipConfig) -> Result<ClipResult> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(AttributeError::Empty { stage: "depth_clip" });
    }
    let (zmin, zmax) = cloud
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.z), hi.max(p.z))
        });
    let n = cfg.bins;
    if zmax - zmin <= 1e-12 * zmax.abs().max(1.0) {
        return Ok(ClipResult {
            cloud: cloud.clone(),
            j_star: 0,
            j_bar: upper_bin_index(0, cfg.tau, n),
            z_range: (zmin, zmax),
            degenerate: true,
        });
    }
    let width = (zmax - zmin) / n as f64;
    let bin = |z: f64| (((z - zmin) / width).floor() as usize).min(n - 1);
    let mut counts = vec![0usize; n];
    for p in &cloud.points {
        counts[bin(p.z)] += 1;
    }
    let j_star = counts
        .iter()
        .enumerate()
        .fold(0, |best, (j, &c)| if c > counts[best] { j } else { best });
    let j_bar = upper_bin_index(j_star, cfg.tau, n);
    let edge = |j: usize| if j >= n { zmax } else { zmin + j as f64 * width };
    let upper = edge(j_bar.max(j_star + 1));
    let lower = edge(j_star);
    let clipped = cloud.filter_indexed(|_, p| bin(p.z) >= j_star && p.z <= upper);
    if clipped.is_empty() {
        return Err(AttributeError::Empty { stage: "depth_clip" });
    }
    Ok(ClipResult {
        cloud: clipped,
        j_star,
        j_bar,
        z_range: (lower, upper),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    /// Yaw of the major axis in `[0, π)`.
    pub yaw: f64,
    /// BEV covariance eigenvalues, descending.
    pub eigenvalues: [f64; 2],
    /// Unit `(x, z)` direction of the first principal component.
    pub major_axis: [f64; 2],
    /// The two eigenvalues are within the ambiguity ratio of each other.
    pub ambiguous: bool,
}

/// Eigenvalues closer than this fraction of the larger one mark the
/// orientation as ambiguous.
pub const AMBIGUITY_RATIO: f64 = 0.05;

/// Folds an axis angle into `[0, π)`.
pub fn fold_axis(yaw: f64) -> f64 {
    let r = yaw.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Yaw of the BEV axis through `(x, z)`.
pub fn axis_yaw(x: f64, z: f64) -> f64 {
    fold_axis((-z).atan2(x))
}

/// PCA on the (x, z) coordinates; the major axis is taken as the length
/// direction. Front and back are indistinguishable, hence `[0, π)`.
pub fn estimate_orientation(cloud: &PointCloud) -> Result<Orientation> {
    let bev: Vec<[f64; 2]> = cloud.points.iter().map(|p| [p.x, p.z]).collect();
    bev_pca(&bev)
}

fn bev_pca(points: &[[f64; 2]]) -> Result<Orientation> {
    let n = points.len();
    if n == 0 {
        return Err(AttributeError::Empty {
            stage: "estimate_orientation",
        });
    }
    let inv = 1.0 / n as f64;
    let (mx, mz) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    let (mx, mz) = (mx * inv, mz * inv);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dz) = (p[0] - mx, p[1] - mz);
        a += dx * dx;
        b += dx * dz;
        c += dz * dz;
    }
    let (a, b, c) = (a * inv, b * inv, c * inv);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mean + rad, (mean - rad).max(0.0));
    if !(l1 > 1e-18) {
        return Err(AttributeError::ZeroSpread);
    }
    let phi = 0.5 * (2.0 * b).atan2(a - c);
    let major_axis = [phi.cos(), phi.sin()];
    Ok(Orientation {
        yaw: axis_yaw(major_axis[0], major_axis[1]),
        eigenvalues: [l1, l2],
        major_axis,
        ambiguous: l1 - l2 < AMBIGUITY_RATIO * l1,
    })
}

const EXTENT_TRIM: f64 = 0.02;
const EXTENT_GAP: f64 = 0.02;

/// Robust `[lo, hi]` extent of a sample.
///
/// Starts from the 2nd and 98th percentiles and extends each bound outward
/// through consecutive sorted values as long as neighbors are no further
/// apart than 2% of the percentile extent. Dense surfaces therefore reach
/// their true extremes while isolated outliers stay excluded.
pub fn robust_extent(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let last = v.len() - 1;
    let mut lo = (EXTENT_TRIM * last as f64).floor() as usize;
    let mut hi = ((1.0 - EXTENT_TRIM) * last as f64).ceil() as usize;
    let gap = EXTENT_GAP * (v[hi] - v[lo]);
    while lo > 0 && v[lo] - v[lo - 1] <= gap {
        lo -= 1;
    }
    while hi < last && v[hi + 1] - v[hi] <= gap {
        hi += 1;
    }
    Some((v[lo], v[hi]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionEstimate {
    pub dims: Dimensions,
    /// `H / H_prior`, when the prior was scaled.
    pub scale: Option<f64>,
    /// Robust vertical extent `(y_top, y_bottom)`.
    pub vertical: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionMode {
    /// Scale the prior uniformly by the measured height.
    UniformScale,
    /// Measure all three extents directly on the cloud.
    RawExtent,
}

fn raw_dims(cloud: &PointCloud, yaw: f64, h: f64) -> Dimensions {
    let along = |axis: [f64; 2]| -> f64 {
        let proj: Vec<f64> = cloud
            .points
            .iter()
            .map(|p| p.x * axis[0] + p.z * axis[1])
            .collect();
        robust_extent(&proj).map_or(0.0, |(a, b)| b - a)
    };
    let l = along([yaw.cos(), -yaw.sin()]);
    let w = along([yaw.sin(), yaw.cos()]);
    // Flat or single-point clouds still need a valid box.
    let floor = 1e-3;
    Dimensions::new(w.max(floor), h.max(floor), l.max(floor))
}

/// Height from the cloud; width and length from the prior scaled by
/// `H / H_prior`. Without a prior, falls back to raw extents along the box
/// axes when `allow_raw_fallback` is set.
pub fn estimate_dimensions(
    cloud: &PointCloud,
    yaw: f64,
    prior: Option<&DimensionPrior>,
    mode: DimensionMode,
    allow_raw_fallback: bool,
) -> Result<DimensionEstimate> {
    let ys: Vec<f64> = cloud.points.iter().map(|p| p.y).collect();
    let (top, bottom) = robust_extent(&ys).ok_or(AttributeError::Empty {
        stage: "estimate_dimensions",
    })?;
    let h = bottom - top;
    let raw = DimensionEstimate {
        dims: raw_dims(cloud, yaw, h),
        scale: None,
        vertical: (top, bottom),
    };
    if mode == DimensionMode::RawExtent {
        return Ok(raw);
    }
    let Some(prior) = prior else {
        if !allow_raw_fallback {
            return Err(AttributeError::MissingPrior(String::new()));
        }
        warn!("stage=dimensions fallback=raw_extents reason=missing_prior");
        return Ok(raw);
    };
    if !(h > 1e-6) {
        // No vertical extent to scale by: keep the prior as is.
        return Ok(DimensionEstimate {
            dims: Dimensions::new(prior.width, prior.height, prior.length),
            scale: None,
            vertical: (top, bottom),
        });
    }
    let s = h / prior.height;
    Ok(DimensionEstimate {
        dims: Dimensions::new(s * prior.width, h, s * prior.length),
        scale: Some(s),
        vertical: (top, bottom),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterEstimate {
    /// Mean of the cloud.
    pub mean: Point3<f64>,
    pub refined: Point3<f64>,
}

/// Mean center, then refined: along each horizontal box axis the face
/// nearer the camera is anchored to the observed extremum and the center
/// placed half a dimension behind it; vertically the center is the middle
/// of the observed extent. Each coordinate stays within half a dimension of
/// the mean.
pub fn estimate_center(cloud: &PointCloud, yaw: f64, dims: &Dimensions) -> Result<CenterEstimate> {
    let mean = cloud.centroid().ok_or(AttributeError::Empty {
        stage: "estimate_center",
    })?;
    let axes = [
        ([yaw.cos(), -yaw.sin()], dims.l),
        ([yaw.sin(), yaw.cos()], dims.w),
    ];
    let mut bev = [0.0f64; 2];
    for (axis, d) in axes {
        let proj: Vec<f64> = cloud
            .points
            .iter()
            .map(|p| p.x * axis[0] + p.z * axis[1])
            .collect();
        let (lo, hi) = robust_extent(&proj).expect("non-empty");
        let m = mean.x * axis[0] + mean.z * axis[1];
        // The camera sits at the origin, i.e. at coordinate 0 on every axis.
        let c = if lo > 0.0 {
            lo + 0.5 * d
        } else if hi < 0.0 {
            hi - 0.5 * d
        } else {
            0.5 * (lo + hi)
        };
        let c = c.clamp(m - 0.5 * d, m + 0.5 * d);
        for k in 0..2 {
            bev[k] += c * axis[k];
        }
    }
    let ys: Vec<f64> = cloud.points.iter().map(|p| p.y).collect();
    let (top, bottom) = robust_extent(&ys).expect("non-empty");
    let y = (0.5 * (top + bottom)).clamp(mean.y - 0.5 * dims.h, mean.y + 0.5 * dims.h);
    Ok(CenterEstimate {
        mean,
        refined: Point3::new(bev[0], y, bev[1]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeConfig {
    pub clip: ClipConfig,
    pub depth_clipping: bool,
    pub dimension_mode: DimensionMode,
    pub center_refinement: bool,
    /// Fall back to raw extents when a class has no prior.
    pub raw_dims_without_prior: bool,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        Self {
            clip: ClipConfig::default(),
            depth_clipping: true,
            dimension_mode: DimensionMode::UniformScale,
            center_refinement: true,
            raw_dims_without_prior: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxEstimate {
    pub box3d: Box3D,
    pub clip: Option<ClipResult>,
    pub orientation: Orientation,
    pub dimensions: DimensionEstimate,
    pub center: CenterEstimate,
    /// Orientation came from the viewing ray because PCA was ambiguous.
    pub ray_fallback: bool,
}

/// Clip, orient, size and place a box around a completed cloud.
pub fn estimate_box(
    class_label: &str,
    score: f64,
    cloud: &PointCloud,
    prior: Option<&DimensionPrior>,
    cfg: &AttributeConfig,
) -> Result<BoxEstimate> {
    let (clip, clipped) = if cfg.depth_clipping {
        let r = depth_clip(cloud, &cfg.clip)?;
        let c = r.cloud.clone();
        (Some(r), c)
    } else if cloud.is_empty() {
        return Err(AttributeError::Empty { stage: "depth_clip" });
    } else {
        (None, cloud.clone())
    };
    let orientation = estimate_orientation(&clipped)?;
    let mean = clipped.centroid().expect("non-empty");
    let ray_fallback = orientation.ambiguous;
    let yaw = if ray_fallback {
        axis_yaw(mean.x, mean.z)
    } else {
        orientation.yaw
    };
    let dimensions = estimate_dimensions(
        &clipped,
        yaw,
        prior,
        cfg.dimension_mode,
        cfg.raw_dims_without_prior,
    )
    .map_err(|e| match e {
        AttributeError::MissingPrior(_) => AttributeError::MissingPrior(class_label.to_string()),
        other => other,
    })?;
    let center = estimate_center(&clipped, yaw, &dimensions.dims)?;
    let c = if cfg.center_refinement {
        center.refined
    } else {
        center.mean
    };
    let box3d = Box3D::new(class_label, c, dimensions.dims, yaw, score)?;
    Ok(BoxEstimate {
        box3d,
        clip,
        orientation,
        dimensions,
        center,
        ray_fallback,
    })
}
