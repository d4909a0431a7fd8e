//! Pseudo-LiDAR generation and completion by similarity registration of
//! tracked correspondences.

use std::collections::BTreeMap;

use log::debug;
use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3, SVD};
use thiserror::Error;

use crate::assoc::ObjectTracklet;
use crate::depth::DepthRaster;
use crate::ingest::SceneBundle;
use crate::types::{CameraIntrinsics, Pixel, PixelSet, PointCloud, SimilarityTransform, TrackedMask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("none of the {0} mask pixels has a valid depth")]
    EmptyCloud(usize),
    #[error("insufficient correspondences: {found} < {required}")]
    InsufficientCorrespondences { found: usize, required: usize },
    #[error("degenerate correspondence configuration: {0}")]
    RankDeficient(&'static str),
    #[error("no candidate target frame has a valid registration")]
    NoValidTarget,
    #[error("completed pseudo-LiDAR is empty")]
    EmptyCompletion,
}

type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    /// Force `s = 1`.
    pub rigid_only: bool,
    /// One round of refitting after dropping pairs above
    /// `trim_factor * median` residual.
    pub trim: bool,
    pub trim_factor: f64,
    /// Residuals below this (meters) are never trimmed.
    pub trim_floor: f64,
    pub min_correspondences: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            rigid_only: false,
            trim: true,
            trim_factor: 3.0,
            trim_floor: 1e-3,
            min_correspondences: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backprojection {
    pub cloud: PointCloud,
    /// Pixels dropped for non-positive or non-finite depth.
    pub skipped: usize,
}

/// Lifts mask pixels to camera coordinates with their depth.
pub fn backproject(
    pixels: &PixelSet,
    depth: &DepthRaster,
    k: &CameraIntrinsics,
) -> Result<Backprojection> {
    let mut points = Vec::with_capacity(pixels.len());
    for p in pixels.iter() {
        match depth.get(p.u, p.v).map(f64::from) {
            Some(z) if z.is_finite() && z > 0.0 => {
                points.push(k.unproject(p.u as f64, p.v as f64, z))
            }
            _ => {}
        }
    }
    if points.is_empty() {
        return Err(GeometryError::EmptyCloud(pixels.len()));
    }
    Ok(Backprojection {
        skipped: pixels.len() - points.len(),
        cloud: PointCloud::new(points),
    })
}

/// 3D point pairs `(source, target)` between two frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(Point3<f64>, Point3<f64>)>,
    pub source_frame: usize,
    pub target_frame: usize,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn swapped(self) -> Self {
        Self {
            pairs: self.pairs.into_iter().map(|(a, b)| (b, a)).collect(),
            source_frame: self.target_frame,
            target_frame: self.source_frame,
        }
    }
}

/// Back-projects both endpoints of every visible track point. Target depth
/// is sampled at the sub-pixel track location. With `target_mask`, points
/// whose nearest target pixel falls outside the object's mask there are
/// dropped, since their depth belongs to whatever lies behind the object.
pub fn extract_correspondences(
    tm: &TrackedMask,
    depth_src: &DepthRaster,
    depth_tgt: &DepthRaster,
    k: &CameraIntrinsics,
    target_mask: Option<&PixelSet>,
) -> CorrespondenceSet {
    let pairs = tm
        .points
        .iter()
        .filter(|p| p.visible)
        .filter_map(|p| {
            let zs = depth_src.get(p.source.u, p.source.v).map(f64::from)?;
            if !(zs.is_finite() && zs > 0.0) {
                return None;
            }
            let [x, y] = p.target;
            if let Some(mask) = target_mask {
                if x < -0.5 || y < -0.5 {
                    return None;
                }
                if !mask.contains(Pixel::new(x.round() as u32, y.round() as u32)) {
                    return None;
                }
            }
            let zt = depth_tgt.sample(x, y)?;
            Some((
                k.unproject(p.source.u as f64, p.source.v as f64, zs),
                k.unproject(x, y, zt),
            ))
        })
        .collect();
    CorrespondenceSet {
        pairs,
        source_frame: tm.source_frame,
        target_frame: tm.target_frame,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub transform: SimilarityTransform,
    /// RMS residual over the pairs of the final fit, meters.
    pub rms: f64,
    pub inliers: usize,
}

const RANK_EPS: f64 = 1e-10;

/// Closed-form least-squares similarity (Umeyama) mapping source points onto
/// target points, with the reflection guard.
pub fn procrustes(pairs: &[(Point3<f64>, Point3<f64>)], rigid_only: bool) -> Result<Registration> {
    let n = pairs.len();
    if n < 3 {
        return Err(GeometryError::InsufficientCorrespondences {
            found: n,
            required: 3,
        });
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = pairs.iter().fold(Vector3::zeros(), |a, (s, _)| a + s.coords) * inv_n;
    let mu_t = pairs.iter().fold(Vector3::zeros(), |a, (_, t)| a + t.coords) * inv_n;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (s, t) in pairs {
        let ds = s.coords - mu_s;
        let dt = t.coords - mu_t;
        cov += dt * ds.transpose();
        scatter += ds * ds.transpose();
    }
    cov *= inv_n;
    scatter *= inv_n;
    let var_s = scatter.trace();

    let mut eig = SymmetricEigen::new(scatter).eigenvalues;
    eig.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(var_s > 0.0) || eig[1] <= RANK_EPS * eig[0] {
        return Err(GeometryError::RankDeficient("source points are coincident or collinear"));
    }

    let svd = SVD::new(cov, true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = svd.singular_values;
    let mut sv: Vec<f64> = d.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[1] <= RANK_EPS * sv[0] {
        return Err(GeometryError::RankDeficient("target points are coincident or collinear"));
    }
    let mut sign = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let imin = d.imin();
        sign[imin] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&sign) * v_t;
    let scale = if rigid_only {
        1.0
    } else {
        d.component_mul(&sign).sum() / var_s
    };
    let translation = mu_t - scale * (rotation * mu_s);
    let transform = SimilarityTransform::new(scale, rotation, translation)
        .map_err(|_| GeometryError::RankDeficient("no valid similarity fits the pairs"))?;
    let sq: f64 = pairs
        .iter()
        .map(|(s, t)| (t - transform.apply(s)).norm_squared())
        .sum();
    Ok(Registration {
        transform,
        rms: (sq * inv_n).sqrt(),
        inliers: n,
    })
}

/// [`procrustes`] behind the minimum-count gate and one trimming round.
pub fn register(c: &CorrespondenceSet, cfg: &RegistrationConfig) -> Result<Registration> {
    let required = cfg.min_correspondences.max(3);
    if c.len() < required {
        return Err(GeometryError::InsufficientCorrespondences {
            found: c.len(),
            required,
        });
    }
    let first = procrustes(&c.pairs, cfg.rigid_only)?;
    if !cfg.trim {
        return Ok(first);
    }
    let residuals: Vec<f64> = c
        .pairs
        .iter()
        .map(|(s, t)| (t - first.transform.apply(s)).norm())
        .collect();
    let threshold = (cfg.trim_factor * median(&residuals)).max(cfg.trim_floor);
    let kept: Vec<_> = c
        .pairs
        .iter()
        .zip(&residuals)
        .filter(|(_, r)| **r <= threshold)
        .map(|(p, _)| *p)
        .collect();
    if kept.len() == c.len() || kept.len() < 3 {
        return Ok(first);
    }
    procrustes(&kept, cfg.rigid_only).or(Ok(first))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Correspondences carrying frame `src` into frame `tgt` for one tracklet:
/// the track of the detection at `src`, or the reversed track of the
/// detection at `tgt`.
pub fn tracklet_correspondences(
    t: &ObjectTracklet,
    scene: &SceneBundle,
    src: usize,
    tgt: usize,
) -> Option<CorrespondenceSet> {
    let (fs, ft) = (scene.frame(src)?, scene.frame(tgt)?);
    let k = &scene.intrinsics;
    let mask = |f: usize| t.entries.get(&f).map(|e| &e.pixels);
    if let Some(tm) = t.tracked_mask(scene, src, tgt) {
        return Some(extract_correspondences(tm, &fs.depth, &ft.depth, k, mask(tgt)));
    }
    let tm = t.tracked_mask(scene, tgt, src)?;
    Some(extract_correspondences(tm, &ft.depth, &fs.depth, k, mask(src)).swapped())
}

/// Registrations between every ordered pair of a tracklet's frames.
#[derive(Debug, Clone, Default)]
pub struct RegistrationTable {
    pub frames: Vec<usize>,
    /// Keyed by `(source, target)`.
    pub pairs: BTreeMap<(usize, usize), Result<Registration>>,
}

impl RegistrationTable {
    pub fn get(&self, source: usize, target: usize) -> Option<&Registration> {
        self.pairs.get(&(source, target))?.as_ref().ok()
    }

    pub fn failures(&self) -> usize {
        self.pairs.values().filter(|r| r.is_err()).count()
    }
}

pub fn register_tracklet(
    t: &ObjectTracklet,
    scene: &SceneBundle,
    frames: &[usize],
    cfg: &RegistrationConfig,
) -> RegistrationTable {
    let mut table = RegistrationTable {
        frames: frames.to_vec(),
        pairs: BTreeMap::new(),
    };
    for &src in frames {
        for &tgt in frames {
            if src == tgt {
                continue;
            }
            let result = match tracklet_correspondences(t, scene, src, tgt) {
                Some(c) => register(&c, cfg),
                None => Err(GeometryError::InsufficientCorrespondences {
                    found: 0,
                    required: cfg.min_correspondences,
                }),
            };
            if let Err(e) = &result {
                debug!("stage=register tracklet={} source={src} target={tgt} error=\"{e}\"", t.id);
            }
            table.pairs.insert((src, tgt), result);
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSelection {
    pub frame: usize,
    pub residual_sum: f64,
    pub valid_registrations: usize,
}

/// Residual sums closer than this (meters) count as ties.
pub const RESIDUAL_TIE_TOL: f64 = 1e-6;

/// Picks the registration target: the frame with the most valid incoming
/// registrations and, among those, the smallest sum of RMS residuals. Ties
/// go to the frame with the most mask pixels, then the earliest frame.
pub fn select_target_frame(
    table: &RegistrationTable,
    mask_pixels: &BTreeMap<usize, usize>,
) -> Result<TargetSelection> {
    let mut best: Option<TargetSelection> = None;
    for &cand in &table.frames {
        let incoming: Vec<f64> = table
            .frames
            .iter()
            .filter(|&&s| s != cand)
            .filter_map(|&s| table.get(s, cand).map(|r| r.rms))
            .collect();
        if incoming.is_empty() {
            continue;
        }
        let sel = TargetSelection {
            frame: cand,
            residual_sum: incoming.iter().sum(),
            valid_registrations: incoming.len(),
        };
        let pixels = |f: usize| mask_pixels.get(&f).copied().unwrap_or(0);
        let better = match &best {
            None => true,
            Some(b) if sel.valid_registrations != b.valid_registrations => {
                sel.valid_registrations > b.valid_registrations
            }
            Some(b) if (sel.residual_sum - b.residual_sum).abs() > RESIDUAL_TIE_TOL => {
                sel.residual_sum < b.residual_sum
            }
            Some(b) => pixels(sel.frame) > pixels(b.frame),
        };
        if better {
            best = Some(sel);
        }
    }
    best.ok_or(GeometryError::NoValidTarget)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    /// Points in the target frame's camera coordinates, tagged by source frame.
    pub cloud: PointCloud,
    pub target: usize,
    pub used_frames: Vec<usize>,
    pub skipped_frames: Vec<usize>,
}

/// Union of every entry's back-projected mask, carried into `target`.
/// Frames without a valid registration into `target` are skipped.
pub fn complete_pseudolidar(
    t: &ObjectTracklet,
    scene: &SceneBundle,
    table: &RegistrationTable,
    target: usize,
) -> Result<Completion> {
    let mut cloud = PointCloud::tagged(Vec::new(), target);
    let mut used_frames = Vec::new();
    let mut skipped_frames = Vec::new();
    for (&frame, entry) in &t.entries {
        if !table.frames.contains(&frame) && frame != target {
            continue;
        }
        let Some(f) = scene.frame(frame) else { continue };
        let transform = if frame == target {
            SimilarityTransform::identity()
        } else if let Some(reg) = table.get(frame, target) {
            reg.transform
        } else {
            debug!("stage=complete tracklet={} frame={frame} skipped=no_registration", t.id);
            skipped_frames.push(frame);
            continue;
        };
        match backproject(&entry.pixels, &f.depth, &scene.intrinsics) {
            Ok(bp) => {
                let points = bp.cloud.points.iter().map(|p| transform.apply(p)).collect();
                cloud.extend(PointCloud::tagged(points, frame));
                used_frames.push(frame);
            }
            Err(e) => {
                debug!("stage=complete tracklet={} frame={frame} skipped=\"{e}\"", t.id);
                skipped_frames.push(frame);
            }
        }
    }
    if cloud.is_empty() {
        return Err(GeometryError::EmptyCompletion);
    }
    Ok(Completion {
        cloud,
        target,
        used_frames,
        skipped_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Pixel;
    use nalgebra::Rotation3;

    #[test]
    fn backproject_examples() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let depth = DepthRaster::filled(5, 5, 4.0);
        let px: PixelSet = vec![Pixel::new(2, 3)].into();
        let bp = backproject(&px, &depth, &k).unwrap();
        assert_eq!(bp.cloud.points[0], Point3::new(8.0, 12.0, 4.0));

        let k = CameraIntrinsics::new(2.0, 3.0, 1.0, 2.0).unwrap();
        let bp = backproject(&vec![Pixel::new(1, 2)].into(), &depth, &k).unwrap();
        assert_eq!(bp.cloud.points[0], Point3::new(0.0, 0.0, 4.0));
    }

    #[test]
    fn kitti_like_intrinsics() {
        let k = CameraIntrinsics::new(721.5, 721.5, 609.6, 172.9).unwrap();
        let p = k.unproject(609.6, 172.9 + 721.5, 10.0);
        assert!((p - Point3::new(0.0, 10.0, 10.0)).norm() < 1e-12);
    }

    #[test]
    fn invalid_depth_skipped_then_error() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let mut depth = DepthRaster::filled(3, 1, 2.0);
        depth.set(0, 0, 0.0);
        depth.set(1, 0, f32::NAN);
        let px: PixelSet = (0..3).map(|u| Pixel::new(u, 0)).collect();
        let bp = backproject(&px, &depth, &k).unwrap();
        assert_eq!((bp.cloud.len(), bp.skipped), (1, 2));
        let px: PixelSet = (0..2).map(|u| Pixel::new(u, 0)).collect();
        assert_eq!(backproject(&px, &depth, &k), Err(GeometryError::EmptyCloud(2)));
    }

    fn tetra() -> Vec<Point3<f64>> {
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(0.0, 0.0, 3.0),
            Point3::new(1.0, 1.0, 1.0),
        ]
    }

    #[test]
    fn identity_registration() {
        let pairs: Vec<_> = tetra().into_iter().map(|p| (p, p)).collect();
        let r = procrustes(&pairs, false).unwrap();
        assert!((r.transform.scale - 1.0).abs() < 1e-12);
        assert!((r.transform.rotation.matrix() - Matrix3::identity()).amax() < 1e-12);
        assert!(r.transform.translation.norm() < 1e-12);
        assert!(r.rms < 1e-12);
    }

    #[test]
    fn reflection_guard() {
        let pairs: Vec<_> = tetra()
            .into_iter()
            .map(|p| (p, Point3::new(-p.x, p.y, p.z)))
            .collect();
        let r = procrustes(&pairs, false).unwrap();
        assert!((r.transform.rotation.matrix().determinant() - 1.0).abs() < 1e-9);
        assert!(r.rms > 1e-3);
    }

    #[test]
    fn degenerate_inputs() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            procrustes(&[(p, p), (p, p)], false),
            Err(GeometryError::InsufficientCorrespondences { found: 2, .. })
        ));
        let line: Vec<_> = (0..5)
            .map(|i| {
                let q = Point3::new(i as f64, 2.0 * i as f64, 0.0);
                (q, q)
            })
            .collect();
        assert!(matches!(procrustes(&line, false), Err(GeometryError::RankDeficient(_))));
    }

    #[test]
    fn trimming_rejects_outliers() {
        let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.3);
        let truth = SimilarityTransform {
            scale: 1.2,
            rotation: rot,
            translation: Vector3::new(1.0, 0.0, -2.0),
        };
        let mut pairs: Vec<_> = (0..40)
            .map(|i| {
                let f = i as f64;
                let p = Point3::new((f * 0.37).sin() * 2.0, (f * 0.91).cos(), (f * 0.13).sin() * 3.0);
                (p, truth.apply(&p))
            })
            .collect();
        pairs[3].1.x += 5.0;
        pairs[17].1.z -= 4.0;
        let c = CorrespondenceSet { pairs, source_frame: 0, target_frame: 1 };
        let plain = register(&c, &RegistrationConfig { trim: false, ..Default::default() }).unwrap();
        let trimmed = register(&c, &RegistrationConfig::default()).unwrap();
        assert!(plain.rms > 0.5);
        assert_eq!(trimmed.inliers, 38);
        assert!(trimmed.rms < 1e-9);
        assert!((trimmed.transform.scale - 1.2).abs() < 1e-9);
    }

    #[test]
    fn too_few_correspondences() {
        let pairs: Vec<_> = tetra().into_iter().map(|p| (p, p)).collect();
        let c = CorrespondenceSet { pairs, source_frame: 0, target_frame: 1 };
        assert_eq!(
            register(&c, &RegistrationConfig::default()),
            Err(GeometryError::InsufficientCorrespondences { found: 5, required: 10 })
        );
    }

    #[test]
    fn target_selection_argmin_and_tiebreak() {
        let reg = |rms: f64| {
            Ok(Registration {
                transform: SimilarityTransform::identity(),
                rms,
                inliers: 10,
            })
        };
        let mut table = RegistrationTable {
            frames: vec![0, 1],
            pairs: BTreeMap::new(),
        };
        table.pairs.insert((0, 1), reg(0.3));
        table.pairs.insert((1, 0), reg(0.1));
        let px = BTreeMap::from([(0, 10), (1, 50)]);
        assert_eq!(select_target_frame(&table, &px).unwrap().frame, 0);

        table.pairs.insert((0, 1), reg(0.1));
        assert_eq!(select_target_frame(&table, &px).unwrap().frame, 1);

        table.pairs.insert((0, 1), Err(GeometryError::EmptyCompletion));
        table.pairs.insert((1, 0), Err(GeometryError::EmptyCompletion));
        assert_eq!(select_target_frame(&table, &px), Err(GeometryError::NoValidTarget));
    }
}
