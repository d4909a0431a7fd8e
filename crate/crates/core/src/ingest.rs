//! On-disk scene bundles, KITTI label files and dimension-prior tables.
//!
//! Scene directory layout:
//!
//! ```text
//! intrinsics.json              {"fx": .., "fy": .., "cx": .., "cy": ..}
//! frames/%06d.depth            8-byte magic "PLOTDPTH", u32 LE width, u32 LE height,
//!                              then width*height f32 LE depths (meters, row-major)
//! masks/%06d.json              {"frame": t, "masks": [{"mask_id", "class", "confidence",
//!                              "rle": [[start, len], ..], "box": [u_c, v_c, w, h]}]}
//! tracks/%06d_%04d.json        {"source_frame", "mask_id", "source_pixels": [[u, v], ..],
//!                              "targets": [{"target_frame", "points": [[x, y], ..],
//!                              "visible": [bool, ..]}]}
//! ```
//!
//! Mask RLE runs index pixels row-major (`v * width + u`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::DepthRaster;
use crate::types::{
    normalize_angle, Box2D, Box3D, CameraIntrinsics, DimensionPrior, Dimensions, InstanceMask,
    Pixel, PixelSet, TrackPoint, TrackedMask, TypeError,
};

pub const DEPTH_MAGIC: &[u8; 8] = b"PLOTDPTH";
const DEPTH_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("scene validation failed: {0}")]
    Validation(String),
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn invalid(path: &Path, message: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    fn json(path: &Path, err: serde_json::Error) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            line: err.line(),
            message: err.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, IngestError>;

/// One 2D detection: mask, box and identifier within its frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub mask_id: u32,
    pub mask: InstanceMask,
    pub bbox: Box2D,
}

impl Detection {
    pub fn confidence(&self) -> f64 {
        self.mask.confidence
    }

    pub fn class_label(&self) -> &str {
        &self.mask.class_label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub depth: DepthRaster,
    /// Sorted by `mask_id`.
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackKey {
    pub frame: usize,
    pub mask_id: u32,
}

/// All precomputed inputs of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub intrinsics: CameraIntrinsics,
    pub width: u32,
    pub height: u32,
    /// Contiguous, ascending frame indices.
    pub frames: Vec<Frame>,
    /// Tracked masks of each detection, sorted by target frame.
    pub tracks: BTreeMap<TrackKey, Vec<TrackedMask>>,
}

impl SceneBundle {
    pub fn frame(&self, index: usize) -> Option<&Frame> {
        let first = self.frames.first()?.index;
        self.frames.get(index.checked_sub(first)?)
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.iter().map(|f| f.index)
    }

    pub fn detection(&self, frame: usize, mask_id: u32) -> Option<&Detection> {
        let f = self.frame(frame)?;
        f.detections
            .binary_search_by_key(&mask_id, |d| d.mask_id)
            .ok()
            .map(|i| &f.detections[i])
    }

    pub fn track(&self, frame: usize, mask_id: u32, target: usize) -> Option<&TrackedMask> {
        self.tracks
            .get(&TrackKey { frame, mask_id })?
            .iter()
            .find(|t| t.target_frame == target)
    }

    /// Sorts every collection canonically and checks cross references.
    pub fn canonicalize(&mut self) -> std::result::Result<(), String> {
        self.frames.sort_by_key(|f| f.index);
        for f in &mut self.frames {
            f.detections.sort_by_key(|d| d.mask_id);
        }
        for list in self.tracks.values_mut() {
            list.sort_by_key(|t| t.target_frame);
        }
        self.validate()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.intrinsics.validate().map_err(|e| e.to_string())?;
        let Some(first) = self.frames.first() else {
            return Err("scene has no frames".into());
        };
        for (offset, f) in self.frames.iter().enumerate() {
            if f.index != first.index + offset {
                return Err(format!(
                    "frame indices not contiguous: expected {}, found {}",
                    first.index + offset,
                    f.index
                ));
            }
            if f.depth.width() != self.width || f.depth.height() != self.height {
                return Err(format!(
                    "frame {}: depth raster is {}x{}, scene is {}x{}",
                    f.index,
                    f.depth.width(),
                    f.depth.height(),
                    self.width,
                    self.height
                ));
            }
            let mut seen = BTreeSet::new();
            for d in &f.detections {
                if !seen.insert(d.mask_id) {
                    return Err(format!("frame {}: duplicate mask id {}", f.index, d.mask_id));
                }
                if d.mask.frame_index != f.index {
                    return Err(format!(
                        "frame {}: mask {} tagged with frame {}",
                        f.index, d.mask_id, d.mask.frame_index
                    ));
                }
                if !d.mask.pixels.within(self.width, self.height) {
                    return Err(format!(
                        "frame {}: mask {} has pixels outside the image",
                        f.index, d.mask_id
                    ));
                }
            }
        }
        for (key, list) in &self.tracks {
            if self.detection(key.frame, key.mask_id).is_none() {
                return Err(format!(
                    "track references nonexistent mask id {} in frame {}",
                    key.mask_id, key.frame
                ));
            }
            let mut targets = BTreeSet::new();
            for tm in list {
                if tm.source_frame != key.frame {
                    return Err(format!(
                        "track of mask {} in frame {} claims source frame {}",
                        key.mask_id, key.frame, tm.source_frame
                    ));
                }
                if self.frame(tm.target_frame).is_none() || tm.target_frame == key.frame {
                    return Err(format!(
                        "track of mask {} in frame {} targets invalid frame {}",
                        key.mask_id, key.frame, tm.target_frame
                    ));
                }
                if !targets.insert(tm.target_frame) {
                    return Err(format!(
                        "track of mask {} in frame {} has duplicate target frame {}",
                        key.mask_id, key.frame, tm.target_frame
                    ));
                }
                if tm
                    .points
                    .iter()
                    .any(|p| p.visible && !(p.target[0].is_finite() && p.target[1].is_finite()))
                {
                    return Err(format!(
                        "track of mask {} in frame {}: non-finite visible target",
                        key.mask_id, key.frame
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskFile {
    frame: usize,
    masks: Vec<MaskRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskRecord {
    mask_id: u32,
    class: String,
    confidence: f64,
    rle: Vec<[u64; 2]>,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackFile {
    source_frame: usize,
    mask_id: u32,
    source_pixels: Vec<[u32; 2]>,
    targets: Vec<TrackTarget>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackTarget {
    target_frame: usize,
    points: Vec<[f64; 2]>,
    visible: Vec<bool>,
}

/// Row-major run-length encoding of a pixel set.
pub fn rle_encode(pixels: &PixelSet, width: u32) -> Vec<[u64; 2]> {
    let mut runs: Vec<[u64; 2]> = Vec::new();
    for p in pixels.iter() {
        let idx = p.v as u64 * width as u64 + p.u as u64;
        match runs.last_mut() {
            Some(run) if run[0] + run[1] == idx => run[1] += 1,
            _ => runs.push([idx, 1]),
        }
    }
    runs
}

pub fn rle_decode(runs: &[[u64; 2]], width: u32, height: u32) -> std::result::Result<PixelSet, String> {
    let total = width as u64 * height as u64;
    let mut pixels = Vec::new();
    for &[start, len] in runs {
        if start.checked_add(len).is_none_or(|end| end > total) {
            return Err(format!("run [{start}, {len}] exceeds the {width}x{height} image"));
        }
        pixels.extend((start..start + len).map(|i| {
            Pixel::new((i % width as u64) as u32, (i / width as u64) as u32)
        }));
    }
    Ok(pixels.into())
}

fn frame_file_index(name: &str, ext: &str) -> Option<usize> {
    let stem = name.strip_suffix(ext)?;
    (stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit()))
        .then(|| stem.parse().ok())
        .flatten()
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))? {
        let entry = entry.map_err(|e| IngestError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        entries.push((name, entry.path()));
    }
    entries.sort();
    Ok(entries)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IngestError::json(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| IngestError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| IngestError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).expect("scene records serialize");
    write_bytes(path, text.as_bytes())
}

pub fn read_depth(path: &Path) -> Result<DepthRaster> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    if bytes.len() < DEPTH_HEADER_LEN || &bytes[..8] != DEPTH_MAGIC {
        return Err(IngestError::invalid(path, "missing PLOTDPTH header"));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let body = &bytes[DEPTH_HEADER_LEN..];
    let expected = width as usize * height as usize * 4;
    if body.len() != expected {
        return Err(IngestError::invalid(
            path,
            format!("{width}x{height} raster needs {expected} bytes, found {}", body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DepthRaster::new(width, height, data).expect("size checked above"))
}

pub fn write_depth(path: &Path, depth: &DepthRaster) -> Result<()> {
    let mut bytes = Vec::with_capacity(DEPTH_HEADER_LEN + depth.data().len() * 4);
    bytes.extend_from_slice(DEPTH_MAGIC);
    bytes.extend_from_slice(&depth.width().to_le_bytes());
    bytes.extend_from_slice(&depth.height().to_le_bytes());
    for z in depth.data() {
        bytes.extend_from_slice(&z.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

/// Loads and validates a scene directory.
pub fn load_scene(dir: &Path) -> Result<SceneBundle> {
    let intr_path = dir.join("intrinsics.json");
    let intrinsics: CameraIntrinsics = read_json(&intr_path)?;
    intrinsics
        .validate()
        .map_err(|e| IngestError::invalid(&intr_path, e.to_string()))?;

    let frames_dir = dir.join("frames");
    let mut depths = BTreeMap::new();
    for (name, path) in read_dir_sorted(&frames_dir)? {
        if let Some(idx) = frame_file_index(&name, ".depth") {
            depths.insert(idx, read_depth(&path)?);
        }
    }
    let Some((_, first)) = depths.first_key_value() else {
        return Err(IngestError::invalid(&frames_dir, "no %06d.depth files"));
    };
    let (width, height) = (first.width(), first.height());

    let mut frames = Vec::with_capacity(depths.len());
    for (index, depth) in depths {
        let path = dir.join("masks").join(format!("{index:06}.json"));
        if depth.width() != width || depth.height() != height {
            return Err(IngestError::invalid(
                &frames_dir.join(format!("{index:06}.depth")),
                format!(
                    "dimension mismatch: {}x{} vs {width}x{height}",
                    depth.width(),
                    depth.height()
                ),
            ));
        }
        let file: MaskFile = read_json(&path)?;
        if file.frame != index {
            return Err(IngestError::invalid(
                &path,
                format!("declares frame {} but is named for frame {index}", file.frame),
            ));
        }
        let mut detections = Vec::with_capacity(file.masks.len());
        for rec in file.masks {
            let ctx = |msg: String| IngestError::invalid(&path, format!("mask {}: {msg}", rec.mask_id));
            let pixels = rle_decode(&rec.rle, width, height).map_err(ctx)?;
            let mask = InstanceMask::new(index, pixels, rec.confidence, rec.class.clone())
                .map_err(|e| ctx(e.to_string()))?;
            let [u, v, w, h] = rec.bbox;
            let bbox = Box2D::new(u, v, w, h).map_err(|e| ctx(e.to_string()))?;
            detections.push(Detection {
                mask_id: rec.mask_id,
                mask,
                bbox,
            });
        }
        frames.push(Frame {
            index,
            depth,
            detections,
        });
    }

    let mut tracks: BTreeMap<TrackKey, Vec<TrackedMask>> = BTreeMap::new();
    let tracks_dir = dir.join("tracks");
    if tracks_dir.is_dir() {
        for (name, path) in read_dir_sorted(&tracks_dir)? {
            if !name.ends_with(".json") {
                continue;
            }
            let file: TrackFile = read_json(&path)?;
            let key = TrackKey {
                frame: file.source_frame,
                mask_id: file.mask_id,
            };
            let mut list = Vec::with_capacity(file.targets.len());
            for target in file.targets {
                let n = file.source_pixels.len();
                if target.points.len() != n || target.visible.len() != n {
                    return Err(IngestError::invalid(
                        &path,
                        format!(
                            "target frame {}: {} points / {} flags for {n} source pixels",
                            target.target_frame,
                            target.points.len(),
                            target.visible.len()
                        ),
                    ));
                }
                let points = file
                    .source_pixels
                    .iter()
                    .zip(target.points)
                    .zip(target.visible)
                    .map(|((&[u, v], target), visible)| TrackPoint {
                        source: Pixel::new(u, v),
                        target,
                        visible,
                    })
                    .collect();
                list.push(TrackedMask {
                    source_frame: file.source_frame,
                    target_frame: target.target_frame,
                    points,
                });
            }
            if tracks.insert(key, list).is_some() {
                return Err(IngestError::invalid(
                    &path,
                    format!("duplicate tracks for mask {} in frame {}", key.mask_id, key.frame),
                ));
            }
        }
    }

    let mut scene = SceneBundle {
        intrinsics,
        width,
        height,
        frames,
        tracks,
    };
    scene.canonicalize().map_err(IngestError::Validation)?;
    Ok(scene)
}

/// Writes `scene` in the directory layout read by [`load_scene`].
pub fn write_scene(scene: &SceneBundle, dir: &Path) -> Result<()> {
    write_json(&dir.join("intrinsics.json"), &scene.intrinsics)?;
    for f in &scene.frames {
        write_depth(&dir.join("frames").join(format!("{:06}.depth", f.index)), &f.depth)?;
        let masks = f
            .detections
            .iter()
            .map(|d| MaskRecord {
                mask_id: d.mask_id,
                class: d.mask.class_label.clone(),
                confidence: d.mask.confidence,
                rle: rle_encode(&d.mask.pixels, scene.width),
                bbox: [d.bbox.u_c, d.bbox.v_c, d.bbox.w, d.bbox.h],
            })
            .collect();
        write_json(
            &dir.join("masks").join(format!("{:06}.json", f.index)),
            &MaskFile {
                frame: f.index,
                masks,
            },
        )?;
    }
    fs::create_dir_all(dir.join("tracks")).map_err(|e| IngestError::io(dir, e))?;
    for (key, list) in &scene.tracks {
        let source_pixels = list
            .first()
            .map(|t| t.points.iter().map(|p| [p.source.u, p.source.v]).collect())
            .unwrap_or_default();
        let targets = list
            .iter()
            .map(|t| TrackTarget {
                target_frame: t.target_frame,
                points: t.points.iter().map(|p| p.target).collect(),
                visible: t.points.iter().map(|p| p.visible).collect(),
            })
            .collect();
        write_json(
            &dir.join("tracks").join(format!("{:06}_{:04}.json", key.frame, key.mask_id)),
            &TrackFile {
                source_frame: key.frame,
                mask_id: key.mask_id,
                source_pixels,
                targets,
            },
        )?;
    }
    Ok(())
}

/// A 3D label together with the 2D box it is reported with.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiLabel {
    pub box3d: Box3D,
    pub box2d: Box2D,
}

impl KittiLabel {
    /// Observation angle: yaw minus the azimuth of the object center.
    pub fn alpha(&self) -> f64 {
        let c = &self.box3d.center;
        normalize_angle(self.box3d.yaw - c.x.atan2(c.z))
    }

    /// One KITTI label line. The location written is the bottom center
    /// (`y + h/2`) as the KITTI devkit expects.
    pub fn to_line(&self) -> String {
        let b = &self.box3d;
        let class = b.class_label.replace(char::is_whitespace, "_");
        format!(
            "{class} 0.00 0 {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
            self.alpha(),
            self.box2d.u_min(),
            self.box2d.v_min(),
            self.box2d.u_max(),
            self.box2d.v_max(),
            b.dims.h,
            b.dims.w,
            b.dims.l,
            b.center.x,
            b.center.y + 0.5 * b.dims.h,
            b.center.z,
            normalize_angle(b.yaw),
            b.score,
        )
    }

    /// Parses a KITTI line. `DontCare` and empty lines yield `Ok(None)`;
    /// a missing score column reads as 1.0.
    pub fn parse_line(line: &str) -> std::result::Result<Option<Self>, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0] == "DontCare" {
            return Ok(None);
        }
        if fields.len() != 15 && fields.len() != 16 {
            return Err(format!("expected 15 or 16 fields, found {}", fields.len()));
        }
        let nums = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| format!("field {f:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let box2d = Box2D::from_corners(nums[3], nums[4], nums[5], nums[6])
            .map_err(|e: TypeError| e.to_string())?;
        let (h, w, l) = (nums[7], nums[8], nums[9]);
        let center = Point3::new(nums[10], nums[11] - 0.5 * h, nums[12]);
        let score = nums.get(14).copied().unwrap_or(1.0);
        let box3d = Box3D::new(fields[0], center, Dimensions::new(w, h, l), nums[13], score)
            .map_err(|e| e.to_string())?;
        Ok(Some(Self { box3d, box2d }))
    }
}

pub fn format_kitti_labels(labels: &[KittiLabel]) -> String {
    let mut out = String::new();
    for l in labels {
        writeln!(out, "{}", l.to_line()).unwrap();
    }
    out
}

pub fn write_kitti_labels(labels: &[KittiLabel], path: &Path) -> Result<()> {
    write_bytes(path, format_kitti_labels(labels).as_bytes())
}

pub fn read_kitti_labels(path: &Path) -> Result<Vec<KittiLabel>> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match KittiLabel::parse_line(line) {
            Ok(Some(l)) => labels.push(l),
            Ok(None) => {}
            Err(message) => {
                return Err(IngestError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
        }
    }
    Ok(labels)
}

/// Reads every `%06d.txt` label file of a directory, keyed by frame index.
pub fn read_label_dir(dir: &Path) -> Result<BTreeMap<usize, Vec<KittiLabel>>> {
    let mut out = BTreeMap::new();
    for (name, path) in read_dir_sorted(dir)? {
        if let Some(idx) = frame_file_index(&name, ".txt") {
            out.insert(idx, read_kitti_labels(&path)?);
        }
    }
    Ok(out)
}

/// Per-class dimension priors, looked up case-insensitively.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorTable {
    entries: BTreeMap<String, DimensionPrior>,
}

impl PriorTable {
    /// Shipped defaults (H, W, L in meters). These are configuration, not
    /// measured ground truth.
    pub fn builtin() -> Self {
        let mut t = Self::default();
        for (class, h, w, l) in [
            ("Car", 1.53, 1.63, 3.88),
            ("Pedestrian", 1.76, 0.66, 0.84),
            ("Cyclist", 1.74, 0.60, 1.76),
        ] {
            t.insert(DimensionPrior::new(class, h, w, l).unwrap())
                .unwrap();
        }
        t
    }

    pub fn insert(&mut self, prior: DimensionPrior) -> std::result::Result<(), String> {
        let key = prior.class_label.to_lowercase();
        if self.entries.contains_key(&key) {
            return Err(format!("duplicate prior for class {:?}", prior.class_label));
        }
        self.entries.insert(key, prior);
        Ok(())
    }

    pub fn get(&self, class: &str) -> Option<&DimensionPrior> {
        self.entries.get(&class.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DimensionPrior> {
        self.entries.values()
    }

    /// Parses `Class: H W L` lines; `#` starts a comment.
    pub fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut table = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| (i + 1, m);
            let (class, rest) = line
                .split_once(':')
                .ok_or_else(|| err("expected `Class: H W L`".into()))?;
            let vals = rest
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| err(format!("{v:?}: {e}"))))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let [h, w, l] = vals[..] else {
                return Err(err(format!("expected 3 values, found {}", vals.len())));
            };
            let prior = DimensionPrior::new(class.trim(), h, w, l).map_err(|e| err(e.to_string()))?;
            table.insert(prior).map_err(err)?;
        }
        Ok(table)
    }
}

/// Loads a prior table. An empty file yields the built-in defaults when
/// `default_when_empty` is set.
pub fn load_priors(path: &Path, default_when_empty: bool) -> Result<PriorTable> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let table = PriorTable::parse(&text).map_err(|(line, message)| IngestError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })?;
    if table.is_empty() && default_when_empty {
        return Ok(PriorTable::builtin());
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn car() -> KittiLabel {
        KittiLabel {
            box3d: Box3D::new(
                "Car",
                Point3::new(0.0, 1.0, 10.0),
                Dimensions::new(1.6, 1.5, 4.0),
                0.0,
                0.9,
            )
            .unwrap(),
            box2d: Box2D::from_corners(100.0, 50.0, 200.0, 120.0).unwrap(),
        }
    }

    #[test]
    fn kitti_line_layout() {
        assert_eq!(
            car().to_line(),
            "Car 0.00 0 0.00 100.00 50.00 200.00 120.00 1.50 1.60 4.00 0.00 1.75 10.00 0.00 0.90"
        );
    }

    #[test]
    fn kitti_line_parses_back() {
        let parsed = KittiLabel::parse_line(&car().to_line()).unwrap().unwrap();
        assert_eq!(parsed, car());
        assert!(KittiLabel::parse_line("DontCare -1 -1 -10 0 0 1 1 -1 -1 -1 -1000 -1000 -1000 -10")
            .unwrap()
            .is_none());
        assert!(KittiLabel::parse_line("Car 0 0").is_err());
    }

    #[test]
    fn yaw_past_pi_is_wrapped_on_write() {
        let mut l = car();
        l.box3d.yaw = PI + 0.1;
        let fields: Vec<String> = l.to_line().split(' ').map(String::from).collect();
        assert_eq!(fields[14], format!("{:.2}", -PI + 0.1));
    }

    #[test]
    fn empty_label_list_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("000000.txt");
        write_kitti_labels(&[], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"");
        assert!(read_kitti_labels(&path).unwrap().is_empty());
    }

    #[test]
    fn unwritable_label_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        assert!(write_kitti_labels(&[car()], &blocker.join("labels.txt")).is_err());
    }

    #[test]
    fn priors_parse() {
        let t = PriorTable::parse("# sizes\nCar: 1.53 1.63 3.88\n").unwrap();
        let p = t.get("car").unwrap();
        assert_eq!((p.height, p.width, p.length), (1.53, 1.63, 3.88));
        assert!(PriorTable::parse("Car: 1 1 1\ncar: 2 2 2").is_err());
        let (line, _) = PriorTable::parse("\nPedestrian: -1.7 0.6 0.8").unwrap_err();
        assert_eq!(line, 2);
        assert!(PriorTable::parse("Car: 1 2").is_err());
    }

    #[test]
    fn empty_prior_file_falls_back_to_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("priors.txt");
        fs::write(&path, "").unwrap();
        assert_eq!(load_priors(&path, true).unwrap(), PriorTable::builtin());
        assert!(load_priors(&path, false).unwrap().is_empty());
    }

    #[test]
    fn rle_roundtrip_and_bounds() {
        let px: PixelSet = vec![
            Pixel::new(3, 0),
            Pixel::new(4, 0),
            Pixel::new(0, 1),
            Pixel::new(4, 2),
        ]
        .into();
        let runs = rle_encode(&px, 5);
        assert_eq!(runs, vec![[3, 3], [14, 1]]);
        assert_eq!(rle_decode(&runs, 5, 3).unwrap(), px);
        assert!(rle_decode(&[[14, 2]], 5, 3).is_err());
    }
}
