//! End-to-end labelling: association, label repair, registration,
//! completion and box fitting for the frames of one window.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{build_tracklets, improve_labels, AssocConfig, ObjectTracklet};
use crate::attributes::{estimate_box, AttributeConfig, ClipConfig, DimensionMode};
use crate::geometry::{
    complete_pseudolidar, register_tracklet, select_target_frame, Completion, RegistrationConfig,
};
use crate::ingest::{KittiLabel, PriorTable, SceneBundle};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config value out of range: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("target frame {0} is not in the scene")]
    MissingTarget(usize),
    #[error("scene has no frames")]
    EmptyScene,
}

/// Every key is optional; absent keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Frames per window.
    pub window: usize,
    /// Output frame; defaults to the middle of the window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_frame: Option<usize>,
    /// Emit labels for every frame of the window, not just the target.
    pub all_frames: bool,
    pub tau_match: f64,
    pub n_min: usize,
    pub c_min: f64,
    /// Confidence multiplier of supplemented labels.
    pub supplement_score_factor: f64,
    pub label_improvement: bool,
    pub rigid_only: bool,
    pub trim: bool,
    pub min_correspondences: usize,
    pub depth_clipping: bool,
    pub clip_bins: usize,
    pub clip_tau: f64,
    pub uniform_scale: bool,
    pub center_refinement: bool,
    /// Prior table file; the built-in table is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priors: Option<PathBuf>,
    /// Measure raw extents for classes without a prior instead of failing.
    pub missing_prior_fallback: bool,
    /// Fold orientation errors modulo π during evaluation.
    pub mod_pi: bool,
    /// Recorded for reproducibility; the labelling itself draws no random
    /// numbers.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let assoc = AssocConfig::default();
        let reg = RegistrationConfig::default();
        let clip = ClipConfig::default();
        Self {
            window: 10,
            target_frame: None,
            all_frames: false,
            tau_match: assoc.tau_match,
            n_min: assoc.n_min,
            c_min: assoc.c_min,
            supplement_score_factor: assoc.supplement_score_factor,
            label_improvement: true,
            rigid_only: reg.rigid_only,
            trim: reg.trim,
            min_correspondences: reg.min_correspondences,
            depth_clipping: true,
            clip_bins: clip.bins,
            clip_tau: clip.tau,
            uniform_scale: true,
            center_refinement: true,
            priors: None,
            missing_prior_fallback: true,
            mod_pi: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        for (name, v) in [
            ("tau_match", self.tau_match),
            ("c_min", self.c_min),
            ("supplement_score_factor", self.supplement_score_factor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.min_correspondences < 3 {
            return bad(format!(
                "min_correspondences = {} below 3",
                self.min_correspondences
            ));
        }
        self.clip()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// One observation only: no completion, no clipping, dimensions
    /// measured on the cloud. Center refinement stays as configured.
    pub fn single_frame(mut self) -> Self {
        self.window = 1;
        self.depth_clipping = false;
        self.uniform_scale = false;
        self
    }

    pub fn clip(&self) -> ClipConfig {
        ClipConfig {
            bins: self.clip_bins,
            tau: self.clip_tau,
        }
    }

    pub fn assoc(&self, anchor: usize) -> AssocConfig {
        AssocConfig {
            tau_match: self.tau_match,
            n_min: self.n_min,
            c_min: self.c_min,
            supplement_score_factor: self.supplement_score_factor,
            anchor_frame: Some(anchor),
        }
    }

    pub fn registration(&self) -> RegistrationConfig {
        RegistrationConfig {
            rigid_only: self.rigid_only,
            trim: self.trim,
            min_correspondences: self.min_correspondences,
            ..RegistrationConfig::default()
        }
    }

    pub fn attributes(&self) -> AttributeConfig {
        AttributeConfig {
            clip: self.clip(),
            depth_clipping: self.depth_clipping,
            dimension_mode: if self.uniform_scale {
                DimensionMode::UniformScale
            } else {
                DimensionMode::RawExtent
            },
            center_refinement: self.center_refinement,
            raw_dims_without_prior: self.missing_prior_fallback,
        }
    }
}

/// Window frames and the output frame inside it. The window is centered on
/// the target as far as the scene allows.
pub fn select_window(scene: &SceneBundle, cfg: &PipelineConfig) -> Result<(Vec<usize>, usize), PipelineError> {
    let indices: Vec<usize> = scene.frame_indices().collect();
    let (&first, &last) = match (indices.first(), indices.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(PipelineError::EmptyScene),
    };
    let n = indices.len();
    let w = cfg.window.min(n);
    let target = match cfg.target_frame {
        Some(k) if scene.frame(k).is_none() => return Err(PipelineError::MissingTarget(k)),
        Some(k) => k,
        None => first + (w - 1) / 2,
    };
    let start = target
        .saturating_sub((w - 1) / 2)
        .clamp(first, last + 1 - w);
    Ok(((start..start + w).collect(), target))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PipelineStats {
    pub window_frames: usize,
    pub detections: usize,
    pub tracklets: usize,
    pub removed_tracklets: usize,
    pub supplemented: usize,
    pub registrations: usize,
    pub failed_registrations: usize,
    pub skipped_frames: usize,
    pub single_frame_fallbacks: usize,
    pub labels: usize,
    pub failed_objects: usize,
}

/// One emitted label with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectResult {
    pub tracklet: usize,
    pub frame: usize,
    /// Frame whose camera hosted the completed cloud before it was moved
    /// into `frame`.
    pub registration_target: usize,
    pub used_frames: Vec<usize>,
    pub points: usize,
    pub label: KittiLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub window: Vec<usize>,
    pub target_frame: usize,
    pub tracklets: Vec<ObjectTracklet>,
    pub objects: Vec<ObjectResult>,
    pub stats: PipelineStats,
}

impl PipelineOutput {
    /// Labels grouped by output frame, in tracklet order.
    pub fn labels_by_frame(&self) -> BTreeMap<usize, Vec<KittiLabel>> {
        let mut out: BTreeMap<usize, Vec<KittiLabel>> = BTreeMap::new();
        if !self.window.is_empty() {
            out.insert(self.target_frame, Vec::new());
        }
        for o in &self.objects {
            out.entry(o.frame).or_default().push(o.label.clone());
        }
        out
    }
}

/// Completed cloud of a tracklet expressed in `frame`'s camera coordinates.
fn completion_in(
    t: &ObjectTracklet,
    scene: &SceneBundle,
    table: &crate::geometry::RegistrationTable,
    registration_target: Option<usize>,
    frame: usize,
) -> Option<(Completion, usize)> {
    if let Some(tg) = registration_target.filter(|&tg| tg != frame) {
        if let (Ok(c), Some(reg)) = (complete_pseudolidar(t, scene, table, tg), table.get(tg, frame)) {
            let mut moved = c.clone();
            moved.cloud = c.cloud.transformed(&reg.transform);
            return Some((moved, tg));
        }
    }
    complete_pseudolidar(t, scene, table, frame)
        .ok()
        .map(|c| (c, frame))
}

pub fn run(
    scene: &SceneBundle,
    priors: &PriorTable,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let (window, target) = select_window(scene, cfg)?;
    let mut stats = PipelineStats {
        window_frames: window.len(),
        detections: window
            .iter()
            .filter_map(|&f| scene.frame(f))
            .map(|f| f.detections.len())
            .sum(),
        ..Default::default()
    };
    let assoc = cfg.assoc(target);
    let mut tracklets = build_tracklets(scene, &window, &assoc);
    stats.tracklets = tracklets.len();
    if cfg.label_improvement {
        let (kept, repair) = improve_labels(tracklets, scene, &window, &assoc);
        tracklets = kept;
        stats.removed_tracklets = repair.removed;
        stats.supplemented = repair.supplemented;
    }
    info!(
        "stage=assoc window={} target={} detections={} tracklets={} removed={} supplemented={}",
        window.len(),
        target,
        stats.detections,
        stats.tracklets,
        stats.removed_tracklets,
        stats.supplemented
    );

    let reg_cfg = cfg.registration();
    let attr_cfg = cfg.attributes();
    let mut objects = Vec::new();
    for t in &tracklets {
        let outputs: Vec<usize> = if cfg.all_frames {
            t.entries.keys().copied().collect()
        } else {
            t.entries.contains_key(&target).then_some(target).into_iter().collect()
        };
        if outputs.is_empty() {
            continue;
        }
        let frames: Vec<usize> = t.entries.keys().copied().collect();
        let table = register_tracklet(t, scene, &frames, &reg_cfg);
        stats.registrations += table.pairs.len();
        stats.failed_registrations += table.failures();
        let pixels: BTreeMap<usize, usize> =
            t.entries.iter().map(|(&f, e)| (f, e.pixels.len())).collect();
        let selected = select_target_frame(&table, &pixels).ok().map(|s| s.frame);
        if selected.is_none() && frames.len() > 1 {
            stats.single_frame_fallbacks += 1;
        }
        for frame in outputs {
            let entry = &t.entries[&frame];
            let Some((completion, tg)) = completion_in(t, scene, &table, selected, frame) else {
                warn!("stage=geometry tracklet={} frame={frame} error=empty_completion", t.id);
                stats.failed_objects += 1;
                continue;
            };
            stats.skipped_frames += completion.skipped_frames.len();
            let prior = priors.get(&t.class_label);
            match estimate_box(&t.class_label, entry.confidence, &completion.cloud, prior, &attr_cfg) {
                Ok(est) => objects.push(ObjectResult {
                    tracklet: t.id,
                    frame,
                    registration_target: tg,
                    used_frames: completion.used_frames.clone(),
                    points: completion.cloud.len(),
                    label: KittiLabel {
                        box3d: est.box3d,
                        box2d: entry.bbox,
                    },
                }),
                Err(e) => {
                    warn!("stage=attributes tracklet={} frame={frame} error=\"{e}\"", t.id);
                    stats.failed_objects += 1;
                }
            }
        }
    }
    stats.labels = objects.len();
    info!(
        "stage=geometry registrations={} failed_registrations={} skipped_frames={} single_frame_fallbacks={}",
        stats.registrations, stats.failed_registrations, stats.skipped_frames, stats.single_frame_fallbacks
    );
    info!(
        "stage=attributes labels={} failed_objects={}",
        stats.labels, stats.failed_objects
    );
    Ok(PipelineOutput {
        window,
        target_frame: target,
        tracklets,
        objects,
        stats,
    })
}
