//! Cross-frame mask association and label repair.
//!
//! Every detection is tracked into every other frame of the window. The
//! tracked masks are matched against that frame's detections by a maximum
//! IoU assignment; accepted pairs are merged into per-object tracklets by a
//! union-find that never lets one tracklet hold two entries of one frame.

pub mod hungarian;

use std::collections::{BTreeMap, BTreeSet};

use crate::ingest::SceneBundle;
use crate::types::{box_from_mask, mask_iou, Box2D, PixelSet, TrackedMask};

#[derive(Debug, Clone, PartialEq)]
pub struct AssocConfig {
    /// Minimum IoU for an assignment pair to count as a match.
    pub tau_match: f64,
    /// A tracklet with fewer detected entries than this *and* a maximum
    /// confidence below `c_min` is a false positive.
    pub n_min: usize,
    pub c_min: f64,
    /// Score of a supplemented entry relative to its donor detection.
    pub supplement_score_factor: f64,
    /// Frame whose match edges are merged first.
    pub anchor_frame: Option<usize>,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            tau_match: 0.3,
            n_min: 2,
            c_min: 0.5,
            supplement_score_factor: 0.9,
            anchor_frame: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub tracked: usize,
    pub detected: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskAssignment {
    pub pairs: Vec<MatchPair>,
    pub unmatched_tracked: Vec<usize>,
    pub unmatched_detected: Vec<usize>,
}

impl MaskAssignment {
    pub fn total_iou(&self) -> f64 {
        self.pairs.iter().map(|p| p.iou).sum()
    }
}

/// Maximum-IoU one-to-one assignment on a precomputed IoU matrix
/// (`iou[tracked][detected]`); pairs below `tau` are reported unmatched.
pub fn match_iou_matrix(iou: &[Vec<f64>], tau: f64) -> MaskAssignment {
    let n_det = iou.first().map_or(0, Vec::len);
    let assignment = hungarian::max_weight_assignment(iou);
    let mut out = MaskAssignment::default();
    let mut det_used = vec![false; n_det];
    for (t, a) in assignment.into_iter().enumerate() {
        match a {
            Some(d) if iou[t][d] >= tau => {
                det_used[d] = true;
                out.pairs.push(MatchPair {
                    tracked: t,
                    detected: d,
                    iou: iou[t][d],
                });
            }
            _ => out.unmatched_tracked.push(t),
        }
    }
    out.unmatched_detected = (0..n_det).filter(|d| !det_used[*d]).collect();
    out
}

/// Matches tracked masks (rasterized in the target frame) against that
/// frame's detected masks.
pub fn match_masks(tracked: &[PixelSet], detected: &[PixelSet], tau: f64) -> MaskAssignment {
    let iou: Vec<Vec<f64>> = tracked
        .iter()
        .map(|t| {
            detected
                .iter()
                .map(|d| mask_iou(t, d).unwrap_or(0.0))
                .collect()
        })
        .collect();
    if detected.is_empty() {
        return MaskAssignment {
            unmatched_tracked: (0..tracked.len()).collect(),
            ..Default::default()
        };
    }
    match_iou_matrix(&iou, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryOrigin {
    Detected { mask_id: u32 },
    /// Filled in from the tracked mask of a detection in `donor_frame`.
    Supplemented { donor_frame: usize, donor_mask_id: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackletEntry {
    pub frame: usize,
    pub pixels: PixelSet,
    pub bbox: Box2D,
    pub class_label: String,
    pub confidence: f64,
    pub origin: EntryOrigin,
}

impl TrackletEntry {
    pub fn is_detected(&self) -> bool {
        matches!(self.origin, EntryOrigin::Detected { .. })
    }

    pub fn mask_id(&self) -> Option<u32> {
        match self.origin {
            EntryOrigin::Detected { mask_id } => Some(mask_id),
            EntryOrigin::Supplemented { .. } => None,
        }
    }
}

/// One physical object's observations across the frame window.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTracklet {
    pub id: usize,
    /// At most one entry per frame.
    pub entries: BTreeMap<usize, TrackletEntry>,
    pub class_label: String,
}

impl ObjectTracklet {
    pub fn detected(&self) -> impl Iterator<Item = &TrackletEntry> {
        self.entries.values().filter(|e| e.is_detected())
    }

    pub fn detected_count(&self) -> usize {
        self.detected().count()
    }

    pub fn supplemented_frames(&self) -> Vec<usize> {
        self.entries
            .values()
            .filter(|e| !e.is_detected())
            .map(|e| e.frame)
            .collect()
    }

    pub fn max_confidence(&self) -> f64 {
        self.detected().map(|e| e.confidence).fold(0.0, f64::max)
    }

    /// Tracked mask of this tracklet's detection in `from` into frame `to`.
    pub fn tracked_mask<'a>(
        &self,
        scene: &'a SceneBundle,
        from: usize,
        to: usize,
    ) -> Option<&'a TrackedMask> {
        let id = self.entries.get(&from)?.mask_id()?;
        scene.track(from, id, to)
    }
}

struct DisjointFrames {
    parent: Vec<usize>,
    frames: Vec<BTreeSet<usize>>,
}

impl DisjointFrames {
    fn new(node_frames: &[usize]) -> Self {
        Self {
            parent: (0..node_frames.len()).collect(),
            frames: node_frames.iter().map(|f| BTreeSet::from([*f])).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the two sets unless they share a frame.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb || !self.frames[ra].is_disjoint(&self.frames[rb]) {
            return false;
        }
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        let moved = std::mem::take(&mut self.frames[gone]);
        self.frames[keep].extend(moved);
        self.parent[gone] = keep;
        true
    }
}

/// Groups the detections of `window` frames into tracklets.
pub fn build_tracklets(
    scene: &SceneBundle,
    window: &[usize],
    cfg: &AssocConfig,
) -> Vec<ObjectTracklet> {
    let mut nodes: Vec<(usize, u32)> = Vec::new();
    for &t in window {
        if let Some(f) = scene.frame(t) {
            nodes.extend(f.detections.iter().map(|d| (t, d.mask_id)));
        }
    }
    let node_of: BTreeMap<(usize, u32), usize> =
        nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();

    struct Edge {
        anchored: bool,
        iou: f64,
        a: usize,
        b: usize,
    }
    let mut edges = Vec::new();
    for &src in window {
        let Some(src_frame) = scene.frame(src) else { continue };
        for &dst in window {
            if dst == src {
                continue;
            }
            let Some(dst_frame) = scene.frame(dst) else { continue };
            let (ids, tracked): (Vec<u32>, Vec<PixelSet>) = src_frame
                .detections
                .iter()
                .filter_map(|d| {
                    let tm = scene.track(src, d.mask_id, dst)?;
                    Some((d.mask_id, tm.rasterize(scene.width, scene.height)))
                })
                .unzip();
            let detected: Vec<PixelSet> = dst_frame
                .detections
                .iter()
                .map(|d| d.mask.pixels.clone())
                .collect();
            let assignment = match_masks(&tracked, &detected, cfg.tau_match);
            for p in assignment.pairs {
                let a = node_of[&(src, ids[p.tracked])];
                let b = node_of[&(dst, dst_frame.detections[p.detected].mask_id)];
                let anchored = cfg.anchor_frame.is_some_and(|k| k == src || k == dst);
                edges.push(Edge {
                    anchored,
                    iou: p.iou,
                    a: a.min(b),
                    b: a.max(b),
                });
            }
        }
    }
    edges.sort_by(|x, y| {
        y.anchored
            .cmp(&x.anchored)
            .then(y.iou.total_cmp(&x.iou))
            .then((x.a, x.b).cmp(&(y.a, y.b)))
    });

    let node_frames: Vec<usize> = nodes.iter().map(|n| n.0).collect();
    let mut sets = DisjointFrames::new(&node_frames);
    for e in &edges {
        sets.union(e.a, e.b);
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..nodes.len() {
        let root = sets.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut tracklets: Vec<ObjectTracklet> = groups
        .into_values()
        .map(|members| {
            let entries = members
                .iter()
                .map(|&i| {
                    let (frame, mask_id) = nodes[i];
                    let d = scene.detection(frame, mask_id).expect("node from scene");
                    let entry = TrackletEntry {
                        frame,
                        pixels: d.mask.pixels.clone(),
                        bbox: d.bbox,
                        class_label: d.mask.class_label.clone(),
                        confidence: d.mask.confidence,
                        origin: EntryOrigin::Detected { mask_id },
                    };
                    (frame, entry)
                })
                .collect();
            let mut t = ObjectTracklet {
                id: 0,
                entries,
                class_label: String::new(),
            };
            t.class_label = resolve_class(&t);
            t
        })
        .collect();
    // Ordered by first (frame, mask id) node, which is the group root order.
    for (i, t) in tracklets.iter_mut().enumerate() {
        t.id = i;
    }
    tracklets
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelRepairStats {
    pub removed: usize,
    pub supplemented: usize,
}

/// Drops false-positive tracklets and fills frames where a tracklet has no
/// detection with the best-visibility tracked mask from another frame.
/// Detected entries are never modified.
pub fn improve_labels(
    tracklets: Vec<ObjectTracklet>,
    scene: &SceneBundle,
    window: &[usize],
    cfg: &AssocConfig,
) -> (Vec<ObjectTracklet>, LabelRepairStats) {
    let mut stats = LabelRepairStats::default();
    let mut out = Vec::with_capacity(tracklets.len());
    for mut t in tracklets {
        if t.detected_count() < cfg.n_min && t.max_confidence() < cfg.c_min {
            stats.removed += 1;
            continue;
        }
        for &frame in window {
            if t.entries.contains_key(&frame) {
                continue;
            }
            if let Some(entry) = supplement(&t, scene, frame, cfg) {
                t.entries.insert(frame, entry);
                stats.supplemented += 1;
            }
        }
        out.push(t);
    }
    (out, stats)
}

fn supplement(
    t: &ObjectTracklet,
    scene: &SceneBundle,
    frame: usize,
    cfg: &AssocConfig,
) -> Option<TrackletEntry> {
    let donor = t
        .detected()
        .filter_map(|e| {
            let tm = t.tracked_mask(scene, e.frame, frame)?;
            (tm.visible_count() > 0).then_some((e, tm))
        })
        .max_by(|(ea, ta), (eb, tb)| {
            ta.visible_fraction()
                .total_cmp(&tb.visible_fraction())
                .then(ea.confidence.total_cmp(&eb.confidence))
                .then(eb.frame.cmp(&ea.frame))
        })?;
    let (donor, tm) = donor;
    let pixels = tm.rasterize(scene.width, scene.height);
    let bbox = box_from_mask(&pixels).ok()?;
    Some(TrackletEntry {
        frame,
        pixels,
        bbox,
        class_label: donor.class_label.clone(),
        confidence: donor.confidence * cfg.supplement_score_factor,
        origin: EntryOrigin::Supplemented {
            donor_frame: donor.frame,
            donor_mask_id: donor.mask_id().expect("donor is detected"),
        },
    })
}

/// Confidence-weighted majority class over detected entries. Ties go to the
/// class with the highest single confidence, then to the lexicographically
/// smallest label.
pub fn resolve_class(t: &ObjectTracklet) -> String {
    let mut votes: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for e in t.detected() {
        let v = votes.entry(e.class_label.as_str()).or_insert((0.0, 0.0));
        v.0 += e.confidence;
        v.1 = v.1.max(e.confidence);
    }
    votes
        .into_iter()
        // BTreeMap iterates ascending; `max_by` keeps the last maximum, so
        // compare in reverse label order to prefer the smallest label.
        .rev()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.total_cmp(&b.1 .1)))
        .map(|(c, _)| c.to_string())
        .unwrap_or_default()
}
