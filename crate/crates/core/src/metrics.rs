//! Evaluation of 3D labels: 2D-IoU true-positive matching, per-range
//! translation/scale/orientation errors and average precision.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ingest::KittiLabel;
use crate::types::{box2d_iou, normalize_angle, Box3D};

/// IoU needed on the 2D boxes for a prediction to count as a true positive.
pub const TP_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DepthRange {
    Near,
    Mid,
    Far,
}

impl DepthRange {
    pub const ALL: [DepthRange; 3] = [DepthRange::Near, DepthRange::Mid, DepthRange::Far];

    /// Range of a ground-truth depth: `(0, 10]`, `(10, 30]`, `(30, ∞)`.
    /// Objects at or behind the camera plane fall in no range.
    pub fn of(z: f64) -> Option<Self> {
        if !(z > 0.0) {
            None
        } else if z <= 10.0 {
            Some(DepthRange::Near)
        } else if z <= 30.0 {
            Some(DepthRange::Mid)
        } else {
            Some(DepthRange::Far)
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DepthRange::Near => "Near",
            DepthRange::Mid => "Mid",
            DepthRange::Far => "Far",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Matching {
    /// `(pred, gt, iou)` triples.
    pub pairs: Vec<(usize, usize, f64)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

/// Indices of `scores` by descending score, ties kept in input order.
fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy class-wise matching: predictions in descending score order each
/// take the unused ground truth of the same class with the highest IoU,
/// provided it reaches `threshold`.
pub fn match_by<T>(
    preds: &[T],
    gts: &[T],
    threshold: f64,
    class: impl Fn(&T) -> &str,
    score: impl Fn(&T) -> f64,
    iou: impl Fn(&T, &T) -> f64,
) -> Matching {
    let mut used = vec![false; gts.len()];
    let mut m = Matching::default();
    for p in score_order(preds.iter().map(&score)) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || class(gt) != class(&preds[p]) {
                continue;
            }
            let v = iou(&preds[p], gt);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, v)) => {
                used[g] = true;
                m.pairs.push((p, g, v));
            }
            None => m.false_positives.push(p),
        }
    }
    m.false_negatives = (0..gts.len()).filter(|&g| !used[g]).collect();
    m
}

/// True-positive matching on 2D boxes at IoU ≥ 0.5.
pub fn match_tp(preds: &[KittiLabel], gts: &[KittiLabel]) -> Matching {
    match_by(
        preds,
        gts,
        TP_IOU,
        |l| l.box3d.class_label.as_str(),
        |l| l.box3d.score,
        |a, b| box2d_iou(&a.box2d, &b.box2d),
    )
}

/// Center distance in the ground (x, z) plane.
pub fn ate(pred: &Box3D, gt: &Box3D) -> f64 {
    (pred.center.x - gt.center.x).hypot(pred.center.z - gt.center.z)
}

/// `1 - IoU` after aligning centers and orientation.
pub fn ase(pred: &Box3D, gt: &Box3D) -> f64 {
    let (p, g) = (&pred.dims, &gt.dims);
    let inter = p.w.min(g.w) * p.h.min(g.h) * p.l.min(g.l);
    1.0 - inter / (p.volume() + g.volume() - inter)
}

/// Absolute yaw difference wrapped to `[0, π]`; with `mod_pi` the heading
/// is ignored and the result folds into `[0, π/2]`.
pub fn aoe(pred_yaw: f64, gt_yaw: f64, mod_pi: bool) -> f64 {
    let d = normalize_angle(pred_yaw - gt_yaw).abs();
    if mod_pi {
        d.min(PI - d)
    } else {
        d
    }
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

/// Clips `subject` against the convex counter-clockwise polygon `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

/// Intersection area of the two BEV footprints.
pub fn bev_intersection(a: &Box3D, b: &Box3D) -> f64 {
    let poly = clip_convex(&a.bev_corners(), &b.bev_corners());
    if poly.len() < 3 {
        0.0
    } else {
        polygon_area(&poly).abs()
    }
}

/// IoU of the yawed BEV rectangles.
pub fn bev_iou_rotated(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection(a, b);
    let union = a.dims.w * a.dims.l + b.dims.w * b.dims.l - inter;
    if inter <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

/// 3D IoU: BEV intersection times vertical overlap over the union of volumes.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    let (at, ab) = a.y_range();
    let (bt, bb) = b.y_range();
    let dy = (ab.min(bb) - at.max(bt)).max(0.0);
    let inter = bev_intersection(a, b) * dy;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.dims.volume() + b.dims.volume() - inter)).min(1.0)
}

/// Scored outcome of one prediction after per-frame matching.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    score: f64,
    tp: bool,
}

/// Precision interpolated at recall `num / den`: the best precision among
/// operating points whose recall reaches it.
fn interpolated_precision(outcomes: &[Outcome], n_gt: usize, num: usize, den: usize) -> f64 {
    let mut tp = 0usize;
    let mut best = 0.0f64;
    for (k, o) in outcomes.iter().enumerate() {
        if o.tp {
            tp += 1;
        }
        if tp * den >= num * n_gt {
            best = best.max(tp as f64 / (k + 1) as f64);
        }
    }
    best
}

/// Mean interpolated precision at recall `i / den` for `i` in `range`.
fn sampled_ap(
    mut outcomes: Vec<Outcome>,
    n_gt: usize,
    den: usize,
    range: std::ops::RangeInclusive<usize>,
) -> f64 {
    // Equal scores rank false positives first so the result does not depend
    // on input order.
    outcomes.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.tp.cmp(&b.tp)));
    let n = (*range.end() - *range.start() + 1) as f64;
    range
        .map(|i| interpolated_precision(&outcomes, n_gt, i, den))
        .sum::<f64>()
        / n
}

/// One frame's predictions and ground truth.
#[derive(Debug, Clone, Copy)]
pub struct FramePair<'a> {
    pub preds: &'a [KittiLabel],
    pub gts: &'a [KittiLabel],
}

fn classes_with_gt(frames: &[FramePair]) -> BTreeSet<String> {
    frames
        .iter()
        .flat_map(|f| f.gts.iter().map(|g| g.box3d.class_label.clone()))
        .collect()
}

/// Per-class outcomes and GT count at one IoU threshold.
fn class_outcomes(
    frames: &[FramePair],
    class: &str,
    threshold: f64,
    iou: &impl Fn(&KittiLabel, &KittiLabel) -> f64,
) -> (Vec<Outcome>, usize) {
    let mut outcomes = Vec::new();
    let mut n_gt = 0;
    for f in frames {
        let preds: Vec<KittiLabel> = f
            .preds
            .iter()
            .filter(|p| p.box3d.class_label == class)
            .cloned()
            .collect();
        let gts: Vec<KittiLabel> = f
            .gts
            .iter()
            .filter(|g| g.box3d.class_label == class)
            .cloned()
            .collect();
        n_gt += gts.len();
        let m = match_by(
            &preds,
            &gts,
            threshold,
            |l| l.box3d.class_label.as_str(),
            |l| l.box3d.score,
            iou,
        );
        outcomes.extend(m.pairs.iter().map(|&(p, _, _)| Outcome {
            score: preds[p].box3d.score,
            tp: true,
        }));
        outcomes.extend(m.false_positives.iter().map(|&p| Outcome {
            score: preds[p].box3d.score,
            tp: false,
        }));
    }
    (outcomes, n_gt)
}

/// COCO-style 2D AP for one class: mean over IoU thresholds 0.50:0.05:0.95
/// of the 101-point interpolated precision. `None` when the class has no
/// ground truth.
pub fn ap2d_class(frames: &[FramePair], class: &str) -> Option<f64> {
    let iou = |a: &KittiLabel, b: &KittiLabel| box2d_iou(&a.box2d, &b.box2d);
    let mut total = 0.0;
    for k in 0..10 {
        let t = 0.5 + 0.05 * k as f64;
        let (outcomes, n_gt) = class_outcomes(frames, class, t, &iou);
        if n_gt == 0 {
            return None;
        }
        total += sampled_ap(outcomes, n_gt, 100, 0..=100);
    }
    Some(total / 10.0)
}

fn mean_over_classes(frames: &[FramePair], per_class: impl Fn(&str) -> Option<f64>) -> Option<f64> {
    let aps: Vec<f64> = classes_with_gt(frames)
        .iter()
        .filter_map(|c| per_class(c))
        .collect();
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

/// 2D AP averaged over the classes present in the ground truth.
pub fn ap2d(frames: &[FramePair]) -> Option<f64> {
    mean_over_classes(frames, |c| ap2d_class(frames, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApMode {
    ThreeD,
    Bev,
}

/// KITTI AP for one class at 40 recall positions (1/40 .. 1).
pub fn ap_kitti_class(frames: &[FramePair], class: &str, threshold: f64, mode: ApMode) -> Option<f64> {
    let iou = |a: &KittiLabel, b: &KittiLabel| match mode {
        ApMode::ThreeD => iou3d(&a.box3d, &b.box3d),
        ApMode::Bev => bev_iou_rotated(&a.box3d, &b.box3d),
    };
    let (outcomes, n_gt) = class_outcomes(frames, class, threshold, &iou);
    (n_gt > 0).then(|| sampled_ap(outcomes, n_gt, 40, 1..=40))
}

/// KITTI R40 AP averaged over the classes present in the ground truth.
pub fn ap_kitti(frames: &[FramePair], threshold: f64, mode: ApMode) -> Option<f64> {
    mean_over_classes(frames, |c| ap_kitti_class(frames, c, threshold, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mod_pi: bool,
    /// IoU threshold for the 3D and BEV APs.
    pub ap_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mod_pi: false,
            ap_iou: 0.5,
        }
    }
}

/// Errors accumulated over the true positives of one depth range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeStats {
    pub gt: usize,
    pub tp: usize,
    pub ate: Option<f64>,
    pub ase: Option<f64>,
    pub aoe: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub near: RangeStats,
    pub mid: RangeStats,
    pub far: RangeStats,
    pub predictions: usize,
    pub ap2d: Option<f64>,
    pub ap3d: Option<f64>,
    pub ap_bev: Option<f64>,
}

impl ClassReport {
    pub fn range(&self, r: DepthRange) -> &RangeStats {
        match r {
            DepthRange::Near => &self.near,
            DepthRange::Mid => &self.mid,
            DepthRange::Far => &self.far,
        }
    }

    fn range_mut(&mut self, r: DepthRange) -> &mut RangeStats {
        match r {
            DepthRange::Near => &mut self.near,
            DepthRange::Mid => &mut self.mid,
            DepthRange::Far => &mut self.far,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub mod_pi: bool,
    pub classes: BTreeMap<String, ClassReport>,
    pub ap2d: Option<f64>,
    pub ap3d: Option<f64>,
    pub ap_bev: Option<f64>,
}

/// Full evaluation: TP matching per frame, per-class and per-range errors
/// over the true positives, and the AP metrics.
pub fn evaluate(frames: &[FramePair], cfg: &EvalConfig) -> EvalReport {
    #[derive(Default)]
    struct Acc {
        n: usize,
        ate: f64,
        ase: f64,
        aoe: f64,
    }
    let mut report = EvalReport {
        frames: frames.len(),
        mod_pi: cfg.mod_pi,
        ..Default::default()
    };
    let mut acc: BTreeMap<(String, DepthRange), Acc> = BTreeMap::new();
    for f in frames {
        for p in f.preds {
            report
                .classes
                .entry(p.box3d.class_label.clone())
                .or_default()
                .predictions += 1;
        }
        for g in f.gts {
            let entry = report.classes.entry(g.box3d.class_label.clone()).or_default();
            if let Some(r) = DepthRange::of(g.box3d.center.z) {
                entry.range_mut(r).gt += 1;
            }
        }
        let m = match_tp(f.preds, f.gts);
        for &(p, g, _) in &m.pairs {
            let (p, g) = (&f.preds[p].box3d, &f.gts[g].box3d);
            let Some(r) = DepthRange::of(g.center.z) else {
                continue;
            };
            let a = acc.entry((g.class_label.clone(), r)).or_default();
            a.n += 1;
            a.ate += ate(p, g);
            a.ase += ase(p, g);
            a.aoe += aoe(p.yaw, g.yaw, cfg.mod_pi);
        }
    }
    for ((class, r), a) in acc {
        let s = report.classes.get_mut(&class).expect("class seen").range_mut(r);
        let n = a.n as f64;
        s.tp = a.n;
        s.ate = Some(a.ate / n);
        s.ase = Some(a.ase / n);
        s.aoe = Some(a.aoe / n);
    }
    let classes: Vec<String> = report.classes.keys().cloned().collect();
    for c in classes {
        let ap2 = ap2d_class(frames, &c);
        let ap3 = ap_kitti_class(frames, &c, cfg.ap_iou, ApMode::ThreeD);
        let apb = ap_kitti_class(frames, &c, cfg.ap_iou, ApMode::Bev);
        let e = report.classes.get_mut(&c).expect("present");
        e.ap2d = ap2;
        e.ap3d = ap3;
        e.ap_bev = apb;
    }
    report.ap2d = ap2d(frames);
    report.ap3d = ap_kitti(frames, cfg.ap_iou, ApMode::ThreeD);
    report.ap_bev = ap_kitti(frames, cfg.ap_iou, ApMode::Bev);
    report
}

impl EvalReport {
    /// Aligned plain-text table: one row per class, Near/Mid/Far columns for
    /// each error, then TP counts and APs.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} | {:^23} | {:^23} | {:^23} | {:^14} | {:>6} {:>6} {:>6}",
            "Class", "ATE (m)", "ASE (1-IoU)", "AOE (rad)", "TP", "AP2D", "AP3D", "APBEV"
        );
        let sub = format!("{:>7} {:>7} {:>7}", "Near", "Mid", "Far");
        let _ = writeln!(
            out,
            "{:<12} | {sub} | {sub} | {sub} | {:>4} {:>4} {:>4} | {:>6} {:>6} {:>6}",
            "", "Near", "Mid", "Far", "", "", ""
        );
        for (class, c) in &self.classes {
            let col = |f: &dyn Fn(&RangeStats) -> Option<f64>| {
                DepthRange::ALL
                    .iter()
                    .map(|&r| format!("{:>7}", fmt(f(c.range(r)))))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let _ = writeln!(
                out,
                "{:<12} | {} | {} | {} | {:>4} {:>4} {:>4} | {:>6} {:>6} {:>6}",
                class,
                col(&|s| s.ate),
                col(&|s| s.ase),
                col(&|s| s.aoe),
                c.near.tp,
                c.mid.tp,
                c.far.tp,
                fmt(c.ap2d),
                fmt(c.ap3d),
                fmt(c.ap_bev),
            );
        }
        let _ = writeln!(
            out,
            "overall AP2D {}  AP3D {}  APBEV {}  frames {}",
            fmt(self.ap2d),
            fmt(self.ap3d),
            fmt(self.ap_bev),
            self.frames
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Box2D, Dimensions};
    use nalgebra::Point3;
    use proptest::prelude::*;

    fn b3(x: f64, z: f64, dims: (f64, f64, f64), yaw: f64) -> Box3D {
        Box3D::new("Car", Point3::new(x, 1.0, z), Dimensions::new(dims.0, dims.1, dims.2), yaw, 1.0)
            .unwrap()
    }

    fn label(class: &str, u: f64, z: f64, score: f64) -> KittiLabel {
        let box3d = Box3D::new(class, Point3::new(0.0, 1.0, z), Dimensions::new(1.6, 1.5, 4.0), 0.0, score)
            .unwrap();
        KittiLabel {
            box3d,
            box2d: Box2D::new(u, 50.0, 20.0, 20.0).unwrap(),
        }
    }

    #[test]
    fn ate_examples() {
        let g = b3(0.0, 10.0, (1.0, 1.0, 1.0), 0.0);
        assert_eq!(ate(&g, &g), 0.0);
        assert_eq!(ate(&b3(3.0, 14.0, (1.0, 1.0, 1.0), 0.0), &g), 5.0);
        let mut up = g.clone();
        up.center.y += 5.0;
        assert_eq!(ate(&up, &g), 0.0);
    }

    #[test]
    fn ase_examples() {
        let g = b3(0.0, 10.0, (1.0, 1.5, 4.0), 0.0);
        assert_eq!(ase(&g, &g), 0.0);
        let double = b3(0.0, 10.0, (2.0, 3.0, 8.0), 0.0);
        assert!((ase(&double, &g) - 7.0 / 8.0).abs() < 1e-15);
        let a = b3(0.0, 10.0, (1.0, 1.0, 1.0), 0.0);
        let b = b3(0.0, 10.0, (1.0, 1.0, 2.0), 0.0);
        assert_eq!(ase(&a, &b), 0.5);
    }

    #[test]
    fn aoe_examples() {
        assert_eq!(aoe(0.4, 0.4, false), 0.0);
        assert!((aoe(0.0, 1.5 * PI, false) - PI / 2.0).abs() < 1e-12);
        assert!((aoe(0.1, -0.1, false) - 0.2).abs() < 1e-12);
        assert!((aoe(0.0, PI - 0.1, true) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn match_prefers_higher_iou() {
        let gts = vec![label("Car", 100.0, 10.0, 1.0), label("Car", 100.0, 20.0, 1.0)];
        // IoUs 0.7 and 0.6 with the same prediction via box shifts
        let mut g0 = gts.clone();
        g0[0].box2d = Box2D::new(100.0 + 20.0 * (1.0 - 2.0 * 0.7 / 1.7), 50.0, 20.0, 20.0).unwrap();
        g0[1].box2d = Box2D::new(100.0 - 20.0 * (1.0 - 2.0 * 0.6 / 1.6), 50.0, 20.0, 20.0).unwrap();
        let pred = vec![label("Car", 100.0, 10.0, 0.9)];
        assert!((box2d_iou(&pred[0].box2d, &g0[0].box2d) - 0.7).abs() < 1e-9);
        assert!((box2d_iou(&pred[0].box2d, &g0[1].box2d) - 0.6).abs() < 1e-9);
        let m = match_tp(&pred, &g0);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].1, 0);
        assert_eq!(m.false_negatives, vec![1]);
    }

    #[test]
    fn match_below_threshold_and_across_classes() {
        let gt = vec![label("Car", 100.0, 10.0, 1.0)];
        let mut p = label("Car", 100.0, 10.0, 0.9);
        // IoU 0.45
        p.box2d = Box2D::new(100.0 + 20.0 * (1.0 - 2.0 * 0.45 / 1.45), 50.0, 20.0, 20.0).unwrap();
        let m = match_tp(&[p], &gt);
        assert!(m.pairs.is_empty());
        assert_eq!((m.false_positives.len(), m.false_negatives.len()), (1, 1));
        let m = match_tp(&[label("Van", 100.0, 10.0, 0.9)], &gt);
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn ap2d_examples() {
        let gts = vec![label("Car", 100.0, 10.0, 1.0), label("Car", 300.0, 20.0, 1.0)];
        let f = [FramePair { preds: &gts, gts: &gts }];
        assert_eq!(ap2d(&f), Some(1.0));
        let f = [FramePair { preds: &[], gts: &gts }];
        assert_eq!(ap2d(&f), Some(0.0));
        let one = [gts[0].clone()];
        let f = [FramePair { preds: &one, gts: &gts }];
        assert!((ap2d(&f).unwrap() - 51.0 / 101.0).abs() < 1e-12);
        let f = [FramePair { preds: &one, gts: &[] }];
        assert_eq!(ap2d(&f), None);
    }

    #[test]
    fn ap_kitti_examples() {
        let gts: Vec<_> = (0..4).map(|i| label("Car", 100.0 * i as f64, 5.0 + 10.0 * i as f64, 1.0)).collect();
        let f = [FramePair { preds: &gts, gts: &gts }];
        assert_eq!(ap_kitti(&f, 0.5, ApMode::ThreeD), Some(1.0));
        let half = &gts[..2];
        let f = [FramePair { preds: half, gts: &gts }];
        assert_eq!(ap_kitti(&f, 0.5, ApMode::Bev), Some(0.5));

        let mut with_fp = gts.clone();
        let mut fp = label("Car", 50.0, 80.0, 1.0);
        fp.box3d.score = 2.0;
        with_fp.push(fp);
        let clean = ap_kitti(&[FramePair { preds: &gts, gts: &gts }], 0.5, ApMode::ThreeD).unwrap();
        let noisy = ap_kitti(&[FramePair { preds: &with_fp, gts: &gts }], 0.5, ApMode::ThreeD).unwrap();
        assert!(noisy < clean);
    }

    #[test]
    fn bev_iou_cross_shape() {
        let a = b3(0.0, 10.0, (1.0, 1.0, 3.0), 0.0);
        let b = b3(0.0, 10.0, (1.0, 1.0, 3.0), PI / 2.0);
        assert!((bev_iou_rotated(&a, &b) - 1.0 / 5.0).abs() < 1e-12);
        assert_eq!(bev_iou_rotated(&a, &a), 1.0);
        assert_eq!(bev_iou_rotated(&a, &b3(10.0, 10.0, (1.0, 1.0, 3.0), 0.3)), 0.0);
    }

    #[test]
    fn iou3d_vertical_offset() {
        let a = b3(0.0, 10.0, (1.0, 2.0, 1.0), 0.0);
        let mut b = a.clone();
        b.center.y += 1.0;
        assert!((iou3d(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_identity_and_empty() {
        let gts = vec![label("Car", 100.0, 5.0, 1.0), label("Car", 300.0, 20.0, 1.0), label("Pedestrian", 500.0, 40.0, 1.0)];
        let r = evaluate(&[FramePair { preds: &gts, gts: &gts }], &EvalConfig::default());
        for c in r.classes.values() {
            for range in DepthRange::ALL {
                let s = c.range(range);
                if s.tp > 0 {
                    assert_eq!((s.ate, s.ase, s.aoe), (Some(0.0), Some(0.0), Some(0.0)));
                }
            }
        }
        assert_eq!(r.classes["Car"].near.tp, 1);
        assert_eq!(r.classes["Car"].mid.tp, 1);
        assert_eq!(r.classes["Pedestrian"].far.tp, 1);
        assert_eq!((r.ap2d, r.ap3d, r.ap_bev), (Some(1.0), Some(1.0), Some(1.0)));

        let r = evaluate(&[], &EvalConfig::default());
        assert!(r.classes.is_empty());
        assert_eq!(r.ap2d, None);
        assert!(r.to_table().contains("overall"));
    }

    #[test]
    fn depth_range_boundaries() {
        assert_eq!(DepthRange::of(10.0), Some(DepthRange::Near));
        assert_eq!(DepthRange::of(10.000001), Some(DepthRange::Mid));
        assert_eq!(DepthRange::of(30.0), Some(DepthRange::Mid));
        assert_eq!(DepthRange::of(30.5), Some(DepthRange::Far));
        assert_eq!(DepthRange::of(0.0), None);
    }

    proptest! {
        #[test]
        fn errors_symmetric_nonnegative(
            d1 in prop::array::uniform3(0.2f64..5.0), d2 in prop::array::uniform3(0.2f64..5.0),
            y1 in -4.0f64..4.0, y2 in -4.0f64..4.0, m in any::<bool>(),
        ) {
            let a = b3(0.0, 10.0, (d1[0], d1[1], d1[2]), y1);
            let b = b3(1.0, 12.0, (d2[0], d2[1], d2[2]), y2);
            prop_assert!((ase(&a, &b) - ase(&b, &a)).abs() < 1e-15);
            prop_assert!(ase(&a, &b) >= 0.0);
            prop_assert!((aoe(y1, y2, m) - aoe(y2, y1, m)).abs() < 1e-12);
            prop_assert!(aoe(y1, y2, m) >= 0.0);
            let iou = bev_iou_rotated(&a, &b);
            prop_assert!((iou - bev_iou_rotated(&b, &a)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&iou));
        }

        #[test]
        fn tp_plus_fn_is_gt(n_p in 0usize..6, n_g in 0usize..6, seed in 0u64..1000) {
            let classes = ["Car", "Pedestrian"];
            let mk = |i: usize, k: u64| label(classes[(i + k as usize) % 2], 40.0 * ((i as u64 * 7 + k) % 5) as f64, 10.0, 0.1 * (i as f64 + 1.0));
            let preds: Vec<_> = (0..n_p).map(|i| mk(i, seed)).collect();
            let gts: Vec<_> = (0..n_g).map(|i| mk(i, seed / 3)).collect();
            let m = match_tp(&preds, &gts);
            prop_assert_eq!(m.pairs.len() + m.false_negatives.len(), gts.len());
            prop_assert_eq!(m.pairs.len() + m.false_positives.len(), preds.len());
            for (p, g, _) in m.pairs {
                prop_assert_eq!(&preds[p].box3d.class_label, &gts[g].box3d.class_label);
            }
        }
    }
}
