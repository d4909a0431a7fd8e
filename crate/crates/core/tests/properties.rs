use nalgebra::{Point3, Rotation3, Vector3};
use proptest::prelude::*;

use plot_core::assoc::{hungarian::max_weight_assignment, match_iou_matrix};
use plot_core::geometry::procrustes;

fn brute_force(w: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
    if row == w.len() {
        return 0.0;
    }
    let mut best = brute_force(w, row + 1, used);
    for c in 0..used.len() {
        if !used[c] {
            used[c] = true;
            best = best.max(w[row][c] + brute_force(w, row + 1, used));
            used[c] = false;
        }
    }
    best
}

fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec((0u32..=64).prop_map(|k| k as f64 / 64.0), c), r)
    })
}

fn points() -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec([-20.0..20.0f64, -3.0..3.0f64, 1.0..50.0f64], 4..60)
}

proptest! {
    #[test]
    fn assignment_is_optimal_and_injective(w in matrix()) {
        let a = max_weight_assignment(&w);
        prop_assert_eq!(a.len(), w.len());
        let cols: Vec<usize> = a.iter().flatten().copied().collect();
        let mut dedup = cols.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), cols.len());
        let total: f64 = a.iter().enumerate().filter_map(|(r, c)| c.map(|c| w[r][c])).sum();
        let best = brute_force(&w, 0, &mut vec![false; w[0].len()]);
        prop_assert_eq!(total, best);
    }

    #[test]
    fn matching_respects_the_threshold(w in matrix(), tau in 0.0..1.0f64) {
        for p in match_iou_matrix(&w, tau).pairs {
            prop_assert!(p.iou >= tau);
            prop_assert_eq!(p.iou, w[p.tracked][p.detected]);
        }
    }

    #[test]
    fn procrustes_inverts_a_similarity(
        pts in points(),
        axis in [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64],
        angle in -3.0..3.0f64,
        s in 0.5..2.0f64,
        t in [-30.0..30.0f64, -30.0..30.0f64, -30.0..30.0f64],
    ) {
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 0.1);
        let r = Rotation3::new(axis.normalize() * angle);
        let t = Vector3::from(t);
        let pairs: Vec<_> = pts
            .iter()
            .map(|p| {
                let p = Point3::from(*p);
                (p, Point3::from(s * (r * p.coords) + t))
            })
            .collect();
        let reg = procrustes(&pairs, false).unwrap();
        prop_assert!((reg.transform.scale - s).abs() < 1e-8);
        prop_assert!(reg.rms < 1e-7);
        let inv = reg.transform.inverse();
        for (a, b) in &pairs {
            prop_assert!((inv.apply(b) - a).norm() < 1e-7);
        }
    }

    #[test]
    fn rigid_fit_keeps_unit_scale(pts in points(), angle in -3.0..3.0f64) {
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), angle);
        let pairs: Vec<_> = pts
            .iter()
            .map(|p| {
                let p = Point3::from(*p);
                (p, Point3::from(1.3 * (r * p.coords)))
            })
            .collect();
        let reg = procrustes(&pairs, true).unwrap();
        prop_assert_eq!(reg.transform.scale, 1.0);
    }
}
