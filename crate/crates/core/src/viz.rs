//! Bird's-eye-view SVG plots of 3D boxes.
//!
//! Drawing happens inside a group whose transform maps meters to pixels, so
//! polygon coordinates in the file are plain `(x, z)` meters with z pointing
//! up the page.

use std::fmt::Write as _;

use crate::types::Box3D;

const PX_PER_M: f64 = 10.0;
const GRID_M: f64 = 10.0;

/// Plot bounds in meters, snapped outward to the grid.
fn bounds(boxes: &[&Box3D]) -> (f64, f64, f64, f64) {
    let (mut x0, mut x1, mut z0, mut z1) = (-20.0f64, 20.0f64, 0.0f64, 40.0f64);
    for b in boxes {
        for [x, z] in b.bev_corners() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            z0 = z0.min(z);
            z1 = z1.max(z);
        }
    }
    let snap_down = |v: f64| (v / GRID_M).floor() * GRID_M;
    let snap_up = |v: f64| (v / GRID_M).ceil() * GRID_M;
    (snap_down(x0), snap_up(x1), snap_down(z0), snap_up(z1))
}

fn polygon(out: &mut String, b: &Box3D, style: &str) {
    let pts: Vec<String> = b
        .bev_corners()
        .iter()
        .map(|[x, z]| format!("{x:.3},{z:.3}"))
        .collect();
    let [lx, lz] = b.length_axis();
    let (cx, cz) = (b.center.x, b.center.z);
    let h = 0.5 * b.dims.l;
    let _ = writeln!(
        out,
        r#"    <polygon points="{}" {style}/>"#,
        pts.join(" ")
    );
    // Heading tick along the length axis.
    let _ = writeln!(
        out,
        r#"    <line x1="{cx:.3}" y1="{cz:.3}" x2="{:.3}" y2="{:.3}" {style}/>"#,
        cx + h * lx,
        cz + h * lz
    );
}

/// BEV plot of predictions (solid) and optional truth (dashed) with a 10 m
/// grid. Output is a pure function of the inputs.
pub fn bev_svg(preds: &[Box3D], truth: &[Box3D]) -> String {
    let all: Vec<&Box3D> = preds.iter().chain(truth).collect();
    let (x0, x1, z0, z1) = bounds(&all);
    let (w, h) = ((x1 - x0) * PX_PER_M, (z1 - z0) * PX_PER_M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(s, r#"  <rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"  <g transform="translate({:.3} {:.3}) scale({PX_PER_M} -{PX_PER_M})">"#,
        -x0 * PX_PER_M,
        z1 * PX_PER_M
    );
    let grid = r##"stroke="#cccccc" stroke-width="0.05""##;
    let mut x = x0;
    while x <= x1 + 1e-9 {
        let _ = writeln!(s, r#"    <line x1="{x:.3}" y1="{z0:.3}" x2="{x:.3}" y2="{z1:.3}" {grid}/>"#);
        x += GRID_M;
    }
    let mut z = z0;
    while z <= z1 + 1e-9 {
        let _ = writeln!(s, r#"    <line x1="{x0:.3}" y1="{z:.3}" x2="{x1:.3}" y2="{z:.3}" {grid}/>"#);
        z += GRID_M;
    }
    let _ = writeln!(s, r#"    <circle cx="0" cy="0" r="0.5" fill="black"/>"#);
    for b in truth {
        polygon(
            &mut s,
            b,
            r##"fill="none" stroke="#2a7f2a" stroke-width="0.1" stroke-dasharray="0.4 0.3""##,
        );
    }
    for b in preds {
        polygon(&mut s, b, r##"fill="none" stroke="#c0392b" stroke-width="0.1""##);
    }
    let _ = writeln!(s, "  </g>");
    let _ = writeln!(s, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Dimensions;
    use nalgebra::Point3;

    #[test]
    fn empty_plot_has_grid_only() {
        let s = bev_svg(&[], &[]);
        assert!(s.contains("<line"));
        assert!(!s.contains("<polygon"));
    }

    #[test]
    fn box_ahead_is_centered_at_ten_meters() {
        let b = Box3D::new("Car", Point3::new(0.0, 1.0, 10.0), Dimensions::new(2.0, 1.5, 4.0), 0.0, 1.0)
            .unwrap();
        let s = bev_svg(std::slice::from_ref(&b), &[]);
        assert!(s.contains(r#"points="-2.000,9.000 2.000,9.000 2.000,11.000 -2.000,11.000""#));
        assert_eq!(s, bev_svg(&[b], &[]));
    }
}
