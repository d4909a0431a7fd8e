//! Metric depth rasters.

use serde::{Deserialize, Serialize};

/// Neighborhoods whose depths span more than this (meters) are sampled with
/// nearest-neighbor instead of bilinear interpolation.
pub const DISCONTINUITY_SPAN: f64 = 1.0;

/// Row-major `f32` depth map in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRaster {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthRaster {
    /// `None` when `data.len() != width * height`.
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Option<Self> {
        (data.len() == width as usize * height as usize).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> Option<f32> {
        (u < self.width && v < self.height)
            .then(|| self.data[v as usize * self.width as usize + u as usize])
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, z: f32) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = z;
    }

    /// Depth at a sub-pixel location. Bilinear over the four surrounding pixel
    /// centers, falling back to the nearest pixel near the border or across a
    /// depth discontinuity. Returns `None` outside the image or for
    /// non-positive / non-finite depth.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        let (w, h) = (self.width as f64, self.height as f64);
        if x < -0.5 || y < -0.5 || x >= w - 0.5 || y >= h - 0.5 {
            return None;
        }
        let nearest = || {
            let z = self.get(x.round() as u32, y.round() as u32)? as f64;
            valid(z)
        };
        let (x0, y0) = (x.floor(), y.floor());
        if x0 < 0.0 || y0 < 0.0 || x0 + 1.0 >= w || y0 + 1.0 >= h {
            return nearest();
        }
        let (u0, v0) = (x0 as u32, y0 as u32);
        let q = [
            self.get(u0, v0)? as f64,
            self.get(u0 + 1, v0)? as f64,
            self.get(u0, v0 + 1)? as f64,
            self.get(u0 + 1, v0 + 1)? as f64,
        ];
        if q.iter().any(|z| valid(*z).is_none()) {
            return nearest();
        }
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > DISCONTINUITY_SPAN {
            return nearest();
        }
        let (fx, fy) = (x - x0, y - y0);
        let top = q[0] * (1.0 - fx) + q[1] * fx;
        let bottom = q[2] * (1.0 - fx) + q[3] * fx;
        valid(top * (1.0 - fy) + bottom * fy)
    }
}

#[inline]
fn valid(z: f64) -> Option<f64> {
    (z.is_finite() && z > 0.0).then_some(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_inside_smooth_region() {
        let mut d = DepthRaster::filled(4, 4, 10.0);
        d.set(2, 1, 10.4);
        let z = d.sample(1.5, 1.0).unwrap();
        assert!((z - 10.2).abs() < 1e-6);
        assert_eq!(d.sample(1.0, 1.0), Some(10.0));
    }

    #[test]
    fn discontinuity_uses_nearest() {
        let mut d = DepthRaster::filled(4, 4, 10.0);
        d.set(2, 1, 50.0);
        assert_eq!(d.sample(1.4, 1.0), Some(10.0));
        assert_eq!(d.sample(1.6, 1.0), Some(50.0));
    }

    #[test]
    fn out_of_bounds_and_invalid() {
        let mut d = DepthRaster::filled(3, 3, 5.0);
        assert_eq!(d.sample(-1.0, 0.0), None);
        assert_eq!(d.sample(2.6, 0.0), None);
        assert_eq!(d.sample(2.4, 2.4), Some(5.0));
        d.set(0, 0, 0.0);
        assert_eq!(d.sample(0.0, 0.0), None);
        assert_eq!(d.sample(0.6, 0.0), Some(5.0));
        assert!(DepthRaster::new(2, 2, vec![1.0; 3]).is_none());
    }
}
