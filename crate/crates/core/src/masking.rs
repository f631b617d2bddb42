//! Keypoint filters for non-static or uninformative image content.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Keypoint;
use crate::frame::Frame;
use crate::tracking::BBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("mask is {mask_w}x{mask_h} but frame is {frame_w}x{frame_h}")]
    DimensionMismatch {
        mask_w: usize,
        mask_h: usize,
        frame_w: usize,
        frame_h: usize,
    },
}

/// Per-pixel exclusion bitmap (`true` = excluded), e.g. broadcast overlays.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl StaticMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask bitmap size");
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Marks the integer pixel rectangle `[x0, x1) × [y0, y1)` (clipped).
    pub fn fill_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize) {
        for y in y0.min(self.height)..y1.min(self.height) {
            for x in x0.min(self.width)..x1.min(self.width) {
                self.bits[y * self.width + x] = true;
            }
        }
    }

    pub fn check_dims(&self, width: usize, height: usize) -> Result<(), MaskError> {
        if self.width != width || self.height != height {
            return Err(MaskError::DimensionMismatch {
                mask_w: self.width,
                mask_h: self.height,
                frame_w: width,
                frame_h: height,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnowFilterConfig {
    pub min_channel: u8,
    pub max_spread: u8,
    pub enabled: bool,
}

impl Default for SnowFilterConfig {
    fn default() -> Self {
        Self {
            min_channel: 200,
            max_spread: 30,
            enabled: false,
        }
    }
}

impl SnowFilterConfig {
    pub fn enabled() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    pub fn is_whitish(&self, [r, g, b]: [u8; 3]) -> bool {
        let lo = r.min(g).min(b);
        let hi = r.max(g).max(b);
        lo >= self.min_channel && hi - lo <= self.max_spread
    }
}

/// Keeps keypoints strictly outside `bbox` grown by `margin` on every side.
pub fn filter_bbox(kps: &[Keypoint], bbox: &BBox, margin: f64) -> Vec<Keypoint> {
    let b = bbox.inflate(margin.max(0.0));
    kps.iter()
        .filter(|k| {
            let (x, y) = (k.pos.x, k.pos.y);
            x < b.x || x > b.right() || y < b.y || y > b.bottom()
        })
        .copied()
        .collect()
}

/// Drops keypoints whose rounded pixel is set in `mask`. Keypoints off the
/// mask raster are kept.
pub fn filter_static_mask(kps: &[Keypoint], mask: &StaticMask) -> Vec<Keypoint> {
    kps.iter()
        .filter(|k| {
            let x = k.pos.x.round();
            let y = k.pos.y.round();
            if x < 0.0 || y < 0.0 || x >= mask.width as f64 || y >= mask.height as f64 {
                return true;
            }
            !mask.get(x as usize, y as usize)
        })
        .copied()
        .collect()
}

/// [`filter_static_mask`] after checking the mask against the frame size.
pub fn filter_static_mask_checked(
    kps: &[Keypoint],
    mask: &StaticMask,
    frame: &Frame,
) -> Result<Vec<Keypoint>, MaskError> {
    mask.check_dims(frame.width(), frame.height())?;
    Ok(filter_static_mask(kps, mask))
}

/// Drops keypoints sitting on whitish texture: at least 5 of the 9 pixels
/// around the rounded position must be bright and unsaturated.
pub fn filter_snow(kps: &[Keypoint], frame: &Frame, cfg: &SnowFilterConfig) -> Vec<Keypoint> {
    if !cfg.enabled {
        return kps.to_vec();
    }
    kps.iter()
        .filter(|k| {
            let cx = k.pos.x.round() as i64;
            let cy = k.pos.y.round() as i64;
            let mut whitish = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (x, y) = (cx + dx, cy + dy);
                    if frame.contains(x, y) && cfg.is_whitish(frame.pixel(x as usize, y as usize)) {
                        whitish += 1;
                    }
                }
            }
            whitish < 5
        })
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point2;

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint {
            pos: Point2::new(x, y),
            score: 1.0,
        }
    }

    #[test]
    fn bbox_examples() {
        let b = BBox::new(40.0, 40.0, 20.0, 20.0);
        assert!(filter_bbox(&[kp(50.0, 50.0)], &b, 0.0).is_empty());
        assert_eq!(filter_bbox(&[kp(10.0, 10.0)], &b, 0.0).len(), 1);
        assert!(filter_bbox(&[kp(38.0, 50.0)], &b, 5.0).is_empty());
        // Exactly on the inflated edge is excluded.
        assert!(filter_bbox(&[kp(35.0, 50.0)], &b, 5.0).is_empty());
        assert_eq!(filter_bbox(&[kp(34.999, 50.0)], &b, 5.0).len(), 1);
    }

    #[test]
    fn static_mask_examples() {
        let kps = vec![kp(100.4, 20.6), kp(10.0, 10.0)];
        let mask = StaticMask::empty(200, 100);
        assert_eq!(filter_static_mask(&kps, &mask), kps);
        let full = StaticMask::from_bits(200, 100, vec![true; 200 * 100]);
        assert!(filter_static_mask(&kps, &full).is_empty());
        let mut one = StaticMask::empty(200, 100);
        one.set(100, 21, true);
        assert_eq!(filter_static_mask(&kps, &one), vec![kp(10.0, 10.0)]);
    }

    #[test]
    fn static_mask_dimension_check() {
        let f = Frame::from_rgb(32, 32, vec![0; 32 * 32 * 3]).unwrap();
        let mask = StaticMask::empty(16, 32);
        assert!(matches!(
            filter_static_mask_checked(&[], &mask, &f),
            Err(MaskError::DimensionMismatch { .. })
        ));
    }

    fn uniform(rgb: [u8; 3]) -> Frame {
        Frame::from_fn(32, 32, |_, _| rgb).unwrap()
    }

    #[test]
    fn snow_examples() {
        let cfg = SnowFilterConfig::enabled();
        let k = [kp(16.0, 16.0)];
        assert!(filter_snow(&k, &uniform([250, 250, 250]), &cfg).is_empty());
        assert_eq!(filter_snow(&k, &uniform([30, 80, 40]), &cfg).len(), 1);
        assert_eq!(filter_snow(&k, &uniform([210, 190, 205]), &cfg).len(), 1);
        let off = SnowFilterConfig::default();
        assert_eq!(filter_snow(&k, &uniform([250, 250, 250]), &off).len(), 1);
    }

    #[test]
    fn snow_needs_a_majority() {
        // Left 4 columns dark, rest white: a keypoint at x=4 sees 6 whitish pixels,
        // at x=3 only 3.
        let f = Frame::from_fn(32, 32, |x, _| if x < 4 { [20, 20, 20] } else { [240, 240, 240] })
            .unwrap();
        let cfg = SnowFilterConfig::enabled();
        assert!(filter_snow(&[kp(4.0, 10.0)], &f, &cfg).is_empty());
        assert_eq!(filter_snow(&[kp(3.0, 10.0)], &f, &cfg).len(), 1);
    }

    #[test]
    fn filters_are_idempotent_and_commute() {
        let f = Frame::from_fn(64, 64, |x, y| {
            if (x / 8 + y / 8) % 2 == 0 {
                [245, 245, 245]
            } else {
                [40, 60, 50]
            }
        })
        .unwrap();
        let kps: Vec<_> = (0..200)
            .map(|i| kp((i * 7 % 60) as f64 + 0.3, (i * 13 % 60) as f64 + 0.6))
            .collect();
        let b = BBox::new(20.0, 20.0, 10.0, 14.0);
        let mut mask = StaticMask::empty(64, 64);
        mask.fill_rect(40, 0, 64, 10);
        let cfg = SnowFilterConfig::enabled();

        let a = filter_bbox(&kps, &b, 2.0);
        assert_eq!(filter_bbox(&a, &b, 2.0), a);
        let s = filter_snow(&kps, &f, &cfg);
        assert_eq!(filter_snow(&s, &f, &cfg), s);
        let m = filter_static_mask(&kps, &mask);
        assert_eq!(filter_static_mask(&m, &mask), m);

        let one = filter_snow(&filter_static_mask(&filter_bbox(&kps, &b, 2.0), &mask), &f, &cfg);
        let two = filter_bbox(&filter_snow(&filter_static_mask(&kps, &mask), &f, &cfg), &b, 2.0);
        assert_eq!(one, two);
        // Order-preserving subsequence.
        let mut it = kps.iter();
        assert!(one.iter().all(|k| it.any(|q| q == k)));
    }
}
