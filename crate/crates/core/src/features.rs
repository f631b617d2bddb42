//! Corner keypoints and binary descriptors.
//!
//! Detection scores every pixel with the Shi–Tomasi minimum eigenvalue of the
//! 3×3 Sobel gradient covariance, keeps local maxima above 1% of the frame's
//! peak response, thins them greedily by score under a Chebyshev radius and
//! refines each survivor with a per-axis parabola fit. Descriptors are
//! 256-bit BRIEF-style strings over a box-smoothed 31×31 patch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Frame;
use crate::geom::Point2;

/// Half-width of the descriptor patch (31×31).
pub const PATCH_HALF: usize = 15;

/// Keypoints are only reported at least this far from the border (pixel
/// lattice), leaving room for sub-pixel refinement inside the patch margin.
const DETECT_MARGIN: usize = PATCH_HALF + 1;

/// Responses below this fraction of the strongest one are ignored.
const SCORE_FLOOR_FRACTION: f32 = 0.01;

pub const DEFAULT_MAX_KEYPOINTS: usize = 1024;
pub const DEFAULT_NMS_RADIUS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("keypoint {index} at ({x:.2}, {y:.2}) is closer than {PATCH_HALF} px to the border")]
    BorderViolation { index: usize, x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub pos: Point2,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub max_keypoints: usize,
    pub nms_radius: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            max_keypoints: DEFAULT_MAX_KEYPOINTS,
            nms_radius: DEFAULT_NMS_RADIUS,
        }
    }
}

/// Shi–Tomasi response for every pixel (replicated borders).
pub fn corner_response(frame: &Frame) -> Vec<f32> {
    let (w, h) = (frame.width(), frame.height());
    let g = frame.gray();
    // Luma with a one-pixel replicated border, so the stencil needs no clamps.
    let pw = w + 2;
    let mut pad = vec![0f32; pw * (h + 2)];
    for py in 0..h + 2 {
        let sy = py.saturating_sub(1).min(h - 1);
        let src = &g[sy * w..(sy + 1) * w];
        let row = &mut pad[py * pw..(py + 1) * pw];
        row[0] = src[0] as f32;
        row[pw - 1] = src[w - 1] as f32;
        for (d, &v) in row[1..=w].iter_mut().zip(src) {
            *d = v as f32;
        }
    }

    let mut ixx = vec![0f32; w * h];
    let mut ixy = vec![0f32; w * h];
    let mut iyy = vec![0f32; w * h];
    for y in 0..h {
        let up = &pad[y * pw..(y + 1) * pw];
        let mid = &pad[(y + 1) * pw..(y + 2) * pw];
        let down = &pad[(y + 2) * pw..(y + 3) * pw];
        let out = y * w;
        for x in 0..w {
            let gx = (up[x + 2] + 2.0 * mid[x + 2] + down[x + 2]) - (up[x] + 2.0 * mid[x] + down[x]);
            let gy = (down[x] + 2.0 * down[x + 1] + down[x + 2]) - (up[x] + 2.0 * up[x + 1] + up[x + 2]);
            ixx[out + x] = gx * gx;
            ixy[out + x] = gx * gy;
            iyy[out + x] = gy * gy;
        }
    }

    let sxx = box3(&ixx, w, h);
    let sxy = box3(&ixy, w, h);
    let syy = box3(&iyy, w, h);
    sxx.iter()
        .zip(&sxy)
        .zip(&syy)
        .map(|((&a, &b), &c)| {
            let half_trace = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (half_trace - disc).max(0.0)
        })
        .collect()
}

/// 3×3 box sum with replicated borders.
fn box3(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let l = row[x.saturating_sub(1)];
            let r = row[(x + 1).min(w - 1)];
            tmp[y * w + x] = l + row[x] + r;
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            out[y * w + x] = tmp[up * w + x] + tmp[y * w + x] + tmp[down * w + x];
        }
    }
    out
}

/// Detects up to `max_keypoints` corners, strongest first, with no two
/// closer than `nms_radius` (Chebyshev).
pub fn detect(frame: &Frame, max_keypoints: usize, nms_radius: usize) -> Vec<Keypoint> {
    let (w, h) = (frame.width(), frame.height());
    if max_keypoints == 0 || w <= 2 * DETECT_MARGIN || h <= 2 * DETECT_MARGIN {
        return Vec::new();
    }
    let score = corner_response(frame);
    let peak = score.iter().copied().fold(0f32, f32::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let floor = SCORE_FLOOR_FRACTION * peak;

    let mut candidates: Vec<(f32, usize, usize)> = Vec::new();
    for y in DETECT_MARGIN..h - DETECT_MARGIN {
        for x in DETECT_MARGIN..w - DETECT_MARGIN {
            let s = score[y * w + x];
            if s < floor || s <= 0.0 {
                continue;
            }
            // Strict against earlier neighbours (raster order), non-strict
            // against later ones: plateaus keep exactly one pixel.
            let mut is_max = true;
            'nb: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = score[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if (earlier && n >= s) || (!earlier && n > s) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((s, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let r = nms_radius;
    let mut blocked = vec![false; w * h];
    let mut out = Vec::new();
    for (s, x, y) in candidates {
        if blocked[y * w + x] {
            continue;
        }
        for by in y.saturating_sub(r)..=(y + r).min(h - 1) {
            let row = &mut blocked[by * w..(by + 1) * w];
            for cell in &mut row[x.saturating_sub(r)..=(x + r).min(w - 1)] {
                *cell = true;
            }
        }
        let sx = parabola_offset(score[y * w + x - 1], s, score[y * w + x + 1]);
        let sy = parabola_offset(score[(y - 1) * w + x], s, score[(y + 1) * w + x]);
        out.push(Keypoint {
            pos: Point2::new(x as f64 + sx, y as f64 + sy),
            score: s as f64,
        });
        if out.len() == max_keypoints {
            break;
        }
    }
    out
}

/// Vertex of the parabola through (−1, l), (0, c), (1, r), clamped to ±0.5.
fn parabola_offset(l: f32, c: f32, r: f32) -> f64 {
    let (l, c, r) = (l as f64, c as f64, r as f64);
    let denom = l - 2.0 * c + r;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
}

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor {
    words: [u64; 4],
}

impl Descriptor {
    pub const BITS: usize = 256;

    pub const fn from_words(words: [u64; 4]) -> Self {
        Self { words }
    }

    pub fn words(&self) -> [u64; 4] {
        self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn complement(&self) -> Self {
        Self {
            words: self.words.map(|w| !w),
        }
    }
}

#[inline]
pub fn hamming(a: &Descriptor, b: &Descriptor) -> u32 {
    a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum()
}

/// Intensity-comparison offsets `(x1, y1, x2, y2)` inside the patch. Each
/// coordinate is a sum of three uniform draws from [−5, 5] (splitmix64,
/// fixed seed), so the layout is roughly Gaussian and identical everywhere.
pub const SAMPLE_PAIRS: [[i8; 4]; Descriptor::BITS] = build_sample_pairs();

const fn build_sample_pairs() -> [[i8; 4]; Descriptor::BITS] {
    let mut state: u64 = 0x7069_7374_6562_7269;
    let mut out = [[0i8; 4]; Descriptor::BITS];
    let mut i = 0;
    while i < Descriptor::BITS {
        let mut pair = [0i8; 4];
        let mut k = 0;
        while k < 4 {
            let mut acc: i32 = 0;
            let mut j = 0;
            while j < 3 {
                state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
                z ^= z >> 31;
                acc += (z % 11) as i32 - 5;
                j += 1;
            }
            pair[k] = acc as i8;
            k += 1;
        }
        if pair[0] != pair[2] || pair[1] != pair[3] {
            out[i] = pair;
            i += 1;
        }
    }
    out
}

/// 5×5 box sums of the luma plane (replicated borders).
fn box5_sums(frame: &Frame) -> Vec<u16> {
    let (w, h) = (frame.width(), frame.height());
    let g = frame.gray();
    let clamp_x = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let mut tmp = vec![0u16; w * h];
    for y in 0..h {
        let row = &g[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        let mut s: u16 = (-2isize..=2).map(|dx| row[clamp_x(dx)] as u16).sum();
        dst[0] = s;
        for x in 1..w {
            s = s + row[clamp_x(x as isize + 2)] as u16 - row[clamp_x(x as isize - 3)] as u16;
            dst[x] = s;
        }
    }
    let clamp_y = |y: isize| y.clamp(0, h as isize - 1) as usize;
    let mut out = vec![0u16; w * h];
    for dy in -2isize..=2 {
        let src = clamp_y(dy);
        for x in 0..w {
            out[x] += tmp[src * w + x];
        }
    }
    for y in 1..h {
        let add = clamp_y(y as isize + 2) * w;
        let sub = clamp_y(y as isize - 3) * w;
        let (done, rest) = out.split_at_mut(y * w);
        let prev = &done[(y - 1) * w..];
        for x in 0..w {
            rest[x] = prev[x] + tmp[add + x] - tmp[sub + x];
        }
    }
    out
}

/// One descriptor per keypoint, in order. Patch centres are the rounded
/// keypoint positions.
pub fn describe(frame: &Frame, kps: &[Keypoint]) -> Result<Vec<Descriptor>, FeatureError> {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let half = PATCH_HALF as i64;
    let mut centres = Vec::with_capacity(kps.len());
    for (index, kp) in kps.iter().enumerate() {
        let cx = kp.pos.x.round();
        let cy = kp.pos.y.round();
        let inside = cx.is_finite()
            && cy.is_finite()
            && cx as i64 - half >= 0
            && cy as i64 - half >= 0
            && cx as i64 + half < w
            && cy as i64 + half < h;
        if !inside {
            return Err(FeatureError::BorderViolation {
                index,
                x: kp.pos.x,
                y: kp.pos.y,
            });
        }
        centres.push((cx as i64, cy as i64));
    }
    if kps.is_empty() {
        return Ok(Vec::new());
    }
    let smooth = box5_sums(frame);
    let w = w as usize;
    Ok(centres
        .into_iter()
        .map(|(cx, cy)| {
            let mut words = [0u64; 4];
            for (i, p) in SAMPLE_PAIRS.iter().enumerate() {
                let a = smooth[(cy + p[1] as i64) as usize * w + (cx + p[0] as i64) as usize];
                let b = smooth[(cy + p[3] as i64) as usize * w + (cx + p[2] as i64) as usize];
                if a < b {
                    words[i / 64] |= 1 << (i % 64);
                }
            }
            Descriptor { words }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_box_sums_match_direct_sums() {
        let f = Frame::from_fn(37, 23, |x, y| {
            let v = ((x * 7919 + y * 104729) % 251) as u8;
            [v, v.wrapping_mul(3), 255 - v]
        })
        .unwrap();
        let sums = box5_sums(&f);
        let (w, h) = (37isize, 23isize);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0u16;
                for dy in -2..=2 {
                    for dx in -2..=2 {
                        let (xc, yc) = ((x + dx).clamp(0, w - 1), (y + dy).clamp(0, h - 1));
                        s += f.gray_at(xc as usize, yc as usize) as u16;
                    }
                }
                assert_eq!(sums[(y * w + x) as usize], s, "at {x},{y}");
            }
        }
    }

    fn gray_frame(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Frame {
        Frame::from_fn(w, h, |x, y| {
            let v = f(x, y);
            [v, v, v]
        })
        .unwrap()
    }

    fn chebyshev(a: &Point2, b: &Point2) -> f64 {
        (a.x - b.x).abs().max((a.y - b.y).abs())
    }

    #[test]
    fn sample_pairs_stay_in_patch() {
        for p in SAMPLE_PAIRS.iter() {
            assert!(p.iter().all(|&v| (v as i32).abs() <= PATCH_HALF as i32));
            assert!(p[0] != p[2] || p[1] != p[3]);
        }
    }

    #[test]
    fn constant_frame_has_no_keypoints() {
        let f = gray_frame(64, 64, |_, _| 128);
        assert!(detect(&f, 100, 8).is_empty());
    }

    #[test]
    fn white_square_gives_four_corners() {
        // Square occupies pixels [40, 103]; its geometric corners sit on
        // pixel boundaries at 39.5 and 103.5.
        let f = gray_frame(144, 144, |x, y| {
            if (40..104).contains(&x) && (40..104).contains(&y) {
                255
            } else {
                0
            }
        });
        let kps = detect(&f, 100, 8);
        assert_eq!(kps.len(), 4, "{kps:?}");
        for corner in [(39.5, 39.5), (103.5, 39.5), (39.5, 103.5), (103.5, 103.5)] {
            let c = Point2::new(corner.0, corner.1);
            assert!(
                kps.iter().any(|k| k.pos.distance(&c) <= 1.0),
                "no keypoint near {c:?}: {kps:?}"
            );
        }
    }

    #[test]
    fn checkerboard_interior_corners() {
        let f = gray_frame(256, 256, |x, y| if (x / 32 + y / 32) % 2 == 0 { 230 } else { 20 });
        let kps = detect(&f, 1024, 8);
        assert_eq!(kps.len(), 49);
        for i in 1..8 {
            for j in 1..8 {
                let c = Point2::new(32.0 * i as f64 - 0.5, 32.0 * j as f64 - 0.5);
                assert!(kps.iter().any(|k| k.pos.distance(&c) <= 1.0), "missing {c:?}");
            }
        }
    }

    fn pattern(x: i64, y: i64) -> u8 {
        // Blocky deterministic texture.
        let h = ((x / 7) * 73856093) ^ ((y / 5) * 19349663);
        (h.rem_euclid(251)) as u8
    }

    #[test]
    fn nms_radius_and_ordering_hold() {
        let f = gray_frame(200, 160, |x, y| pattern(x as i64, y as i64));
        let kps = detect(&f, 300, 6);
        assert!(!kps.is_empty() && kps.len() <= 300);
        for w in kps.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
        for (i, a) in kps.iter().enumerate() {
            for b in &kps[i + 1..] {
                assert!(chebyshev(&a.pos, &b.pos) >= 6.0);
            }
        }
    }

    #[test]
    fn detection_is_translation_covariant() {
        let base = |x: i64, y: i64| {
            if (60..120).contains(&x) && (50..90).contains(&y) {
                pattern(x, y)
            } else {
                40
            }
        };
        let a = gray_frame(220, 180, |x, y| base(x as i64, y as i64));
        let b = gray_frame(220, 180, |x, y| base(x as i64 - 9, y as i64 - 4));
        let ka = detect(&a, 500, 4);
        let kb = detect(&b, 500, 4);
        assert_eq!(ka.len(), kb.len());
        for (p, q) in ka.iter().zip(&kb) {
            assert!((q.pos.x - p.pos.x - 9.0).abs() <= 0.5);
            assert!((q.pos.y - p.pos.y - 4.0).abs() <= 0.5);
        }
    }

    #[test]
    fn hamming_examples() {
        let a = Descriptor::from_words([0xdead_beef, 7, 0, u64::MAX]);
        assert_eq!(hamming(&a, &a), 0);
        assert_eq!(hamming(&a, &a.complement()), 256);
        let x = Descriptor::from_words([0b0011, 0, 0, 0]);
        let y = Descriptor::from_words([0b0101, 0, 0, 0]);
        assert_eq!(hamming(&x, &y), 2);
        assert_eq!(hamming(&x, &y), hamming(&y, &x));
    }

    #[test]
    fn describe_is_deterministic_and_patch_copies_match() {
        let f = gray_frame(200, 100, |x, y| {
            // The same patch appears at x offsets 0 and 100.
            pattern((x % 100) as i64, y as i64)
        });
        let kps = [
            Keypoint { pos: Point2::new(40.2, 50.0), score: 1.0 },
            Keypoint { pos: Point2::new(140.2, 50.0), score: 1.0 },
        ];
        let d1 = describe(&f, &kps).unwrap();
        let d2 = describe(&f, &kps).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(hamming(&d1[0], &d1[1]), 0);
    }

    #[test]
    fn describe_rejects_border_keypoints() {
        let f = gray_frame(64, 64, |x, y| pattern(x as i64, y as i64));
        let kps = [Keypoint { pos: Point2::new(10.0, 30.0), score: 1.0 }];
        assert!(matches!(
            describe(&f, &kps),
            Err(FeatureError::BorderViolation { index: 0, .. })
        ));
    }
}
