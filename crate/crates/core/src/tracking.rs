//! Athlete boxes: a ZNCC template tracker, externally supplied track files,
//! and the footpoint reduction.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvio::{self, CsvError};
use crate::frame::Frame;
use crate::geom::Point2;

pub const DEFAULT_TEMPLATE_ALPHA: f32 = 0.1;
pub const DEFAULT_SEARCH_SCALE: f64 = 2.5;
pub const DEFAULT_LOST_THRESHOLD: f64 = 0.2;
const MIN_TEMPLATE_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("invalid box ({x}, {y}, {w}, {h}): {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },
    #[error("target lost (best ZNCC {score:.3})")]
    LostTarget { score: f64 },
    #[error("frame is {got_w}x{got_h}, tracker was initialised on {want_w}x{want_h}")]
    FrameSize {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("track file frames not strictly increasing at line {line}: {frame} after {previous}")]
    NonMonotonicFrames {
        line: u64,
        frame: usize,
        previous: usize,
    },
}

/// Axis-aligned box: top-left corner plus size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    fn invalid(&self, reason: &'static str) -> TrackingError {
        TrackingError::InvalidBox {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
            reason,
        }
    }

    pub fn validate(&self) -> Result<(), TrackingError> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(self.invalid("non-finite coordinate"));
        }
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(self.invalid("width and height must be positive"));
        }
        Ok(())
    }

    /// Valid and overlapping the `width × height` frame rectangle.
    pub fn validate_in(&self, width: usize, height: usize) -> Result<(), TrackingError> {
        self.validate()?;
        if self.x >= width as f64
            || self.y >= height as f64
            || self.x + self.w <= 0.0
            || self.y + self.h <= 0.0
        {
            return Err(self.invalid("box does not intersect the frame"));
        }
        Ok(())
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn inflate(&self, margin: f64) -> BBox {
        BBox::new(
            self.x - margin,
            self.y - margin,
            self.w + 2.0 * margin,
            self.h + 2.0 * margin,
        )
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let iy = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        let inter = ix * iy;
        let union = self.w * self.h + other.w * other.h - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Bottom-centre of the box: the athlete's contact point with the ground.
pub fn footpoint(b: &BBox) -> Point2 {
    Point2::new(b.x + b.w / 2.0, b.y + b.h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Template blend weight of the newest crop.
    pub alpha: f32,
    /// Search window size relative to the box, per axis.
    pub search_scale: f64,
    /// Peak ZNCC below which the target counts as lost.
    pub lost_threshold: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_TEMPLATE_ALPHA,
            search_scale: DEFAULT_SEARCH_SCALE,
            lost_threshold: DEFAULT_LOST_THRESHOLD,
        }
    }
}

/// Fixed-size ZNCC template tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    cfg: TrackerConfig,
    template: Vec<f32>,
    tw: usize,
    th: usize,
    bbox: BBox,
    frame_w: usize,
    frame_h: usize,
}

impl TrackerState {
    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn template_size(&self) -> (usize, usize) {
        (self.tw, self.th)
    }

    pub fn template(&self) -> &[f32] {
        &self.template
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }
}

pub fn init_tracker(frame0: &Frame, b0: BBox) -> Result<TrackerState, TrackingError> {
    init_tracker_with(frame0, b0, TrackerConfig::default())
}

pub fn init_tracker_with(
    frame0: &Frame,
    b0: BBox,
    cfg: TrackerConfig,
) -> Result<TrackerState, TrackingError> {
    b0.validate()?;
    let (fw, fh) = (frame0.width() as f64, frame0.height() as f64);
    if b0.x < 0.0 || b0.y < 0.0 || b0.right() > fw || b0.bottom() > fh {
        return Err(b0.invalid("box must lie fully inside the first frame"));
    }
    let tw = b0.w.round() as usize;
    let th = b0.h.round() as usize;
    if tw < MIN_TEMPLATE_SIDE || th < MIN_TEMPLATE_SIDE {
        return Err(b0.invalid("box must be at least 8x8 pixels"));
    }
    let ox = (b0.x.round() as usize).min(frame0.width() - tw);
    let oy = (b0.y.round() as usize).min(frame0.height() - th);
    Ok(TrackerState {
        cfg,
        template: crop(frame0, ox, oy, tw, th),
        tw,
        th,
        bbox: b0,
        frame_w: frame0.width(),
        frame_h: frame0.height(),
    })
}

fn crop(frame: &Frame, ox: usize, oy: usize, w: usize, h: usize) -> Vec<f32> {
    let g = frame.gray();
    let fw = frame.width();
    let mut out = Vec::with_capacity(w * h);
    for y in oy..oy + h {
        out.extend(g[y * fw + ox..y * fw + ox + w].iter().map(|&v| v as f32));
    }
    out
}

/// Summed-area tables of intensity and squared intensity.
struct Integral {
    w: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(frame: &Frame) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let g = frame.gray();
        let stride = w + 1;
        let mut sum = vec![0.0; stride * (h + 1)];
        let mut sq = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..w {
                let v = g[y * w + x] as f64;
                rs += v;
                rq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
            }
        }
        Self { w, sum, sq }
    }

    fn window(&self, x: usize, y: usize, w: usize, h: usize) -> (f64, f64) {
        let s = self.w + 1;
        let at = |t: &[f64], xx: usize, yy: usize| t[yy * s + xx];
        let rect = |t: &[f64]| at(t, x + w, y + h) - at(t, x, y + h) - at(t, x + w, y) + at(t, x, y);
        (rect(&self.sum), rect(&self.sq))
    }
}

/// Advances the tracker by one frame.
///
/// The new box keeps its size and moves by the integer offset of the best
/// ZNCC peak inside a window `search_scale` times the box size. On
/// `LostTarget` the state is left untouched.
pub fn track_step(state: &mut TrackerState, frame: &Frame) -> Result<BBox, TrackingError> {
    if frame.width() != state.frame_w || frame.height() != state.frame_h {
        return Err(TrackingError::FrameSize {
            want_w: state.frame_w,
            want_h: state.frame_h,
            got_w: frame.width(),
            got_h: frame.height(),
        });
    }
    let (tw, th) = (state.tw, state.th);
    let n = (tw * th) as f64;
    let t_mean = state.template.iter().map(|&v| v as f64).sum::<f64>() / n;
    let t_zero: Vec<f32> = state
        .template
        .iter()
        .map(|&v| (v as f64 - t_mean) as f32)
        .collect();
    let t_norm = t_zero.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();

    let max_x = (frame.width() - tw) as i64;
    let max_y = (frame.height() - th) as i64;
    let ox = (state.bbox.x.round() as i64).clamp(0, max_x);
    let oy = (state.bbox.y.round() as i64).clamp(0, max_y);
    let half_extra = (state.cfg.search_scale - 1.0).max(0.0) / 2.0;
    let rx = (half_extra * tw as f64).ceil() as i64;
    let ry = (half_extra * th as f64).ceil() as i64;

    let integral = Integral::new(frame);
    let g = frame.gray();
    let fw = frame.width();

    let mut best = (f64::NEG_INFINITY, 0i64, 0i64);
    for dy in -ry..=ry {
        let y = oy + dy;
        if y < 0 || y > max_y {
            continue;
        }
        for dx in -rx..=rx {
            let x = ox + dx;
            if x < 0 || x > max_x {
                continue;
            }
            let score = if t_norm <= 0.0 {
                0.0
            } else {
                let (s, sq) = integral.window(x as usize, y as usize, tw, th);
                let var = sq - s * s / n;
                if var <= 1e-9 {
                    0.0
                } else {
                    let mut cross = 0f64;
                    for ty in 0..th {
                        let row = &g[(y as usize + ty) * fw + x as usize..][..tw];
                        let trow = &t_zero[ty * tw..(ty + 1) * tw];
                        let mut acc = 0f32;
                        for (a, b) in row.iter().zip(trow) {
                            acc += *a as f32 * b;
                        }
                        cross += acc as f64;
                    }
                    cross / (t_norm * var.sqrt())
                }
            };
            let better = score > best.0
                || (score == best.0 && dx * dx + dy * dy < best.1 * best.1 + best.2 * best.2);
            if better {
                best = (score, dx, dy);
            }
        }
    }

    let (score, dx, dy) = best;
    if !(score >= state.cfg.lost_threshold) {
        return Err(TrackingError::LostTarget {
            score: if score.is_finite() { score } else { 0.0 },
        });
    }

    let b = state.bbox;
    let nx = (b.x + dx as f64).clamp(0.0, (frame.width() as f64 - b.w).max(0.0));
    let ny = (b.y + dy as f64).clamp(0.0, (frame.height() as f64 - b.h).max(0.0));
    state.bbox = BBox::new(nx, ny, b.w, b.h);

    let fresh = crop(frame, (ox + dx) as usize, (oy + dy) as usize, tw, th);
    let a = state.cfg.alpha;
    for (t, f) in state.template.iter_mut().zip(fresh) {
        *t = (1.0 - a) * *t + a * f;
    }
    Ok(state.bbox)
}

/// Per-frame boxes from an external tracker, frame indices strictly
/// increasing. Frames without a row are gaps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackTable {
    entries: Vec<(usize, BBox)>,
}

impl TrackTable {
    pub fn new(entries: Vec<(usize, BBox)>) -> Result<Self, TrackingError> {
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(TrackingError::NonMonotonicFrames {
                    line: 0,
                    frame: w[1].0,
                    previous: w[0].0,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, BBox)] {
        &self.entries
    }

    pub fn get(&self, frame: usize) -> Option<BBox> {
        self.entries
            .binary_search_by_key(&frame, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }
}

/// Where per-frame boxes come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TrackSource {
    BuiltinNcc(TrackerState),
    ExternalFile(TrackTable),
}

pub const TRACK_HEADER: [&str; 5] = ["frame", "x", "y", "w", "h"];

pub fn parse_track_csv(text: &str) -> Result<TrackTable, TrackingError> {
    let rows = csvio::parse_rows(text, &TRACK_HEADER)?;
    let mut entries: Vec<(usize, BBox)> = Vec::with_capacity(rows.len());
    for row in &rows {
        let frame = row.usize(0)?;
        let b = BBox::new(row.f64(1)?, row.f64(2)?, row.f64(3)?, row.f64(4)?);
        b.validate()?;
        if let Some(&(previous, _)) = entries.last() {
            if frame <= previous {
                return Err(TrackingError::NonMonotonicFrames {
                    line: row.line,
                    frame,
                    previous,
                });
            }
        }
        entries.push((frame, b));
    }
    Ok(TrackTable { entries })
}

pub fn load_track_file(path: impl AsRef<Path>) -> Result<TrackTable, TrackingError> {
    let text = csvio::read_text(path.as_ref())?;
    parse_track_csv(&text)
}

pub fn track_csv(table: &TrackTable) -> String {
    let mut out = format!("{}\n", TRACK_HEADER.join(","));
    for (f, b) in &table.entries {
        out.push_str(&format!("{f},{},{},{},{}\n", b.x, b.y, b.w, b.h));
    }
    out
}
