//! Trajectory overlays: anti-aliased polylines, a position marker and speed
//! labels, drawn onto a copy of the frame.

use serde::{Deserialize, Serialize};

use crate::frame::Frame;
use crate::geom::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub color: [u8; 3],
    pub comparison_color: [u8; 3],
    pub line_width: f64,
    pub point_radius: f64,
    /// Digit height in pixels.
    pub font_size: usize,
    /// Label every k-th annotated point.
    pub label_every: usize,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            color: [255, 0, 0],
            comparison_color: [0, 255, 0],
            line_width: 3.0,
            point_radius: 5.0,
            font_size: 10,
            label_every: 10,
        }
    }
}

impl OverlayStyle {
    fn sanitized(&self) -> Self {
        Self {
            line_width: self.line_width.max(1.0),
            point_radius: self.point_radius.max(1.0),
            font_size: self.font_size.max(5),
            label_every: self.label_every.max(1),
            ..*self
        }
    }
}

/// Per-pixel coverage accumulated with `max`, so overlapping segments do not
/// darken their joints.
struct Coverage {
    width: usize,
    height: usize,
    alpha: Vec<f32>,
}

impl Coverage {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            alpha: vec![0.0; width * height],
        }
    }

    /// Pixel range covering `[lo, hi]`, clipped; `None` if empty.
    fn span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
        let a = lo.floor().max(0.0);
        let b = hi.ceil().min(n as f64 - 1.0);
        if !(a <= b) {
            return None;
        }
        Some((a as usize, b as usize))
    }

    fn segment(&mut self, a: Point2, b: Point2, width: f64) {
        let reach = width / 2.0 + 0.5;
        let Some((x0, x1)) = Self::span(a.x.min(b.x) - reach, a.x.max(b.x) + reach, self.width) else {
            return;
        };
        let Some((y0, y1)) = Self::span(a.y.min(b.y) - reach, a.y.max(b.y) + reach, self.height) else {
            return;
        };
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64 - a.x, y as f64 - a.y);
                let t = if len2 > 0.0 {
                    ((px * dx + py * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let d = (px - t * dx).hypot(py - t * dy);
                self.cover(x, y, (reach - d).clamp(0.0, 1.0));
            }
        }
    }

    fn disc(&mut self, c: Point2, radius: f64) {
        let reach = radius + 0.5;
        let Some((x0, x1)) = Self::span(c.x - reach, c.x + reach, self.width) else {
            return;
        };
        let Some((y0, y1)) = Self::span(c.y - reach, c.y + reach, self.height) else {
            return;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = (x as f64 - c.x).hypot(y as f64 - c.y);
                self.cover(x, y, (reach - d).clamp(0.0, 1.0));
            }
        }
    }

    fn cover(&mut self, x: usize, y: usize, a: f64) {
        let slot = &mut self.alpha[y * self.width + x];
        *slot = slot.max(a as f32);
    }

    fn blend_into(&self, rgb: &mut [u8], color: [u8; 3]) {
        for (i, &a) in self.alpha.iter().enumerate() {
            if a <= 0.0 {
                continue;
            }
            for k in 0..3 {
                let old = rgb[i * 3 + k] as f32;
                rgb[i * 3 + k] = (old + (color[k] as f32 - old) * a).round() as u8;
            }
        }
    }
}

/// 3×5 digit glyphs, one row per entry, high bit on the left.
const GLYPHS: [[u8; 5]; 11] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
    // decimal point
    [0b000, 0b000, 0b000, 0b000, 0b010],
];

fn draw_label(rgb: &mut [u8], width: usize, height: usize, at: (i64, i64), text: &str, size: usize, color: [u8; 3]) {
    let scale = (size / 5).max(1) as i64;
    let mut cx = at.0;
    for ch in text.chars() {
        let glyph = match ch {
            '0'..='9' => GLYPHS[ch as usize - '0' as usize],
            '.' => GLYPHS[10],
            _ => {
                cx += 4 * scale;
                continue;
            }
        };
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let x = cx + col as i64 * scale + sx;
                        let y = at.1 + row as i64 * scale + sy;
                        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                            let i = (y as usize * width + x as usize) * 3;
                            rgb[i..i + 3].copy_from_slice(&color);
                        }
                    }
                }
            }
        }
        cx += 4 * scale;
    }
}

fn draw_track(rgb: &mut [u8], frame: &Frame, pts: &[Point2], color: [u8; 3], style: &OverlayStyle) {
    if pts.is_empty() {
        return;
    }
    let mut cov = Coverage::new(frame.width(), frame.height());
    for w in pts.windows(2) {
        cov.segment(w[0], w[1], style.line_width);
    }
    cov.disc(pts[pts.len() - 1], style.point_radius);
    cov.blend_into(rgb, color);
}

fn draw_annotations(rgb: &mut [u8], frame: &Frame, annotations: &[(Point2, f64)], style: &OverlayStyle) {
    for (p, speed) in annotations.iter().step_by(style.label_every) {
        if !p.is_finite() {
            continue;
        }
        let at = ((p.x + 6.0).round() as i64, (p.y - style.font_size as f64 - 4.0).round() as i64);
        let text = format!("{speed:.1}");
        draw_label(rgb, frame.width(), frame.height(), at, &text, style.font_size, [255, 255, 255]);
    }
}

/// Draws the (already smoothed) trajectory and optional speed labels onto a
/// copy of `frame`. Points outside the frame are clipped.
pub fn render_overlay(
    frame: &Frame,
    smoothed: &[Point2],
    style: &OverlayStyle,
    annotations: Option<&[(Point2, f64)]>,
) -> Frame {
    let style = style.sanitized();
    let mut rgb = frame.rgb().to_vec();
    draw_track(&mut rgb, frame, smoothed, style.color, &style);
    if let Some(a) = annotations {
        draw_annotations(&mut rgb, frame, a, &style);
    }
    Frame::from_rgb(frame.width(), frame.height(), rgb).expect("same dimensions")
}

/// Reference track in the primary colour, the compared athlete's in the
/// comparison colour.
pub fn render_comparison(
    frame: &Frame,
    reference: &[Point2],
    other: &[Point2],
    style: &OverlayStyle,
    annotations: Option<&[(Point2, f64)]>,
) -> Frame {
    let style = style.sanitized();
    let mut rgb = frame.rgb().to_vec();
    draw_track(&mut rgb, frame, other, style.comparison_color, &style);
    draw_track(&mut rgb, frame, reference, style.color, &style);
    if let Some(a) = annotations {
        draw_annotations(&mut rgb, frame, a, &style);
    }
    Frame::from_rgb(frame.width(), frame.height(), rgb).expect("same dimensions")
}
