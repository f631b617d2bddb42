//! Planar synthetic scenes with exact ground truth.
//!
//! The world is a textured plane. World coordinates coincide with the pixel
//! coordinates of frame 0 before the optional `view` transform, so a world
//! point `w` appears at `C_t · w` in frame `t`, where `C_t` accumulates the
//! per-frame camera steps. Camera steps describe camera motion: panning the
//! camera right by `dx` moves the picture left, and a `zoom` factor above 1
//! widens the field of view so content shrinks by its inverse.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geom::{Homography, Point2};
use crate::reconstruction::{FrameProvider, Trajectory};
use crate::tracking::{footpoint, BBox};

pub const TRUTH_SCHEMA: &str = "piste-truth/1";

/// Canvases larger than this on either side are refused.
const MAX_CANVAS_SIDE: usize = 8192;
/// Athlete boxes must keep this far from the frame border.
const ATHLETE_BORDER: f64 = 2.0;
const SNOW_BASE: f64 = 232.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub canvas: CanvasConfig,
    /// Applied every frame, in order.
    #[serde(default)]
    pub camera: Vec<CameraStep>,
    /// Extra fixed transform in front of the camera (row-major), e.g. a
    /// second viewpoint of the same scene.
    #[serde(default)]
    pub view: Option<[f64; 9]>,
    pub athlete: AthleteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanvasConfig {
    /// World border added around everything the camera sees.
    pub margin: f64,
    /// High-contrast markers (rectangles, crosses, poles) over the canvas.
    pub markers: usize,
    pub noise_amplitude: f64,
    /// Fraction of the canvas covered by flat whitish cells, 0..=0.9.
    pub snow_fraction: f64,
    pub snow_cell: usize,
    /// Amplitude of the faint sensor speckle on whitish areas. The speckle is
    /// fixed to the screen, not the world.
    pub snow_speckle: f64,
    pub speckle_cell: usize,
}

impl Default for CanvasConfig {
    fn default() -> Self {
        Self {
            margin: 160.0,
            markers: 150,
            noise_amplitude: 40.0,
            snow_fraction: 0.0,
            snow_cell: 64,
            snow_speckle: 18.0,
            speckle_cell: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraStep {
    Translate {
        dx: f64,
        dy: f64,
    },
    Rotate {
        degrees: f64,
        #[serde(default)]
        center: Option<[f64; 2]>,
    },
    Zoom {
        factor: f64,
        #[serde(default)]
        center: Option<[f64; 2]>,
    },
    Tilt {
        px: f64,
        py: f64,
        #[serde(default)]
        center: Option<[f64; 2]>,
    },
}

impl CameraStep {
    /// Image-space map from the previous frame to the next one.
    pub fn image_map(&self, width: usize, height: usize) -> Result<Homography> {
        let mid = [width as f64 / 2.0, height as f64 / 2.0];
        let h = match *self {
            CameraStep::Translate { dx, dy } => Homography::translation(-dx, -dy),
            CameraStep::Rotate { degrees, center } => {
                let [cx, cy] = center.unwrap_or(mid);
                Homography::rotation_about(-degrees.to_radians(), cx, cy)
            }
            CameraStep::Zoom { factor, center } => {
                if !(factor.is_finite() && factor > 0.0) {
                    return Err(Error::Config(format!("zoom factor {factor} must be positive")));
                }
                let [cx, cy] = center.unwrap_or(mid);
                Homography::scaling_about(1.0 / factor, cx, cy)?
            }
            CameraStep::Tilt { px, py, center } => {
                let [cx, cy] = center.unwrap_or(mid);
                let tilt = Homography::from_row_major([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, px, py, 1.0])?;
                Homography::translation(cx, cy)
                    .after(&tilt)
                    .after(&Homography::translation(-cx, -cy))
            }
        };
        if !h.to_row_major().iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("camera step {self:?} is not finite")));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AthleteConfig {
    /// World footpoint at frame 0.
    pub start: [f64; 2],
    /// World displacement per frame.
    pub velocity: [f64; 2],
    /// Box size in frame pixels.
    #[serde(default = "default_box_size")]
    pub box_size: [f64; 2],
}

fn default_box_size() -> [f64; 2] {
    [40.0, 90.0]
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            context: "scene config".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                context: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::Config(format!(
                "frame size {}x{} is below 32x32",
                self.width, self.height
            )));
        }
        if self.frames < 2 {
            return Err(Error::Config("a scene needs at least 2 frames".into()));
        }
        let c = &self.canvas;
        if !(0.0..=0.9).contains(&c.snow_fraction) {
            return Err(Error::Config("snow_fraction must lie in [0, 0.9]".into()));
        }
        if c.snow_cell == 0 || c.speckle_cell == 0 {
            return Err(Error::Config("cell sizes must be positive".into()));
        }
        if !(c.margin >= 0.0 && c.noise_amplitude >= 0.0 && c.snow_speckle >= 0.0) {
            return Err(Error::Config("canvas amplitudes and margin must be non-negative".into()));
        }
        let [bw, bh] = self.athlete.box_size;
        if !(bw >= 8.0 && bh >= 8.0) {
            return Err(Error::Config("athlete box must be at least 8x8".into()));
        }
        Ok(())
    }
}

/// Exact per-frame ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema: String,
    pub width: usize,
    pub height: usize,
    /// `homographies[t − 1]` maps frame `t − 1` into frame `t`.
    pub homographies: Vec<Homography>,
    pub boxes: Vec<BBox>,
    pub footpoints: Vec<Point2>,
}

impl GroundTruth {
    pub fn frames(&self) -> usize {
        self.boxes.len()
    }

    /// Map from frame `from` into frame `to` (`from ≤ to`).
    pub fn chain(&self, from: usize, to: usize) -> Homography {
        self.homographies[from..to]
            .iter()
            .fold(Homography::identity(), |acc, h| h.after(&acc))
    }

    /// Footpoints of frames `0..=t` expressed in frame `t`.
    pub fn trajectory_at(&self, t: usize) -> Vec<Point2> {
        let mut out = Vec::with_capacity(t + 1);
        let mut h = Homography::identity();
        // Walk backwards so each step composes one more map.
        for i in (0..=t).rev() {
            out.push(h.apply(self.footpoints[i]).unwrap_or(Point2::new(f64::NAN, f64::NAN)));
            if i > 0 {
                h = h.after(&self.homographies[i - 1]);
            }
        }
        out.reverse();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let gt: GroundTruth = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: "ground truth".into(),
            message: e.to_string(),
        })?;
        if gt.schema != TRUTH_SCHEMA {
            return Err(Error::Parse {
                context: "ground truth".into(),
                message: format!("unsupported schema `{}`", gt.schema),
            });
        }
        let n = gt.boxes.len();
        if n == 0 || gt.footpoints.len() != n || gt.homographies.len() + 1 != n {
            return Err(Error::Parse {
                context: "ground truth".into(),
                message: "boxes, footpoints and homographies disagree on the frame count".into(),
            });
        }
        Ok(gt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display(), e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mean: f64,
    pub max: f64,
    /// Displacement of each trajectory point, in frame order.
    pub per_point: Vec<f64>,
}

/// Displacement between a reconstructed trajectory (in frame `T`) and the
/// true footpoints chained into frame `T`.
pub fn measure_error(reconstructed: &Trajectory, truth: &GroundTruth) -> Result<ErrorReport> {
    if reconstructed.len() != truth.frames() {
        return Err(Error::LengthMismatch(format!(
            "trajectory has {} points, ground truth {} frames",
            reconstructed.len(),
            truth.frames()
        )));
    }
    let expected = truth.trajectory_at(truth.frames() - 1);
    Ok(error_between(&reconstructed.points, &expected))
}

/// Point-by-point displacement of two equally long lists.
pub fn error_between(points: &[Point2], expected: &[Point2]) -> ErrorReport {
    assert_eq!(points.len(), expected.len());
    let per_point: Vec<f64> = points.iter().zip(expected).map(|(p, q)| p.distance(q)).collect();
    let max = per_point.iter().copied().fold(0.0, f64::max);
    let mean = if per_point.is_empty() {
        0.0
    } else {
        per_point.iter().sum::<f64>() / per_point.len() as f64
    };
    ErrorReport { mean, max, per_point }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in [0, 1) for an integer lattice point.
fn lattice(seed: u64, x: i64, y: i64) -> f64 {
    let h = mix64(seed ^ mix64((x as u64).wrapping_mul(0x1000_0000_01B3) ^ (y as u64).rotate_left(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smooth value noise in [0, 1) with lattice spacing `cell`.
fn value_noise(seed: u64, x: f64, y: f64, cell: f64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (x0, y0) = (gx.floor(), gy.floor());
    let (fx, fy) = (smoothstep(gx - x0), smoothstep(gy - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    let top = a + (b - a) * fx;
    let bottom = c + (d - c) * fx;
    top + (bottom - top) * fy
}

/// The rasterised world plane.
struct Canvas {
    /// World coordinate of raster pixel (0, 0).
    origin: [f64; 2],
    width: usize,
    height: usize,
    rgb: Vec<[f32; 3]>,
    snow: Vec<bool>,
    any_snow: bool,
}

impl Canvas {
    fn build(cfg: &CanvasConfig, seed: u64, bounds: [f64; 4]) -> Result<Self> {
        let [x0, y0, x1, y1] = bounds;
        let origin = [(x0 - cfg.margin).floor(), (y0 - cfg.margin).floor()];
        let width = ((x1 + cfg.margin).ceil() - origin[0]) as usize + 1;
        let height = ((y1 + cfg.margin).ceil() - origin[1]) as usize + 1;
        if width > MAX_CANVAS_SIDE || height > MAX_CANVAS_SIDE {
            return Err(Error::Config(format!(
                "camera path sweeps a {width}x{height} world, above the {MAX_CANVAS_SIDE} px limit"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
        let snow_seed = rng.random::<u64>();
        let noise_seed = rng.random::<u64>();
        let tint_seed = rng.random::<u64>();

        let cell = cfg.snow_cell as f64;
        let mut snow = vec![false; width * height];
        if cfg.snow_fraction > 0.0 {
            for y in 0..height {
                for x in 0..width {
                    let wx = ((x as f64 + origin[0]) / cell).floor() as i64;
                    let wy = ((y as f64 + origin[1]) / cell).floor() as i64;
                    snow[y * width + x] = lattice(snow_seed, wx, wy) < cfg.snow_fraction;
                }
            }
        }

        let amp = cfg.noise_amplitude;
        let mut rgb = vec![[0f32; 3]; width * height];
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if snow[i] {
                    rgb[i] = [SNOW_BASE as f32; 3];
                    continue;
                }
                let (wx, wy) = (x as f64 + origin[0], y as f64 + origin[1]);
                let n = 0.5 * value_noise(noise_seed, wx, wy, 24.0)
                    + 0.3 * value_noise(noise_seed ^ 1, wx, wy, 9.0)
                    + 0.2 * value_noise(noise_seed ^ 2, wx, wy, 3.5);
                let t = value_noise(tint_seed, wx, wy, 80.0);
                let v = (n - 0.5) * 2.0 * amp;
                rgb[i] = [
                    (95.0 + 30.0 * t + v) as f32,
                    (105.0 + v) as f32,
                    (120.0 - 30.0 * t + v) as f32,
                ];
            }
        }
        let mut canvas = Self {
            origin,
            width,
            height,
            rgb,
            any_snow: snow.iter().any(|&v| v),
            snow,
        };
        canvas.place_markers(cfg.markers, &mut rng);
        for px in &mut canvas.rgb {
            for c in px.iter_mut() {
                *c = c.clamp(0.0, 255.0);
            }
        }
        Ok(canvas)
    }

    fn fill(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: [f32; 3]) {
        let (w, h) = (self.width as i64, self.height as i64);
        for y in y0.max(0)..y1.min(h) {
            for x in x0.max(0)..x1.min(w) {
                self.rgb[(y * w + x) as usize] = color;
            }
        }
    }

    fn touches_snow(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> bool {
        let (w, h) = (self.width as i64, self.height as i64);
        (y0.max(0)..y1.min(h)).any(|y| (x0.max(0)..x1.min(w)).any(|x| self.snow[(y * w + x) as usize]))
    }

    /// Markers stay off whitish cells, which are meant to be featureless.
    fn place_markers(&mut self, count: usize, rng: &mut ChaCha8Rng) {
        let dark = |rng: &mut ChaCha8Rng| -> [f32; 3] {
            [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), rng.random_range(0.0..40.0)]
        };
        let bright = |rng: &mut ChaCha8Rng| -> [f32; 3] {
            let mut c = [rng.random_range(150.0..255.0), rng.random_range(150.0..255.0), rng.random_range(150.0..255.0)];
            // Keep them saturated so they never read as snow.
            c[rng.random_range(0..3)] = rng.random_range(0.0..60.0);
            c
        };
        let mut placed = 0;
        let mut attempts = 0;
        while placed < count && attempts < count * 50 {
            attempts += 1;
            let x = rng.random_range(0..self.width as i64);
            let y = rng.random_range(0..self.height as i64);
            let kind = rng.random_range(0..3);
            let (w, h) = match kind {
                0 => (rng.random_range(12..48), rng.random_range(12..48)),
                1 => (rng.random_range(16..40), rng.random_range(16..40)),
                _ => (rng.random_range(5..9), rng.random_range(40..90)),
            };
            if self.touches_snow(x - 2, y - 2, x + w + 2, y + h + 2) {
                continue;
            }
            let a = if rng.random_bool(0.5) { dark(rng) } else { bright(rng) };
            let b = if rng.random_bool(0.5) { dark(rng) } else { bright(rng) };
            match kind {
                0 => {
                    self.fill(x, y, x + w, y + h, a);
                    // An off-centre inset keeps markers distinguishable.
                    let ix = x + rng.random_range(2..w / 2);
                    let iy = y + rng.random_range(2..h / 2);
                    self.fill(ix, iy, ix + w / 3, iy + h / 3, b);
                }
                1 => {
                    let t = (w.min(h) / 4).max(3);
                    self.fill(x, y + h / 2 - t / 2, x + w, y + h / 2 - t / 2 + t, a);
                    self.fill(x + w / 3, y, x + w / 3 + t, y + h, a);
                }
                _ => {
                    // Gate pole: alternating bands.
                    let band = rng.random_range(8..16);
                    let mut yy = y;
                    let mut flip = false;
                    while yy < y + h {
                        self.fill(x, yy, x + w, (yy + band).min(y + h), if flip { b } else { a });
                        yy += band;
                        flip = !flip;
                    }
                }
            }
            placed += 1;
        }
    }

    fn texel(&self, x: i64, y: i64) -> [f32; 3] {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.rgb[y * self.width + x]
    }

    /// Bilinear sample at a world position; also reports whether the nearest
    /// texel is whitish.
    fn sample(&self, wx: f64, wy: f64) -> ([f32; 3], bool) {
        let (u, v) = (wx - self.origin[0], wy - self.origin[1]);
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = ((u - u0) as f32, (v - v0) as f32);
        let (iu, iv) = (u0 as i64, v0 as i64);
        let (a, b, c, d) = if iu >= 0 && iv >= 0 && iu + 1 < self.width as i64 && iv + 1 < self.height as i64 {
            let i = iv as usize * self.width + iu as usize;
            (self.rgb[i], self.rgb[i + 1], self.rgb[i + self.width], self.rgb[i + self.width + 1])
        } else {
            (
                self.texel(iu, iv),
                self.texel(iu + 1, iv),
                self.texel(iu, iv + 1),
                self.texel(iu + 1, iv + 1),
            )
        };
        let mut out = [0f32; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fu;
            let bottom = c[k] + (d[k] - c[k]) * fu;
            out[k] = top + (bottom - top) * fv;
        }
        if !self.any_snow {
            return (out, false);
        }
        let nx = (u.round() as i64).clamp(0, self.width as i64 - 1) as usize;
        let ny = (v.round() as i64).clamp(0, self.height as i64 - 1) as usize;
        (out, self.snow[ny * self.width + nx])
    }
}

/// A generated scene; frames are rendered on demand.
pub struct SyntheticScene {
    cfg: SceneConfig,
    canvas: Canvas,
    /// World → frame t.
    cameras: Vec<Homography>,
    /// Frame t → world.
    inverse_cameras: Vec<Homography>,
    truth: GroundTruth,
    speckle_seed: u64,
    athlete_seed: u64,
}

impl SyntheticScene {
    pub fn new(cfg: SceneConfig) -> Result<Self> {
        cfg.validate()?;
        let (w, h) = (cfg.width, cfg.height);
        let mut step = Homography::identity();
        for s in &cfg.camera {
            step = s.image_map(w, h)?.after(&step);
        }
        let view = match cfg.view {
            Some(v) => Homography::from_row_major(v)?,
            None => Homography::identity(),
        };

        // Base cameras (without the view) fix the world canvas, so scenes that
        // differ only in `view` share the same world.
        let mut base = Vec::with_capacity(cfg.frames);
        let mut c = Homography::identity();
        for t in 0..cfg.frames {
            if t > 0 {
                c = step.after(&c);
            }
            base.push(c);
        }
        let corners = [
            Point2::new(0.0, 0.0),
            Point2::new(w as f64, 0.0),
            Point2::new(0.0, h as f64),
            Point2::new(w as f64, h as f64),
        ];
        let mut bounds = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for (t, cam) in base.iter().enumerate() {
            let inv = cam.inverse()?;
            for q in corners {
                let p = inv.apply(q).map_err(|_| {
                    Error::Config(format!("camera at frame {t} looks past the horizon"))
                })?;
                bounds = [bounds[0].min(p.x), bounds[1].min(p.y), bounds[2].max(p.x), bounds[3].max(p.y)];
            }
        }
        let canvas = Canvas::build(&cfg.canvas, cfg.seed, bounds)?;

        let cameras: Vec<Homography> = base.iter().map(|b| view.after(b)).collect();
        let inverse_cameras = cameras
            .iter()
            .map(|c| c.inverse())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        // H_t = C_t · C_{t−1}⁻¹
        let homographies: Vec<Homography> = (1..cfg.frames)
            .map(|t| cameras[t].after(&inverse_cameras[t - 1]))
            .collect();

        let [bw, bh] = cfg.athlete.box_size;
        let mut boxes = Vec::with_capacity(cfg.frames);
        for (t, cam) in cameras.iter().enumerate() {
            let world = Point2::new(
                cfg.athlete.start[0] + cfg.athlete.velocity[0] * t as f64,
                cfg.athlete.start[1] + cfg.athlete.velocity[1] * t as f64,
            );
            let f = cam.apply(world).map_err(|_| {
                Error::Config(format!("athlete is behind the camera at frame {t}"))
            })?;
            let b = BBox::new(f.x - bw / 2.0, f.y - bh, bw, bh);
            let inside = b.x >= ATHLETE_BORDER
                && b.y >= ATHLETE_BORDER
                && b.right() <= w as f64 - 1.0 - ATHLETE_BORDER
                && b.bottom() <= h as f64 - 1.0 - ATHLETE_BORDER;
            if !inside {
                return Err(Error::Config(format!(
                    "athlete leaves the frame at frame {t} (box {:.1},{:.1},{bw},{bh})",
                    b.x, b.y
                )));
            }
            boxes.push(b);
        }
        let footpoints = boxes.iter().map(footpoint).collect();
        let truth = GroundTruth {
            schema: TRUTH_SCHEMA.to_string(),
            width: w,
            height: h,
            homographies,
            boxes,
            footpoints,
        };
        let speckle_seed = mix64(cfg.seed ^ 0x5EC1_E5EE_D000_0001);
        let athlete_seed = mix64(cfg.seed ^ 0xA7B1_E7E5_EED0_0002);
        Ok(Self {
            cfg,
            canvas,
            cameras,
            inverse_cameras,
            truth,
            speckle_seed,
            athlete_seed,
        })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.cfg
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn frame_count(&self) -> usize {
        self.cfg.frames
    }

    /// World → frame `t`.
    pub fn camera(&self, t: usize) -> &Homography {
        &self.cameras[t]
    }

    /// Renders frame `t`: world plane through the camera, speckle on whitish
    /// areas, athlete on top.
    pub fn render(&self, t: usize) -> Frame {
        let (w, h) = (self.cfg.width, self.cfg.height);
        let inv = self.inverse_cameras[t].matrix();
        let speckle = self.cfg.canvas.snow_speckle;
        let scell = self.cfg.canvas.speckle_cell as i64;
        let mut rgb = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                let wz = inv[(2, 0)] * fx + inv[(2, 1)] * fy + inv[(2, 2)];
                let wx = (inv[(0, 0)] * fx + inv[(0, 1)] * fy + inv[(0, 2)]) / wz;
                let wy = (inv[(1, 0)] * fx + inv[(1, 1)] * fy + inv[(1, 2)]) / wz;
                let (mut c, snow) = self.canvas.sample(wx, wy);
                if snow && speckle > 0.0 {
                    let s = (lattice(self.speckle_seed, x as i64 / scell, y as i64 / scell) - 0.5) * 2.0;
                    let v = (s * speckle) as f32;
                    for ch in &mut c {
                        *ch += v;
                    }
                }
                for ch in c {
                    rgb.push(ch.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        self.stamp_athlete(&mut rgb, &self.truth.boxes[t]);
        Frame::from_rgb(w, h, rgb).expect("scene frame size is validated")
    }

    /// Textured ellipse filling the box; the texture is fixed to the box.
    fn stamp_athlete(&self, rgb: &mut [u8], b: &BBox) {
        let w = self.cfg.width;
        let (cx, cy) = (b.x + b.w / 2.0, b.y + b.h / 2.0);
        let (rx, ry) = (b.w / 2.0, b.h / 2.0);
        let x0 = b.x.floor().max(0.0) as usize;
        let y0 = b.y.floor().max(0.0) as usize;
        let x1 = (b.right().ceil() as usize).min(w - 1);
        let y1 = (b.bottom().ceil() as usize).min(self.cfg.height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                // 4×4 supersampling for a soft edge.
                let mut cover = 0.0;
                for sy in 0..4 {
                    for sx in 0..4 {
                        let px = x as f64 - 0.375 + 0.25 * sx as f64;
                        let py = y as f64 - 0.375 + 0.25 * sy as f64;
                        let (dx, dy) = ((px - cx) / rx, (py - cy) / ry);
                        if dx * dx + dy * dy <= 1.0 {
                            cover += 1.0 / 16.0;
                        }
                    }
                }
                if cover == 0.0 {
                    continue;
                }
                let lx = ((x as f64 - b.x) / 6.0).floor() as i64;
                let ly = ((y as f64 - b.y) / 6.0).floor() as i64;
                let n = lattice(self.athlete_seed, lx, ly);
                let base: [f64; 3] = if (lx + ly) % 2 == 0 {
                    [210.0, 30.0, 40.0]
                } else {
                    [30.0, 50.0, 190.0]
                };
                let i = (y * w + x) * 3;
                for k in 0..3 {
                    let col = (base[k] + (n - 0.5) * 60.0).clamp(0.0, 255.0);
                    let old = rgb[i + k] as f64;
                    rgb[i + k] = (old + (col - old) * cover).round() as u8;
                }
            }
        }
    }

    pub fn generate(&self) -> Vec<Frame> {
        (0..self.cfg.frames).map(|t| self.render(t)).collect()
    }
}

impl FrameProvider for SyntheticScene {
    fn frame_count(&self) -> usize {
        self.cfg.frames
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        if index >= self.cfg.frames {
            return Err(Error::Config(format!("frame {index} out of range")));
        }
        Ok(self.render(index))
    }
}

/// Renders every frame of `cfg` and returns them with the ground truth.
pub fn generate(cfg: SceneConfig) -> Result<(Vec<Frame>, GroundTruth)> {
    let scene = SyntheticScene::new(cfg)?;
    Ok((scene.generate(), scene.truth.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(camera: Vec<CameraStep>) -> SceneConfig {
        SceneConfig {
            width: 160,
            height: 120,
            frames: 6,
            seed: 3,
            canvas: CanvasConfig {
                markers: 20,
                ..CanvasConfig::default()
            },
            camera,
            view: None,
            athlete: AthleteConfig {
                start: [80.0, 100.0],
                velocity: [0.0, 0.0],
                box_size: [16.0, 30.0],
            },
        }
    }

    #[test]
    fn static_camera_has_identity_truth() {
        let s = SyntheticScene::new(base(vec![])).unwrap();
        for h in &s.truth().homographies {
            assert!(h.max_abs_diff(&Homography::identity()) < 1e-15);
        }
    }

    #[test]
    fn panning_right_moves_the_picture_left() {
        let s = SyntheticScene::new(base(vec![CameraStep::Translate { dx: 2.0, dy: 0.0 }])).unwrap();
        for h in &s.truth().homographies {
            assert!(h.max_abs_diff(&Homography::translation(-2.0, 0.0)) < 1e-12);
        }
        // Integer shifts sample the canvas at the same texels.
        let (f0, f1) = (s.render(0), s.render(1));
        for y in 0..60 {
            for x in 0..100 {
                assert_eq!(f1.pixel(x, y), f0.pixel(x + 2, y), "at {x},{y}");
            }
        }
    }

    #[test]
    fn zoom_truth_and_point_flow() {
        let mut cfg = base(vec![CameraStep::Zoom { factor: 1.01, center: None }]);
        cfg.canvas.noise_amplitude = 60.0;
        let s = SyntheticScene::new(cfg).unwrap();
        let want = Homography::scaling_about(1.0 / 1.01, 80.0, 60.0).unwrap();
        for h in &s.truth().homographies {
            assert!(h.max_abs_diff(&want) < 1e-12);
        }
        // Each world point renders where the truth says it goes.
        let (f0, f1) = (s.render(0), s.render(1));
        let h = s.truth().homographies[0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut total = 0.0;
        for _ in 0..100 {
            let p = Point2::new(rng.random_range(20.0..60.0), rng.random_range(10.0..40.0));
            let q = h.apply(Point2::new(p.x.round(), p.y.round())).unwrap();
            let a = f0.gray_at(p.x.round() as usize, p.y.round() as usize) as f64;
            let b = f1.gray_at(q.x.round() as usize, q.y.round() as usize) as f64;
            total += (a - b).abs();
        }
        assert!(total / 100.0 < 12.0, "mean flow residual {}", total / 100.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = base(vec![CameraStep::Translate { dx: 1.5, dy: 0.5 }]);
        let a = SyntheticScene::new(cfg.clone()).unwrap();
        let b = SyntheticScene::new(cfg.clone()).unwrap();
        assert_eq!(a.render(3), b.render(3));
        assert_eq!(a.truth(), b.truth());
        let mut other = cfg;
        other.seed = 4;
        assert_ne!(SyntheticScene::new(other).unwrap().render(3), a.render(3));
    }

    #[test]
    fn truth_footpoints_follow_the_boxes() {
        let mut cfg = base(vec![CameraStep::Translate { dx: 1.0, dy: 0.0 }]);
        cfg.athlete.velocity = [2.0, -1.0];
        let s = SyntheticScene::new(cfg).unwrap();
        let gt = s.truth();
        for (b, p) in gt.boxes.iter().zip(&gt.footpoints) {
            assert_eq!(*p, footpoint(b));
        }
        // Chained truth agrees with the world motion.
        let tr = gt.trajectory_at(5);
        let world0 = Point2::new(80.0, 100.0);
        let want = s.camera(5).apply(world0).unwrap();
        assert!(tr[0].distance(&want) < 1e-9);
    }

    #[test]
    fn athlete_must_stay_visible() {
        let mut cfg = base(vec![]);
        cfg.athlete.velocity = [30.0, 0.0];
        assert!(matches!(SyntheticScene::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn error_report_examples() {
        let mut cfg = base(vec![]);
        cfg.athlete.velocity = [1.0, 0.0];
        let s = SyntheticScene::new(cfg).unwrap();
        let truth = s.truth();
        let exact = truth.trajectory_at(5);
        let flags = vec![crate::reconstruction::PointFlag::Measured; 6];
        let t = Trajectory::from_parts(exact.clone(), flags.clone(), 5);
        let r = measure_error(&t, truth).unwrap();
        assert_eq!((r.mean, r.max), (0.0, 0.0));
        let shifted = exact.iter().map(|p| Point2::new(p.x + 3.0, p.y + 4.0)).collect();
        let r = measure_error(&Trajectory::from_parts(shifted, flags, 5), truth).unwrap();
        assert!((r.mean - 5.0).abs() < 1e-12 && (r.max - 5.0).abs() < 1e-12);
        let short = Trajectory::from_parts(exact[..3].to_vec(), vec![crate::reconstruction::PointFlag::Measured; 3], 2);
        assert!(matches!(measure_error(&short, truth), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let text = r#"
width = 320
height = 240
frames = 10
seed = 5

[canvas]
markers = 30
snow_fraction = 0.5

[[camera]]
kind = "translate"
dx = 2.0
dy = 0.0

[[camera]]
kind = "zoom"
factor = 1.005

[athlete]
start = [100.0, 200.0]
velocity = [1.0, 0.5]
"#;
        let cfg = SceneConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.camera.len(), 2);
        assert_eq!(cfg.athlete.box_size, [40.0, 90.0]);
        assert_eq!(SceneConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        assert!(SceneConfig::from_toml_str("width = 3").is_err());
    }
}
