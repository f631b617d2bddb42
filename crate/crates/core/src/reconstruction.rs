//! The online reconstruction engine.
//!
//! Each new frame is tracked, its keypoints are detected, masked and matched
//! against the previous frame's, and the resulting inter-frame homography
//! carries every stored trajectory point into the new frame before the
//! athlete's current footpoint is appended. The trajectory therefore always
//! lives in the coordinates of the most recent frame.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{Error, Result};
use crate::features::{describe, detect, Descriptor, DetectorConfig, Keypoint};
use crate::frame::Frame;
use crate::geom::{Correspondence, Homography, Point2, HORIZON_EPS};
use crate::masking::{filter_bbox, filter_snow, filter_static_mask, SnowFilterConfig, StaticMask};
use crate::matching::{match_with, MatcherConfig};
use crate::ransac::{estimate, RansacConfig, RansacResult};
use crate::tracking::{
    footpoint, init_tracker_with, track_step, BBox, TrackSource, TrackTable, TrackerConfig,
    TrackingError,
};

pub const DEFAULT_MIN_MATCHES: usize = 8;
pub const DEFAULT_BBOX_MARGIN: f64 = 4.0;

/// Salt separating comparison seeds from the per-frame engine seeds.
const COMPARE_SEED_SALT: u64 = 0xC0FF_EE00_5EED_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub detector: DetectorConfig,
    pub matcher: MatcherConfig,
    /// `ransac.seed` is the base seed; each frame pair derives its own.
    pub ransac: RansacConfig,
    pub tracker: TrackerConfig,
    pub snow: SnowFilterConfig,
    pub static_mask: Option<StaticMask>,
    /// Keypoints this close to the athlete box are dropped as well.
    pub bbox_margin: f64,
    /// Fewer matches than this bridge the frame pair.
    pub min_matches: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            matcher: MatcherConfig::default(),
            ransac: RansacConfig::default(),
            tracker: TrackerConfig::default(),
            snow: SnowFilterConfig::default(),
            static_mask: None,
            bbox_margin: DEFAULT_BBOX_MARGIN,
            min_matches: DEFAULT_MIN_MATCHES,
        }
    }
}

impl EngineConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.ransac.seed = seed;
        cfg
    }
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the estimation between frames `t − 1` and `t`.
pub fn frame_seed(base: u64, t: usize) -> u64 {
    mix64(base ^ mix64(t as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    Measured,
    /// Footpoint from a reused box (tracker lost or track-file gap).
    Interpolated,
    /// Mapped beyond the projective horizon; not drawn.
    OffHorizon,
}

/// Athlete positions for frames `0..=frame_index`, all expressed in frame
/// `frame_index` pixel coordinates.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<Point2>,
    pub flags: Vec<PointFlag>,
    pub frame_index: usize,
    // Homogeneous position of every point; `w = 1` unless off-horizon.
    homog: Vec<[f64; 3]>,
    // Flag each point had when it was appended.
    origin: Vec<PointFlag>,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
            && self.flags == other.flags
            && self.frame_index == other.frame_index
    }
}

impl Trajectory {
    /// τ₀ = {p₀}.
    pub fn seed(p0: Point2, flag: PointFlag) -> Self {
        let mut t = Self {
            points: Vec::new(),
            flags: Vec::new(),
            frame_index: 0,
            homog: Vec::new(),
            origin: Vec::new(),
        };
        t.push(p0, flag);
        t
    }

    /// Rebuilds a trajectory from stored points (e.g. an export).
    pub fn from_parts(points: Vec<Point2>, flags: Vec<PointFlag>, frame_index: usize) -> Self {
        assert_eq!(points.len(), flags.len(), "one flag per point");
        let homog = points.iter().map(|p| [p.x, p.y, 1.0]).collect();
        Self {
            origin: flags.clone(),
            points,
            flags,
            frame_index,
            homog,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn push(&mut self, p: Point2, flag: PointFlag) {
        self.points.push(p);
        self.flags.push(flag);
        self.homog.push([p.x, p.y, 1.0]);
        self.origin.push(flag);
    }

    /// Re-expresses every point through `h`. Points crossing the horizon keep
    /// their last finite position and are flagged; they come back if a later
    /// map brings them in front again.
    fn map_in_place(&mut self, h: &Homography) {
        for i in 0..self.points.len() {
            let v = self.homog[i];
            if self.flags[i] != PointFlag::OffHorizon {
                if let Ok(p) = h.apply(Point2::new(v[0], v[1])) {
                    if p.is_finite() {
                        self.points[i] = p;
                        self.homog[i] = [p.x, p.y, 1.0];
                        continue;
                    }
                }
            }
            let m = h.apply_homogeneous(v);
            let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            let unit = if norm > 0.0 { [m[0] / norm, m[1] / norm, m[2] / norm] } else { m };
            if unit[2].abs() > HORIZON_EPS {
                let p = Point2::new(unit[0] / unit[2], unit[1] / unit[2]);
                if p.is_finite() {
                    self.points[i] = p;
                    self.homog[i] = [p.x, p.y, 1.0];
                    self.flags[i] = self.origin[i];
                    continue;
                }
            }
            self.homog[i] = unit;
            self.flags[i] = PointFlag::OffHorizon;
        }
    }

    /// A copy mapped through `h` into another frame's coordinates.
    pub fn mapped(&self, h: &Homography, frame_index: usize) -> Trajectory {
        let mut t = self.clone();
        t.map_in_place(h);
        t.frame_index = frame_index;
        t
    }

    /// Points that can be drawn, in order.
    pub fn visible_points(&self) -> Vec<Point2> {
        self.points
            .iter()
            .zip(&self.flags)
            .filter(|(_, &f)| f != PointFlag::OffHorizon)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Advances to the next frame: map through `h`, append `p`.
    pub fn advance(&mut self, h: &Homography, p: Point2, flag: PointFlag) {
        self.map_in_place(h);
        self.push(p, flag);
        self.frame_index += 1;
    }
}

/// What happened at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub bbox: BBox,
    /// The box was reused from the previous frame.
    pub tracker_lost: bool,
    pub keypoints: usize,
    pub matches: usize,
    pub inliers: usize,
    /// Map from frame `frame − 1` into this frame; absent for frame 0.
    pub homography: Option<Homography>,
    pub bridged: bool,
    pub mean_inlier_error: Option<f64>,
    pub ransac_iterations: usize,
}

/// Masked keypoints and their descriptors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameFeatures {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl FrameFeatures {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Detect, drop keypoints on the athlete / static mask / snow, describe.
pub fn extract_features(frame: &Frame, bbox: &BBox, cfg: &EngineConfig) -> Result<FrameFeatures> {
    let mut kps = detect(frame, cfg.detector.max_keypoints, cfg.detector.nms_radius);
    kps = filter_bbox(&kps, bbox, cfg.bbox_margin);
    if let Some(mask) = &cfg.static_mask {
        mask.check_dims(frame.width(), frame.height())?;
        kps = filter_static_mask(&kps, mask);
    }
    kps = filter_snow(&kps, frame, &cfg.snow);
    let descriptors = describe(frame, &kps)?;
    Ok(FrameFeatures {
        keypoints: kps,
        descriptors,
    })
}

/// Outcome of relating two frames.
#[derive(Debug, Clone)]
pub struct PairEstimate {
    pub matches: usize,
    pub result: Option<RansacResult>,
}

/// Matches `from` against `to` and robustly fits the homography `from → to`.
/// `result` is `None` when there are too few matches or no consensus.
pub fn estimate_pair(
    from: &FrameFeatures,
    to: &FrameFeatures,
    cfg: &EngineConfig,
    seed: u64,
) -> PairEstimate {
    let matches = match_with(&cfg.matcher, &from.descriptors, &to.descriptors);
    if matches.len() < cfg.min_matches.max(4) {
        return PairEstimate {
            matches: matches.len(),
            result: None,
        };
    }
    let corrs: Vec<Correspondence> = matches
        .iter()
        .map(|m| Correspondence::new(from.keypoints[m.idx_prev].pos, to.keypoints[m.idx_curr].pos))
        .collect();
    let rcfg = RansacConfig { seed, ..cfg.ransac };
    PairEstimate {
        matches: matches.len(),
        result: estimate(&corrs, &rcfg).ok(),
    }
}

enum BoxSource {
    Builtin(crate::tracking::TrackerState),
    External(TrackTable),
    Manual,
}

/// Online engine state; advance it with [`Engine::step`] in frame order.
pub struct Engine {
    cfg: EngineConfig,
    trajectory: Trajectory,
    source: BoxSource,
    prev: FrameFeatures,
    diagnostics: Vec<FrameDiagnostics>,
    last_bbox: BBox,
    frame_size: (usize, usize),
}

impl Engine {
    /// Starts with the built-in template tracker initialised on `b0`.
    pub fn start(frame0: &Frame, b0: BBox, cfg: EngineConfig) -> Result<Self> {
        let tracker = init_tracker_with(frame0, b0, cfg.tracker)?;
        Self::begin(frame0, b0, BoxSource::Builtin(tracker), cfg)
    }

    /// Starts from a track table; its row for frame 0 is the initial box.
    pub fn start_with_track(frame0: &Frame, table: TrackTable, cfg: EngineConfig) -> Result<Self> {
        let b0 = table.get(0).ok_or_else(|| {
            Error::Config("track file has no row for frame 0".to_string())
        })?;
        b0.validate_in(frame0.width(), frame0.height())?;
        Self::begin(frame0, b0, BoxSource::External(table), cfg)
    }

    /// Starts with boxes supplied per call to [`Engine::step_with_box`].
    pub fn start_manual(frame0: &Frame, b0: BBox, cfg: EngineConfig) -> Result<Self> {
        b0.validate_in(frame0.width(), frame0.height())?;
        Self::begin(frame0, b0, BoxSource::Manual, cfg)
    }

    /// Starts from any [`TrackSource`].
    pub fn start_with_source(frame0: &Frame, source: TrackSource, cfg: EngineConfig) -> Result<Self> {
        match source {
            TrackSource::BuiltinNcc(state) => {
                let b0 = state.bbox();
                Self::begin(frame0, b0, BoxSource::Builtin(state), cfg)
            }
            TrackSource::ExternalFile(table) => Self::start_with_track(frame0, table, cfg),
        }
    }

    fn begin(frame0: &Frame, b0: BBox, source: BoxSource, cfg: EngineConfig) -> Result<Self> {
        cfg.ransac.validate()?;
        if let Some(mask) = &cfg.static_mask {
            mask.check_dims(frame0.width(), frame0.height())?;
        }
        let prev = extract_features(frame0, &b0, &cfg)?;
        let diag = FrameDiagnostics {
            frame: 0,
            bbox: b0,
            tracker_lost: false,
            keypoints: prev.len(),
            matches: 0,
            inliers: 0,
            homography: None,
            bridged: false,
            mean_inlier_error: None,
            ransac_iterations: 0,
        };
        Ok(Self {
            trajectory: Trajectory::seed(footpoint(&b0), PointFlag::Measured),
            source,
            prev,
            diagnostics: vec![diag],
            last_bbox: b0,
            frame_size: (frame0.width(), frame0.height()),
            cfg,
        })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn diagnostics(&self) -> &[FrameDiagnostics] {
        &self.diagnostics
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Index of the most recently processed frame.
    pub fn frame_index(&self) -> usize {
        self.trajectory.frame_index
    }

    pub fn features(&self) -> &FrameFeatures {
        &self.prev
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        if (frame.width(), frame.height()) != self.frame_size {
            return Err(Error::DimensionMismatch {
                path: format!("frame {}", self.frame_index() + 1),
                want_w: self.frame_size.0,
                want_h: self.frame_size.1,
                got_w: frame.width(),
                got_h: frame.height(),
            });
        }
        Ok(())
    }

    /// Processes the next frame using the engine's own box source.
    pub fn step(&mut self, frame: &Frame) -> Result<&Trajectory> {
        self.check_frame(frame)?;
        let t = self.frame_index() + 1;
        let (bbox, lost) = match &mut self.source {
            BoxSource::Builtin(state) => match track_step(state, frame) {
                Ok(b) => (b, false),
                Err(TrackingError::LostTarget { .. }) => (self.last_bbox, true),
                Err(e) => return Err(e.into()),
            },
            BoxSource::External(table) => match table.get(t) {
                Some(b) => (b, false),
                None => (self.last_bbox, true),
            },
            BoxSource::Manual => {
                return Err(Error::Config(
                    "engine was started for caller-supplied boxes; use step_with_box".into(),
                ))
            }
        };
        self.advance(frame, bbox, lost)
    }

    /// Processes the next frame with a caller-supplied athlete box.
    pub fn step_with_box(&mut self, frame: &Frame, bbox: BBox) -> Result<&Trajectory> {
        self.check_frame(frame)?;
        bbox.validate()?;
        self.advance(frame, bbox, false)
    }

    fn advance(&mut self, frame: &Frame, bbox: BBox, lost: bool) -> Result<&Trajectory> {
        let t = self.frame_index() + 1;
        let curr = extract_features(frame, &bbox, &self.cfg)?;
        let pair = estimate_pair(&self.prev, &curr, &self.cfg, frame_seed(self.cfg.ransac.seed, t));

        let (h, bridged, inliers, mean_err, iters) = match &pair.result {
            Some(r) => (r.h, false, r.inlier_count(), Some(r.mean_inlier_error), r.iterations_used),
            None => (Homography::identity(), true, 0, None, 0),
        };
        let flag = if lost {
            PointFlag::Interpolated
        } else {
            PointFlag::Measured
        };
        self.trajectory.advance(&h, footpoint(&bbox), flag);
        self.diagnostics.push(FrameDiagnostics {
            frame: t,
            bbox,
            tracker_lost: lost,
            keypoints: curr.len(),
            matches: pair.matches,
            inliers,
            homography: Some(h),
            bridged,
            mean_inlier_error: mean_err,
            ransac_iterations: iters,
        });
        self.prev = curr;
        self.last_bbox = bbox;
        Ok(&self.trajectory)
    }
}

/// Rebuilds τ_t for every recorded frame from the boxes and homographies in
/// `diagnostics`, reproducing the engine's arithmetic exactly.
pub fn replay(diagnostics: &[FrameDiagnostics]) -> Result<Vec<Trajectory>> {
    let mut out: Vec<Trajectory> = Vec::with_capacity(diagnostics.len());
    for (t, d) in diagnostics.iter().enumerate() {
        if d.frame != t {
            return Err(Error::Parse {
                context: "diagnostics".into(),
                message: format!("record {t} is for frame {}", d.frame),
            });
        }
        let flag = if d.tracker_lost {
            PointFlag::Interpolated
        } else {
            PointFlag::Measured
        };
        let p = footpoint(&d.bbox);
        let next = match out.last() {
            None => Trajectory::seed(p, flag),
            Some(prev) => {
                let h = d.homography.ok_or_else(|| Error::Parse {
                    context: "diagnostics".into(),
                    message: format!("frame {t} has no homography"),
                })?;
                let mut tr = prev.clone();
                tr.advance(&h, p, flag);
                tr
            }
        };
        out.push(next);
    }
    Ok(out)
}

/// The chained map from frame `from` into frame `to` (`from ≤ to`).
pub fn chain(diagnostics: &[FrameDiagnostics], from: usize, to: usize) -> Homography {
    let mut h = Homography::identity();
    for d in &diagnostics[from + 1..=to] {
        if let Some(step) = &d.homography {
            h = step.after(&h);
        }
    }
    h
}

/// Polyline through the drawable points with `samples_per_segment` extra
/// points on each centripetal Catmull–Rom segment. Inputs with two or fewer
/// drawable points come back unchanged.
pub fn smooth(traj: &Trajectory, samples_per_segment: usize) -> Vec<Point2> {
    smooth_points(&traj.visible_points(), samples_per_segment)
}

pub fn smooth_points(points: &[Point2], samples_per_segment: usize) -> Vec<Point2> {
    let mut pts: Vec<Point2> = Vec::with_capacity(points.len());
    for p in points {
        if pts.last().is_none_or(|q| q.distance(p) > 1e-12) {
            pts.push(*p);
        }
    }
    if pts.len() <= 2 || samples_per_segment == 0 {
        return pts;
    }
    let n = pts.len();
    let ext = |i: isize| -> Point2 {
        if i < 0 {
            Point2::new(2.0 * pts[0].x - pts[1].x, 2.0 * pts[0].y - pts[1].y)
        } else if i as usize >= n {
            Point2::new(2.0 * pts[n - 1].x - pts[n - 2].x, 2.0 * pts[n - 1].y - pts[n - 2].y)
        } else {
            pts[i as usize]
        }
    };
    let mut out = Vec::with_capacity(n + (n - 1) * samples_per_segment);
    for i in 0..n - 1 {
        let ctrl = [ext(i as isize - 1), pts[i], pts[i + 1], ext(i as isize + 2)];
        let mut knots = [0.0f64; 4];
        for k in 1..4 {
            knots[k] = knots[k - 1] + ctrl[k - 1].distance(&ctrl[k]).sqrt();
        }
        out.push(pts[i]);
        for s in 1..=samples_per_segment {
            let u = s as f64 / (samples_per_segment + 1) as f64;
            let t = knots[1] + (knots[2] - knots[1]) * u;
            out.push(barry_goldman(&ctrl, &knots, t));
        }
    }
    out.push(pts[n - 1]);
    out
}

fn lerp(a: Point2, b: Point2, t0: f64, t1: f64, t: f64) -> Point2 {
    let d = t1 - t0;
    if d <= 0.0 {
        return b;
    }
    let (wa, wb) = ((t1 - t) / d, (t - t0) / d);
    Point2::new(wa * a.x + wb * b.x, wa * a.y + wb * b.y)
}

fn barry_goldman(p: &[Point2; 4], k: &[f64; 4], t: f64) -> Point2 {
    let a1 = lerp(p[0], p[1], k[0], k[1], t);
    let a2 = lerp(p[1], p[2], k[1], k[2], t);
    let a3 = lerp(p[2], p[3], k[2], k[3], t);
    let b1 = lerp(a1, a2, k[0], k[2], t);
    let b2 = lerp(a2, a3, k[1], k[3], t);
    lerp(b1, b2, k[1], k[2], t)
}

/// Reference-frame → other-frame time pairing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pairing {
    pairs: BTreeMap<usize, usize>,
}

pub const PAIRING_HEADER: [&str; 2] = ["ref_frame", "other_frame"];

impl Pairing {
    pub fn identity(frames: usize) -> Self {
        Self {
            pairs: (0..frames).map(|t| (t, t)).collect(),
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (r, o) in pairs {
            if map.insert(r, o).is_some() {
                return Err(Error::Config(format!("reference frame {r} paired twice")));
            }
        }
        Ok(Self { pairs: map })
    }

    pub fn get(&self, ref_frame: usize) -> Option<usize> {
        self.pairs.get(&ref_frame).copied()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rows = csvio::parse_rows(text, &PAIRING_HEADER)?;
        let mut pairs = Vec::with_capacity(rows.len());
        for row in &rows {
            pairs.push((row.usize(0)?, row.usize(1)?));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&csvio::read_text(path.as_ref())?)
    }
}

/// Frames addressable by index.
pub trait FrameProvider {
    fn frame_count(&self) -> usize;
    fn frame(&self, index: usize) -> Result<Frame>;
}

impl FrameProvider for [Frame] {
    fn frame_count(&self) -> usize {
        self.len()
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::Config(format!("frame {index} out of range")))
    }
}

impl FrameProvider for Vec<Frame> {
    fn frame_count(&self) -> usize {
        self.len()
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        self.as_slice().frame(index)
    }
}

/// A processed run: its frames plus the engine's per-frame diagnostics.
#[derive(Clone, Copy)]
pub struct RunView<'a> {
    pub frames: &'a dyn FrameProvider,
    pub diagnostics: &'a [FrameDiagnostics],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayStatus {
    Ok,
    /// No other-video frame is paired with this reference frame.
    Unpaired,
    /// The time-paired frames could not be related by a homography.
    NoConsensus,
}

/// The other athlete's trajectory expressed in one reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayFrame {
    pub ref_frame: usize,
    pub other_frame: Option<usize>,
    pub status: OverlayStatus,
    /// Map from the other frame into the reference frame.
    pub homography: Option<Homography>,
    pub overlay: Option<Trajectory>,
}

/// For every reference frame, relates it to its time-paired frame of the
/// other run and maps the other athlete's trajectory into it.
pub fn compare_runs(
    cfg: &EngineConfig,
    reference: RunView<'_>,
    other: RunView<'_>,
    pairing: &Pairing,
) -> Result<Vec<OverlayFrame>> {
    let other_trajs = replay(other.diagnostics)?;
    let frames = reference.diagnostics.len().min(reference.frames.frame_count());
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let paired = pairing
            .get(t)
            .filter(|&u| u < other_trajs.len() && u < other.frames.frame_count());
        let Some(u) = paired else {
            out.push(OverlayFrame {
                ref_frame: t,
                other_frame: pairing.get(t),
                status: OverlayStatus::Unpaired,
                homography: None,
                overlay: None,
            });
            continue;
        };
        let ref_frame = reference.frames.frame(t)?;
        let other_frame = other.frames.frame(u)?;
        let ref_feats = extract_features(&ref_frame, &reference.diagnostics[t].bbox, cfg)?;
        let other_feats = extract_features(&other_frame, &other.diagnostics[u].bbox, cfg)?;
        let seed = frame_seed(cfg.ransac.seed ^ COMPARE_SEED_SALT, t);
        let pair = estimate_pair(&other_feats, &ref_feats, cfg, seed);
        match pair.result {
            Some(r) => out.push(OverlayFrame {
                ref_frame: t,
                other_frame: Some(u),
                status: OverlayStatus::Ok,
                homography: Some(r.h),
                overlay: Some(other_trajs[u].mapped(&r.h, t)),
            }),
            None => out.push(OverlayFrame {
                ref_frame: t,
                other_frame: Some(u),
                status: OverlayStatus::NoConsensus,
                homography: None,
                overlay: None,
            }),
        }
    }
    Ok(out)
}

/// Per-frame athlete speed (m/s) over a contiguous frame range.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedSeries {
    first_frame: usize,
    speeds: Vec<f64>,
}

pub const SPEED_HEADER: [&str; 2] = ["frame", "speed_mps"];

impl SpeedSeries {
    pub fn new(first_frame: usize, speeds: Vec<f64>) -> Result<Self> {
        if let Some(bad) = speeds.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Config(format!("speed {bad} is not a non-negative number")));
        }
        Ok(Self { first_frame, speeds })
    }

    pub fn get(&self, frame: usize) -> Option<f64> {
        frame
            .checked_sub(self.first_frame)
            .and_then(|i| self.speeds.get(i).copied())
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rows = csvio::parse_rows(text, &SPEED_HEADER)?;
        let mut first = None;
        let mut speeds = Vec::with_capacity(rows.len());
        for row in &rows {
            let frame = row.usize(0)?;
            let expected = first.map(|f: usize| f + speeds.len()).unwrap_or(frame);
            if frame != expected {
                return Err(Error::Parse {
                    context: format!("speed series line {}", row.line),
                    message: format!("expected frame {expected}, found {frame} (frames must be contiguous)"),
                });
            }
            first.get_or_insert(frame);
            speeds.push(row.f64(1)?);
        }
        Self::new(first.unwrap_or(0), speeds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&csvio::read_text(path.as_ref())?)
    }
}

/// Pairs each drawable trajectory point with the speed of the frame it was
/// measured in (point `i` belongs to frame `i`).
pub fn annotate_speed(traj: &Trajectory, speeds: &SpeedSeries) -> Vec<(Point2, f64)> {
    traj.points
        .iter()
        .zip(&traj.flags)
        .enumerate()
        .filter(|(_, (_, &f))| f != PointFlag::OffHorizon)
        .filter_map(|(i, (p, _))| speeds.get(i).map(|s| (*p, s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize) -> Trajectory {
        let pts: Vec<_> = (0..n).map(|i| Point2::new(i as f64, 0.0)).collect();
        let flags = vec![PointFlag::Measured; n];
        Trajectory::from_parts(pts, flags, n - 1)
    }

    #[test]
    fn smoothing_two_points_is_identity() {
        let t = Trajectory::from_parts(
            vec![Point2::new(1.0, 2.0), Point2::new(5.0, 9.0)],
            vec![PointFlag::Measured; 2],
            1,
        );
        assert_eq!(smooth(&t, 8), t.points);
    }

    #[test]
    fn smoothing_collinear_stays_on_line() {
        let pts: Vec<_> = (0..6).map(|i| Point2::new(10.0 + 3.0 * i as f64, 5.0 + 4.0 * i as f64)).collect();
        let out = smooth_points(&pts, 7);
        assert_eq!(out.len(), 6 + 5 * 7);
        for p in &out {
            // Distance to the line through (10, 5) with direction (3, 4).
            let d = ((p.x - 10.0) * 4.0 - (p.y - 5.0) * 3.0).abs() / 5.0;
            assert!(d < 1e-9, "{p:?} off the line by {d}");
        }
    }

    #[test]
    fn smoothing_interpolates_square_corners() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(10.0, 10.0),
            Point2::new(0.0, 10.0),
        ];
        let out = smooth_points(&pts, 8);
        assert_eq!(out.len(), 4 + 3 * 8);
        for (k, p) in pts.iter().enumerate() {
            assert_eq!(out[k * 9], *p);
        }
    }

    #[test]
    fn smoothing_skips_off_horizon_points() {
        let mut t = straight(5);
        t.flags[2] = PointFlag::OffHorizon;
        let out = smooth(&t, 2);
        assert!(!out.contains(&Point2::new(2.0, 0.0)));
        assert!(out.contains(&Point2::new(3.0, 0.0)));
    }

    #[test]
    fn speed_annotation_examples() {
        let t = straight(100);
        let uniform = SpeedSeries::new(0, vec![20.0; 100]).unwrap();
        let a = annotate_speed(&t, &uniform);
        assert_eq!(a.len(), 100);
        assert!(a.iter().all(|(_, s)| *s == 20.0));
        let partial = SpeedSeries::new(10, vec![1.0; 41]).unwrap();
        assert_eq!(annotate_speed(&t, &partial).len(), 41);
        assert!(annotate_speed(&t, &SpeedSeries::default()).is_empty());
    }

    #[test]
    fn speed_csv_must_be_contiguous() {
        let s = SpeedSeries::parse("frame,speed_mps\n3,1.5\n4,2\n").unwrap();
        assert_eq!((s.get(3), s.get(4), s.get(5)), (Some(1.5), Some(2.0), None));
        assert!(SpeedSeries::parse("frame,speed_mps\n3,1.5\n5,2\n").is_err());
        assert!(SpeedSeries::parse("frame,speed_mps\n3,-1\n").is_err());
    }

    #[test]
    fn pairing_csv() {
        let p = Pairing::parse("ref_frame,other_frame\n0,2\n1,3\n").unwrap();
        assert_eq!((p.get(0), p.get(1), p.get(2)), (Some(2), Some(3), None));
        assert!(Pairing::parse("ref_frame,other_frame\n0,2\n0,3\n").is_err());
    }

    #[test]
    fn off_horizon_points_are_flagged_and_recover() {
        let mut t = Trajectory::seed(Point2::new(-100.0, 0.0), PointFlag::Measured);
        let proj = Homography::from_row_major([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.01, 0.0, 1.0]).unwrap();
        t.advance(&proj, Point2::new(5.0, 5.0), PointFlag::Measured);
        assert_eq!(t.flags[0], PointFlag::OffHorizon);
        assert!(t.points[0].is_finite());
        assert_eq!(t.visible_points(), vec![Point2::new(5.0, 5.0)]);
        let back = proj.inverse().unwrap();
        t.advance(&back, Point2::new(6.0, 6.0), PointFlag::Measured);
        assert_eq!(t.flags[0], PointFlag::Measured);
        assert!(t.points[0].distance(&Point2::new(-100.0, 0.0)) < 1e-9);
    }

    #[test]
    fn frame_seeds_differ() {
        assert_ne!(frame_seed(7, 1), frame_seed(7, 2));
        assert_ne!(frame_seed(7, 1), frame_seed(8, 1));
        assert_eq!(frame_seed(7, 1), frame_seed(7, 1));
    }
}
