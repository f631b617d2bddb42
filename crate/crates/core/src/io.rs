//! PNG frame directories, masks and the line-delimited trajectory export.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geom::{Homography, Point2};
use crate::masking::StaticMask;
use crate::reconstruction::{FrameDiagnostics, FrameProvider, PointFlag, Trajectory};
use crate::tracking::BBox;

pub const TRAJECTORY_SCHEMA: &str = "piste-traj/1";

/// A directory of equally sized PNG frames in lexicographic order.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    paths: Vec<PathBuf>,
    width: usize,
    height: usize,
}

fn is_png(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn load_sequence(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir.display(), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir.display(), e))?.path();
        if path.is_file() && is_png(&path) {
            paths.push(path);
        }
    }
    if paths.len() < 2 {
        return Err(Error::EmptyDirectory(dir.display().to_string()));
    }
    paths.sort();
    let dims = |p: &Path| -> Result<(usize, usize)> {
        let (w, h) = image::image_dimensions(p).map_err(|e| Error::Decode {
            path: p.display().to_string(),
            message: e.to_string(),
        })?;
        Ok((w as usize, h as usize))
    };
    let (width, height) = dims(&paths[0])?;
    for p in &paths[1..] {
        let (w, h) = dims(p)?;
        if (w, h) != (width, height) {
            return Err(Error::DimensionMismatch {
                path: p.display().to_string(),
                want_w: width,
                want_h: height,
                got_w: w,
                got_h: h,
            });
        }
    }
    Ok(FrameSequence { paths, width, height })
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    /// Decodes frame `index`.
    pub fn load(&self, index: usize) -> Result<Frame> {
        let path = &self.paths[index];
        let frame = load_frame(path)?;
        if (frame.width(), frame.height()) != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                path: path.display().to_string(),
                want_w: self.width,
                want_h: self.height,
                got_w: frame.width(),
                got_h: frame.height(),
            });
        }
        Ok(frame)
    }
}

impl FrameProvider for FrameSequence {
    fn frame_count(&self) -> usize {
        self.len()
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        if index >= self.len() {
            return Err(Error::Config(format!("frame {index} out of range")));
        }
        self.load(index)
    }
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Frame::from_rgb(w as usize, h as usize, rgb.into_raw())?)
}

pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer(
        path,
        frame.rgb(),
        frame.width() as u32,
        frame.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::io(path.display(), e))
}

/// Loads an exclusion mask; any non-zero luma marks an excluded pixel.
pub fn load_mask(path: impl AsRef<Path>) -> Result<StaticMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    let bits = gray.into_raw().into_iter().map(|v| v != 0).collect();
    Ok(StaticMask::from_bits(w as usize, h as usize, bits))
}

pub fn save_mask(mask: &StaticMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(mask.width() * mask.height());
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            buf.push(if mask.get(x, y) { 255 } else { 0 });
        }
    }
    image::save_buffer(
        path,
        &buf,
        mask.width() as u32,
        mask.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::io(path.display(), e))
}

/// One line of an export document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Record {
    Header {
        schema: String,
        /// Frame whose coordinates the points are expressed in.
        frame_index: usize,
        points: usize,
    },
    Point {
        index: usize,
        x: f64,
        y: f64,
        flag: PointFlag,
    },
    Frame {
        frame: usize,
        bbox: BBox,
        tracker_lost: bool,
        keypoints: usize,
        matches: usize,
        inliers: usize,
        bridged: bool,
        mean_inlier_error: Option<f64>,
        ransac_iterations: usize,
    },
    /// Map from frame `frame − 1` into `frame`.
    Homography { frame: usize, h: Homography },
}

/// The contents of an export document.
#[derive(Debug, Clone, PartialEq)]
pub struct Export {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<FrameDiagnostics>,
}

pub fn export_records(traj: &Trajectory, diagnostics: &[FrameDiagnostics]) -> Vec<Record> {
    let mut out = Vec::with_capacity(1 + traj.len() + 2 * diagnostics.len());
    out.push(Record::Header {
        schema: TRAJECTORY_SCHEMA.to_string(),
        frame_index: traj.frame_index,
        points: traj.len(),
    });
    for (i, (p, f)) in traj.points.iter().zip(&traj.flags).enumerate() {
        out.push(Record::Point {
            index: i,
            x: p.x,
            y: p.y,
            flag: *f,
        });
    }
    for d in diagnostics {
        out.push(Record::Frame {
            frame: d.frame,
            bbox: d.bbox,
            tracker_lost: d.tracker_lost,
            keypoints: d.keypoints,
            matches: d.matches,
            inliers: d.inliers,
            bridged: d.bridged,
            mean_inlier_error: d.mean_inlier_error,
            ransac_iterations: d.ransac_iterations,
        });
    }
    for d in diagnostics {
        if let Some(h) = d.homography {
            out.push(Record::Homography { frame: d.frame, h });
        }
    }
    out
}

/// Serializes to the line-delimited document, one JSON object per line.
pub fn export_string(traj: &Trajectory, diagnostics: &[FrameDiagnostics]) -> String {
    let mut s = String::new();
    for r in export_records(traj, diagnostics) {
        s.push_str(&serde_json::to_string(&r).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn export_trajectory(
    traj: &Trajectory,
    diagnostics: &[FrameDiagnostics],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    w.write_all(export_string(traj, diagnostics).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path.display(), e))
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        context: format!("export line {line}"),
        message: message.into(),
    }
}

pub fn parse_export(text: &str) -> Result<Export> {
    let mut header = None;
    let mut points = Vec::new();
    let mut flags = Vec::new();
    let mut diagnostics: Vec<FrameDiagnostics> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| bad(n, e.to_string()))?;
        match rec {
            Record::Header { schema, frame_index, points } => {
                if schema != TRAJECTORY_SCHEMA {
                    return Err(bad(n, format!("unsupported schema `{schema}`")));
                }
                if header.is_some() {
                    return Err(bad(n, "second header"));
                }
                header = Some((frame_index, points));
            }
            _ if header.is_none() => return Err(bad(n, "document must start with a header")),
            Record::Point { index, x, y, flag } => {
                if index != points.len() {
                    return Err(bad(n, format!("point {index} out of order")));
                }
                points.push(Point2::new(x, y));
                flags.push(flag);
            }
            Record::Frame {
                frame,
                bbox,
                tracker_lost,
                keypoints,
                matches,
                inliers,
                bridged,
                mean_inlier_error,
                ransac_iterations,
            } => {
                if frame != diagnostics.len() {
                    return Err(bad(n, format!("frame record {frame} out of order")));
                }
                diagnostics.push(FrameDiagnostics {
                    frame,
                    bbox,
                    tracker_lost,
                    keypoints,
                    matches,
                    inliers,
                    homography: None,
                    bridged,
                    mean_inlier_error,
                    ransac_iterations,
                });
            }
            Record::Homography { frame, h } => {
                let Some(d) = diagnostics.get_mut(frame).filter(|_| frame > 0) else {
                    return Err(bad(n, format!("homography for unknown frame {frame}")));
                };
                if d.homography.replace(h).is_some() {
                    return Err(bad(n, format!("duplicate homography for frame {frame}")));
                }
            }
        }
    }
    let Some((frame_index, count)) = header else {
        return Err(bad(0, "empty document"));
    };
    if count != points.len() {
        return Err(bad(0, format!("header announces {count} points, found {}", points.len())));
    }
    Ok(Export {
        trajectory: Trajectory::from_parts(points, flags, frame_index),
        diagnostics,
    })
}

pub fn import_trajectory(path: impl AsRef<Path>) -> Result<Export> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    parse_export(&text).map_err(|e| match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{}: {context}", path.display()),
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(frame: usize, h: Option<Homography>) -> FrameDiagnostics {
        FrameDiagnostics {
            frame,
            bbox: BBox::new(1.0, 2.0, 3.0, 4.0),
            tracker_lost: false,
            keypoints: 10,
            matches: 5,
            inliers: 4,
            homography: h,
            bridged: false,
            mean_inlier_error: Some(0.1),
            ransac_iterations: 7,
        }
    }

    #[test]
    fn one_point_export_has_no_homographies() {
        let t = Trajectory::from_parts(vec![Point2::new(25.0, 60.0)], vec![PointFlag::Measured], 0);
        let recs = export_records(&t, &[diag(0, None)]);
        assert_eq!(recs.iter().filter(|r| matches!(r, Record::Point { .. })).count(), 1);
        assert_eq!(recs.iter().filter(|r| matches!(r, Record::Homography { .. })).count(), 0);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let pts = vec![
            Point2::new(0.1 + 0.2, 1.0 / 3.0),
            Point2::new(-1e-300, 123456.789012345),
            Point2::new(f64::MIN_POSITIVE, 2.0f64.sqrt()),
        ];
        let flags = vec![PointFlag::Measured, PointFlag::Interpolated, PointFlag::OffHorizon];
        let t = Trajectory::from_parts(pts.clone(), flags, 2);
        let h = Homography::from_row_major([1.0, 0.1, 1.0 / 7.0, 0.0, 0.99, -3.3, 1e-5, 0.0, 1.0]).unwrap();
        let d = vec![diag(0, None), diag(1, Some(h)), diag(2, Some(h))];
        let back = parse_export(&export_string(&t, &d)).unwrap();
        for (a, b) in back.trajectory.points.iter().zip(&pts) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
        assert_eq!(back.trajectory, t);
        assert_eq!(back.diagnostics, d);
    }

    #[test]
    fn rejects_foreign_schema() {
        let doc = "{\"type\":\"header\",\"schema\":\"other/9\",\"frame_index\":0,\"points\":0}\n";
        assert!(matches!(parse_export(doc), Err(Error::Parse { .. })));
    }
}
