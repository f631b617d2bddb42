//! Athlete trajectory reconstruction from moving-camera sports video.
//!
//! Every frame's athlete footpoint is appended to a trajectory that is kept in
//! the current frame's pixel coordinates; inter-frame homographies estimated
//! from background keypoints carry the older points along as the camera
//! moves.
//!
//! ```
//! use piste::geom::{Homography, Point2};
//!
//! let h = Homography::translation(5.0, -3.0);
//! assert_eq!(h.apply(Point2::new(1.0, 1.0)).unwrap(), Point2::new(6.0, -2.0));
//! ```

pub mod csvio;
pub mod error;
pub mod features;
pub mod frame;
pub mod geom;
pub mod io;
pub mod masking;
pub mod matching;
pub mod ransac;
pub mod reconstruction;
pub mod render;
pub mod synthetic;
pub mod tracking;

pub use error::{Error, Result};
pub use frame::Frame;
pub use geom::{Correspondence, Homography, Point2};
pub use reconstruction::{Engine, EngineConfig, FrameDiagnostics, PointFlag, Trajectory};
pub use tracking::{footpoint, BBox};
