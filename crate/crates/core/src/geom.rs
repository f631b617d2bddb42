//! Planar projective geometry: points, homographies, DLT fitting and
//! transfer errors.
//!
//! Homographies act on column vectors: `p' = dehomogenize(M · [x, y, 1]ᵀ)`.
//! Every [`Homography`] value is stored at canonical scale, so two matrices
//! that differ only by a nonzero factor compare equal after construction.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points whose mapped homogeneous coordinate falls at or below this value
/// are on the projective horizon.
pub const HORIZON_EPS: f64 = 1e-9;

/// Relative size of `m[2][2]` (against the Frobenius norm) below which the
/// canonical scale switches from `m[2][2] = 1` to unit norm.
const CANONICAL_M22_EPS: f64 = 1e-9;

/// Minimum `|det|` of a canonical homography.
const MIN_DET: f64 = 1e-12;

/// Default ratio between the two smallest DLT singular values below which the
/// system is treated as rank deficient.
pub const DEFAULT_DEGENERACY_RATIO: f64 = 10.0;

/// Second-smallest singular value relative to the largest below which the
/// DLT system is numerically rank deficient regardless of the ratio test.
const RANK_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("point maps onto the projective horizon (w = {w:e})")]
    PointAtInfinity { w: f64 },
    #[error("matrix is singular (det = {det:e})")]
    SingularMatrix { det: f64 },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("need at least 4 correspondences, got {0}")]
    InsufficientData(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A source/destination pair: `src` in frame t−1, `dst` in frame t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: Point2,
    pub dst: Point2,
}

impl Correspondence {
    pub const fn new(src: Point2, dst: Point2) -> Self {
        Self { src, dst }
    }
}

/// Invertible 3×3 projective map, stored at canonical scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Uniform scaling by `s` about `(cx, cy)`.
    pub fn scaling_about(s: f64, cx: f64, cy: f64) -> Result<Self, GeomError> {
        Self::from_matrix(Matrix3::new(
            s,
            0.0,
            cx - s * cx,
            0.0,
            s,
            cy - s * cy,
            0.0,
            0.0,
            1.0,
        ))
    }

    /// Counter-clockwise rotation (in image axes, y down) by `radians` about `(cx, cy)`.
    pub fn rotation_about(radians: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = radians.sin_cos();
        Self {
            m: Matrix3::new(
                c,
                -s,
                cx - c * cx + s * cy,
                s,
                c,
                cy - s * cx - c * cy,
                0.0,
                0.0,
                1.0,
            ),
        }
    }

    /// Canonicalizes `m` and checks invertibility.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeomError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite("homography matrix"));
        }
        let m = canonicalize(&m);
        let det = m.determinant();
        // Frobenius-normalized determinant keeps the check scale free.
        let norm = m.norm();
        let rel_det = if norm > 0.0 { det / norm.powi(3) } else { 0.0 };
        if !(det.abs() > MIN_DET && rel_det.abs() > MIN_DET) {
            return Err(GeomError::SingularMatrix { det });
        }
        Ok(Self { m })
    }

    pub fn from_row_major(v: [f64; 9]) -> Result<Self, GeomError> {
        Self::from_matrix(Matrix3::from_row_slice(&v))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, GeomError> {
        apply_homography(self, p)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &Homography) -> Homography {
        compose(self, first)
    }

    pub fn inverse(&self) -> Result<Homography, GeomError> {
        invert(self)
    }

    /// Maps a homogeneous vector without dehomogenizing.
    pub fn apply_homogeneous(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.m * Vector3::new(v[0], v[1], v[2]);
        [r[0], r[1], r[2]]
    }

    /// Largest elementwise difference to `other`.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.m - other.m).amax()
    }
}

impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Homography::from_row_major(v).map_err(serde::de::Error::custom)
    }
}

/// Scale-normalizes a matrix: `m[2][2] = 1` when it is not vanishing
/// (relative to the Frobenius norm), unit Frobenius norm with a fixed sign
/// otherwise. Idempotent.
pub fn canonicalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = m.norm();
    if norm == 0.0 || !norm.is_finite() {
        return *m;
    }
    let m22 = m[(2, 2)];
    if m22.abs() / norm > CANONICAL_M22_EPS {
        if m22 == 1.0 {
            return *m;
        }
        return m / m22;
    }
    let mut out = if (norm - 1.0).abs() <= 8.0 * f64::EPSILON {
        *m
    } else {
        m / norm
    };
    // Sign: first entry (row-major) of largest magnitude is positive.
    let mut pivot = 0.0f64;
    for r in 0..3 {
        for c in 0..3 {
            if out[(r, c)].abs() > pivot.abs() {
                pivot = out[(r, c)];
            }
        }
    }
    if pivot < 0.0 {
        out = -out;
    }
    out
}

pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2, GeomError> {
    let m = &h.m;
    let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
    if !(w.abs() > HORIZON_EPS) {
        return Err(GeomError::PointAtInfinity { w });
    }
    let x = (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w;
    let y = (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w;
    Ok(Point2::new(x, y))
}

/// `h2 ∘ h1`: the map that applies `h1` first, then `h2`.
pub fn compose(h2: &Homography, h1: &Homography) -> Homography {
    Homography {
        m: canonicalize(&(h2.m * h1.m)),
    }
}

pub fn invert(h: &Homography) -> Result<Homography, GeomError> {
    let det = h.m.determinant();
    match h.m.try_inverse() {
        Some(inv) => Homography::from_matrix(inv),
        None => Err(GeomError::SingularMatrix { det }),
    }
}

/// Forward plus backward transfer residual, in pixels. `+∞` when either
/// mapping crosses the horizon.
pub fn symmetric_transfer_error(h: &Homography, c: &Correspondence) -> f64 {
    match h.inverse() {
        Ok(inv) => transfer_error_pair(h, &inv, c),
        Err(_) => f64::INFINITY,
    }
}

/// [`symmetric_transfer_error`] with a precomputed inverse.
pub fn transfer_error_pair(h: &Homography, h_inv: &Homography, c: &Correspondence) -> f64 {
    let fwd = match h.apply(c.src) {
        Ok(p) => p.distance(&c.dst),
        Err(_) => return f64::INFINITY,
    };
    let bwd = match h_inv.apply(c.dst) {
        Ok(p) => p.distance(&c.src),
        Err(_) => return f64::INFINITY,
    };
    fwd + bwd
}

/// Hartley conditioning: centroid to the origin, mean distance √2.
fn normalizing_transform(pts: impl Iterator<Item = Point2> + Clone) -> Matrix3<f64> {
    let mut n = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in pts.clone() {
        cx += p.x;
        cy += p.y;
        n += 1.0;
    }
    cx /= n;
    cy /= n;
    let mean_dist = pts.map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: Point2) -> (f64, f64) {
    (
        t[(0, 0)] * p.x + t[(0, 2)],
        t[(1, 1)] * p.y + t[(1, 2)],
    )
}

/// Least-squares DLT homography mapping `src` onto `dst`.
pub fn dlt_homography(corrs: &[Correspondence]) -> Result<Homography, GeomError> {
    dlt_homography_with_ratio(corrs, DEFAULT_DEGENERACY_RATIO)
}

/// DLT with an explicit degeneracy threshold on the ratio of the two
/// smallest singular values.
pub fn dlt_homography_with_ratio(
    corrs: &[Correspondence],
    degeneracy_ratio: f64,
) -> Result<Homography, GeomError> {
    let n = corrs.len();
    if n < 4 {
        return Err(GeomError::InsufficientData(n));
    }
    if corrs.iter().any(|c| !c.src.is_finite() || !c.dst.is_finite()) {
        return Err(GeomError::NonFinite("correspondence"));
    }
    let t_src = normalizing_transform(corrs.iter().map(|c| c.src));
    let t_dst = normalizing_transform(corrs.iter().map(|c| c.dst));

    // Pad to at least 9 rows so the SVD exposes the full right singular basis.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, c) in corrs.iter().enumerate() {
        let (x, y) = transform(&t_src, c.src);
        let (u, v) = transform(&t_dst, c.dst);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or(GeomError::DegenerateConfiguration("SVD failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let largest = sv[order[0]];
    let smallest = sv[order[8]];
    let second = sv[order[7]];
    let rank_deficient = second <= RANK_EPS * largest
        || (smallest > 0.0 && second / smallest < degeneracy_ratio)
        || (smallest == 0.0 && second == 0.0);
    if rank_deficient {
        return Err(GeomError::DegenerateConfiguration(format!(
            "smallest singular values {second:e} / {smallest:e}"
        )));
    }
    let row = v_t.row(order[8]);
    let hn = Matrix3::new(
        row[0], row[1], row[2], row[3], row[4], row[5], row[6], row[7], row[8],
    );
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(GeomError::DegenerateConfiguration("coincident points".into()))?;
    Homography::from_matrix(t_dst_inv * hn * t_src).map_err(|e| match e {
        GeomError::SingularMatrix { det } => {
            GeomError::DegenerateConfiguration(format!("fitted matrix is singular (det = {det:e})"))
        }
        other => other,
    })
}

/// Unsigned area of the triangle `abc`.
pub fn triangle_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs()
}
