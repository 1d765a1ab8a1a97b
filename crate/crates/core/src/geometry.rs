//! Pinhole cameras, planes and ray/plane unprojection.
//!
//! Pixel coordinates are continuous: pixel `(c, r)` covers `[c, c+1) x [r, r+1)`
//! and is sampled at its center `(c + 0.5, r + 0.5)`. Poses are stored
//! world-to-camera, so a world point `X` maps to `R X + t` in the camera frame.

use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ElementId;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Rays with `|n . d|` below this are treated as parallel to the plane.
pub const PARALLEL_EPS: f64 = 1e-6;
/// Intersections farther than this along the ray (meters) are rejected.
pub const MAX_DEPTH: f64 = 1000.0;

const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum UnprojectError {
    #[error("ray is (nearly) parallel to the plane")]
    NearParallel,
    #[error("intersection lies behind the camera")]
    BehindCamera,
}

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("frame {frame}: rotation is not orthonormal (|R^T R - I| = {residual:.3e})")]
    NotOrthonormal { frame: usize, residual: f64 },
    #[error("frame {frame}: intrinsics must be upper triangular with positive focal lengths")]
    BadIntrinsics { frame: usize },
    #[error("frame {frame}: {what} has {got} entries, expected {expected}")]
    WrongLength {
        frame: usize,
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("frame {frame}: non-finite camera parameter")]
    NonFinite { frame: usize },
    #[error("duplicate camera for frame {0}")]
    Duplicate(usize),
    #[error("camera file: {0}")]
    Io(#[from] std::io::Error),
    #[error("camera file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One video frame's intrinsics and world-to-camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame_index: usize,
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub annotated: bool,
    k_inv: Matrix3<f64>,
}

impl CameraFrame {
    pub fn new(
        frame_index: usize,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vec3,
        annotated: bool,
    ) -> Result<Self, CameraError> {
        let finite = intrinsics
            .iter()
            .chain(rotation.iter())
            .chain(translation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(CameraError::NonFinite { frame: frame_index });
        }
        let residual = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if residual > ORTHONORMAL_TOL {
            return Err(CameraError::NotOrthonormal {
                frame: frame_index,
                residual,
            });
        }
        // determinant +1 as well, a reflection is not a pose
        if rotation.determinant() < 0.0 {
            return Err(CameraError::NotOrthonormal {
                frame: frame_index,
                residual: 2.0,
            });
        }
        let k = &intrinsics;
        let upper = k[(1, 0)] == 0.0 && k[(2, 0)] == 0.0 && k[(2, 1)] == 0.0;
        if !upper || k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 || k[(2, 2)] <= 0.0 {
            return Err(CameraError::BadIntrinsics { frame: frame_index });
        }
        let k_inv = intrinsics
            .try_inverse()
            .ok_or(CameraError::BadIntrinsics { frame: frame_index })?;
        Ok(Self {
            frame_index,
            intrinsics,
            rotation,
            translation,
            annotated,
            k_inv,
        })
    }

    /// Simple pinhole `K = [f 0 cx; 0 f cy; 0 0 1]`.
    pub fn pinhole(
        frame_index: usize,
        focal: f64,
        principal: Vec2,
        rotation: Matrix3<f64>,
        translation: Vec3,
        annotated: bool,
    ) -> Result<Self, CameraError> {
        let k = Matrix3::new(
            focal,
            0.0,
            principal.x,
            0.0,
            focal,
            principal.y,
            0.0,
            0.0,
            1.0,
        );
        Self::new(frame_index, k, rotation, translation, annotated)
    }

    pub fn inverse_intrinsics(&self) -> &Matrix3<f64> {
        &self.k_inv
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    pub fn to_world(&self, cam: &Vec3) -> Vec3 {
        self.rotation.transpose() * (cam - self.translation)
    }

    /// Unnormalized camera-frame direction `K^-1 [u, v, 1]`; its z component is positive.
    pub fn camera_direction(&self, pixel: &Vec2) -> Vec3 {
        self.k_inv * Vec3::new(pixel.x, pixel.y, 1.0)
    }

    /// Unnormalized world-frame direction `R^T K^-1 [u, v, 1]`.
    pub fn world_direction(&self, pixel: &Vec2) -> Vec3 {
        self.rotation.transpose() * self.camera_direction(pixel)
    }

    /// Expresses a world plane in this camera's frame.
    pub fn plane_in_camera(&self, plane: &Plane) -> (Vec3, f64) {
        let n = self.rotation * plane.normal;
        let d = plane.offset - n.dot(&self.translation);
        (n, d)
    }
}

/// Plane `{X : normal . X + offset = 0}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
    pub element_id: ElementId,
}

impl Plane {
    /// Normalizes `normal` to unit length and scales `offset` with it.
    /// Returns `None` for a zero or non-finite normal.
    pub fn new(normal: Vec3, offset: f64, element_id: ElementId) -> Option<Self> {
        let len = normal.norm();
        if !(len.is_finite() && len > 0.0 && offset.is_finite()) {
            return None;
        }
        Some(Self {
            normal: normal / len,
            offset: offset / len,
            element_id,
        })
    }

    /// From the 4-vector `(a, b, c, d)` describing `a x + b y + c z + d = 0`.
    pub fn from_coefficients(q: &Vector4<f64>, element_id: ElementId) -> Option<Self> {
        Self::new(Vec3::new(q[0], q[1], q[2]), q[3], element_id)
    }

    pub fn coefficients(&self) -> Vector4<f64> {
        Vector4::new(self.normal.x, self.normal.y, self.normal.z, self.offset)
    }

    pub fn signed_distance(&self, point: &Vec3) -> f64 {
        self.normal.dot(point) + self.offset
    }

    /// Closest point of the plane to the world origin.
    pub fn anchor(&self) -> Vec3 {
        -self.offset * self.normal
    }

    /// Angle in degrees between the two planes as unoriented surfaces.
    pub fn angle_to(&self, other: &Plane) -> f64 {
        self.normal
            .dot(&other.normal)
            .abs()
            .min(1.0)
            .acos()
            .to_degrees()
    }

    /// Intersection line as (point, unit direction); `None` when parallel.
    pub fn intersection_line(&self, other: &Plane) -> Option<(Vec3, Vec3)> {
        let dir = self.normal.cross(&other.normal);
        let len2 = dir.norm_squared();
        if len2 < 1e-12 {
            return None;
        }
        // point on both planes closest to the origin
        let point = (self.normal.cross(&dir) * other.offset
            - other.normal.cross(&dir) * self.offset)
            / len2;
        Some((point, dir / len2.sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, s: f64) -> Vec3 {
        self.origin + self.direction * s
    }
}

/// Back-projects a pixel into a world ray from the camera center.
pub fn pixel_ray(camera: &CameraFrame, pixel: &Vec2) -> Ray {
    let dir = camera.world_direction(pixel);
    Ray {
        origin: camera.center(),
        direction: dir.normalize(),
    }
}

/// Ray parameter of the intersection with `plane`, enforcing the validity rules.
pub fn intersect(ray: &Ray, plane: &Plane) -> Result<f64, UnprojectError> {
    let denom = plane.normal.dot(&ray.direction);
    if denom.abs() <= PARALLEL_EPS {
        return Err(UnprojectError::NearParallel);
    }
    let s = -(plane.normal.dot(&ray.origin) + plane.offset) / denom;
    if !(s > 0.0) {
        return Err(UnprojectError::BehindCamera);
    }
    if s > MAX_DEPTH {
        return Err(UnprojectError::NearParallel);
    }
    Ok(s)
}

/// Intersects the pixel's viewing ray with `plane`.
pub fn unproject(
    pixel: &Vec2,
    plane: &Plane,
    camera: &CameraFrame,
) -> Result<Vec3, UnprojectError> {
    let ray = pixel_ray(camera, pixel);
    let s = intersect(&ray, plane)?;
    Ok(ray.at(s))
}

/// Pinhole projection of a world point.
pub fn project(camera: &CameraFrame, point: &Vec3) -> Result<Vec2, UnprojectError> {
    let cam = camera.to_camera(point);
    if !(cam.z > 0.0) {
        return Err(UnprojectError::BehindCamera);
    }
    let h = camera.intrinsics * cam;
    Ok(Vec2::new(h.x / h.z, h.y / h.z))
}

/// On-disk camera record; matrices are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub frame_index: usize,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    pub annotated: bool,
}

fn matrix_from_row_major(
    frame: usize,
    what: &'static str,
    v: &[f64],
) -> Result<Matrix3<f64>, CameraError> {
    if v.len() != 9 {
        return Err(CameraError::WrongLength {
            frame,
            what,
            got: v.len(),
            expected: 9,
        });
    }
    Ok(Matrix3::from_row_slice(v))
}

fn row_major(m: &Matrix3<f64>) -> Vec<f64> {
    (0..3)
        .flat_map(|r| (0..3).map(move |c| m[(r, c)]))
        .collect()
}

impl TryFrom<CameraRecord> for CameraFrame {
    type Error = CameraError;

    fn try_from(rec: CameraRecord) -> Result<Self, Self::Error> {
        let f = rec.frame_index;
        let k = matrix_from_row_major(f, "K", &rec.k)?;
        let r = matrix_from_row_major(f, "R", &rec.r)?;
        if rec.t.len() != 3 {
            return Err(CameraError::WrongLength {
                frame: f,
                what: "t",
                got: rec.t.len(),
                expected: 3,
            });
        }
        CameraFrame::new(
            f,
            k,
            r,
            Vec3::new(rec.t[0], rec.t[1], rec.t[2]),
            rec.annotated,
        )
    }
}

impl From<&CameraFrame> for CameraRecord {
    fn from(c: &CameraFrame) -> Self {
        Self {
            frame_index: c.frame_index,
            k: row_major(&c.intrinsics),
            r: row_major(&c.rotation),
            t: c.translation.iter().copied().collect(),
            annotated: c.annotated,
        }
    }
}

/// Parses a camera file, returning frames sorted by index.
pub fn parse_cameras(text: &str) -> Result<Vec<CameraFrame>, CameraError> {
    let records: Vec<CameraRecord> = serde_json::from_str(text)?;
    let mut cams = records
        .into_iter()
        .map(CameraFrame::try_from)
        .collect::<Result<Vec<_>, _>>()?;
    cams.sort_by_key(|c| c.frame_index);
    for w in cams.windows(2) {
        if w[0].frame_index == w[1].frame_index {
            return Err(CameraError::Duplicate(w[0].frame_index));
        }
    }
    Ok(cams)
}

pub fn load_cameras(path: &Path) -> Result<Vec<CameraFrame>, CameraError> {
    parse_cameras(&std::fs::read_to_string(path)?)
}

pub fn cameras_to_json(cams: &[CameraFrame]) -> String {
    let recs: Vec<CameraRecord> = cams.iter().map(CameraRecord::from).collect();
    serde_json::to_string_pretty(&recs).expect("camera records serialize")
}

/// Rotation taking world vectors into a camera looking along `forward` with image-y along `down`-ish.
/// The camera frame is x right, y down, z forward.
pub fn look_rotation(forward: &Vec3, up: &Vec3) -> Matrix3<f64> {
    let z = forward.normalize();
    let x = z.cross(up).normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}
