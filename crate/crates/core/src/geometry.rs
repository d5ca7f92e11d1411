//! Pinhole camera math and rotation distances.
//!
//! Pixel coordinates are `(u, v)` with `u` to the right and `v` down; a pixel
//! `(i, j)` covers `[i, i+1) × [j, j+1)`.

use core::f64::consts::PI;

use crate::error::{Error, Result};

const ROTATION_TOL: f64 = 1e-5;

/// Axis-aligned square given by its centre and side length, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SquareBox {
    pub center: [f64; 2],
    pub size: f64,
}

impl SquareBox {
    pub fn new(center: [f64; 2], size: f64) -> Self {
        Self { center, size }
    }

    /// `(x0, y0, x1, y1)` extents.
    pub fn extents(&self) -> (f64, f64, f64, f64) {
        let h = self.size / 2.0;
        (self.center[0] - h, self.center[1] - h, self.center[0] + h, self.center[1] + h)
    }

    /// Intersection over union of two squares; zero when either is degenerate.
    pub fn iou(&self, other: &SquareBox) -> f64 {
        let (ax0, ay0, ax1, ay1) = self.extents();
        let (bx0, by0, bx1, by1) = other.extents();
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
        let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
        let inter = iw * ih;
        let union = self.size * self.size + other.size * other.size - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

/// A proper rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]"))]
pub struct Rotation3([[f64; 3]; 3]);

impl Rotation3 {
    pub const IDENTITY: Rotation3 = Rotation3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Validates orthonormality (`‖RᵀR − I‖∞ ≤ 1e-5`) and `det R = 1 ± 1e-5`.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let r = Rotation3(m);
        let rtr = r.transpose().mul(&r);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                let d = rtr.0[i][j] - want;
                if !(d.abs() <= ROTATION_TOL) {
                    return Err(Error::Validation(alloc::format!(
                        "matrix is not orthonormal (RᵀR[{i}][{j}] off by {d:e})"
                    )));
                }
            }
        }
        let det = r.det();
        if !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::Validation(alloc::format!("determinant {det} is not 1")));
        }
        Ok(r)
    }

    /// In-plane rotation about the optical (z) axis.
    pub fn about_z(theta: f64) -> Self {
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        Rotation3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rotation by `angle` about `axis` (normalised internally; zero axis gives identity).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = libm::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let t = 1.0 - c;
        Rotation3([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    pub fn transpose(&self) -> Rotation3 {
        let m = &self.0;
        Rotation3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul(&self, other: &Rotation3) -> Rotation3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        Rotation3(out)
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation3 {
    type Error = Error;

    fn try_from(m: [[f64; 3]; 3]) -> Result<Self> {
        Rotation3::new(m)
    }
}

impl From<Rotation3> for [[f64; 3]; 3] {
    fn from(r: Rotation3) -> Self {
        r.0
    }
}

/// Geodesic distance between two rotations, normalised to `[0, 1]`:
/// `arccos((tr(RiᵀRj) − 1) / 2) / π`, with the cosine clamped to `[−1, 1]`.
pub fn geodesic_distance(ri: &Rotation3, rj: &Rotation3) -> f64 {
    let cos = ((ri.transpose().mul(rj).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    libm::acos(cos) / PI
}

/// Pinhole intrinsics plus the virtual focal length and model diameter that
/// tie pixel size to depth.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub f_virtual: f64,
    pub s_3d: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.f_virtual, self.s_3d]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("intrinsics contain non-finite values".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Validation(alloc::format!(
                "K is singular or mirrored (fx={}, fy={})",
                self.fx,
                self.fy
            )));
        }
        if !(self.f_virtual > 0.0) || !(self.s_3d > 0.0) {
            return Err(Error::Validation("f_virtual and s_3d must be positive".into()));
        }
        Ok(())
    }

    pub fn k_matrix(&self) -> [[f64; 3]; 3] {
        [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
    }

    /// Pixel coordinates of a camera-frame point with `z > 0`.
    pub fn project(&self, t: &Translation3) -> Result<[f64; 2]> {
        if !(t.z > 0.0) {
            return Err(Error::param("cannot project a point with z <= 0"));
        }
        Ok([self.fx * t.x / t.z + self.cx, self.fy * t.y / t.z + self.cy])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[f64; 3]", into = "[f64; 3]"))]
pub struct Translation3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Translation3 {
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
    }
}

impl From<[f64; 3]> for Translation3 {
    fn from(v: [f64; 3]) -> Self {
        Translation3 { x: v[0], y: v[1], z: v[2] }
    }
}

impl From<Translation3> for [f64; 3] {
    fn from(t: Translation3) -> Self {
        [t.x, t.y, t.z]
    }
}

/// Apparent object size in pixels at depth `d`: `f̃ · s_3d / d`.
pub fn ground_truth_size(intr: &CameraIntrinsics, depth: f64) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(Error::param(alloc::format!("depth must be positive, got {depth}")));
    }
    Ok(intr.f_virtual * intr.s_3d / depth)
}

/// Lifts a location prior to a camera-frame translation:
/// `T = (f̃ · s_3d / s_q) · K⁻¹ [u, v, 1]ᵀ`.
pub fn recover_translation(center: [f64; 2], size: f64, intr: &CameraIntrinsics) -> Result<Translation3> {
    intr.validate()?;
    if !(size > 0.0) {
        return Err(Error::param(alloc::format!("size must be positive, got {size}")));
    }
    let depth = intr.f_virtual * intr.s_3d / size;
    // K⁻¹ for zero skew, written out.
    let ray = [(center[0] - intr.cx) / intr.fx, (center[1] - intr.cy) / intr.fy, 1.0];
    Ok(Translation3 { x: depth * ray[0], y: depth * ray[1], z: depth })
}
