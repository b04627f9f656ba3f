use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::geom::{Mat3, Vec3};
use crate::rng;
use crate::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Square image with the principal point at the center and focal length
    /// `focal_ratio · width`.
    pub fn centered(width: u32, height: u32, focal_ratio: f64) -> Self {
        Intrinsics {
            focal: focal_ratio * width as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }
}

/// Pinhole camera. `rotation` maps camera axes (x right, y up, z backward)
/// to world axes and `translation` is the camera center, i.e. the pose is
/// camera-to-world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(intrinsics.focal > 0.0) || !intrinsics.focal.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "focal length must be positive, got {}",
                intrinsics.focal
            )));
        }
        if intrinsics.width == 0 || intrinsics.height == 0 {
            return Err(Error::InvalidArgument("image must be non-empty".into()));
        }
        if rotation.orthonormality_error() > 1e-9 {
            return Err(Error::InvalidArgument("rotation is not orthonormal".into()));
        }
        Ok(Camera {
            focal: intrinsics.focal,
            cx: intrinsics.cx,
            cy: intrinsics.cy,
            width: intrinsics.width,
            height: intrinsics.height,
            rotation,
            translation,
        })
    }

    /// Camera at `origin` whose optical axis (−z) points at `target`, with
    /// world +z as the up hint.
    pub fn look_at(intrinsics: Intrinsics, origin: Vec3, target: Vec3) -> Result<Self> {
        let back = (origin - target).normalized();
        let mut up = Vec3::new(0.0, 0.0, 1.0);
        if back.cross(up).norm() < 1e-6 {
            up = Vec3::new(0.0, 1.0, 0.0);
        }
        let right = up.cross(back).normalized();
        let cam_up = back.cross(right);
        Self::new(intrinsics, Mat3::from_columns(right, cam_up, back), origin)
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            focal: self.focal,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        }
    }

    /// Unit optical axis in world space.
    pub fn forward(&self) -> Vec3 {
        -self.rotation.column(2)
    }

    /// Projects a world point to continuous pixel coordinates; `None` when
    /// the point is behind the camera.
    pub fn project(&self, p: Vec3) -> Option<[f64; 2]> {
        let c = self.rotation.transpose().mul_vec(p - self.translation);
        if c.z() >= 0.0 {
            return None;
        }
        let z = -c.z();
        Some([self.cx + self.focal * c.x() / z, self.cy - self.focal * c.y() / z])
    }

    /// 4×4 row-major camera-to-world matrix.
    pub fn transform_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation.0;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_transform_matrix(intrinsics: Intrinsics, m: &[[f64; 4]; 4]) -> Result<Self> {
        let rotation = Mat3([
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]);
        Self::new(intrinsics, rotation, Vec3::new(m[0][3], m[1][3], m[2][3]))
    }
}

/// `n` cameras on the upper hemisphere of `radius` around `look_at`, each
/// aimed at it. Directions are uniform over the hemisphere's surface.
pub fn sample_hemisphere_cameras(
    n: usize,
    radius: f64,
    look_at: Vec3,
    seed: u64,
    intrinsics: Intrinsics,
) -> Result<Vec<Camera>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one camera".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let mut r = rng::rng(seed);
    (0..n)
        .map(|_| {
            let z: f64 = r.random();
            let phi = r.random::<f64>() * std::f64::consts::TAU;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let dir = Vec3::new(rho * phi.cos(), rho * phi.sin(), z);
            Camera::look_at(intrinsics, look_at + dir * radius, look_at)
        })
        .collect()
}
