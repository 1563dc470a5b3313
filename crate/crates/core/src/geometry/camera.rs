use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = [f64; 3];

/// Pinhole camera: intrinsics `k`, world-to-camera rigid transform `e`.
///
/// Camera frame: x right, y down, z forward. A pixel `(row, col)` covers
/// `[col, col+1) x [row, row+1)` in continuous `(u, v)` coordinates, so its
/// center is `(col + 0.5, row + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub k: [[f64; 3]; 3],
    pub e: [[f64; 4]; 4],
    pub width: usize,
    pub height: usize,
}

/// Result of projecting a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    pub fn in_image(&self, cam: &CameraModel) -> bool {
        self.u >= 0.0 && self.v >= 0.0 && self.u < cam.width as f64 && self.v < cam.height as f64
    }

    /// Integer `(row, col)` of the pixel containing the projection.
    pub fn pixel(&self) -> (usize, usize) {
        (self.v.floor() as usize, self.u.floor() as usize)
    }
}

impl CameraModel {
    pub fn new(k: [[f64; 3]; 3], e: [[f64; 4]; 4], width: usize, height: usize) -> Result<Self> {
        let cam = CameraModel { k, e, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx() > 0.0 && self.fy() > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        let r = self.rotation();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|t| r[i][t] * r[j][t]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("extrinsic rotation is not orthonormal".into()));
                }
            }
        }
        if (det3(&r) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("extrinsic rotation is a reflection".into()));
        }
        if self.e[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidArgument("extrinsic last row must be [0 0 0 1]".into()));
        }
        Ok(())
    }

    pub fn intrinsics(fx: f64, fy: f64, cx: f64, cy: f64) -> [[f64; 3]; 3] {
        [[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]]
    }

    pub fn identity_extrinsics() -> [[f64; 4]; 4] {
        let mut e = [[0.0; 4]; 4];
        for (i, row) in e.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        e
    }

    /// Level camera at `position` looking along world yaw `yaw` (world z up).
    pub fn level(position: Vec3, yaw: f64, fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let (s, c) = (libm::sin(yaw), libm::cos(yaw));
        let r = [[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]];
        let mut e = [[0.0; 4]; 4];
        for i in 0..3 {
            e[i][..3].copy_from_slice(&r[i]);
            e[i][3] = -(0..3).map(|t| r[i][t] * position[t]).sum::<f64>();
        }
        e[3][3] = 1.0;
        Self::new(Self::intrinsics(fx, fy, cx, cy), e, width, height)
    }

    pub fn fx(&self) -> f64 {
        self.k[0][0]
    }
    pub fn fy(&self) -> f64 {
        self.k[1][1]
    }
    pub fn cx(&self) -> f64 {
        self.k[0][2]
    }
    pub fn cy(&self) -> f64 {
        self.k[1][2]
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            r[i].copy_from_slice(&self.e[i][..3]);
        }
        r
    }

    pub fn translation(&self) -> Vec3 {
        [self.e[0][3], self.e[1][3], self.e[2][3]]
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.e[i][0] * p[0] + self.e[i][1] * p[1] + self.e[i][2] * p[2] + self.e[i][3];
        }
        out
    }

    pub fn camera_to_world(&self, pc: Vec3) -> Vec3 {
        let r = self.rotation();
        let t = self.translation();
        let d = [pc[0] - t[0], pc[1] - t[1], pc[2] - t[2]];
        [
            r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
            r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
            r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
        ]
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.camera_to_world([0.0, 0.0, 0.0])
    }

    /// World-frame direction of the camera axis `axis` (0 = right, 2 = forward).
    pub fn axis(&self, axis: usize) -> Vec3 {
        let r = self.rotation();
        r[axis]
    }

    /// Camera downscaled by an integer feature stride.
    pub fn scaled(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.width % stride != 0 || self.height % stride != 0 {
            return Err(Error::InvalidArgument(format!(
                "image {}x{} is not divisible by stride {stride}",
                self.width, self.height
            )));
        }
        let s = stride as f64;
        let mut k = self.k;
        for row in k.iter_mut().take(2) {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(CameraModel {
            k,
            e: self.e,
            width: self.width / stride,
            height: self.height / stride,
        })
    }
}

/// Projects a world point to continuous pixel coordinates and camera depth.
pub fn project_point(p: Vec3, cam: &CameraModel) -> Result<Projection> {
    let pc = cam.world_to_camera(p);
    if pc[2] <= 0.0 {
        return Err(Error::BehindCamera(pc[2]));
    }
    let k = &cam.k;
    let u = (k[0][0] * pc[0] + k[0][1] * pc[1]) / pc[2] + k[0][2];
    let v = k[1][1] * pc[1] / pc[2] + k[1][2];
    Ok(Projection { u, v, depth: pc[2] })
}

/// Inverse of [`project_point`] for a known camera depth.
pub fn lift_pixel(u: f64, v: f64, depth: f64, cam: &CameraModel) -> Result<Vec3> {
    if !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!("lift depth must be positive, got {depth}")));
    }
    let k = &cam.k;
    let y = (v - k[1][2]) / k[1][1] * depth;
    let x = ((u - k[0][2]) * depth - k[0][1] * y) / k[0][0];
    Ok(cam.camera_to_world([x, y, depth]))
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}
