//! Box parametrization and RoI rectangles.

use crate::geometry::{project_point, BevGrid, CameraModel};
use crate::numerics::{bilinear_sample, Tensor};
use crate::scenesim::Box3D;
use crate::Result;

/// Box vector layout: `x, y, z, ln w, ln l, ln h, sin yaw, cos yaw, vx, vy`.
pub const BOX_DIM: usize = 10;

pub fn encode_box(b: &Box3D) -> [f64; BOX_DIM] {
    [
        b.center[0],
        b.center[1],
        b.center[2],
        b.size[0].ln(),
        b.size[1].ln(),
        b.size[2].ln(),
        libm::sin(b.yaw),
        libm::cos(b.yaw),
        b.velocity[0],
        b.velocity[1],
    ]
}

/// Yaw in `[-pi, pi)` from a possibly unnormalized `(sin, cos)` pair.
pub fn yaw_of(sin: f64, cos: f64) -> f64 {
    let y = libm::atan2(sin, cos);
    if y >= std::f64::consts::PI {
        y - 2.0 * std::f64::consts::PI
    } else {
        y
    }
}

pub fn decode_box(v: &[f64], class_id: usize) -> Box3D {
    Box3D {
        center: [v[0], v[1], v[2]],
        size: [v[3].exp(), v[4].exp(), v[5].exp()],
        yaw: yaw_of(v[6], v[7]),
        class_id,
        velocity: [v[8], v[9]],
    }
}

/// Per-component multiplier turning a head's raw delta into a box-vector
/// increment: the center moves in BEV cells, everything else is additive.
pub fn delta_scale(grid: &BevGrid) -> [f64; BOX_DIM] {
    let (dy, dx) = grid.cell_size();
    [dx, dy, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
}

/// Axis-aligned rectangle in continuous map coordinates where cell `k`
/// spans `[k, k + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub row0: f64,
    pub col0: f64,
    pub row1: f64,
    pub col1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.row1 - self.row0).max(0.0) * (self.col1 - self.col0).max(0.0)
    }

    fn clamp(self, h: f64, w: f64) -> Rect {
        Rect {
            row0: self.row0.clamp(0.0, h),
            col0: self.col0.clamp(0.0, w),
            row1: self.row1.clamp(0.0, h),
            col1: self.col1.clamp(0.0, w),
        }
    }
}

/// Image RoI of a box on the feature-resolution camera `fcam`: min/max over
/// the corners in front of the camera, clamped to the map. `None` when no
/// corner has positive depth.
pub fn roi_image(b: &Box3D, fcam: &CameraModel) -> Option<Rect> {
    let mut r: Option<Rect> = None;
    for corner in b.corners() {
        if let Ok(q) = project_point(corner, fcam) {
            r = Some(match r {
                None => Rect { row0: q.v, col0: q.u, row1: q.v, col1: q.u },
                Some(r) => Rect {
                    row0: r.row0.min(q.v),
                    col0: r.col0.min(q.u),
                    row1: r.row1.max(q.v),
                    col1: r.col1.max(q.u),
                },
            });
        }
    }
    r.map(|r| r.clamp(fcam.height as f64, fcam.width as f64))
}

/// BEV RoI: the axis-aligned hull of the enlarged, rotated footprint, in
/// continuous cell coordinates, clamped to the grid.
pub fn roi_bev(b: &Box3D, grid: &BevGrid, enlarge: f64) -> Rect {
    let mut r = Rect {
        row0: f64::INFINITY,
        col0: f64::INFINITY,
        row1: f64::NEG_INFINITY,
        col1: f64::NEG_INFINITY,
    };
    for [x, y] in b.footprint(enlarge) {
        let (row, col) = grid.continuous(x, y);
        r = Rect {
            row0: r.row0.min(row),
            col0: r.col0.min(col),
            row1: r.row1.max(row),
            col1: r.col1.max(col),
        };
    }
    r.clamp(grid.h as f64, grid.w as f64)
}

/// Index-space sampling positions of an `S x S` RoI grid, row-major.
pub fn roi_grid(rect: &Rect, s: usize) -> Vec<(f64, f64)> {
    let (hs, ws) = ((rect.row1 - rect.row0) / s as f64, (rect.col1 - rect.col0) / s as f64);
    let mut out = Vec::with_capacity(s * s);
    for i in 0..s {
        for j in 0..s {
            out.push((
                rect.row0 + (i as f64 + 0.5) * hs - 0.5,
                rect.col0 + (j as f64 + 0.5) * ws - 0.5,
            ));
        }
    }
    out
}

/// `S x S x C` block of bilinear reads of `map: [H, W, C]` over `rect`.
pub fn roi_align(map: &Tensor, rect: &Rect, s: usize) -> Result<Tensor> {
    let c = *map.shape().last().unwrap_or(&0);
    let mut out = Vec::with_capacity(s * s * c);
    for (r, col) in roi_grid(rect, s) {
        out.extend(bilinear_sample(map, r, col)?);
    }
    Tensor::new(&[s, s, c], out)
}
