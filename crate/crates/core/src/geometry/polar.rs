//! Polar resampling of the BEV map around a camera.
//!
//! Ray `i` of the polar grid points along the azimuth of image-feature column
//! `i`, so a polar ray and the image column with the same index look at the
//! same vertical slice of the world (exactly so for level cameras). Radial
//! bins are uniform: bin `r` is centered at `(r + 0.5) * r_max / R`.

use serde::{Deserialize, Serialize};

use super::bev::BevGrid;
use super::camera::CameraModel;
use crate::numerics::{bilinear_sample, Tensor};
use crate::{Error, Result};

/// Azimuth of image-feature column `i` relative to the optical axis, using the
/// center pixel of the column's stride block: `atan(((i + 0.5) * stride - cx) / fx)`.
pub fn azimuth_of_column(i: usize, cam: &CameraModel, stride: usize) -> Result<f64> {
    let cols = cam.width / stride.max(1);
    if stride == 0 || i >= cols {
        return Err(Error::OutOfRange(format!("column {i} of {cols} feature columns")));
    }
    let u = (i as f64 + 0.5) * stride as f64;
    Ok(libm::atan((u - cam.cx()) / cam.fx()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub r_bins: usize,
    /// Number of rays; equals the image feature width.
    pub width: usize,
    pub r_max: f64,
    pub origin: [f64; 2],
    pub forward: [f64; 2],
    pub right: [f64; 2],
    fx: f64,
    cx: f64,
    stride: usize,
}

impl PolarGrid {
    /// Polar grid centered on `cam` (full image resolution) whose rays follow
    /// the columns of a stride-`stride` feature map.
    pub fn for_camera(cam: &CameraModel, stride: usize, r_bins: usize, r_max: f64) -> Result<Self> {
        if r_bins == 0 || !(r_max > 0.0) || stride == 0 || cam.width / stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "polar grid needs R >= 1, r_max > 0, a non-empty feature width (R={r_bins}, r_max={r_max})"
            )));
        }
        let c = cam.center();
        let horiz = |v: [f64; 3]| -> Result<[f64; 2]> {
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if n < 1e-9 {
                return Err(Error::InvalidArgument("camera axis is vertical".into()));
            }
            Ok([v[0] / n, v[1] / n])
        };
        Ok(PolarGrid {
            r_bins,
            width: cam.width / stride,
            r_max,
            origin: [c[0], c[1]],
            forward: horiz(cam.axis(2))?,
            right: horiz(cam.axis(0))?,
            fx: cam.fx(),
            cx: cam.cx(),
            stride,
        })
    }

    pub fn bin_size(&self) -> f64 {
        self.r_max / self.r_bins as f64
    }

    pub fn radius_of_bin(&self, r: f64) -> f64 {
        (r + 0.5) * self.bin_size()
    }

    pub fn bin_of_radius(&self, radius: f64) -> usize {
        ((radius / self.bin_size()).floor().max(0.0) as usize).min(self.r_bins - 1)
    }

    /// Azimuth at continuous column position `col` (integer = column center).
    pub fn azimuth(&self, col: f64) -> f64 {
        libm::atan(((col + 0.5) * self.stride as f64 - self.cx) / self.fx)
    }

    /// Continuous column position for an azimuth (inverse of [`Self::azimuth`]).
    pub fn column_of_azimuth(&self, theta: f64) -> f64 {
        (self.cx + self.fx * libm::tan(theta)) / self.stride as f64 - 0.5
    }

    /// World `(x, y)` at continuous polar position `(r, col)`.
    pub fn point(&self, r: f64, col: f64) -> (f64, f64) {
        let rho = self.radius_of_bin(r);
        let th = self.azimuth(col);
        let (s, c) = (libm::sin(th), libm::cos(th));
        (
            self.origin[0] + rho * (c * self.forward[0] + s * self.right[0]),
            self.origin[1] + rho * (c * self.forward[1] + s * self.right[1]),
        )
    }

    /// Continuous polar position of a world point, or `None` when it falls
    /// outside the camera's horizontal field of view or the radial range.
    pub fn locate(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (dx, dy) = (x - self.origin[0], y - self.origin[1]);
        let a = dx * self.forward[0] + dy * self.forward[1];
        let b = dx * self.right[0] + dy * self.right[1];
        if a <= 0.0 {
            return None;
        }
        let rho = (a * a + b * b).sqrt();
        let r = rho / self.bin_size() - 0.5;
        let col = self.column_of_azimuth(libm::atan2(b, a));
        let inside = r >= 0.0 && r <= (self.r_bins - 1) as f64 && col >= 0.0 && col <= (self.width - 1) as f64;
        inside.then_some((r, col))
    }

    /// BEV index-space sampling positions of all polar cells, ray-major
    /// (`col` outer, `r` inner).
    pub fn ray_major_coords(&self, bev: &BevGrid) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.width * self.r_bins);
        for i in 0..self.width {
            for r in 0..self.r_bins {
                let (x, y) = self.point(r as f64, i as f64);
                out.push(bev.index_space(x, y));
            }
        }
        out
    }

    /// BEV cells inside this camera's polar support, with their continuous
    /// `(r, col)` positions.
    pub fn cart_lookup(&self, bev: &BevGrid) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for row in 0..bev.h {
            for col in 0..bev.w {
                let (x, y) = bev.cell_center(row, col);
                if let Some((r, c)) = self.locate(x, y) {
                    out.push((bev.flat(row, col), r, c));
                }
            }
        }
        out
    }
}

fn map_dims(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [h, w, c] => Ok((*h, *w, *c)),
        s => Err(Error::Shape(format!("{what}: expected [H, W, C], got {s:?}"))),
    }
}

/// `h_polar[r, i, :]` = bilinear read of `h_p` at the world point of polar cell `(r, i)`.
pub fn cart_to_polar(h_p: &Tensor, pgrid: &PolarGrid, bev: &BevGrid) -> Result<Tensor> {
    let (h, w, c) = map_dims(h_p, "cart_to_polar")?;
    if (h, w) != (bev.h, bev.w) {
        return Err(Error::Shape(format!("BEV map {h}x{w} vs grid {}x{}", bev.h, bev.w)));
    }
    let mut out = Vec::with_capacity(pgrid.r_bins * pgrid.width * c);
    for r in 0..pgrid.r_bins {
        for i in 0..pgrid.width {
            let (x, y) = pgrid.point(r as f64, i as f64);
            let (ri, ci) = bev.index_space(x, y);
            out.extend(bilinear_sample(h_p, ri, ci)?);
        }
    }
    Tensor::new(&[pgrid.r_bins, pgrid.width, c], out)
}

/// Writes polar features back onto `base`: every BEV cell inside the polar
/// support takes the bilinear read of `h_polar` at its `(r, col)` position,
/// other cells keep their `base` value.
pub fn polar_to_cart(h_polar: &Tensor, base: &Tensor, pgrid: &PolarGrid, bev: &BevGrid) -> Result<Tensor> {
    let (r, w, c) = map_dims(h_polar, "polar_to_cart")?;
    let (_, _, cb) = map_dims(base, "polar_to_cart base")?;
    if (r, w) != (pgrid.r_bins, pgrid.width) || c != cb {
        return Err(Error::Shape("polar map does not match its grid or the base map".into()));
    }
    let mut out = base.clone();
    for (flat, rp, cp) in pgrid.cart_lookup(bev) {
        let v = bilinear_sample(h_polar, rp, cp)?;
        out.data_mut()[flat * c..(flat + 1) * c].copy_from_slice(&v);
    }
    Ok(out)
}
