use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bird's-eye-view grid over the detection range. Row index follows `y`,
/// column index follows `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub h: usize,
    pub w: usize,
}

/// Cell lookup result; `valid` is false when the point lies outside the
/// detection range (the indices are then clamped, not meaningful).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BevCell {
    pub row: usize,
    pub col: usize,
    pub valid: bool,
}

impl Default for BevGrid {
    fn default() -> Self {
        BevGrid {
            x_min: -54.0,
            x_max: 54.0,
            y_min: -54.0,
            y_max: 54.0,
            h: 100,
            w: 100,
        }
    }
}

impl BevGrid {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, h: usize, w: usize) -> Result<Self> {
        let g = BevGrid { x_min, x_max, y_min, y_max, h, w };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min && self.y_max > self.y_min) || self.h == 0 || self.w == 0 {
            return Err(Error::InvalidArgument(format!("degenerate BEV grid {self:?}")));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.h * self.w
    }

    /// Cell extent along y (rows) and x (columns), in meters.
    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.y_max - self.y_min) / self.h as f64,
            (self.x_max - self.x_min) / self.w as f64,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Continuous `(row, col)` with cell `i` spanning `[i, i+1)`.
    pub fn continuous(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (y - self.y_min) / (self.y_max - self.y_min) * self.h as f64,
            (x - self.x_min) / (self.x_max - self.x_min) * self.w as f64,
        )
    }

    /// Bilinear-sampling coordinates: integer values are cell centers.
    pub fn index_space(&self, x: f64, y: f64) -> (f64, f64) {
        let (r, c) = self.continuous(x, y);
        (r - 0.5, c - 0.5)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let (dy, dx) = self.cell_size();
        (self.x_min + (col as f64 + 0.5) * dx, self.y_min + (row as f64 + 0.5) * dy)
    }

    pub fn flat(&self, row: usize, col: usize) -> usize {
        row * self.w + col
    }
}

/// Floor-then-clamp cell lookup.
pub fn bev_index(x: f64, y: f64, grid: &BevGrid) -> BevCell {
    let (r, c) = grid.continuous(x, y);
    let clamp = |v: f64, n: usize| -> usize {
        if v.is_nan() || v < 0.0 {
            0
        } else {
            (v.floor() as usize).min(n - 1)
        }
    };
    BevCell {
        row: clamp(r, grid.h),
        col: clamp(c, grid.w),
        valid: grid.contains(x, y),
    }
}
