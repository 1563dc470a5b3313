//! Cross-modal neighbor construction between image pixels and BEV cells.

use super::bev::{bev_index, BevCell, BevGrid};
use super::camera::{lift_pixel, project_point, CameraModel};
use super::depth::DepthMap;
use crate::{Error, Result};

/// One image-to-BEV neighbor: the BEV cell hit by a lifted neighbor pixel.
/// Invalid entries (pixel outside the image, or lifted point outside the
/// detection range) keep their slot so the list always has `(2k+1)^2` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct C2pNeighbor {
    pub row: usize,
    pub col: usize,
    pub valid: bool,
}

/// One BEV-to-image hit: a point of the pillar seen by camera `camera`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2cHit {
    pub camera: usize,
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Image-to-BEV neighbors of pixel `(row, col)` over a `(2k+1)^2` window,
/// lifting each neighbor pixel center with the dense depth.
pub fn map_c2p(
    row: usize,
    col: usize,
    k: usize,
    dense: &DepthMap,
    cam: &CameraModel,
    grid: &BevGrid,
) -> Result<Vec<C2pNeighbor>> {
    if row >= dense.height || col >= dense.width {
        return Err(Error::OutOfRange(format!(
            "pixel ({row}, {col}) outside {}x{} image",
            dense.height, dense.width
        )));
    }
    if dense.width != cam.width || dense.height != cam.height {
        return Err(Error::Shape("depth map and camera resolutions differ".into()));
    }
    if !dense.is_dense() {
        return Err(Error::InvalidArgument("map_c2p needs a completed depth map".into()));
    }
    let k = k as isize;
    let mut out = Vec::with_capacity(((2 * k + 1) * (2 * k + 1)) as usize);
    for di in -k..=k {
        for dj in -k..=k {
            let (r, c) = (row as isize + di, col as isize + dj);
            if r < 0 || c < 0 || r >= dense.height as isize || c >= dense.width as isize {
                out.push(C2pNeighbor { row: 0, col: 0, valid: false });
                continue;
            }
            let (r, c) = (r as usize, c as usize);
            let d = dense.depth[r * dense.width + c];
            let p = lift_pixel(c as f64 + 0.5, r as f64 + 0.5, d, cam)?;
            let BevCell { row, col, valid } = bev_index(p[0], p[1], grid);
            out.push(C2pNeighbor { row, col, valid });
        }
    }
    Ok(out)
}

/// Point indices grouped by the BEV pillar containing them; points outside
/// the detection range are dropped.
#[derive(Debug, Clone)]
pub struct PillarIndex {
    pub grid: BevGrid,
    pub cell_of_point: Vec<Option<usize>>,
    pub points_in_cell: Vec<Vec<usize>>,
}

impl PillarIndex {
    /// `points` are `[x, y, z, ...]` rows of `stride` values.
    pub fn new(points: &[f64], stride: usize, grid: &BevGrid) -> Self {
        let n = points.len() / stride;
        let mut cell_of_point = Vec::with_capacity(n);
        let mut points_in_cell = vec![Vec::new(); grid.num_cells()];
        for i in 0..n {
            let p = &points[i * stride..];
            let cell = bev_index(p[0], p[1], grid);
            if cell.valid {
                let f = grid.flat(cell.row, cell.col);
                points_in_cell[f].push(i);
                cell_of_point.push(Some(f));
            } else {
                cell_of_point.push(None);
            }
        }
        PillarIndex {
            grid: *grid,
            cell_of_point,
            points_in_cell,
        }
    }
}

/// BEV-to-image hits of pillar `(row, col)`: every point of the pillar that
/// projects inside some camera with positive depth, once per such camera.
pub fn map_p2c(
    row: usize,
    col: usize,
    points: &[f64],
    stride: usize,
    index: &PillarIndex,
    cams: &[CameraModel],
) -> Vec<P2cHit> {
    if row >= index.grid.h || col >= index.grid.w {
        return Vec::new();
    }
    let mut hits = Vec::new();
    for &pi in &index.points_in_cell[index.grid.flat(row, col)] {
        let p = &points[pi * stride..pi * stride + 3];
        for (ci, cam) in cams.iter().enumerate() {
            if let Ok(proj) = project_point([p[0], p[1], p[2]], cam) {
                if proj.in_image(cam) {
                    hits.push(P2cHit {
                        camera: ci,
                        u: proj.u,
                        v: proj.v,
                        depth: proj.depth,
                    });
                }
            }
        }
    }
    hits
}
