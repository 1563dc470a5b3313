use std::collections::HashSet;

use super::config::EncoderConfig;
use crate::geometry::{
    complete_depth, map_c2p, map_p2c, BevGrid, C2pNeighbor, CameraModel, DepthMap, PillarIndex, PolarGrid,
};
use crate::scenesim::{render_sparse_depth, Scene};
use crate::{Error, Result};

/// One image-feature key of a BEV query: camera and continuous feature-map
/// index-space position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct I2lKey {
    pub camera: usize,
    pub row: f64,
    pub col: f64,
}

#[derive(Debug, Clone)]
pub struct CameraGeometry {
    /// Camera at feature resolution.
    pub fcam: CameraModel,
    pub dense_depth: DepthMap,
    /// `(2k+1)^2` BEV neighbors per feature pixel, row-major over pixels.
    pub l2i: Vec<C2pNeighbor>,
    pub polar: PolarGrid,
    /// BEV index-space position of every polar cell, ray-major.
    pub ray_coords: Vec<f64>,
    /// `(flat BEV cell, r, col)` for cells inside the polar support.
    pub lookup: Vec<(usize, f64, f64)>,
}

/// Everything the encoder needs from a scene besides the feature maps.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    pub grid: BevGrid,
    pub stride: usize,
    pub feat_h: usize,
    pub feat_w: usize,
    pub window: usize,
    pub cameras: Vec<CameraGeometry>,
    /// Image keys per BEV cell, de-duplicated by feature pixel and capped.
    pub i2l: Vec<Vec<I2lKey>>,
}

impl SceneGeometry {
    pub fn build(scene: &Scene, grid: &BevGrid, stride: usize, cfg: &EncoderConfig) -> Result<Self> {
        if scene.rig.is_empty() {
            return Err(Error::InvalidArgument("scene has no cameras".into()));
        }
        let fcams = scene
            .rig
            .iter()
            .map(|c| c.scaled(stride))
            .collect::<Result<Vec<_>>>()?;
        let (feat_h, feat_w) = (fcams[0].height, fcams[0].width);
        if fcams.iter().any(|c| (c.height, c.width) != (feat_h, feat_w)) {
            return Err(Error::Shape("all cameras must share one feature resolution".into()));
        }
        let r_max = (grid.x_max - grid.x_min).hypot(grid.y_max - grid.y_min);
        let k = cfg.k;
        let mut cameras = Vec::with_capacity(fcams.len());
        for (cam, fcam) in scene.rig.iter().zip(&fcams) {
            let sparse = render_sparse_depth(&scene.points, fcam);
            let dense_depth = if sparse.num_valid() == 0 {
                let mut d = sparse.clone();
                d.depth.iter_mut().for_each(|x| *x = r_max);
                d.valid.iter_mut().for_each(|v| *v = true);
                d
            } else {
                complete_depth(&sparse)?
            };
            let mut l2i = Vec::with_capacity(feat_h * feat_w * (2 * k + 1).pow(2));
            for r in 0..feat_h {
                for c in 0..feat_w {
                    l2i.extend(map_c2p(r, c, k, &dense_depth, fcam, grid)?);
                }
            }
            let polar = PolarGrid::for_camera(cam, stride, cfg.polar_bins, r_max)?;
            let ray_coords = polar.ray_major_coords(grid).into_iter().flat_map(|(a, b)| [a, b]).collect();
            let lookup = polar.cart_lookup(grid);
            cameras.push(CameraGeometry {
                fcam: fcam.clone(),
                dense_depth,
                l2i,
                polar,
                ray_coords,
                lookup,
            });
        }
        let index = PillarIndex::new(&scene.points, Scene::POINT_STRIDE, grid);
        let mut i2l = Vec::with_capacity(grid.num_cells());
        for row in 0..grid.h {
            for col in 0..grid.w {
                let mut seen = HashSet::new();
                let mut keys = Vec::new();
                for hit in map_p2c(row, col, &scene.points, Scene::POINT_STRIDE, &index, &fcams) {
                    let px = (hit.camera, hit.v.floor() as usize, hit.u.floor() as usize);
                    if keys.len() < cfg.max_neighbors && seen.insert(px) {
                        keys.push(I2lKey {
                            camera: hit.camera,
                            row: hit.v - 0.5,
                            col: hit.u - 0.5,
                        });
                    }
                }
                i2l.push(keys);
            }
        }
        Ok(SceneGeometry {
            grid: *grid,
            stride,
            feat_h,
            feat_w,
            window: (2 * k + 1).pow(2),
            cameras,
            i2l,
        })
    }

    pub fn num_cameras(&self) -> usize {
        self.cameras.len()
    }

    pub fn pixels_per_camera(&self) -> usize {
        self.feat_h * self.feat_w
    }

    pub fn neighbor_counts(&self) -> Vec<usize> {
        self.i2l.iter().map(Vec::len).collect()
    }
}
