//! Synthetic driving scenes and the toy featurizers that turn them into the
//! LiDAR BEV and camera representations.

mod featurize;
mod lidar;
mod scene;

pub use featurize::{
    featurize_image, featurize_points, init_featurizer_params, pillar_grid, point_rows, rasterize, POINT_FEATURES,
    RASTER_EXTRA,
};
pub use lidar::{render_sparse_depth, returns_at, sample_lidar};
pub use scene::{gen_scene, Box3D, Scene, SceneConfig};
