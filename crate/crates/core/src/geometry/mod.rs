//! Coordinate frames: cameras, the BEV grid, depth completion, cross-modal
//! correspondences and polar resampling.

mod bev;
mod camera;
mod correspondence;
mod depth;
mod polar;

pub use bev::{bev_index, BevCell, BevGrid};
pub use camera::{lift_pixel, project_point, CameraModel, Projection, Vec3};
pub use correspondence::{map_c2p, map_p2c, C2pNeighbor, P2cHit, PillarIndex};
pub use depth::{complete_depth, complete_depth_bounded, DepthMap};
pub use polar::{azimuth_of_column, cart_to_polar, polar_to_cart, PolarGrid};
