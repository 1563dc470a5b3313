//! Dual-stream representational interaction encoder.
//!
//! Both streams are carried as row matrices: the BEV map as `[H*W, C]`
//! (row-major cells) and the camera maps as `[cams*H_c*W_c, C]` (camera-major,
//! then row-major pixels).

mod config;
mod context;
mod deformable;
mod layer;
mod mmri;
mod polar;

pub use config::{naive_padded_count, EncoderConfig, GroupedIntervals};
pub use context::{CameraGeometry, I2lKey, SceneGeometry};
pub use deformable::{iml_deformable, init_deformable, DeformableShape};
pub use layer::{encode, encoder_layer, init_encoder_params, LayerReport, LN_EPS};
pub use mmri::{
    grouped_i2l, grouped_i2l_update, i2l_update, l2i_update, mmri_i2l, mmri_l2i, CrossUpdate, GroupStats,
};
pub use polar::{polar_columns, polar_ray_attention};
