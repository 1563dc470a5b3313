//! Multi-modal predictive interaction decoder.

mod boxes;
mod config;
mod layer;
mod query;

pub use boxes::{decode_box, delta_scale, encode_box, roi_align, roi_bev, roi_grid, roi_image, yaw_of, Rect, BOX_DIM};
pub use config::{DecoderConfig, Modality};
pub use layer::{decode, init_decoder_params, mmpi_layer, query_rois, DecoderMaps, LayerOutput};
pub use query::{heatmap_logits, init_heatmap_params, init_queries, select_peaks, Peak, QuerySet, HEATMAP_PRIOR};
