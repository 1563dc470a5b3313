//! Set matching, deep-supervised losses, and the training loop.

mod checkpoint;
mod losses;
mod matching;
mod model;
mod schedule;
mod train;

pub use checkpoint::{Checkpoint, EpochMetrics, DIPP_MAGIC, DIPP_VERSION};
pub use losses::{
    box_scale, box_target, focal_loss, focal_terms, heatmap_target, l1_box_loss, layer_loss, match_layer, penalty_focal_loss,
    scene_loss, LayerLoss, LossBreakdown,
};
pub use matching::{hungarian, matching_cost, CostMatrix, LossWeights, MatchResult};
pub use model::{
    boxes_from_outputs, forward, heatmap_scores, init_model, predict, prepare_scene, ForwardOutput, ModelConfig, PreparedScene,
};
pub use schedule::OneCycle;
pub use train::{augment_scene, evaluate, train_loop, train_step, TrainConfig};
