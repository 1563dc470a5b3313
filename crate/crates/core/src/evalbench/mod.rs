//! Center-distance detection metrics, the grouped-attention padding
//! benchmark, and heatmap export.

mod ap;
mod bench;
mod heatmap;

pub use ap::{ap_center_distance, map_lite, Detection, GroundTruth, THRESHOLDS};
pub use bench::{bench_grouped, parse_distribution, BenchReport};
pub use heatmap::{dump_heatmap, normalize_heatmap, read_pgm, write_pgm};
