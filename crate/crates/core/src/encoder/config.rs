use serde::{Deserialize, Serialize};

use crate::numerics::AttentionConfig;
use crate::{Error, Result};

/// Valid-neighbor-count interval edges `N_0 = 0 < N_1 < ... < N_J`. A pillar
/// with `n` neighbors (`n >= 1`) falls in the first interval `(N_i, N_{i+1}]`
/// containing `n` and is padded to `N_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct GroupedIntervals {
    bounds: Vec<usize>,
}

impl GroupedIntervals {
    pub fn new(bounds: Vec<usize>) -> Result<Self> {
        if bounds.len() < 2 || bounds[0] != 0 || bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "interval bounds must start at 0 and strictly increase, got {bounds:?}"
            )));
        }
        Ok(GroupedIntervals { bounds })
    }

    /// The degenerate single interval `(0, max]`.
    pub fn single(max: usize) -> Result<Self> {
        Self::new(vec![0, max.max(1)])
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn upper(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn num_intervals(&self) -> usize {
        self.bounds.len() - 1
    }

    /// Interval index for a neighbor count; `None` for zero.
    pub fn interval_of(&self, count: usize) -> Result<Option<usize>> {
        if count == 0 {
            return Ok(None);
        }
        if count > self.upper() {
            return Err(Error::IntervalOverflow {
                count,
                bound: self.upper(),
            });
        }
        Ok(Some(self.bounds.partition_point(|&b| b < count) - 1))
    }

    /// `sum_i |pillars in interval i| * N_{i+1}`.
    pub fn padded_count(&self, counts: &[usize]) -> Result<usize> {
        let mut total = 0;
        for &n in counts {
            if let Some(i) = self.interval_of(n)? {
                total += self.bounds[i + 1];
            }
        }
        Ok(total)
    }
}

impl Default for GroupedIntervals {
    fn default() -> Self {
        GroupedIntervals {
            bounds: vec![0, 4, 16, 64],
        }
    }
}

impl TryFrom<Vec<usize>> for GroupedIntervals {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GroupedIntervals> for Vec<usize> {
    fn from(g: GroupedIntervals) -> Self {
        g.bounds
    }
}

/// Max-padding over every pillar with at least one neighbor.
pub fn naive_padded_count(counts: &[usize]) -> usize {
    let max = counts.iter().copied().max().unwrap_or(0);
    counts.iter().filter(|&&n| n > 0).count() * max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub heads: usize,
    pub channels: usize,
    /// Half-width of the image-to-BEV neighbor window.
    pub k: usize,
    /// Deformable sampling points per head per scale.
    pub points: usize,
    pub image_scales: usize,
    pub bev_scales: usize,
    pub polar_bins: usize,
    /// Image-to-BEV keys kept per pillar after de-duplication.
    pub max_neighbors: usize,
    pub intervals: GroupedIntervals,
    /// Batch image-to-LiDAR attention by neighbor-count interval instead of
    /// the per-query reference path.
    pub grouped: bool,
    pub ffn_hidden: usize,
    pub use_iml: bool,
    pub use_mmri: bool,
    pub use_polar: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            num_layers: 2,
            heads: 4,
            channels: 32,
            k: 1,
            points: 4,
            image_scales: 2,
            bev_scales: 1,
            polar_bins: 128,
            max_neighbors: 64,
            intervals: GroupedIntervals::default(),
            grouped: true,
            ffn_hidden: 64,
            use_iml: true,
            use_mmri: true,
            use_polar: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        AttentionConfig::new(self.heads, self.channels)?;
        if self.points == 0 || self.image_scales == 0 || self.bev_scales == 0 {
            return Err(Error::InvalidArgument("deformable points and scales must be positive".into()));
        }
        if self.polar_bins == 0 || self.ffn_hidden == 0 || self.max_neighbors == 0 {
            return Err(Error::InvalidArgument("polar bins, FFN width and neighbor cap must be positive".into()));
        }
        if self.max_neighbors > self.intervals.upper() {
            return Err(Error::InvalidArgument(format!(
                "neighbor cap {} exceeds the last interval bound {}",
                self.max_neighbors,
                self.intervals.upper()
            )));
        }
        Ok(())
    }

    pub fn polar_active(&self) -> bool {
        self.use_mmri && self.use_polar
    }
}
