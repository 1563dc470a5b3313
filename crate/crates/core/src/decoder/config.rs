use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub num_layers: usize,
    pub n_train: usize,
    pub n_infer: usize,
    /// RoI-align output side `S`.
    pub roi_size: usize,
    pub bev_enlarge: f64,
    pub heads: usize,
    pub ffn_hidden: usize,
    /// Size prior `[w, l, h]` and center height of freshly initialized boxes.
    pub prior_size: [f64; 3],
    pub prior_z: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            num_layers: 5,
            n_train: 200,
            n_infer: 300,
            roi_size: 7,
            bev_enlarge: 2.0,
            heads: 4,
            ffn_hidden: 64,
            prior_size: [1.9, 4.3, 1.7],
            prior_z: 0.85,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.roi_size == 0 || self.heads == 0 || self.ffn_hidden == 0 {
            return Err(Error::InvalidArgument("decoder layers, RoI size, heads and FFN width must be positive".into()));
        }
        if !(self.bev_enlarge > 0.0) || self.prior_size.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("BEV enlarge factor and size prior must be positive".into()));
        }
        Ok(())
    }
}

/// Feature map a decoder layer interacts with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Image,
    Bev,
}

impl Modality {
    /// Image on odd layers, BEV on even ones (1-indexed).
    pub fn of_layer(layer: usize) -> Modality {
        if (layer + 1) % 2 == 1 {
            Modality::Image
        } else {
            Modality::Bev
        }
    }
}
