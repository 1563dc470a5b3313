//! The full detector: featurizers, encoder, query initialization, decoder.

use serde::{Deserialize, Serialize};

use crate::decoder::{decode, decode_box, heatmap_logits, init_decoder_params, init_queries, DecoderConfig, DecoderMaps, LayerOutput, QuerySet, BOX_DIM};
use crate::encoder::{encode, init_encoder_params, EncoderConfig, LayerReport, SceneGeometry};
use crate::geometry::BevGrid;
use crate::numerics::{sigmoid, Graph, ParamStore, Precision, Tensor, Var};
use crate::rng::Rng;
use crate::scenesim::{featurize_image, featurize_points, init_featurizer_params, rasterize, Box3D, Scene};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: usize,
    pub num_classes: usize,
    /// Image feature stride relative to the camera resolution.
    pub stride: usize,
    pub grid: BevGrid,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 32,
            num_classes: 3,
            stride: 8,
            grid: BevGrid::default(),
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            precision: Precision::F64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder.channels != self.channels {
            return Err(Error::InvalidArgument(format!(
                "encoder channels {} differ from model channels {}",
                self.encoder.channels, self.channels
            )));
        }
        if self.num_classes == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("num_classes and stride must be positive".into()));
        }
        self.grid.validate()?;
        self.encoder.validate()?;
        self.decoder.validate()?;
        let cells = self.grid.num_cells();
        if self.decoder.n_train > cells || self.decoder.n_infer > cells {
            return Err(Error::InvalidArgument(format!(
                "{} / {} queries exceed the {cells} BEV cells",
                self.decoder.n_train, self.decoder.n_infer
            )));
        }
        Ok(())
    }
}

/// Fresh parameters for every enabled part of the model.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let rng = Rng::new(seed);
    let mut store = ParamStore::new();
    init_featurizer_params(&mut store, &rng.split(1), cfg.channels, cfg.num_classes);
    init_encoder_params(&mut store, &rng.split(2), &cfg.encoder);
    init_decoder_params(&mut store, &rng.split(3), cfg.channels, cfg.num_classes, &cfg.decoder);
    Ok(store)
}

/// Everything about a scene that does not depend on parameters.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub scene: Scene,
    pub geometry: SceneGeometry,
    pub rasters: Vec<Tensor>,
}

pub fn prepare_scene(scene: &Scene, cfg: &ModelConfig) -> Result<PreparedScene> {
    let geometry = SceneGeometry::build(scene, &cfg.grid, cfg.stride, &cfg.encoder)?;
    let rasters = geometry
        .cameras
        .iter()
        .map(|c| rasterize(scene, &c.fcam, cfg.num_classes))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedScene {
        scene: scene.clone(),
        geometry,
        rasters,
    })
}

/// Tape handles of one forward pass.
pub struct ForwardOutput {
    /// Heatmap logits `[H*W, K]`.
    pub heat: Var,
    pub queries: QuerySet,
    pub layers: Vec<LayerOutput>,
    pub encoder_reports: Vec<LayerReport>,
}

pub fn forward(g: &mut Graph, store: &ParamStore, prep: &PreparedScene, cfg: &ModelConfig, num_queries: usize) -> Result<ForwardOutput> {
    let geo = &prep.geometry;
    let c = cfg.channels;
    let hp = featurize_points(g, store, &prep.scene.points, &cfg.grid)?;
    let hp = g.reshape(hp, &[cfg.grid.num_cells(), c])?;
    let mut cams = Vec::with_capacity(prep.rasters.len());
    for r in &prep.rasters {
        let h = featurize_image(g, store, r)?;
        cams.push(g.reshape(h, &[geo.pixels_per_camera(), c])?);
    }
    let hc = g.concat_rows(&cams)?;
    let (hp, hc, encoder_reports) = encode(g, store, hp, hc, geo, &cfg.encoder)?;
    let heat = heatmap_logits(g, store, hp, &cfg.grid)?;
    let queries = init_queries(g, store, hp, heat, &cfg.grid, num_queries, &cfg.decoder)?;
    let fcams: Vec<_> = geo.cameras.iter().map(|c| c.fcam.clone()).collect();
    let maps = DecoderMaps {
        hp,
        hc,
        grid: &cfg.grid,
        fcams: &fcams,
    };
    let layers = decode(g, store, &queries, &maps, &cfg.decoder)?;
    Ok(ForwardOutput {
        heat,
        queries,
        layers,
        encoder_reports,
    })
}

/// One box per query from class logits `[N, K]` and box vectors `[N, 10]`:
/// the arg-max class, scored by its sigmoid.
pub fn boxes_from_outputs(logits: &Tensor, boxes: &Tensor) -> Vec<(Box3D, f64)> {
    let k = logits.last_dim();
    logits
        .data()
        .chunks(k)
        .zip(boxes.data().chunks(BOX_DIM))
        .map(|(l, b)| {
            let (cls, best) = l
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
            (decode_box(b, cls), sigmoid(best))
        })
        .collect()
}

/// Inference with `n_infer` queries: the last decoder layer's boxes.
pub fn predict(store: &ParamStore, prep: &PreparedScene, cfg: &ModelConfig) -> Result<Vec<(Box3D, f64)>> {
    let mut g = Graph::with_precision(cfg.precision);
    let out = forward(&mut g, store, prep, cfg, cfg.decoder.n_infer)?;
    let last = out.layers.last().ok_or(Error::Empty("decoder layers"))?;
    Ok(boxes_from_outputs(g.value(last.logits), g.value(last.boxes)))
}

/// Per-cell heatmap score (max over classes of the sigmoid), `H*W` values.
pub fn heatmap_scores(store: &ParamStore, prep: &PreparedScene, cfg: &ModelConfig) -> Result<Vec<f64>> {
    let mut g = Graph::with_precision(cfg.precision);
    let c = cfg.channels;
    let geo = &prep.geometry;
    let hp = featurize_points(&mut g, store, &prep.scene.points, &cfg.grid)?;
    let hp = g.reshape(hp, &[cfg.grid.num_cells(), c])?;
    let mut cams = Vec::new();
    for r in &prep.rasters {
        let h = featurize_image(&mut g, store, r)?;
        cams.push(g.reshape(h, &[geo.pixels_per_camera(), c])?);
    }
    let hc = g.concat_rows(&cams)?;
    let (hp, _, _) = encode(&mut g, store, hp, hc, geo, &cfg.encoder)?;
    let heat = heatmap_logits(&mut g, store, hp, &cfg.grid)?;
    let k = cfg.num_classes;
    Ok(g.data(heat)
        .chunks(k)
        .map(|row| row.iter().map(|&x| sigmoid(x)).fold(0.0, f64::max))
        .collect())
}
