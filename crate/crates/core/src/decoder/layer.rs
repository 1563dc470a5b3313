//! Predictive interaction layers.

use super::boxes::{decode_box, delta_scale, roi_bev, roi_grid, roi_image, Rect, BOX_DIM};
use super::config::{DecoderConfig, Modality};
use super::query::{init_heatmap_params, QuerySet};
use crate::geometry::{BevGrid, CameraModel};
use crate::numerics::{Graph, Init, ParamStore, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;

fn linear_params(store: &mut ParamStore, rng: &Rng, name: &str, fan_in: usize, fan_out: usize, init: Init) {
    store.init(rng, &format!("{name}.w"), &[fan_in, fan_out], init);
    store.init(rng, &format!("{name}.b"), &[fan_out], Init::Zeros);
}

fn ln_params(store: &mut ParamStore, rng: &Rng, name: &str, c: usize) {
    store.init(rng, &format!("{name}.g"), &[c], Init::Ones);
    store.init(rng, &format!("{name}.b"), &[c], Init::Zeros);
}

/// Heatmap head, class embedding and every decoder layer. Residual-branch
/// outputs and the last layer of each prediction head start at zero; the
/// dynamic-parameter generator is random so its gradient is live.
pub fn init_decoder_params(store: &mut ParamStore, rng: &Rng, channels: usize, num_classes: usize, cfg: &DecoderConfig) {
    let c = channels;
    let c4 = (c / 4).max(1);
    let s2 = cfg.roi_size * cfg.roi_size;
    init_heatmap_params(store, rng, c, num_classes);
    for l in 0..cfg.num_layers {
        let p = format!("dec.{l}");
        for n in ["q", "k", "v"] {
            linear_params(store, rng, &format!("{p}.sa.{n}"), c, c, Init::Xavier);
        }
        linear_params(store, rng, &format!("{p}.sa.o"), c, c, Init::Zeros);
        ln_params(store, rng, &format!("{p}.ln1"), c);
        linear_params(store, rng, &format!("{p}.gen"), c, 2 * c * c4, Init::Xavier);
        linear_params(store, rng, &format!("{p}.out"), s2 * c, c, Init::Zeros);
        ln_params(store, rng, &format!("{p}.ln2"), c);
        linear_params(store, rng, &format!("{p}.ffn.1"), c, cfg.ffn_hidden, Init::Xavier);
        linear_params(store, rng, &format!("{p}.ffn.2"), cfg.ffn_hidden, c, Init::Zeros);
        ln_params(store, rng, &format!("{p}.ln3"), c);
        linear_params(store, rng, &format!("{p}.cls.1"), c, c, Init::Xavier);
        linear_params(store, rng, &format!("{p}.cls.2"), c, num_classes, Init::Zeros);
        linear_params(store, rng, &format!("{p}.box.1"), c, c, Init::Xavier);
        linear_params(store, rng, &format!("{p}.box.2"), c, BOX_DIM, Init::Zeros);
    }
}

fn proj(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{name}.w"))?;
    let b = g.param(store, &format!("{name}.b"))?;
    g.linear(x, w, Some(b))
}

fn mlp(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let h = proj(g, store, &format!("{name}.1"), x)?;
    let h = g.relu(h);
    proj(g, store, &format!("{name}.2"), h)
}

fn residual_ln(g: &mut Graph, store: &ParamStore, name: &str, x: Var, update: Var) -> Result<Var> {
    let y = g.add(x, update)?;
    let gamma = g.param(store, &format!("{name}.g"))?;
    let beta = g.param(store, &format!("{name}.b"))?;
    g.layer_norm(y, gamma, beta, LN_EPS)
}

/// The two feature maps a decoder layer can read, with their geometry.
#[derive(Debug, Clone, Copy)]
pub struct DecoderMaps<'a> {
    /// BEV rows `[H*W, C]`.
    pub hp: Var,
    /// Image rows `[cams*H_c*W_c, C]`.
    pub hc: Var,
    pub grid: &'a BevGrid,
    /// Cameras at feature resolution.
    pub fcams: &'a [CameraModel],
}

/// Predictions of one decoder layer.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub modality: Modality,
    pub embedding: Var,
    /// `[N, 10]` box vectors.
    pub boxes: Var,
    /// `[N, K]` class logits.
    pub logits: Var,
    /// Queries whose RoI was non-empty on this layer's map.
    pub visible: Vec<bool>,
}

/// RoI of each query on the chosen map: `(map index, rect)` or `None`.
pub fn query_rois(boxes: &Tensor, modality: Modality, maps: &DecoderMaps, enlarge: f64) -> Vec<Option<(usize, Rect)>> {
    boxes
        .data()
        .chunks(BOX_DIM)
        .map(|v| {
            let b = decode_box(v, 0);
            match modality {
                Modality::Bev => {
                    let r = roi_bev(&b, maps.grid, enlarge);
                    (r.area() > 0.0).then_some((0, r))
                }
                Modality::Image => maps
                    .fcams
                    .iter()
                    .enumerate()
                    .filter_map(|(i, cam)| roi_image(&b, cam).map(|r| (i, r)))
                    .filter(|(_, r)| r.area() > 0.0)
                    .fold(None, |best: Option<(usize, Rect)>, cand| match best {
                        Some(b) if b.1.area() >= cand.1.area() => Some(b),
                        _ => Some(cand),
                    }),
            }
        })
        .collect()
}

/// One predictive interaction layer: query self-attention, RoI-scoped
/// dynamic 1x1 convolutions on `modality`'s map, FFN, then the heads.
/// `prev_logits` is added to the class head output; the box head output is
/// a delta on the (detached) `boxes`.
#[allow(clippy::too_many_arguments)]
pub fn mmpi_layer(
    g: &mut Graph,
    store: &ParamStore,
    layer: usize,
    embedding: Var,
    boxes: &Tensor,
    prev_logits: Var,
    modality: Modality,
    maps: &DecoderMaps,
    cfg: &DecoderConfig,
) -> Result<LayerOutput> {
    let p = format!("dec.{layer}");
    let (n, c) = match g.shape(embedding) {
        [n, c] => (*n, *c),
        s => return Err(Error::Shape(format!("query embeddings {s:?}"))),
    };
    if boxes.shape() != [n, BOX_DIM] {
        return Err(Error::Shape(format!("boxes {:?} for {n} queries", boxes.shape())));
    }
    let c4 = (c / 4).max(1);
    let s = cfg.roi_size;

    let q = proj(g, store, &format!("{p}.sa.q"), embedding)?;
    let k = proj(g, store, &format!("{p}.sa.k"), embedding)?;
    let v = proj(g, store, &format!("{p}.sa.v"), embedding)?;
    let (q, k, v) = (g.reshape(q, &[1, n, c])?, g.reshape(k, &[1, n, c])?, g.reshape(v, &[1, n, c])?);
    let att = g.batched_attention(q, k, v, None, cfg.heads)?;
    let att = g.reshape(att, &[n, c])?;
    let att = proj(g, store, &format!("{p}.sa.o"), att)?;
    let x = residual_ln(g, store, &format!("{p}.ln1"), embedding, att)?;

    let rois = query_rois(boxes, modality, maps, cfg.bev_enlarge);
    let visible: Vec<bool> = rois.iter().map(Option::is_some).collect();
    let (map, map_dims) = match modality {
        Modality::Bev => (maps.hp, [1, maps.grid.h, maps.grid.w, c]),
        Modality::Image => {
            let cam = maps.fcams.first().ok_or(Error::Empty("camera list"))?;
            (maps.hc, [maps.fcams.len(), cam.height, cam.width, c])
        }
    };
    let stacked = g.reshape(map, &map_dims)?;
    let mut coords = Vec::with_capacity(n * s * s * 2);
    let mut batch = Vec::with_capacity(n * s * s);
    for roi in &rois {
        match roi {
            Some((m, rect)) => {
                for (r, cc) in roi_grid(rect, s) {
                    coords.extend_from_slice(&[r, cc]);
                    batch.push(*m);
                }
            }
            None => {
                coords.extend(std::iter::repeat(-2.0).take(2 * s * s));
                batch.extend(std::iter::repeat(0).take(s * s));
            }
        }
    }
    let coords = g.constant(Tensor::new(&[n * s * s, 2], coords)?);
    let feats = g.bilinear_sample(stacked, coords, &batch)?;
    let feats = g.reshape(feats, &[n, s * s, c])?;

    let params = proj(g, store, &format!("{p}.gen"), x)?;
    let w1 = g.slice_cols(params, 0, c * c4)?;
    let w1 = g.reshape(w1, &[n, c, c4])?;
    let w2 = g.slice_cols(params, c * c4, c4 * c)?;
    let w2 = g.reshape(w2, &[n, c4, c])?;
    let h = g.bmm(feats, w1)?;
    let h = g.relu(h);
    let h = g.bmm(h, w2)?;
    let h = g.relu(h);
    let h = g.reshape(h, &[n, s * s * c])?;
    let upd = proj(g, store, &format!("{p}.out"), h)?;
    let mixed = residual_ln(g, store, &format!("{p}.ln2"), x, upd)?;
    let x = g.select_rows(&visible, mixed, x)?;

    let f = mlp(g, store, &format!("{p}.ffn"), x)?;
    let x = residual_ln(g, store, &format!("{p}.ln3"), x, f)?;

    let dl = mlp(g, store, &format!("{p}.cls"), x)?;
    let logits = g.add(prev_logits, dl)?;
    let db = mlp(g, store, &format!("{p}.box"), x)?;
    let scale: Vec<f64> = delta_scale(maps.grid).iter().copied().cycle().take(n * BOX_DIM).collect();
    let db = g.mul_const(db, &scale)?;
    let out_boxes = g.add_const(db, boxes.data())?;
    Ok(LayerOutput {
        modality,
        embedding: x,
        boxes: out_boxes,
        logits,
        visible,
    })
}

/// All decoder layers with the image/BEV alternation; every layer's
/// predictions are returned, the last one being the inference output.
pub fn decode(
    g: &mut Graph,
    store: &ParamStore,
    queries: &QuerySet,
    maps: &DecoderMaps,
    cfg: &DecoderConfig,
) -> Result<Vec<LayerOutput>> {
    cfg.validate()?;
    let mut emb = queries.embedding;
    let mut boxes = queries.boxes.clone();
    let mut logits = g.constant(queries.logits.clone());
    let mut out = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let o = mmpi_layer(g, store, l, emb, &boxes, logits, Modality::of_layer(l), maps, cfg)?;
        emb = o.embedding;
        boxes = g.value(o.boxes).clone();
        logits = o.logits;
        out.push(o);
    }
    Ok(out)
}
