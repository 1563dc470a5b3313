use super::config::EncoderConfig;
use super::context::SceneGeometry;
use super::deformable::{iml_deformable, init_deformable, init_linear, proj, DeformableShape};
use super::mmri::{grouped_i2l_update, i2l_update, l2i_update, GroupStats};
use super::polar::polar_ray_attention;
use crate::numerics::{Graph, Init, ParamStore, Var};
use crate::rng::Rng;
use crate::Result;

pub const LN_EPS: f64 = 1e-5;

fn init_ln(store: &mut ParamStore, rng: &Rng, name: &str, c: usize) {
    store.init(rng, &format!("{name}.g"), &[c], Init::Ones);
    store.init(rng, &format!("{name}.b"), &[c], Init::Zeros);
}

fn init_attention(store: &mut ParamStore, rng: &Rng, prefix: &str, c: usize) {
    for p in ["q", "k", "v"] {
        init_linear(store, rng, &format!("{prefix}.{p}"), c, c, false);
    }
    init_linear(store, rng, &format!("{prefix}.o"), c, c, true);
}

fn bev_shape(cfg: &EncoderConfig) -> DeformableShape {
    DeformableShape {
        channels: cfg.channels,
        heads: cfg.heads,
        scales: cfg.bev_scales,
        points: cfg.points,
    }
}

fn image_shape(cfg: &EncoderConfig) -> DeformableShape {
    DeformableShape {
        scales: cfg.image_scales,
        ..bev_shape(cfg)
    }
}

/// Registers the parameters of every enabled sublayer. Residual-branch
/// output projections start at zero.
pub fn init_encoder_params(store: &mut ParamStore, rng: &Rng, cfg: &EncoderConfig) {
    let c = cfg.channels;
    for l in 0..cfg.num_layers {
        let p = format!("enc.{l}");
        if cfg.use_iml {
            init_deformable(store, rng, &format!("{p}.p.iml"), bev_shape(cfg));
            init_deformable(store, rng, &format!("{p}.c.iml"), image_shape(cfg));
            init_ln(store, rng, &format!("{p}.p.ln1"), c);
            init_ln(store, rng, &format!("{p}.c.ln1"), c);
        }
        if cfg.polar_active() {
            init_attention(store, rng, &format!("{p}.polar"), c);
            init_ln(store, rng, &format!("{p}.p.ln2"), c);
        }
        if cfg.use_mmri {
            init_attention(store, rng, &format!("{p}.i2l"), c);
            init_attention(store, rng, &format!("{p}.l2i"), c);
            init_ln(store, rng, &format!("{p}.p.ln3"), c);
            init_ln(store, rng, &format!("{p}.c.ln3"), c);
        }
        for s in ["p", "c"] {
            init_linear(store, rng, &format!("{p}.{s}.ffn.1"), c, cfg.ffn_hidden, false);
            init_linear(store, rng, &format!("{p}.{s}.ffn.2"), cfg.ffn_hidden, c, true);
            init_ln(store, rng, &format!("{p}.{s}.ln4"), c);
        }
    }
}

fn residual_ln(g: &mut Graph, store: &ParamStore, name: &str, x: Var, update: Var) -> Result<Var> {
    let y = g.add(x, update)?;
    let gamma = g.param(store, &format!("{name}.g"))?;
    let beta = g.param(store, &format!("{name}.b"))?;
    g.layer_norm(y, gamma, beta, LN_EPS)
}

fn ffn(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let h = proj(g, store, &format!("{prefix}.1"), x)?;
    let h = g.relu(h);
    proj(g, store, &format!("{prefix}.2"), h)
}

/// Deformable self-attention applied to each camera's map separately.
fn image_iml(g: &mut Graph, store: &ParamStore, prefix: &str, hc: Var, geo: &SceneGeometry, cfg: &EncoderConfig) -> Result<Var> {
    let per = geo.pixels_per_camera();
    let mut outs = Vec::with_capacity(geo.num_cameras());
    for cam in 0..geo.num_cameras() {
        let idx: Vec<usize> = (cam * per..(cam + 1) * per).collect();
        let x = g.gather_rows(hc, &idx)?;
        let x = g.reshape(x, &[geo.feat_h, geo.feat_w, cfg.channels])?;
        let y = iml_deformable(g, store, prefix, x, image_shape(cfg))?;
        outs.push(g.reshape(y, &[per, cfg.channels])?);
    }
    g.concat_rows(&outs)
}

/// Per-layer diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerReport {
    pub grouping: Option<GroupStats>,
}

/// One dual-stream layer over BEV rows `hp: [H*W, C]` and image rows
/// `hc: [cams*H_c*W_c, C]`.
///
/// LiDAR stream: deformable SA, polar-ray CA, image-to-LiDAR CA, FFN.
/// Image stream: deformable SA, LiDAR-to-image CA, FFN. Each sublayer is
/// `LN(x + f(x))`; cross-attention keys come from the other stream after
/// its self-attention.
pub fn encoder_layer(
    g: &mut Graph,
    store: &ParamStore,
    layer: usize,
    hp: Var,
    hc: Var,
    geo: &SceneGeometry,
    cfg: &EncoderConfig,
) -> Result<(Var, Var, LayerReport)> {
    let p = format!("enc.{layer}");
    let c = cfg.channels;
    let mut report = LayerReport::default();
    let (mut xp, mut xc) = (hp, hc);
    if cfg.use_iml {
        let map = g.reshape(xp, &[geo.grid.h, geo.grid.w, c])?;
        let dp = iml_deformable(g, store, &format!("{p}.p.iml"), map, bev_shape(cfg))?;
        let dp = g.reshape(dp, &[geo.grid.num_cells(), c])?;
        let dc = image_iml(g, store, &format!("{p}.c.iml"), xc, geo, cfg)?;
        xp = residual_ln(g, store, &format!("{p}.p.ln1"), xp, dp)?;
        xc = residual_ln(g, store, &format!("{p}.c.ln1"), xc, dc)?;
    }
    let (sa_p, sa_c) = (xp, xc);
    if cfg.polar_active() {
        let d = polar_ray_attention(g, store, &format!("{p}.polar"), xp, sa_c, geo, cfg.heads)?;
        xp = residual_ln(g, store, &format!("{p}.p.ln2"), xp, d)?;
    }
    if cfg.use_mmri {
        let i2l = if cfg.grouped {
            let (u, stats) = grouped_i2l_update(g, store, &format!("{p}.i2l"), xp, sa_c, geo, &cfg.intervals, cfg.heads)?;
            report.grouping = Some(stats);
            u
        } else {
            i2l_update(g, store, &format!("{p}.i2l"), xp, sa_c, geo, cfg.heads)?
        };
        let l2i = l2i_update(g, store, &format!("{p}.l2i"), xc, sa_p, geo, cfg.heads)?;
        xp = residual_ln(g, store, &format!("{p}.p.ln3"), xp, i2l.update)?;
        xc = residual_ln(g, store, &format!("{p}.c.ln3"), xc, l2i.update)?;
    }
    let fp = ffn(g, store, &format!("{p}.p.ffn"), xp)?;
    let fc = ffn(g, store, &format!("{p}.c.ffn"), xc)?;
    let xp = residual_ln(g, store, &format!("{p}.p.ln4"), xp, fp)?;
    let xc = residual_ln(g, store, &format!("{p}.c.ln4"), xc, fc)?;
    Ok((xp, xc, report))
}

/// `cfg.num_layers` sequential [`encoder_layer`] applications.
pub fn encode(
    g: &mut Graph,
    store: &ParamStore,
    hp: Var,
    hc: Var,
    geo: &SceneGeometry,
    cfg: &EncoderConfig,
) -> Result<(Var, Var, Vec<LayerReport>)> {
    cfg.validate()?;
    let (mut xp, mut xc) = (hp, hc);
    let mut reports = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let (a, b, r) = encoder_layer(g, store, l, xp, xc, geo, cfg)?;
        xp = a;
        xc = b;
        reports.push(r);
    }
    Ok((xp, xc, reports))
}
