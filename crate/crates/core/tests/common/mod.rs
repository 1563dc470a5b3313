#![allow(dead_code)]

use dipp_core::encoder::{EncoderConfig, GroupedIntervals, SceneGeometry};
use dipp_core::geometry::BevGrid;
use dipp_core::numerics::{Graph, ParamStore, Tensor, Var};
use dipp_core::rng::Rng;
use dipp_core::scenesim::{gen_scene, Scene, SceneConfig};

pub fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// Weighted sum with fixed random weights so every output element matters.
pub fn project(g: &mut Graph, y: Var, seed: u64) -> Var {
    let n = g.value(y).len();
    let mut r = Rng::new(seed);
    let w: Vec<f64> = (0..n).map(|_| r.normal()).collect();
    let p = g.mul_const(y, &w).unwrap();
    g.sum(p)
}

pub fn small_grid() -> BevGrid {
    BevGrid::new(-24.0, 24.0, -24.0, 24.0, 8, 8).unwrap()
}

pub fn small_scene_config(cams: usize) -> SceneConfig {
    SceneConfig {
        n_objects: 3,
        range: small_grid(),
        num_cameras: cams,
        image_width: 64,
        image_height: 32,
        ground_points: 400,
        rays_per_object: 40,
        ..SceneConfig::default()
    }
}

pub fn small_scene(seed: u64) -> Scene {
    let cams = 2 + (seed % 3) as usize;
    gen_scene(&small_scene_config(cams), seed).unwrap()
}

pub fn small_encoder(channels: usize, heads: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers: 1,
        heads,
        channels,
        polar_bins: 6,
        ffn_hidden: 2 * channels,
        max_neighbors: 16,
        intervals: GroupedIntervals::new(vec![0, 2, 4, 16]).unwrap(),
        ..EncoderConfig::default()
    }
}

pub fn geometry(scene: &Scene, cfg: &EncoderConfig) -> SceneGeometry {
    SceneGeometry::build(scene, &small_grid(), 8, cfg).unwrap()
}

/// Overwrites every parameter with uniform noise in `[-a, a]`, keeping
/// layer-norm gains near one.
pub fn randomize(store: &mut ParamStore, rng: &mut Rng, a: f64) {
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let t = store.get_mut(&name).unwrap();
        let gain = name.ends_with(".g");
        for x in t.data_mut() {
            *x = if gain { 1.0 + rng.range(-0.2, 0.2) } else { rng.range(-a, a) };
        }
    }
}

/// `x W + b` on row-major data, for oracles.
pub fn affine(x: &[f64], store: &ParamStore, name: &str) -> Vec<f64> {
    let w = store.get(&format!("{name}.w")).unwrap();
    let b = store.get(&format!("{name}.b")).unwrap();
    let (k, m) = (w.shape()[0], w.shape()[1]);
    let n = x.len() / k;
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut s = b.data()[j];
            for t in 0..k {
                s += x[i * k + t] * w.data()[t * m + j];
            }
            out[i * m + j] = s;
        }
    }
    out
}

pub fn identity(store: &mut ParamStore, name: &str, c: usize) {
    let mut w = vec![0.0; c * c];
    for i in 0..c {
        w[i * c + i] = 1.0;
    }
    store.insert(format!("{name}.w"), Tensor::new(&[c, c], w).unwrap());
    store.insert(format!("{name}.b"), Tensor::zeros(&[c]));
}
