//! Toy featurizers producing the two modality representations.

use super::scene::Scene;
use crate::geometry::{bev_index, project_point, BevGrid, CameraModel};
use crate::numerics::{Graph, Init, ParamStore, Tensor, Var};
use crate::rng::Rng;
use crate::Result;

/// Per-point inputs: offset from the pillar center (in cells), height, intensity.
pub const POINT_FEATURES: usize = 4;

/// Raster channels besides the class one-hot: objectness and inverse depth.
pub const RASTER_EXTRA: usize = 2;

pub fn init_featurizer_params(store: &mut ParamStore, rng: &Rng, channels: usize, num_classes: usize) {
    let c = channels;
    let cin = num_classes + RASTER_EXTRA;
    store.init(rng, "feat.pts.l1.w", &[POINT_FEATURES, c], Init::Xavier);
    store.init(rng, "feat.pts.l1.b", &[c], Init::Zeros);
    store.init(rng, "feat.pts.l2.w", &[c, c], Init::Xavier);
    store.init(rng, "feat.pts.l2.b", &[c], Init::Zeros);
    store.init(rng, "feat.pts.c1.w", &[3, 3, c, c], Init::Xavier);
    store.init(rng, "feat.pts.c1.b", &[c], Init::Zeros);
    store.init(rng, "feat.pts.c2.w", &[3, 3, c, c], Init::Xavier);
    store.init(rng, "feat.pts.c2.b", &[c], Init::Zeros);
    store.init(rng, "feat.img.c1.w", &[3, 3, cin, c], Init::Xavier);
    store.init(rng, "feat.img.c1.b", &[c], Init::Zeros);
    store.init(rng, "feat.img.c2.w", &[3, 3, c, c], Init::Xavier);
    store.init(rng, "feat.img.c2.b", &[c], Init::Zeros);
}

/// In-range points as per-point feature rows with their flat pillar index.
pub fn point_rows(points: &[f64], grid: &BevGrid) -> (Vec<f64>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for p in points.chunks_exact(Scene::POINT_STRIDE) {
        let cell = bev_index(p[0], p[1], grid);
        if !cell.valid {
            continue;
        }
        let (ir, ic) = grid.index_space(p[0], p[1]);
        rows.extend_from_slice(&[ic - cell.col as f64, ir - cell.row as f64, 0.5 * p[2], p[3]]);
        cells.push(grid.flat(cell.row, cell.col));
    }
    (rows, cells)
}

/// Max-pooled point embeddings scattered to the grid, `[H, W, C]`, before any
/// convolution. Empty pillars are zero.
pub fn pillar_grid(g: &mut Graph, store: &ParamStore, points: &[f64], grid: &BevGrid) -> Result<Var> {
    let c = store.get("feat.pts.l1.b").map(|t| t.len()).unwrap_or(0);
    let (rows, cells) = point_rows(points, grid);
    if cells.is_empty() {
        return Ok(g.constant(Tensor::zeros(&[grid.h, grid.w, c])));
    }
    let x = g.constant(Tensor::new(&[cells.len(), POINT_FEATURES], rows)?);
    let (w1, b1) = (g.param(store, "feat.pts.l1.w")?, g.param(store, "feat.pts.l1.b")?);
    let (w2, b2) = (g.param(store, "feat.pts.l2.w")?, g.param(store, "feat.pts.l2.b")?);
    let h = g.linear(x, w1, Some(b1))?;
    let h = g.relu(h);
    let h = g.linear(h, w2, Some(b2))?;
    let h = g.relu(h);
    let pooled = g.scatter_max(h, &cells, grid.num_cells())?;
    g.reshape(pooled, &[grid.h, grid.w, c])
}

/// LiDAR BEV representation `h_p`, `[H, W, C]`.
pub fn featurize_points(g: &mut Graph, store: &ParamStore, points: &[f64], grid: &BevGrid) -> Result<Var> {
    let x = pillar_grid(g, store, points, grid)?;
    conv_pair(g, store, "feat.pts", x)
}

fn conv_pair(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let w1 = g.param(store, &format!("{prefix}.c1.w"))?;
    let b1 = g.param(store, &format!("{prefix}.c1.b"))?;
    let w2 = g.param(store, &format!("{prefix}.c2.w"))?;
    let b2 = g.param(store, &format!("{prefix}.c2.b"))?;
    let h = g.conv2d(x, w1, Some(b1))?;
    let h = g.relu(h);
    g.conv2d(h, w2, Some(b2))
}

/// Box rasterization on the feature-resolution camera `fcam`: each pixel
/// covered by a projected box rectangle takes the nearest box's class one-hot,
/// a constant objectness channel and `10 / depth`. Uncovered pixels are zero.
pub fn rasterize(scene: &Scene, fcam: &CameraModel, num_classes: usize) -> Result<Tensor> {
    let (h, w) = (fcam.height, fcam.width);
    let ch = num_classes + RASTER_EXTRA;
    let mut out = Tensor::zeros(&[h, w, ch]);
    let mut zbuf = vec![f64::INFINITY; h * w];
    for b in &scene.boxes {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for corner in b.corners() {
            if let Ok(q) = project_point(corner, fcam) {
                lo = [lo[0].min(q.u), lo[1].min(q.v)];
                hi = [hi[0].max(q.u), hi[1].max(q.v)];
            }
        }
        let depth = match project_point(b.center, fcam) {
            Ok(q) => q.depth,
            Err(_) => continue,
        };
        if !lo[0].is_finite() {
            continue;
        }
        let c0 = (lo[0] - 0.5).ceil().max(0.0) as usize;
        let r0 = (lo[1] - 0.5).ceil().max(0.0) as usize;
        let c1 = ((hi[0] - 0.5).floor().min(w as f64 - 1.0)).max(-1.0);
        let r1 = ((hi[1] - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
        if c1 < 0.0 || r1 < 0.0 {
            continue;
        }
        let data = out.data_mut();
        for r in r0..=r1 as usize {
            for c in c0..=c1 as usize {
                let p = r * w + c;
                if depth >= zbuf[p] {
                    continue;
                }
                zbuf[p] = depth;
                let cell = &mut data[p * ch..(p + 1) * ch];
                cell.fill(0.0);
                cell[b.class_id.min(num_classes - 1)] = 1.0;
                cell[num_classes] = 1.0;
                cell[num_classes + 1] = 10.0 / depth;
            }
        }
    }
    Ok(out)
}

/// Camera representation `h_c`, `[H_c, W_c, C]`, from a precomputed raster.
pub fn featurize_image(g: &mut Graph, store: &ParamStore, raster: &Tensor) -> Result<Var> {
    let x = g.constant(raster.clone());
    conv_pair(g, store, "feat.img", x)
}

#[cfg(test)]
mod tests {
    use super::super::scene::{gen_scene, Box3D, SceneConfig};
    use super::*;

    fn store(c: usize, k: usize) -> ParamStore {
        let mut s = ParamStore::new();
        init_featurizer_params(&mut s, &Rng::new(5), c, k);
        s
    }

    fn small_grid() -> BevGrid {
        BevGrid::new(-8.0, 8.0, -8.0, 8.0, 8, 8).unwrap()
    }

    #[test]
    fn empty_cloud_is_zero_grid() {
        let s = store(6, 3);
        let mut g = Graph::new();
        let v = pillar_grid(&mut g, &s, &[], &small_grid()).unwrap();
        assert_eq!(g.shape(v), &[8, 8, 6]);
        assert!(g.data(v).iter().all(|&x| x == 0.0));
        let out = featurize_points(&mut g, &s, &[], &small_grid()).unwrap();
        assert_eq!(g.shape(out), &[8, 8, 6]);
    }

    #[test]
    fn single_point_single_pillar() {
        let s = store(6, 3);
        let mut g = Graph::new();
        let v = pillar_grid(&mut g, &s, &[1.3, -2.1, 0.7, 0.4], &small_grid()).unwrap();
        let nonzero: Vec<usize> = (0..64).filter(|&k| g.data(v)[k * 6..k * 6 + 6].iter().any(|&x| x != 0.0)).collect();
        let cell = bev_index(1.3, -2.1, &small_grid());
        assert_eq!(nonzero, vec![small_grid().flat(cell.row, cell.col)]);
    }

    #[test]
    fn permutation_invariant() {
        let s = store(6, 3);
        let pts = [1.1, 1.2, 0.3, 0.1, 1.4, 1.9, 0.8, 0.5, 1.7, 1.5, 1.2, 0.9, -3.0, 4.0, 0.0, 0.2];
        let mut perm = Vec::new();
        for k in [2usize, 0, 3, 1] {
            perm.extend_from_slice(&pts[k * 4..k * 4 + 4]);
        }
        let mut g = Graph::new();
        let a = featurize_points(&mut g, &s, &pts, &small_grid()).unwrap();
        let b = featurize_points(&mut g, &s, &perm, &small_grid()).unwrap();
        assert_eq!(g.data(a), g.data(b));
    }

    fn level_scene(boxes: Vec<Box3D>) -> (Scene, CameraModel) {
        let cfg = SceneConfig { n_objects: 0, ..SceneConfig::default() };
        let mut scene = gen_scene(&cfg, 0).unwrap();
        scene.boxes = boxes;
        let fcam = scene.rig[0].scaled(8).unwrap();
        (scene, fcam)
    }

    #[test]
    fn empty_scene_constant_features() {
        let (scene, fcam) = level_scene(Vec::new());
        let raster = rasterize(&scene, &fcam, 3).unwrap();
        assert!(raster.data().iter().all(|&x| x == 0.0));
        let s = store(6, 3);
        let mut g = Graph::new();
        let h = featurize_image(&mut g, &s, &raster).unwrap();
        let d = g.data(h);
        for px in d.chunks(6) {
            assert_eq!(px, &d[..6]);
        }
    }

    #[test]
    fn one_box_raster_inside_footprint() {
        let b = Box3D {
            center: [15.0, 1.0, 0.9],
            size: [2.0, 4.0, 1.8],
            yaw: 0.3,
            class_id: 1,
            velocity: [0.0, 0.0],
        };
        let (scene, fcam) = level_scene(vec![b.clone()]);
        let raster = rasterize(&scene, &fcam, 3).unwrap();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for corner in b.corners() {
            let q = project_point(corner, &fcam).unwrap();
            lo = [lo[0].min(q.u), lo[1].min(q.v)];
            hi = [hi[0].max(q.u), hi[1].max(q.v)];
        }
        let mut hits = 0;
        for r in 0..fcam.height {
            for c in 0..fcam.width {
                let px = &raster.data()[(r * fcam.width + c) * 5..(r * fcam.width + c + 1) * 5];
                let (u, v) = (c as f64 + 0.5, r as f64 + 0.5);
                let inside = u >= lo[0] && u <= hi[0] && v >= lo[1] && v <= hi[1];
                assert_eq!(px.iter().any(|&x| x != 0.0), inside, "pixel {r},{c}");
                if inside {
                    hits += 1;
                    assert_eq!(px[1], 1.0);
                    assert_eq!(px[0], 0.0);
                }
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn image_features_reproducible() {
        let cfg = SceneConfig::default();
        let scene = gen_scene(&cfg, 11).unwrap();
        let fcam = scene.rig[1].scaled(8).unwrap();
        let s = store(6, 3);
        let run = || {
            let mut g = Graph::new();
            let r = rasterize(&scene, &fcam, 3).unwrap();
            let h = featurize_image(&mut g, &s, &r).unwrap();
            g.data(h).to_vec()
        };
        assert_eq!(run(), run());
    }
}
