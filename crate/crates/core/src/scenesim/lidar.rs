use super::scene::{Box3D, Scene, SceneConfig};
use crate::geometry::{project_point, CameraModel, DepthMap};
use crate::rng::Rng;

fn inside_footprint(b: &Box3D, x: f64, y: f64) -> bool {
    let l = b.to_local([x, y, b.center[2]]);
    l[0].abs() <= 0.5 * b.size[1] && l[1].abs() <= 0.5 * b.size[0]
}

/// A uniformly distributed point on the five exposed faces (sides and top).
fn surface_point(b: &Box3D, rng: &mut Rng) -> [f64; 3] {
    let [w, l, h] = b.size;
    let areas = [l * h, l * h, w * h, w * h, w * l];
    let total: f64 = areas.iter().sum();
    let mut u = rng.uniform() * total;
    let mut face = 4;
    for (i, a) in areas.iter().enumerate() {
        if u < *a {
            face = i;
            break;
        }
        u -= a;
    }
    let (s, t) = (rng.range(-0.5, 0.5), rng.range(-0.5, 0.5));
    let local = match face {
        0 => [s * l, 0.5 * w, t * h],
        1 => [s * l, -0.5 * w, t * h],
        2 => [0.5 * l, s * w, t * h],
        3 => [-0.5 * l, s * w, t * h],
        _ => [s * l, t * w, 0.5 * h],
    };
    let (f, lat) = b.heading();
    [
        b.center[0] + local[0] * f[0] + local[1] * lat[0],
        b.center[1] + local[0] * f[1] + local[1] * lat[1],
        b.center[2] + local[2],
    ]
}

/// Number of returns an object at `distance` receives: the full budget up to
/// `ref_distance`, then falling off as `1 / distance`, never below one.
pub fn returns_at(distance: f64, rays_per_object: usize, ref_distance: f64) -> usize {
    if rays_per_object == 0 {
        return 0;
    }
    let scale = (ref_distance / distance.max(1e-9)).min(1.0);
    ((rays_per_object as f64 * scale).round() as usize).max(1)
}

/// Ground returns (uniform in radius, so density falls off with range) plus
/// surface returns on every box. No occlusion handling.
pub fn sample_lidar(scene: &Scene, cfg: &SceneConfig, rng: &mut Rng) -> Vec<f64> {
    let g = &cfg.range;
    let r_max = (g.x_max.abs().max(g.x_min.abs()).powi(2) + g.y_max.abs().max(g.y_min.abs()).powi(2)).sqrt();
    let mut pts = Vec::with_capacity(4 * (cfg.ground_points + scene.boxes.len() * cfg.rays_per_object));
    let mut ground = 0;
    while ground < cfg.ground_points {
        let rho = rng.range(1.0, r_max);
        let a = rng.range(-std::f64::consts::PI, std::f64::consts::PI);
        let (x, y) = (rho * libm::cos(a), rho * libm::sin(a));
        let intensity = rng.uniform();
        ground += 1;
        if !g.contains(x, y) || scene.boxes.iter().any(|b| inside_footprint(b, x, y)) {
            continue;
        }
        pts.extend_from_slice(&[x, y, 0.0, intensity]);
    }
    if pts.is_empty() {
        pts.extend_from_slice(&[0.5 * (g.x_min + g.x_max), 0.5 * (g.y_min + g.y_max), 0.0, 0.0]);
    }
    for b in &scene.boxes {
        let d = (b.center[0].powi(2) + b.center[1].powi(2)).sqrt();
        for _ in 0..returns_at(d, cfg.rays_per_object, cfg.ref_distance) {
            let p = surface_point(b, rng);
            pts.extend_from_slice(&[p[0], p[1], p[2], rng.uniform()]);
        }
    }
    pts
}

/// Depth of every point that lands inside `cam`, nearest wins per pixel.
pub fn render_sparse_depth(points: &[f64], cam: &CameraModel) -> DepthMap {
    let mut map = DepthMap::empty(cam.width, cam.height);
    for p in points.chunks_exact(Scene::POINT_STRIDE) {
        if let Ok(q) = project_point([p[0], p[1], p[2]], cam) {
            if q.in_image(cam) {
                let (r, c) = q.pixel();
                map.splat_min(r, c, q.depth);
            }
        }
    }
    map
}
