use serde::{Deserialize, Serialize};

use crate::geometry::{BevGrid, CameraModel};
use crate::rng::Rng;
use crate::{Error, Result};

/// Oriented 3-D box. `size = [w, l, h]`: `l` runs along the heading `yaw`,
/// `w` across it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub class_id: usize,
    pub velocity: [f64; 2],
}

impl Box3D {
    pub fn heading(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = (libm::sin(self.yaw), libm::cos(self.yaw));
        ([c, s], [-s, c])
    }

    /// The four ground-plane footprint corners, optionally scaled by `enlarge`.
    pub fn footprint(&self, enlarge: f64) -> [[f64; 2]; 4] {
        let (f, l) = self.heading();
        let hl = 0.5 * self.size[1] * enlarge;
        let hw = 0.5 * self.size[0] * enlarge;
        let mut out = [[0.0; 2]; 4];
        for (k, (a, b)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)].into_iter().enumerate() {
            out[k] = [
                self.center[0] + a * hl * f[0] + b * hw * l[0],
                self.center[1] + a * hl * f[1] + b * hw * l[1],
            ];
        }
        out
    }

    pub fn corners(&self) -> [[f64; 3]; 8] {
        let fp = self.footprint(1.0);
        let z0 = self.center[2] - 0.5 * self.size[2];
        let z1 = self.center[2] + 0.5 * self.size[2];
        let mut out = [[0.0; 3]; 8];
        for k in 0..4 {
            out[k] = [fp[k][0], fp[k][1], z0];
            out[k + 4] = [fp[k][0], fp[k][1], z1];
        }
        out
    }

    /// World point expressed in the box frame (forward, left, up).
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (f, l) = self.heading();
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        [d[0] * f[0] + d[1] * f[1], d[0] * l[0] + d[1] * l[1], d[2]]
    }

    pub fn bev_radius(&self) -> f64 {
        0.5 * (self.size[0] * self.size[0] + self.size[1] * self.size[1]).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// `N x 4` rows of `(x, y, z, intensity)`.
    pub points: Vec<f64>,
    pub boxes: Vec<Box3D>,
    pub rig: Vec<CameraModel>,
    pub seed: u64,
}

impl Scene {
    pub const POINT_STRIDE: usize = 4;

    pub fn num_points(&self) -> usize {
        self.points.len() / Self::POINT_STRIDE
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * 4..i * 4 + 4]
    }
}

/// Scene generation parameters. Classes share one size distribution by
/// default, so class identity is visible to the cameras only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_objects: usize,
    pub num_classes: usize,
    /// Relative class frequencies; empty means uniform.
    pub class_mix: Vec<f64>,
    pub range: BevGrid,
    pub num_cameras: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub camera_height: f64,
    pub rays_per_object: usize,
    /// Distance (m) up to which an object receives the full `rays_per_object`.
    pub ref_distance: f64,
    pub ground_points: usize,
    pub width_range: [f64; 2],
    pub length_range: [f64; 2],
    pub height_range: [f64; 2],
    pub max_speed: f64,
    /// Minimum distance of a box center from the sensor origin.
    pub min_distance: f64,
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_objects: 8,
            num_classes: 3,
            class_mix: Vec::new(),
            range: BevGrid::default(),
            num_cameras: 6,
            image_width: 256,
            image_height: 128,
            camera_height: 1.6,
            rays_per_object: 60,
            ref_distance: 8.0,
            ground_points: 4000,
            width_range: [1.6, 2.2],
            length_range: [3.6, 5.0],
            height_range: [1.4, 2.0],
            max_speed: 5.0,
            min_distance: 4.0,
            max_attempts: 2000,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        if self.num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".into()));
        }
        if !(2..=6).contains(&self.num_cameras) {
            return Err(Error::InvalidArgument("rig must have 2 to 6 cameras".into()));
        }
        if !self.class_mix.is_empty()
            && (self.class_mix.len() != self.num_classes
                || self.class_mix.iter().any(|&w| !(w >= 0.0))
                || self.class_mix.iter().sum::<f64>() <= 0.0)
        {
            return Err(Error::InvalidArgument("class_mix must hold one non-negative weight per class".into()));
        }
        if self.ground_points == 0 {
            return Err(Error::InvalidArgument("ground_points must be positive".into()));
        }
        for r in [self.width_range, self.length_range, self.height_range] {
            if !(r[0] > 0.0 && r[1] >= r[0]) {
                return Err(Error::InvalidArgument(format!("bad size range {r:?}")));
            }
        }
        Ok(())
    }

    /// Cameras spread evenly in yaw around the origin, each with a horizontal
    /// field of view of `360 / n + 10` degrees so neighbors overlap, capped at
    /// 150 degrees. Two-camera rigs therefore leave two 30 degree side wedges
    /// unseen.
    pub fn rig(&self) -> Result<Vec<CameraModel>> {
        let n = self.num_cameras;
        let hfov = (360.0 / n as f64 + 10.0).min(150.0).to_radians();
        let (w, h) = (self.image_width, self.image_height);
        let fx = 0.5 * w as f64 / libm::tan(0.5 * hfov);
        (0..n)
            .map(|i| {
                let yaw = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let pos = [0.5 * libm::cos(yaw), 0.5 * libm::sin(yaw), self.camera_height];
                CameraModel::level(pos, yaw, fx, fx, 0.5 * w as f64, 0.5 * h as f64, w, h)
            })
            .collect()
    }
}

fn pick_class(rng: &mut Rng, cfg: &SceneConfig) -> usize {
    if cfg.class_mix.is_empty() {
        return rng.below(cfg.num_classes);
    }
    let total: f64 = cfg.class_mix.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, &w) in cfg.class_mix.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    cfg.num_classes - 1
}

/// Deterministic scene for `(cfg, seed)`: non-overlapping boxes, a camera rig
/// and a sampled LiDAR sweep.
pub fn gen_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    let root = Rng::new(seed);
    let mut rng = root.split(1);
    let g = &cfg.range;
    let max_r = 0.5 * (cfg.width_range[1].powi(2) + cfg.length_range[1].powi(2)).sqrt();
    let mut boxes: Vec<Box3D> = Vec::with_capacity(cfg.n_objects);
    let mut attempts = 0;
    while boxes.len() < cfg.n_objects {
        attempts += 1;
        if attempts > cfg.max_attempts {
            return Err(Error::InfeasiblePacking {
                requested: cfg.n_objects,
                attempts: cfg.max_attempts,
            });
        }
        let x = rng.range(g.x_min + max_r, g.x_max - max_r);
        let y = rng.range(g.y_min + max_r, g.y_max - max_r);
        let size = [
            rng.range(cfg.width_range[0], cfg.width_range[1]),
            rng.range(cfg.length_range[0], cfg.length_range[1]),
            rng.range(cfg.height_range[0], cfg.height_range[1]),
        ];
        let yaw = rng.range(-std::f64::consts::PI, std::f64::consts::PI);
        let class_id = pick_class(&mut rng, cfg);
        let speed = rng.range(0.0, cfg.max_speed);
        let b = Box3D {
            center: [x, y, 0.5 * size[2]],
            size,
            yaw,
            class_id,
            velocity: [speed * libm::cos(yaw), speed * libm::sin(yaw)],
        };
        if (x * x + y * y).sqrt() < cfg.min_distance + b.bev_radius() {
            continue;
        }
        let clear = boxes.iter().all(|o| {
            let d = ((o.center[0] - x).powi(2) + (o.center[1] - y).powi(2)).sqrt();
            d > o.bev_radius() + b.bev_radius() + 0.2
        });
        if clear {
            boxes.push(b);
        }
    }
    let rig = cfg.rig()?;
    let mut scene = Scene {
        points: Vec::new(),
        boxes,
        rig,
        seed,
    };
    scene.points = super::lidar::sample_lidar(&scene, cfg, &mut root.split(2));
    Ok(scene)
}
