//! Optimization steps and the epoch loop.

use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, EpochMetrics};
use super::losses::{scene_loss, LossBreakdown};
use super::matching::LossWeights;
use super::model::{forward, predict, prepare_scene, ModelConfig, PreparedScene};
use super::schedule::OneCycle;
use crate::evalbench::{map_lite, Detection, GroundTruth};
use crate::numerics::{Adam, AdamHyper, Graph, ParamStore};
use crate::rng::Rng;
use crate::scenesim::{Box3D, Scene};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub schedule: OneCycle,
    pub beta2: f64,
    pub eps: f64,
    pub weights: LossWeights,
    /// Global gradient-norm clip, if any.
    pub max_grad_norm: Option<f64>,
    /// Random yaw rotation and y-flip of each training scene.
    pub augment: bool,
    /// Score the held-out split after every epoch (otherwise only after
    /// the last one).
    pub eval_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            schedule: OneCycle::default(),
            beta2: 0.999,
            eps: 1e-8,
            weights: LossWeights::default(),
            max_grad_norm: Some(10.0),
            augment: true,
            eval_every_epoch: true,
        }
    }
}

/// One forward/backward pass on `prep` with `n_train` queries, optional
/// gradient clipping and one Adam update. Parameters are left untouched when the loss is not finite.
pub fn train_step(
    store: &mut ParamStore,
    adam: &mut Adam,
    prep: &PreparedScene,
    model: &ModelConfig,
    cfg: &TrainConfig,
    hyper: &AdamHyper,
) -> Result<LossBreakdown> {
    let mut g = Graph::with_precision(model.precision);
    let out = forward(&mut g, store, prep, model, model.decoder.n_train)?;
    let (loss, mut breakdown) = scene_loss(&mut g, &out, &prep.scene.boxes, &model.grid, model.num_classes, &cfg.weights)?;
    g.backward(loss)?;
    store.zero_grad();
    g.accumulate_into(store);
    breakdown.grad_norm = match cfg.max_grad_norm {
        Some(m) => store.clip_grad_norm(m),
        None => store.grad_norm(""),
    };
    adam.step(store, hyper)?;
    Ok(breakdown)
}

/// Rotates the scene about the vertical axis through the origin and, with
/// probability one half, mirrors it across the x axis. Cameras stay put.
pub fn augment_scene(scene: &Scene, rng: &mut Rng) -> Scene {
    let phi = rng.range(-std::f64::consts::PI, std::f64::consts::PI);
    let flip = rng.uniform() < 0.5;
    let (s, c) = (libm::sin(phi), libm::cos(phi));
    let tf = |x: f64, y: f64| -> (f64, f64) {
        let y = if flip { -y } else { y };
        (c * x - s * y, s * x + c * y)
    };
    let mut out = scene.clone();
    for p in out.points.chunks_exact_mut(Scene::POINT_STRIDE) {
        let (x, y) = tf(p[0], p[1]);
        p[0] = x;
        p[1] = y;
    }
    for b in &mut out.boxes {
        let (x, y) = tf(b.center[0], b.center[1]);
        b.center[0] = x;
        b.center[1] = y;
        let (vx, vy) = tf(b.velocity[0], b.velocity[1]);
        b.velocity = [vx, vy];
        let yaw = if flip { -b.yaw } else { b.yaw } + phi;
        b.yaw = crate::decoder::yaw_of(libm::sin(yaw), libm::cos(yaw));
    }
    out
}

/// Center-distance mAP of the model's predictions over `scenes`.
pub fn evaluate(store: &ParamStore, model: &ModelConfig, scenes: &[PreparedScene]) -> Result<f64> {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for (i, p) in scenes.iter().enumerate() {
        preds.extend(
            predict(store, p, model)?
                .iter()
                .map(|(b, s)| Detection::from_box(i, b, *s)),
        );
        gts.extend(p.scene.boxes.iter().map(|b| GroundTruth::from_box(i, b)));
    }
    Ok(map_lite(&preds, &gts))
}

fn in_range(b: &Box3D, model: &ModelConfig) -> bool {
    model.grid.contains(b.center[0], b.center[1])
}

/// Runs epochs `start.epoch + 1 ..= cfg.epochs`, visiting the training
/// scenes in a per-epoch shuffled order, one scene per step. Everything
/// random derives from `seed`, the epoch and the step, so resuming from any
/// returned checkpoint reproduces the uninterrupted run. `on_epoch` sees
/// each finished epoch.
pub fn train_loop(
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    train: &[Scene],
    heldout: &[Scene],
    start: Checkpoint,
    mut on_epoch: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    model.validate()?;
    let mut ck = start;
    if ck.epoch >= cfg.epochs || train.is_empty() {
        return Ok(ck);
    }
    let cached: Vec<PreparedScene> = if cfg.augment {
        Vec::new()
    } else {
        train.iter().map(|s| prepare_scene(s, model)).collect::<Result<_>>()?
    };
    let held: Vec<PreparedScene> = heldout.iter().map(|s| prepare_scene(s, model)).collect::<Result<_>>()?;
    let total = (cfg.epochs * train.len()) as u64;
    let root = Rng::new(seed);
    while ck.epoch < cfg.epochs {
        let epoch = ck.epoch;
        let mut erng = root.split(epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, erng.below(i + 1));
        }
        let mut loss_sum = 0.0;
        for (k, &si) in order.iter().enumerate() {
            let augmented;
            let prep = if cfg.augment {
                let mut srng = erng.split(k as u64);
                let mut s = augment_scene(&train[si], &mut srng);
                s.boxes.retain(|b| in_range(b, model));
                augmented = prepare_scene(&s, model)?;
                &augmented
            } else {
                &cached[si]
            };
            let (lr, beta1) = cfg.schedule.at(ck.step, total);
            let hyper = AdamHyper {
                lr,
                beta1,
                beta2: cfg.beta2,
                eps: cfg.eps,
            };
            let b = train_step(&mut ck.params, &mut ck.adam, prep, model, cfg, &hyper)?;
            loss_sum += b.total;
            ck.step += 1;
        }
        ck.epoch += 1;
        let map = if cfg.eval_every_epoch || ck.epoch == cfg.epochs {
            evaluate(&ck.params, model, &held)?
        } else {
            f64::NAN
        };
        ck.trace.push(EpochMetrics {
            epoch: ck.epoch,
            loss: loss_sum / train.len() as f64,
            map_lite: map,
        });
        on_epoch(&ck)?;
    }
    Ok(ck)
}
