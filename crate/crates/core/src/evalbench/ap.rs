use std::collections::BTreeSet;

use crate::scenesim::Box3D;

/// Distance thresholds (meters) averaged by [`map_lite`].
pub const THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// A scored prediction; `scene` keeps matches within one scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub scene: usize,
    pub class: usize,
    pub center: [f64; 2],
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub scene: usize,
    pub class: usize,
    pub center: [f64; 2],
}

impl GroundTruth {
    pub fn from_box(scene: usize, b: &Box3D) -> Self {
        GroundTruth {
            scene,
            class: b.class_id,
            center: [b.center[0], b.center[1]],
        }
    }
}

impl Detection {
    pub fn from_box(scene: usize, b: &Box3D, score: f64) -> Self {
        Detection {
            scene,
            class: b.class_id,
            center: [b.center[0], b.center[1]],
            score,
        }
    }
}

/// Average precision with greedy center-distance matching.
///
/// Predictions are visited by descending score (ties keep input order); each
/// takes the nearest unmatched ground truth of its scene and class within
/// `threshold` meters, ties going to the lower ground-truth index. The area
/// under the precision envelope is integrated with the trapezoid rule from
/// recall 0. No ground truth gives 0.
pub fn ap_center_distance(preds: &[Detection], gts: &[GroundTruth], threshold: f64) -> f64 {
    if gts.is_empty() || preds.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut taken = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(preds.len());
    for (k, &i) in order.iter().enumerate() {
        let p = &preds[i];
        let mut best: Option<(f64, usize)> = None;
        for (j, gt) in gts.iter().enumerate() {
            if taken[j] || gt.scene != p.scene || gt.class != p.class {
                continue;
            }
            let d = (gt.center[0] - p.center[0]).hypot(gt.center[1] - p.center[1]);
            if d <= threshold && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            taken[j] = true;
            tp += 1;
        }
        curve.push((tp as f64 / gts.len() as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope, right to left
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut area = 0.0;
    let (mut r0, mut p0) = (0.0, curve[0].1);
    for &(r, p) in &curve {
        area += (r - r0) * (p + p0) / 2.0;
        r0 = r;
        p0 = p;
    }
    area
}

/// Mean AP over [`THRESHOLDS`] and classes; classes with neither
/// predictions nor ground truth are left out. Returns 0 when nothing is left.
pub fn map_lite(preds: &[Detection], gts: &[GroundTruth]) -> f64 {
    let classes: BTreeSet<usize> = preds.iter().map(|p| p.class).chain(gts.iter().map(|g| g.class)).collect();
    if classes.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &c in &classes {
        let p: Vec<Detection> = preds.iter().filter(|d| d.class == c).copied().collect();
        let g: Vec<GroundTruth> = gts.iter().filter(|d| d.class == c).copied().collect();
        total += THRESHOLDS.iter().map(|&t| ap_center_distance(&p, &g, t)).sum::<f64>();
    }
    total / (classes.len() * THRESHOLDS.len()) as f64
}
