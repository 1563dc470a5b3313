//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness). Criterion 6 trains twelve
//! models and takes most of the time; `DIPP_ACCEPTANCE_QUICK=1` shrinks it
//! to a smoke run whose line is marked `quick`. The ablation ordering is a
//! reported measurement: a FAIL there is printed but does not fail the
//! binary. Every other FAIL exits nonzero.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use sha2::{Digest, Sha256};

use dipp_cli::*;
use dipp_core::decoder::{DecoderConfig, Modality};
use dipp_core::encoder::*;
use dipp_core::evalbench::*;
use dipp_core::geometry::*;
use dipp_core::numerics::gradcheck::{gradcheck, gradcheck_params};
use dipp_core::numerics::{Graph, ParamStore, Tensor, Var};
use dipp_core::rng::Rng;
use dipp_core::scenesim::{gen_scene, render_sparse_depth, Scene, SceneConfig};
use dipp_core::training::*;

type Outcome = Result<(bool, String), String>;

const H: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-5;

/// sha256 over every file `gen-scene` writes for `small_run`.
const GOLDEN_SCENES: &str = "db1e11ebe0e952cb49daafc59697de070850459b2fc892e493062eef790bd95b";

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn project(g: &mut Graph, y: Var, seed: u64) -> Var {
    let n = g.value(y).len();
    let mut r = Rng::new(seed);
    let w: Vec<f64> = (0..n).map(|_| r.normal()).collect();
    let p = g.mul_const(y, &w).unwrap();
    g.sum(p)
}

fn small_grid() -> BevGrid {
    BevGrid::new(-24.0, 24.0, -24.0, 24.0, 8, 8).unwrap()
}

fn small_scene(seed: u64) -> Scene {
    let cfg = SceneConfig {
        n_objects: 3,
        range: small_grid(),
        num_cameras: 2 + (seed % 3) as usize,
        image_width: 64,
        image_height: 32,
        ground_points: 400,
        rays_per_object: 40,
        ..SceneConfig::default()
    };
    gen_scene(&cfg, seed).unwrap()
}

fn small_encoder(channels: usize, heads: usize) -> EncoderConfig {
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

/// Uniform noise in `[-a, a]`, layer-norm gains near one.
fn randomize(store: &mut ParamStore, rng: &mut Rng, a: f64) {
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let gain = name.ends_with(".g");
        for x in store.get_mut(&name).unwrap().data_mut() {
            *x = if gain { 1.0 + rng.range(-0.2, 0.2) } else { rng.range(-a, a) };
        }
    }
}

fn attention_store(prefix: &str, c: usize, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    for p in ["q", "k", "v", "o"] {
        store.insert(format!("{prefix}.{p}.w"), Tensor::zeros(&[c, c]));
        store.insert(format!("{prefix}.{p}.b"), Tensor::zeros(&[c]));
    }
    randomize(&mut store, &mut Rng::new(seed), 0.6);
    store
}

struct Streams {
    geo: SceneGeometry,
    hp: Tensor,
    hc: Tensor,
}

fn streams(seed: u64, cfg: &EncoderConfig) -> Streams {
    let geo = SceneGeometry::build(&small_scene(seed), &small_grid(), 8, cfg).unwrap();
    let mut rng = Rng::new(seed ^ 0xabc);
    let hp = randn(&mut rng, &[geo.grid.num_cells(), cfg.channels]);
    let hc = randn(&mut rng, &[geo.num_cameras() * geo.pixels_per_camera(), cfg.channels]);
    Streams { geo, hp, hc }
}

fn model_cfg(c: usize, layers: usize) -> ModelConfig {
    ModelConfig {
        channels: c,
        num_classes: 3,
        stride: 8,
        grid: small_grid(),
        encoder: small_encoder(c, 2),
        decoder: DecoderConfig {
            num_layers: layers,
            n_train: 6,
            n_infer: 8,
            heads: 2,
            ffn_hidden: 2 * c,
            roi_size: 3,
            ..DecoderConfig::default()
        },
        ..ModelConfig::default()
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn grouped_equivalence() -> Outcome {
    let mut rng = Rng::new(1);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let heads = [1, 2, 4][rng.below(3)];
        let mut cfg = small_encoder(8, heads);
        cfg.max_neighbors = 8 + rng.below(25);
        let mut bounds = vec![0];
        while *bounds.last().unwrap() < cfg.max_neighbors {
            let next = (bounds.last().unwrap() + 1 + rng.below(10)).min(cfg.max_neighbors);
            bounds.push(next);
        }
        cfg.intervals = GroupedIntervals::new(bounds).map_err(e)?;
        let s = streams(1000 + case, &cfg);
        let store = attention_store("x", 8, case);
        let mut g = Graph::new();
        let hp = g.constant(s.hp.clone());
        let hc = g.constant(s.hc.clone());
        let reference = mmri_i2l(&mut g, &store, "x", hp, hc, &s.geo, heads).map_err(e)?;
        let (grouped, _) = grouped_i2l(&mut g, &store, "x", hp, hc, &s.geo, &cfg.intervals, heads).map_err(e)?;
        worst = worst.max(max_diff(g.data(reference), g.data(grouped)));
    }
    Ok((worst < 1e-6, format!("max_abs_diff={worst:.3e} cases=100")))
}

fn padding_reduction() -> Outcome {
    let d = tempfile::tempdir().map_err(e)?;
    let mut cfg = RunConfig { out: d.path().to_path_buf(), ..RunConfig::default() };
    cfg.model.encoder.intervals = GroupedIntervals::new(vec![0, 4, 64]).map_err(e)?;
    let r = cmd_bench_attn(&cfg, "900x4,100x64", 1).map_err(e)?;
    Ok((r.ratio <= 0.5 && r.ratio == 0.15625, format!("ratio={} grouped={} naive={}", r.ratio, r.grouped_padded, r.naive_padded)))
}

/// Worst relative error per operation, each over `n` instances.
fn gradient_suite() -> Outcome {
    let n = 20u64;
    let mut rows: Vec<(&str, f64)> = Vec::new();
    let mut rng = Rng::new(3);
    let worst = |name: &'static str, err: f64, rows: &mut Vec<(&str, f64)>| match rows.iter_mut().find(|r| r.0 == name) {
        Some(r) => r.1 = r.1.max(err),
        None => rows.push((name, err)),
    };
    for case in 0..n {
        let mask: Vec<bool> = (0..2 * 3 * 4).map(|_| rng.uniform() < 0.7).collect();
        let ins = [randn(&mut rng, &[2, 3, 4]), randn(&mut rng, &[2, 4, 4]), randn(&mut rng, &[2, 4, 4])];
        let err = gradcheck(
            |g, v| {
                let o = g.batched_attention(v[0], v[1], v[2], Some(&mask), 2)?;
                Ok(project(g, o, case))
            },
            &ins,
            H,
        )
        .map_err(e)?;
        worst("attention", err, &mut rows);

        let ins = [randn(&mut rng, &[3, 6]), randn(&mut rng, &[6]), randn(&mut rng, &[6])];
        let err = gradcheck(
            |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
                Ok(project(g, y, case))
            },
            &ins,
            H,
        )
        .map_err(e)?;
        worst("layer_norm", err, &mut rows);

        let ins = [
            randn(&mut rng, &[4, 5]),
            randn(&mut rng, &[5, 8]),
            randn(&mut rng, &[8]),
            randn(&mut rng, &[8, 5]),
            randn(&mut rng, &[5]),
        ];
        let err = gradcheck(
            |g, v| {
                let h = g.linear(v[0], v[1], Some(v[2]))?;
                let h = g.relu(h);
                let y = g.linear(h, v[3], Some(v[4]))?;
                Ok(project(g, y, case))
            },
            &ins,
            H,
        )
        .map_err(e)?;
        worst("ffn", err, &mut rows);

        let shape = DeformableShape { channels: 4, heads: 2, scales: 2, points: 2 };
        let mut dstore = ParamStore::new();
        init_deformable(&mut dstore, &Rng::new(case), "d", shape);
        randomize(&mut dstore, &mut Rng::new(case + 50), 0.7);
        let x = randn(&mut rng, &[5, 6, 4]);
        let def = |g: &mut Graph, st: &ParamStore, v: &[Var]| {
            let y = iml_deformable(g, st, "d", v[0], shape)?;
            Ok(project(g, y, case))
        };
        worst("deformable", gradcheck_params(def, &dstore, &[x], H, 12).map_err(e)?, &mut rows);

        let ecfg = small_encoder(4, 2);
        let s = streams(case, &ecfg);
        let store = attention_store("x", 4, case);
        let geo = &s.geo;
        let polar = |g: &mut Graph, st: &ParamStore, v: &[Var]| {
            let y = polar_ray_attention(g, st, "x", v[0], v[1], geo, 2)?;
            Ok(project(g, y, case))
        };
        let ins = [s.hp.clone(), s.hc.clone()];
        worst("polar", gradcheck_params(polar, &store, &ins, H, 12).map_err(e)?, &mut rows);

        // dynamic conv lives in the decoder layer; alternate modalities
        let mcfg = model_cfg(4, 1);
        let mut store = init_model(&mcfg, case).map_err(e)?;
        randomize(&mut store, &mut Rng::new(case + 9), 0.4);
        let prep = prepare_scene(&small_scene(case), &mcfg).map_err(e)?;
        let modality = if case % 2 == 0 { Modality::Image } else { Modality::Bev };
        let err = dynamic_conv_gradcheck(&store, &prep, &mcfg, modality, case)?;
        worst("dynamic_conv", err, &mut rows);

        let k = 3;
        let nq = 2 + rng.below(5);
        let logits = randn(&mut rng, &[nq, k]);
        let hard: Vec<f64> = (0..nq * k).map(|_| if rng.uniform() < 0.3 { 1.0 } else { 0.0 }).collect();
        let soft: Vec<f64> = (0..nq * k).map(|_| if rng.uniform() < 0.2 { 1.0 } else { rng.range(0.0, 0.99) }).collect();
        let target: Vec<f64> = (0..nq * k).map(|_| rng.normal()).collect();
        let err = gradcheck(|g, v| g.sigmoid_focal(v[0], &hard, 0.25, 2.0), &[logits.clone()], H).map_err(e)?;
        worst("focal_loss", err, &mut rows);
        let err = gradcheck(|g, v| g.penalty_focal(v[0], &soft), &[logits.clone()], H).map_err(e)?;
        worst("heatmap_loss", err, &mut rows);
        let err = gradcheck(|g, v| g.l1_sum(v[0], &target), &[logits], H).map_err(e)?;
        worst("l1_loss", err, &mut rows);
    }
    let max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let detail: Vec<String> = rows.iter().map(|(k, v)| format!("{k}={v:.1e}")).collect();
    Ok((max < GRAD_TOL, format!("instances={n} {}", detail.join(" "))))
}

fn dynamic_conv_gradcheck(store: &ParamStore, prep: &PreparedScene, cfg: &ModelConfig, modality: Modality, seed: u64) -> Result<f64, String> {
    use dipp_core::decoder::{encode_box, mmpi_layer, DecoderMaps, BOX_DIM};
    let c = cfg.channels;
    let grid = cfg.grid;
    let geo = SceneGeometry::build(&prep.scene, &grid, cfg.stride, &cfg.encoder).map_err(e)?;
    let cams: Vec<CameraModel> = geo.cameras.iter().map(|c| c.fcam.clone()).collect();
    let n = 3;
    let mut data = Vec::new();
    for i in 0..n {
        match prep.scene.boxes.get(i) {
            Some(b) => data.extend(encode_box(b)),
            None => data.extend([3.0 * i as f64 - 4.0, 2.0, 0.85, 0.6, 1.4, 0.5, 0.0, 1.0, 0.0, 0.0]),
        }
    }
    let boxes = Tensor::new(&[n, BOX_DIM], data).map_err(e)?;
    let mut rng = Rng::new(seed + 77);
    let ins = [
        randn(&mut rng, &[n, c]),
        randn(&mut rng, &[geo.grid.num_cells(), c]),
        randn(&mut rng, &[geo.num_cameras() * geo.pixels_per_camera(), c]),
        randn(&mut rng, &[n, cfg.num_classes]),
    ];
    let f = |g: &mut Graph, s: &ParamStore, v: &[Var]| {
        let maps = DecoderMaps { hp: v[1], hc: v[2], grid: &grid, fcams: &cams };
        let o = mmpi_layer(g, s, 0, v[0], &boxes, v[3], modality, &maps, &cfg.decoder)?;
        let a = project(g, o.embedding, 1);
        let b = project(g, o.boxes, 2);
        let l = project(g, o.logits, 3);
        g.add_n(&[a, b, l])
    };
    // only the decoder's own tensors matter here
    let mut dec = ParamStore::new();
    for name in store.names().filter(|n| n.starts_with("dec.0.")) {
        dec.insert(name, store.get(name).unwrap().clone());
    }
    gradcheck_params(f, &dec, &ins, H, 8).map_err(e)
}

fn rot(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
    let rz = [[yaw.cos(), -yaw.sin(), 0.0], [yaw.sin(), yaw.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = [[pitch.cos(), 0.0, pitch.sin()], [0.0, 1.0, 0.0], [-pitch.sin(), 0.0, pitch.cos()]];
    let rx = [[1.0, 0.0, 0.0], [0.0, roll.cos(), -roll.sin()], [0.0, roll.sin(), roll.cos()]];
    let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
        let mut o = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                o[i][j] = (0..3).map(|t| p[i][t] * q[t][j]).sum();
            }
        }
        o
    };
    mul(mul(rz, ry), rx)
}

fn random_camera(rng: &mut Rng) -> CameraModel {
    let r = rot(rng.range(-3.0, 3.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
    let mut ext = [[0.0; 4]; 4];
    for i in 0..3 {
        ext[i][..3].copy_from_slice(&r[i]);
        ext[i][3] = rng.range(-5.0, 5.0);
    }
    ext[3][3] = 1.0;
    let f = rng.range(50.0, 500.0);
    let k = CameraModel::intrinsics(f, f * rng.range(0.8, 1.2), rng.range(50.0, 300.0), rng.range(50.0, 200.0));
    CameraModel::new(k, ext, 320, 240).unwrap()
}

fn brute_force(c: &CostMatrix) -> f64 {
    fn go(c: &CostMatrix, i: usize, used: &mut Vec<bool>, t: bool) -> f64 {
        let (rows, cols) = if t { (c.cols, c.rows) } else { (c.rows, c.cols) };
        if i == rows {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..cols {
            if !used[j] {
                used[j] = true;
                let v = if t { c.get(j, i) } else { c.get(i, j) };
                best = best.min(v + go(c, i + 1, used, t));
                used[j] = false;
            }
        }
        best
    }
    let t = c.rows > c.cols;
    go(c, 0, &mut vec![false; c.rows.max(c.cols)], t)
}

fn geometry_checks() -> Outcome {
    let mut rng = Rng::new(4);
    let mut round_trip = 0.0f64;
    let mut done = 0;
    while done < 10_000 {
        let cam = random_camera(&mut rng);
        let p = [rng.range(-60.0, 60.0), rng.range(-60.0, 60.0), rng.range(-10.0, 10.0)];
        if cam.world_to_camera(p)[2] <= 0.1 {
            continue;
        }
        let q = project_point(p, &cam).map_err(e)?;
        let back = lift_pixel(q.u, q.v, q.depth, &cam).map_err(e)?;
        round_trip = round_trip.max(max_diff(&back, &p));
        done += 1;
    }

    let grid = BevGrid::default();
    let mut c2p_mismatch = 0;
    let scfg = SceneConfig { image_width: 128, image_height: 64, ..SceneConfig::default() };
    for seed in 0..3 {
        let s = gen_scene(&scfg, seed).map_err(e)?;
        for cam in &s.rig {
            let dense = complete_depth(&render_sparse_depth(&s.points, cam)).map_err(e)?;
            for _ in 0..40 {
                let (row, col, k) = (rng.below(cam.height), rng.below(cam.width), rng.below(3));
                let got: Vec<_> = map_c2p(row, col, k, &dense, cam, &grid)
                    .map_err(e)?
                    .iter()
                    .map(|n| n.valid.then_some((n.row, n.col)))
                    .collect();
                let mut want = Vec::new();
                let k = k as isize;
                for di in -k..=k {
                    for dj in -k..=k {
                        let (r, c) = (row as isize + di, col as isize + dj);
                        if r < 0 || c < 0 || r >= cam.height as isize || c >= cam.width as isize {
                            want.push(None);
                            continue;
                        }
                        let d = dense.depth[r as usize * cam.width + c as usize];
                        let p = lift_pixel(c as f64 + 0.5, r as f64 + 0.5, d, cam).map_err(e)?;
                        let cell = bev_index(p[0], p[1], &grid);
                        want.push(cell.valid.then_some((cell.row, cell.col)));
                    }
                }
                c2p_mismatch += usize::from(got != want);
            }
        }
    }

    let mut hungarian_gap = 0.0f64;
    for _ in 0..200 {
        let (rows, cols) = (1 + rng.below(7), 1 + rng.below(7));
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.range(-5.0, 5.0)).collect();
        let c = CostMatrix::new(rows, cols, data).map_err(e)?;
        let m = hungarian(&c).map_err(e)?;
        hungarian_gap = hungarian_gap.max((m.total_cost - brute_force(&c)).abs());
    }
    let ok = round_trip < 1e-9 && c2p_mismatch == 0 && hungarian_gap < 1e-9;
    Ok((ok, format!("round_trip={round_trip:.2e} c2p_mismatches={c2p_mismatch} hungarian_gap={hungarian_gap:.1e}")))
}

fn polar_isolation() -> Outcome {
    let mut bad = 0;
    for case in 0..20u64 {
        let heads = [1, 2][case as usize % 2];
        let cfg = small_encoder(8, heads);
        let s = streams(200 + case, &cfg);
        let store = attention_store("x", 8, case);
        let cam = case as usize % s.geo.num_cameras();
        let run = |hc: &Tensor| -> Result<Tensor, String> {
            let mut g = Graph::new();
            let hp = g.constant(s.hp.clone());
            let hc = g.constant(hc.clone());
            let v = polar_columns(&mut g, &store, "x", hp, hc, &s.geo, cam, heads).map_err(e)?;
            Ok(g.value(v).clone())
        };
        let base = run(&s.hc)?;
        let (wc, r, c) = (s.geo.feat_w, cfg.polar_bins, 8);
        let j = (case as usize * 5) % wc;
        let mut hc = s.hc.clone();
        let off = cam * s.geo.pixels_per_camera();
        let mut pr = Rng::new(case);
        for row in 0..s.geo.feat_h {
            for t in 0..c {
                hc.data_mut()[(off + row * wc + j) * c + t] += pr.range(0.5, 2.0);
            }
        }
        let moved = run(&hc)?;
        for ray in 0..wc {
            let span = ray * r * c..(ray + 1) * r * c;
            let same = base.data()[span.clone()] == moved.data()[span];
            if same == (ray == j) {
                bad += 1;
            }
        }
    }
    Ok((bad == 0, format!("configs=20 violations={bad}")))
}

struct AblationSetup {
    model: ModelConfig,
    train: TrainConfig,
    scenes: Vec<Scene>,
    n_train: usize,
    label: &'static str,
}

fn ablation_setup(quick: bool) -> AblationSetup {
    let grid = BevGrid::new(-24.0, 24.0, -24.0, 24.0, 32, 32).unwrap();
    let sc = SceneConfig {
        n_objects: 6,
        range: grid,
        num_cameras: 4,
        image_width: 128,
        image_height: 64,
        ground_points: 1500,
        rays_per_object: 40,
        ..SceneConfig::default()
    };
    let (total, n_train, epochs) = if quick { (30, 20, 2) } else { (200, 150, 12) };
    let scenes = (0..total).map(|i| gen_scene(&sc, 1000 + i as u64).unwrap()).collect();
    let c = 16;
    let model = ModelConfig {
        channels: c,
        num_classes: 3,
        stride: 8,
        grid,
        encoder: EncoderConfig {
            num_layers: 1,
            heads: 2,
            channels: c,
            polar_bins: 32,
            ffn_hidden: 32,
            max_neighbors: 32,
            intervals: GroupedIntervals::new(vec![0, 4, 16, 32]).unwrap(),
            ..EncoderConfig::default()
        },
        decoder: DecoderConfig {
            num_layers: 2,
            n_train: 30,
            n_infer: 40,
            heads: 2,
            ffn_hidden: 32,
            roi_size: 4,
            ..DecoderConfig::default()
        },
        ..ModelConfig::default()
    };
    let train = TrainConfig { epochs, eval_every_epoch: false, ..TrainConfig::default() };
    AblationSetup { model, train, scenes, n_train, label: if quick { "quick" } else { "full" } }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn encoder_ablation(quick: bool) -> Outcome {
    let s = ablation_setup(quick);
    let variants = [("none", false, false), ("iml", true, false), ("mmri", false, true), ("both", true, true)];
    let mut med = [0.0; 4];
    let mut runs = Vec::new();
    for (vi, &(name, iml, mmri)) in variants.iter().enumerate() {
        let mut model = s.model.clone();
        model.encoder.use_iml = iml;
        model.encoder.use_mmri = mmri;
        let mut maps = Vec::new();
        for seed in 0..3 {
            let params = init_model(&model, seed).map_err(e)?;
            let ck = train_loop(&model, &s.train, seed, &s.scenes[..s.n_train], &s.scenes[s.n_train..], Checkpoint::fresh(params), |_| Ok(()))
                .map_err(e)?;
            maps.push(ck.trace.last().map(|m| m.map_lite).unwrap_or(0.0));
        }
        runs.push(format!("{name}={:?}", maps.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>()));
        med[vi] = median(&mut maps);
    }
    let [none, iml, mmri, both] = med;
    let conds = [none < both, iml < both, mmri >= iml, both >= none + 0.05];
    let ok = conds.iter().all(|&c| c);
    Ok((
        ok,
        format!(
            "{} epochs={} medians none={none:.4} iml={iml:.4} mmri={mmri:.4} both={both:.4} conditions={conds:?} runs {}",
            s.label,
            s.train.epochs,
            runs.join(" ")
        ),
    ))
}

fn decoder_alternation() -> Outcome {
    let cfg = model_cfg(8, 5);
    let w = LossWeights::default();
    let mut ok = true;
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let prep = prepare_scene(&small_scene(seed), &cfg).map_err(e)?;
        let mut store = init_model(&cfg, seed).map_err(e)?;
        randomize(&mut store, &mut Rng::new(seed), 0.3);
        let mut g = Graph::new();
        let n = cfg.decoder.n_train;
        let out = forward(&mut g, &store, &prep, &cfg, n).map_err(e)?;
        use Modality::{Bev, Image};
        let seq: Vec<Modality> = out.layers.iter().map(|l| l.modality).collect();
        ok &= seq == [Image, Bev, Image, Bev, Image];
        ok &= out.layers.iter().all(|l| g.shape(l.embedding)[0] == n && g.shape(l.boxes)[0] == n && g.shape(l.logits)[0] == n);
        let gts = &prep.scene.boxes;
        let (total, _) = scene_loss(&mut g, &out, gts, &cfg.grid, 3, &w).map_err(e)?;
        let mut want = w.heatmap * penalty_focal_loss(g.data(out.heat), &heatmap_target(gts, &cfg.grid, 3));
        for l in &out.layers {
            let ll = layer_loss(g.value(l.logits), g.value(l.boxes), gts, &cfg.grid, &w).map_err(e)?;
            want += w.cls * ll.cls + w.bbox * ll.bbox;
        }
        worst = worst.max((g.value(total).item() - want).abs());
    }
    Ok((ok && worst < 1e-12, format!("schedule=[I,B,I,B,I] queries_conserved={ok} supervision_gap={worst:.1e}")))
}

fn metric_sanity() -> Outcome {
    let gt = |s, c, x, y| GroundTruth { scene: s, class: c, center: [x, y] };
    let det = |s, c, x, y, score| Detection { scene: s, class: c, center: [x, y], score };
    let g = [gt(0, 0, 0.0, 0.0)];
    let first = ap_center_distance(&[det(0, 0, 0.1, 0.0, 0.9), det(0, 0, 10.0, 0.0, 0.8)], &g, 1.0);
    let second = ap_center_distance(&[det(0, 0, 0.1, 0.0, 0.8), det(0, 0, 10.0, 0.0, 0.9)], &g, 1.0);

    let mut rng = Rng::new(8);
    let gts: Vec<GroundTruth> = (0..30).map(|i| gt(i % 5, i % 3, rng.range(-30.0, 30.0), rng.range(-30.0, 30.0))).collect();
    let perfect: Vec<Detection> = gts.iter().map(|g| det(g.scene, g.class, g.center[0], g.center[1], rng.uniform())).collect();
    let perfect_map = map_lite(&perfect, &gts);

    let mut monotone = true;
    for s in 0..50 {
        let (mut p, mut gg) = (Vec::new(), Vec::new());
        for _ in 0..1 + rng.below(8) {
            let (x, y, c) = (rng.range(-40.0, 40.0), rng.range(-40.0, 40.0), rng.below(3));
            gg.push(gt(s, c, x, y));
            if rng.uniform() < 0.8 {
                let (r, a) = (rng.range(0.0, 5.0), rng.range(0.0, 6.3));
                p.push(det(s, c, x + r * a.cos(), y + r * a.sin(), rng.uniform()));
            }
        }
        for _ in 0..rng.below(5) {
            p.push(det(s, rng.below(3), rng.range(-40.0, 40.0), rng.range(-40.0, 40.0), rng.uniform()));
        }
        let aps: Vec<f64> = THRESHOLDS.iter().map(|&t| ap_center_distance(&p, &gg, t)).collect();
        monotone &= aps.windows(2).all(|w| w[0] <= w[1]);
    }
    let ok = first == 1.0 && second == 0.5 && perfect_map == 1.0 && monotone;
    Ok((ok, format!("two_prediction={first}/{second} perfect_map={perfect_map} monotone_on_50={monotone}")))
}

fn small_run(out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 5,
        grid: BevGrid::new(-24.0, 24.0, -24.0, 24.0, 8, 8).unwrap(),
        scene: SceneConfig {
            n_objects: 3,
            num_cameras: 2,
            image_width: 64,
            image_height: 32,
            ground_points: 300,
            rays_per_object: 40,
            ..SceneConfig::default()
        },
        model: model_cfg(8, 2),
        train: TrainConfig { epochs: 2, ..TrainConfig::default() },
        out: out.to_path_buf(),
        n_scenes: 5,
        heldout: 2,
        scene_dir: None,
    };
    cfg.sync_grid();
    cfg
}

fn dir_digest(dir: &Path) -> Result<String, String> {
    let mut names: Vec<_> = fs::read_dir(dir).map_err(e)?.map(|x| x.map(|x| x.path())).collect::<Result<_, _>>().map_err(e)?;
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(&p).map_err(e)?);
    }
    Ok(format!("{:x}", h.finalize()))
}

fn reproducibility() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(e)?, tempfile::tempdir().map_err(e)?);
    let ck = |d: &Path| fs::read(d.join(CHECKPOINT_FILE)).map_err(e);
    cmd_train(&small_run(a.path()), None).map_err(e)?;
    cmd_train(&small_run(b.path()), None).map_err(e)?;
    let train_same = ck(a.path())? == ck(b.path())?;

    let (a, b) = (tempfile::tempdir().map_err(e)?, tempfile::tempdir().map_err(e)?);
    cmd_gen_scene(&small_run(a.path())).map_err(e)?;
    cmd_gen_scene(&small_run(b.path())).map_err(e)?;
    let (da, db) = (dir_digest(a.path())?, dir_digest(b.path())?);
    let golden = da == GOLDEN_SCENES;
    Ok((train_same && da == db && golden, format!("checkpoints_identical={train_same} scenes_identical={} golden_digest={golden} digest={da}", da == db)))
}

fn main() -> ExitCode {
    let quick = std::env::var("DIPP_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1");
    let criteria: [(usize, &str, Box<dyn Fn() -> Outcome>); 9] = [
        (1, "grouped attention equivalence", Box::new(grouped_equivalence)),
        (2, "padding reduction", Box::new(padding_reduction)),
        (3, "gradient suite", Box::new(gradient_suite)),
        (4, "geometry and matching", Box::new(geometry_checks)),
        (5, "polar column isolation", Box::new(polar_isolation)),
        (6, "encoder ablation ordering", Box::new(move || encoder_ablation(quick))),
        (7, "decoder modality alternation", Box::new(decoder_alternation)),
        (8, "metric sanity", Box::new(metric_sanity)),
        (9, "reproducibility", Box::new(reproducibility)),
    ];
    let filter: Vec<usize> = std::env::var("DIPP_ACCEPTANCE_ONLY")
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut hard_failure = false;
    for (id, name, run) in &criteria {
        if !filter.is_empty() && !filter.contains(id) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = run().unwrap_or_else(|err| (false, format!("error: {err}")));
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {id} {}: {name}: {detail} ({secs:.1}s)", if ok { "PASS" } else { "FAIL" });
        // the ablation ordering is measured and reported, not enforced
        hard_failure |= !ok && *id != 6;
    }
    if hard_failure {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
