mod common;

use common::*;
use dipp_core::encoder::*;
use dipp_core::numerics::gradcheck::gradcheck_params;
use dipp_core::numerics::{bilinear_sample, layer_norm, masked_mha, sinusoidal, AttentionConfig, Graph, ParamStore, Tensor};
use dipp_core::rng::Rng;
use dipp_core::scenesim::{featurize_image, featurize_points, init_featurizer_params, rasterize};

fn deformable_store(s: DeformableShape, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    init_deformable(&mut store, &Rng::new(seed), "d", s);
    store
}

#[test]
fn deformable_zero_offsets_single_point_is_identity() {
    let s = DeformableShape { channels: 4, heads: 2, scales: 1, points: 1 };
    let mut store = deformable_store(s, 1);
    store.insert("d.off.b", Tensor::zeros(&[4]));
    identity(&mut store, "d.v", 4);
    identity(&mut store, "d.o", 4);
    let x = randn(&mut Rng::new(2), &[5, 6, 4]);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = iml_deformable(&mut g, &store, "d", xv, s).unwrap();
    assert_eq!(g.value(y).max_abs_diff(&x), 0.0);
}

fn pool(map: &[f64], h: usize, w: usize, c: usize) -> (Vec<f64>, usize, usize) {
    let (h2, w2) = (h / 2, w / 2);
    let mut out = vec![0.0; h2 * w2 * c];
    for r in 0..h2 {
        for q in 0..w2 {
            for k in 0..c {
                let at = |rr: usize, cc: usize| map[(rr * w + cc) * c + k];
                out[(r * w2 + q) * c + k] =
                    0.25 * (at(2 * r, 2 * q) + at(2 * r + 1, 2 * q) + at(2 * r, 2 * q + 1) + at(2 * r + 1, 2 * q + 1));
            }
        }
    }
    (out, h2, w2)
}

#[test]
fn deformable_matches_scalar_loop() {
    for seed in 0..4 {
        let s = DeformableShape { channels: 4, heads: 2, scales: 2, points: 3 };
        let mut rng = Rng::new(100 + seed);
        let mut store = deformable_store(s, seed);
        randomize(&mut store, &mut rng, 0.8);
        let (h, w, c) = (6, 6, 4);
        let x = randn(&mut rng, &[h, w, c]);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = iml_deformable(&mut g, &store, "d", xv, s).unwrap();

        let v0 = affine(x.data(), &store, "d.v");
        let (v1, h1, w1) = pool(&v0, h, w, c);
        let maps = [Tensor::new(&[h, w, c], v0).unwrap(), Tensor::new(&[h1, w1, c], v1).unwrap()];
        let off = affine(x.data(), &store, "d.off");
        let att = affine(x.data(), &store, "d.att");
        let (sm, d) = (s.scales * s.points, c / s.heads);
        let mut agg = vec![0.0; h * w * c];
        for q in 0..h * w {
            let (r, col) = ((q / w) as f64, (q % w) as f64);
            for hd in 0..s.heads {
                let logits = &att[q * s.heads * sm + hd * sm..q * s.heads * sm + (hd + 1) * sm];
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
                for sc in 0..s.scales {
                    let f = (1 << sc) as f64;
                    for m in 0..s.points {
                        let j = hd * sm + sc * s.points + m;
                        let o = &off[q * 2 * s.heads * sm + 2 * j..];
                        let (lr, lc) = ((r + 0.5) / f - 0.5 + o[0], (col + 0.5) / f - 0.5 + o[1]);
                        let a = (logits[sc * s.points + m] - mx).exp() / z;
                        let v = bilinear_sample(&maps[sc], lr, lc).unwrap();
                        for t in 0..d {
                            agg[q * c + hd * d + t] += a * v[hd * d + t];
                        }
                    }
                }
            }
        }
        let want = affine(&agg, &store, "d.o");
        let got = g.data(y);
        let diff = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "seed {seed}: {diff}");
    }
}

#[test]
fn deformable_preserves_shape() {
    let mut rng = Rng::new(7);
    for (h, w, heads, scales, points) in [(3, 7, 1, 1, 1), (4, 4, 2, 2, 4), (1, 5, 4, 3, 2), (9, 2, 2, 1, 3)] {
        let s = DeformableShape { channels: 8, heads, scales, points };
        let mut store = deformable_store(s, 3);
        randomize(&mut store, &mut rng, 0.5);
        let mut g = Graph::new();
        let x = g.constant(randn(&mut rng, &[h, w, 8]));
        let y = iml_deformable(&mut g, &store, "d", x, s).unwrap();
        assert_eq!(g.shape(y), &[h, w, 8]);
        assert!(g.value(y).is_finite());
    }
}

struct Streams {
    geo: SceneGeometry,
    hp: Tensor,
    hc: Tensor,
}

fn streams(seed: u64, cfg: &EncoderConfig) -> Streams {
    let scene = small_scene(seed);
    let geo = geometry(&scene, cfg);
    let mut rng = Rng::new(seed ^ 0xabc);
    let hp = randn(&mut rng, &[geo.grid.num_cells(), cfg.channels]);
    let hc = randn(&mut rng, &[geo.num_cameras() * geo.pixels_per_camera(), cfg.channels]);
    Streams { geo, hp, hc }
}

fn attention_store(prefix: &str, c: usize, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    let mut rng = Rng::new(seed);
    for p in ["q", "k", "v", "o"] {
        identity(&mut store, &format!("{prefix}.{p}"), c);
    }
    randomize(&mut store, &mut rng, 0.6);
    store
}

fn identity_attention(prefix: &str, c: usize) -> ParamStore {
    let mut store = ParamStore::new();
    for p in ["q", "k", "v", "o"] {
        identity(&mut store, &format!("{prefix}.{p}"), c);
    }
    store
}

fn rows(t: &Tensor, i: usize, c: usize) -> &[f64] {
    &t.data()[i * c..(i + 1) * c]
}

#[test]
fn i2l_empty_and_single_neighbor() {
    let cfg = small_encoder(4, 2);
    let mut s = streams(1, &cfg);
    s.geo.i2l[0] = vec![I2lKey { camera: 1, row: 1.3, col: 2.6 }];
    s.geo.i2l[1].clear();
    let store = identity_attention("x", 4);
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let out = mmri_i2l(&mut g, &store, "x", hp, hc, &s.geo, 2).unwrap();
    let out = g.value(out);
    let cam1 = Tensor::new(
        &[s.geo.feat_h, s.geo.feat_w, 4],
        s.hc.data()[s.geo.pixels_per_camera() * 4..2 * s.geo.pixels_per_camera() * 4].to_vec(),
    )
    .unwrap();
    let want = bilinear_sample(&cam1, 1.3, 2.6).unwrap();
    for (a, b) in rows(out, 0, 4).iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(rows(out, 1, 4), rows(&s.hp, 1, 4));
    for (i, keys) in s.geo.i2l.iter().enumerate() {
        if keys.is_empty() {
            assert_eq!(rows(out, i, 4), rows(&s.hp, i, 4));
        }
    }
}

/// Dense masked attention over every sampled key, with each BEV query
/// admitting only its own keys.
fn i2l_oracle(s: &Streams, store: &ParamStore, prefix: &str, cfg: &EncoderConfig) -> Vec<f64> {
    let c = cfg.channels;
    let per = s.geo.pixels_per_camera();
    let kmap = affine(s.hc.data(), store, &format!("{prefix}.k"));
    let vmap = affine(s.hc.data(), store, &format!("{prefix}.v"));
    let cam_map = |m: &[f64], cam: usize| {
        Tensor::new(&[s.geo.feat_h, s.geo.feat_w, c], m[cam * per * c..(cam + 1) * per * c].to_vec()).unwrap()
    };
    let (mut ks, mut vs, mut owner) = (Vec::new(), Vec::new(), Vec::new());
    for (qi, keys) in s.geo.i2l.iter().enumerate() {
        for k in keys {
            ks.extend(bilinear_sample(&cam_map(&kmap, k.camera), k.row, k.col).unwrap());
            vs.extend(bilinear_sample(&cam_map(&vmap, k.camera), k.row, k.col).unwrap());
            owner.push(qi);
        }
    }
    let n = s.geo.grid.num_cells();
    let nk = owner.len();
    let q = affine(s.hp.data(), store, &format!("{prefix}.q"));
    let mask: Vec<bool> = (0..n * nk).map(|i| owner[i % nk] == i / nk).collect();
    let att = masked_mha(
        &Tensor::new(&[n, c], q).unwrap(),
        &Tensor::new(&[nk, c], ks).unwrap(),
        &Tensor::new(&[nk, c], vs).unwrap(),
        &mask,
        &AttentionConfig::new(cfg.heads, c).unwrap(),
    )
    .unwrap();
    let o = affine(att.data(), store, &format!("{prefix}.o"));
    let mut out = s.hp.data().to_vec();
    for (i, keys) in s.geo.i2l.iter().enumerate() {
        if !keys.is_empty() {
            out[i * c..(i + 1) * c].copy_from_slice(&o[i * c..(i + 1) * c]);
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn i2l_matches_masked_mha_oracle() {
    let cfg = small_encoder(8, 2);
    for seed in 0..4 {
        let s = streams(seed, &cfg);
        assert!(s.geo.i2l.iter().any(|k| k.len() > 1));
        let store = attention_store("x", 8, seed);
        let mut g = Graph::new();
        let hp = g.constant(s.hp.clone());
        let hc = g.constant(s.hc.clone());
        let out = mmri_i2l(&mut g, &store, "x", hp, hc, &s.geo, 2).unwrap();
        let d = max_diff(g.data(out), &i2l_oracle(&s, &store, "x", &cfg));
        assert!(d < 1e-12, "seed {seed}: {d}");
    }
}

#[test]
fn grouped_matches_reference() {
    let cfg = small_encoder(8, 4);
    for seed in 0..10 {
        let s = streams(seed, &cfg);
        let store = attention_store("x", 8, seed + 50);
        let mut g = Graph::new();
        let hp = g.constant(s.hp.clone());
        let hc = g.constant(s.hc.clone());
        let reference = mmri_i2l(&mut g, &store, "x", hp, hc, &s.geo, 4).unwrap();
        let (grouped, stats) = grouped_i2l(&mut g, &store, "x", hp, hc, &s.geo, &cfg.intervals, 4).unwrap();
        let d = max_diff(g.data(reference), g.data(grouped));
        assert!(d < 1e-6, "seed {seed}: {d}");
        let counts = s.geo.neighbor_counts();
        assert_eq!(stats.padded, cfg.intervals.padded_count(&counts).unwrap());
        let explicit: usize = counts
            .iter()
            .filter(|&&n| n > 0)
            .map(|&n| *cfg.intervals.bounds().iter().find(|&&b| b >= n).unwrap())
            .sum();
        assert_eq!(stats.padded, explicit);

        let max = counts.iter().copied().max().unwrap();
        let single = GroupedIntervals::single(max).unwrap();
        let (_, st) = grouped_i2l(&mut g, &store, "x", hp, hc, &s.geo, &single, 4).unwrap();
        assert_eq!(st.padded, st.naive);
    }
}

#[test]
fn grouped_rejects_overflow() {
    let cfg = small_encoder(8, 2);
    let s = streams(3, &cfg);
    let store = attention_store("x", 8, 1);
    let tight = GroupedIntervals::new(vec![0, 1]).unwrap();
    assert!(s.geo.neighbor_counts().iter().any(|&n| n > 1));
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let err = grouped_i2l(&mut g, &store, "x", hp, hc, &s.geo, &tight, 2).unwrap_err();
    assert_eq!(err.category(), "interval_overflow");
}

#[test]
fn grouped_bimodal_padding() {
    let cfg = small_encoder(8, 2);
    let mut s = streams(2, &cfg);
    let mut rng = Rng::new(9);
    let n = s.geo.i2l.len();
    for (i, keys) in s.geo.i2l.iter_mut().enumerate() {
        let count = if i < n * 9 / 10 { 1 + rng.below(4) } else { 5 + rng.below(60) };
        *keys = (0..count)
            .map(|_| I2lKey { camera: 0, row: rng.range(0.0, 3.0), col: rng.range(0.0, 7.0) })
            .collect();
    }
    let intervals = GroupedIntervals::new(vec![0, 4, 64]).unwrap();
    let store = attention_store("x", 8, 4);
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let (out, stats) = grouped_i2l(&mut g, &store, "x", hp, hc, &s.geo, &intervals, 2).unwrap();
    assert!((stats.padded as f64) <= 0.5 * stats.naive as f64, "{stats:?}");
    let reference = mmri_i2l(&mut g, &store, "x", hp, hc, &s.geo, 2).unwrap();
    assert!(max_diff(g.data(out), g.data(reference)) < 1e-6);
}

#[test]
fn l2i_single_valid_neighbor_and_all_invalid() {
    let cfg = EncoderConfig { k: 0, ..small_encoder(4, 2) };
    let s = streams(5, &cfg);
    assert_eq!(s.geo.window, 1);
    let store = identity_attention("x", 4);
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let out = mmri_l2i(&mut g, &store, "x", hc, hp, &s.geo, 2).unwrap();
    let out = g.value(out).clone();
    let mut checked = 0;
    for (ci, cam) in s.geo.cameras.iter().enumerate() {
        for (p, nb) in cam.l2i.iter().enumerate() {
            let row = ci * s.geo.pixels_per_camera() + p;
            if nb.valid {
                checked += 1;
                assert_eq!(rows(&out, row, 4), rows(&s.hp, s.geo.grid.flat(nb.row, nb.col), 4));
            } else {
                assert_eq!(rows(&out, row, 4), rows(&s.hc, row, 4));
            }
        }
    }
    assert!(checked > 0);

    let cfg = small_encoder(4, 2);
    let mut s = streams(5, &cfg);
    for nb in &mut s.geo.cameras[0].l2i[..9] {
        nb.valid = false;
    }
    let store = attention_store("x", 4, 2);
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let out = mmri_l2i(&mut g, &store, "x", hc, hp, &s.geo, 2).unwrap();
    assert_eq!(rows(g.value(out), 0, 4), rows(&s.hc, 0, 4));
}

#[test]
fn l2i_matches_masked_mha_oracle() {
    let cfg = small_encoder(8, 4);
    for seed in 0..4 {
        let s = streams(seed, &cfg);
        let store = attention_store("x", 8, seed + 9);
        let mut g = Graph::new();
        let hp = g.constant(s.hp.clone());
        let hc = g.constant(s.hc.clone());
        let out = mmri_l2i(&mut g, &store, "x", hc, hp, &s.geo, 4).unwrap();

        let c = 8;
        let q = affine(s.hc.data(), &store, "x.q");
        let k = affine(s.hp.data(), &store, "x.k");
        let v = affine(s.hp.data(), &store, "x.v");
        let win = s.geo.window;
        let acfg = AttentionConfig::new(4, c).unwrap();
        let mut want = s.hc.data().to_vec();
        for (ci, cam) in s.geo.cameras.iter().enumerate() {
            for (j, w) in cam.l2i.chunks(win).enumerate() {
                let p = ci * s.geo.pixels_per_camera() + j;
                if !w.iter().any(|nb| nb.valid) {
                    continue;
                }
                let (mut kk, mut vv) = (Vec::new(), Vec::new());
                for nb in w {
                    let f = if nb.valid { s.geo.grid.flat(nb.row, nb.col) } else { 0 };
                    kk.extend_from_slice(&k[f * c..(f + 1) * c]);
                    vv.extend_from_slice(&v[f * c..(f + 1) * c]);
                }
                let mask: Vec<bool> = w.iter().map(|nb| nb.valid).collect();
                let att = masked_mha(
                    &Tensor::new(&[1, c], q[p * c..(p + 1) * c].to_vec()).unwrap(),
                    &Tensor::new(&[win, c], kk).unwrap(),
                    &Tensor::new(&[win, c], vv).unwrap(),
                    &mask,
                    &acfg,
                )
                .unwrap();
                want[p * c..(p + 1) * c].copy_from_slice(&affine(att.data(), &store, "x.o"));
            }
        }
        let d = max_diff(g.data(out), &want);
        assert!(d < 1e-12, "seed {seed}: {d}");
    }
}

#[test]
fn polar_column_isolation() {
    let cfg = small_encoder(8, 2);
    for seed in 0..5 {
        let s = streams(seed, &cfg);
        let store = attention_store("x", 8, seed);
        let run = |hc: &Tensor| {
            let mut g = Graph::new();
            let hp = g.constant(s.hp.clone());
            let hc = g.constant(hc.clone());
            let v = polar_columns(&mut g, &store, "x", hp, hc, &s.geo, 0, 2).unwrap();
            g.value(v).clone()
        };
        let base = run(&s.hc);
        let (wc, r, c) = (s.geo.feat_w, cfg.polar_bins, 8);
        let j = (seed as usize * 3) % wc;
        let mut hc = s.hc.clone();
        for row in 0..s.geo.feat_h {
            for t in 0..c {
                hc.data_mut()[(row * wc + j) * c + t] += 1.5;
            }
        }
        let moved = run(&hc);
        for ray in 0..wc {
            let a = &base.data()[ray * r * c..(ray + 1) * r * c];
            let b = &moved.data()[ray * r * c..(ray + 1) * r * c];
            if ray == j {
                assert_ne!(a, b);
            } else {
                assert_eq!(a, b, "ray {ray} changed after perturbing column {j}");
            }
        }
    }
}

#[test]
fn polar_column_matches_masked_mha() {
    let cfg = small_encoder(8, 2);
    let s = streams(4, &cfg);
    let store = identity_attention("x", 8);
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let cam = 1;
    let out = polar_columns(&mut g, &store, "x", hp, hc, &s.geo, cam, 2).unwrap();
    let (wc, r, c, hcols) = (s.geo.feat_w, cfg.polar_bins, 8, s.geo.feat_h);
    let bev = s.hp.clone().reshape(&[8, 8, c]).unwrap();
    let geo_cam = &s.geo.cameras[cam];
    for i in [0, wc / 2, wc - 1] {
        let mut q = Vec::new();
        for rr in 0..r {
            let at = &geo_cam.ray_coords[(i * r + rr) * 2..];
            let v = bilinear_sample(&bev, at[0], at[1]).unwrap();
            q.extend(v.iter().zip(sinusoidal(rr as f64, c)).map(|(a, b)| a + b));
        }
        let mut kv = Vec::new();
        for row in 0..hcols {
            let p = cam * s.geo.pixels_per_camera() + row * wc + i;
            kv.extend(rows(&s.hc, p, c).iter().zip(sinusoidal(row as f64, c)).map(|(a, b)| a + b));
        }
        let kv = Tensor::new(&[hcols, c], kv).unwrap();
        let want = masked_mha(
            &Tensor::new(&[r, c], q).unwrap(),
            &kv,
            &kv,
            &vec![true; r * hcols],
            &AttentionConfig::new(2, c).unwrap(),
        )
        .unwrap();
        let got = &g.data(out)[i * r * c..(i + 1) * r * c];
        assert!(max_diff(got, want.data()) < 1e-12);
    }
}

#[test]
fn polar_output_is_bev_shaped() {
    let cfg = small_encoder(8, 2);
    let s = streams(6, &cfg);
    let store = attention_store("x", 8, 6);
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let out = polar_ray_attention(&mut g, &store, "x", hp, hc, &s.geo, 2).unwrap();
    assert_eq!(g.shape(out), &[64, 8]);
    let touched: std::collections::HashSet<usize> =
        s.geo.cameras.iter().flat_map(|cam| cam.lookup.iter().map(|t| t.0)).collect();
    for cell in 0..64 {
        let row = rows(g.value(out), cell, 8);
        if !touched.contains(&cell) {
            assert!(row.iter().all(|&x| x == 0.0));
        }
    }
    assert!(!touched.is_empty());
}

fn encoder_store(cfg: &EncoderConfig, seed: u64, random: bool) -> ParamStore {
    let mut store = ParamStore::new();
    init_encoder_params(&mut store, &Rng::new(seed), cfg);
    if random {
        randomize(&mut store, &mut Rng::new(seed + 1), 0.4);
    }
    store
}

fn ln_rows(x: &[f64], c: usize) -> Vec<f64> {
    x.chunks(c)
        .flat_map(|r| layer_norm(r, &vec![1.0; c], &vec![0.0; c], LN_EPS).unwrap())
        .collect()
}

#[test]
fn zero_init_layer_is_layer_norm_only() {
    let cfg = small_encoder(8, 2);
    let s = streams(2, &cfg);
    let store = encoder_store(&cfg, 3, false);
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let (p, c, _) = encoder_layer(&mut g, &store, 0, hp, hc, &s.geo, &cfg).unwrap();
    let mut want_p = s.hp.data().to_vec();
    for _ in 0..4 {
        want_p = ln_rows(&want_p, 8);
    }
    let mut want_c = s.hc.data().to_vec();
    for _ in 0..3 {
        want_c = ln_rows(&want_c, 8);
    }
    assert!(max_diff(g.data(p), &want_p) < 1e-12);
    assert!(max_diff(g.data(c), &want_c) < 1e-12);
}

#[test]
fn encoder_layer_preserves_shapes() {
    for (seed, (channels, heads)) in [(8, 2), (12, 3), (8, 4)].into_iter().enumerate() {
        let cfg = small_encoder(channels, heads);
        let s = streams(seed as u64, &cfg);
        let store = encoder_store(&cfg, seed as u64, true);
        let mut g = Graph::new();
        let hp = g.constant(s.hp.clone());
        let hc = g.constant(s.hc.clone());
        let (p, c, _) = encoder_layer(&mut g, &store, 0, hp, hc, &s.geo, &cfg).unwrap();
        assert_eq!(g.shape(p), s.hp.shape());
        assert_eq!(g.shape(c), s.hc.shape());
        assert!(g.value(p).is_finite() && g.value(c).is_finite());
    }
}

#[test]
fn cross_modal_gradient_reaches_image_featurizer() {
    let cfg = small_encoder(8, 2);
    let scene = small_scene(7);
    let geo = geometry(&scene, &cfg);
    let mut store = encoder_store(&cfg, 4, true);
    init_featurizer_params(&mut store, &Rng::new(1), 8, 3);
    let mut g = Graph::new();
    let hp = featurize_points(&mut g, &store, &scene.points, &geo.grid).unwrap();
    let hp = g.reshape(hp, &[64, 8]).unwrap();
    let mut cams = Vec::new();
    for cam in &geo.cameras {
        let r = rasterize(&scene, &cam.fcam, 3).unwrap();
        let h = featurize_image(&mut g, &store, &r).unwrap();
        cams.push(g.reshape(h, &[geo.pixels_per_camera(), 8]).unwrap());
    }
    let hc = g.concat_rows(&cams).unwrap();
    let (p, _, _) = encoder_layer(&mut g, &store, 0, hp, hc, &geo, &cfg).unwrap();
    let loss = project(&mut g, p, 3);
    g.backward(loss).unwrap();
    store.zero_grad();
    g.accumulate_into(&mut store);
    assert!(store.grad_norm("feat.img") > 0.0);
    assert!(store.grad_norm("enc.0.i2l") > 0.0);
    assert!(store.grad_norm("enc.0.polar") > 0.0);
}

#[test]
fn every_encoder_parameter_gets_gradient() {
    let cfg = EncoderConfig { num_layers: 2, ..small_encoder(8, 2) };
    let s = streams(8, &cfg);
    let mut store = encoder_store(&cfg, 5, true);
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let (p, c, _) = encode(&mut g, &store, hp, hc, &s.geo, &cfg).unwrap();
    let a = project(&mut g, p, 1);
    let b = project(&mut g, c, 2);
    let loss = g.add(a, b).unwrap();
    g.backward(loss).unwrap();
    g.accumulate_into(&mut store);
    for (name, t) in store.iter() {
        let norm = t.grad.as_ref().map_or(0.0, |v| v.iter().map(|x| x * x).sum::<f64>());
        assert!(norm > 0.0, "{name} received no gradient");
    }
}

#[test]
fn encode_composition() {
    let cfg = small_encoder(8, 2);
    let s = streams(9, &cfg);
    let zero = EncoderConfig { num_layers: 0, ..cfg.clone() };
    let mut g = Graph::new();
    let hp = g.constant(s.hp.clone());
    let hc = g.constant(s.hc.clone());
    let (p, c, _) = encode(&mut g, &ParamStore::new(), hp, hc, &s.geo, &zero).unwrap();
    assert_eq!(g.value(p), &s.hp);
    assert_eq!(g.value(c), &s.hc);

    let two = EncoderConfig { num_layers: 2, ..cfg };
    let store = encoder_store(&two, 6, true);
    let (p2, c2, _) = encode(&mut g, &store, hp, hc, &s.geo, &two).unwrap();
    let (a, b, _) = encoder_layer(&mut g, &store, 0, hp, hc, &s.geo, &two).unwrap();
    let (a, b, _) = encoder_layer(&mut g, &store, 1, a, b, &s.geo, &two).unwrap();
    assert_eq!(g.data(p2), g.data(a));
    assert_eq!(g.data(c2), g.data(b));
}

#[test]
fn ablation_variants_run() {
    for (iml, mmri) in [(false, false), (true, false), (false, true), (true, true)] {
        let cfg = EncoderConfig { use_iml: iml, use_mmri: mmri, num_layers: 2, ..small_encoder(8, 2) };
        let s = streams(10, &cfg);
        let store = encoder_store(&cfg, 7, true);
        assert_eq!(store.names().any(|n| n.contains("iml")), iml);
        assert_eq!(store.names().any(|n| n.contains("i2l") || n.contains("polar")), mmri);
        let mut g = Graph::new();
        let hp = g.constant(s.hp.clone());
        let hc = g.constant(s.hc.clone());
        let (p, c, reports) = encode(&mut g, &store, hp, hc, &s.geo, &cfg).unwrap();
        assert_eq!(g.shape(p), s.hp.shape());
        assert_eq!(g.shape(c), s.hc.shape());
        assert!(g.value(p).is_finite() && g.value(c).is_finite());
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].grouping.is_some(), mmri);
    }
}

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

#[test]
fn gradcheck_encoder_blocks() {
    let cfg = small_encoder(4, 2);
    for seed in 0..3 {
        let s = streams(seed, &cfg);
        let ins = [s.hp.clone(), s.hc.clone()];
        let store = attention_store("x", 4, seed);
        let geo = &s.geo;
        let i2l = |g: &mut Graph, st: &ParamStore, v: &[dipp_core::numerics::Var]| {
            let y = mmri_i2l(g, st, "x", v[0], v[1], geo, 2)?;
            Ok(project(g, y, 1))
        };
        let grouped = |g: &mut Graph, st: &ParamStore, v: &[dipp_core::numerics::Var]| {
            let (y, _) = grouped_i2l(g, st, "x", v[0], v[1], geo, &cfg.intervals, 2)?;
            Ok(project(g, y, 2))
        };
        let l2i = |g: &mut Graph, st: &ParamStore, v: &[dipp_core::numerics::Var]| {
            let y = mmri_l2i(g, st, "x", v[1], v[0], geo, 2)?;
            Ok(project(g, y, 3))
        };
        let polar = |g: &mut Graph, st: &ParamStore, v: &[dipp_core::numerics::Var]| {
            let y = polar_ray_attention(g, st, "x", v[0], v[1], geo, 2)?;
            Ok(project(g, y, 4))
        };
        for (name, err) in [
            ("i2l", gradcheck_params(i2l, &store, &ins, H, 12).unwrap()),
            ("grouped", gradcheck_params(grouped, &store, &ins, H, 12).unwrap()),
            ("l2i", gradcheck_params(l2i, &store, &ins, H, 12).unwrap()),
            ("polar", gradcheck_params(polar, &store, &ins, H, 12).unwrap()),
        ] {
            assert!(err < TOL, "{name} seed {seed}: {err}");
        }

        let dshape = DeformableShape { channels: 4, heads: 2, scales: 2, points: 2 };
        let mut dstore = deformable_store(dshape, seed);
        randomize(&mut dstore, &mut Rng::new(seed), 0.7);
        let x = randn(&mut Rng::new(seed + 3), &[5, 6, 4]);
        let def = |g: &mut Graph, st: &ParamStore, v: &[dipp_core::numerics::Var]| {
            let y = iml_deformable(g, st, "d", v[0], dshape)?;
            Ok(project(g, y, 5))
        };
        let err = gradcheck_params(def, &dstore, &[x], H, 12).unwrap();
        assert!(err < TOL, "deformable seed {seed}: {err}");

        let lstore = encoder_store(&cfg, seed, true);
        let layer = |g: &mut Graph, st: &ParamStore, v: &[dipp_core::numerics::Var]| {
            let (p, c, _) = encoder_layer(g, st, 0, v[0], v[1], geo, &cfg)?;
            let a = project(g, p, 6);
            let b = project(g, c, 7);
            g.add(a, b)
        };
        let err = gradcheck_params(layer, &lstore, &ins, H, 4).unwrap();
        assert!(err < TOL, "encoder layer seed {seed}: {err}");
    }
}
