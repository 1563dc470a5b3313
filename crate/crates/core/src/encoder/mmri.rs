//! Cross-modal neighbor attention in both directions.

use super::config::GroupedIntervals;
use super::context::SceneGeometry;
use super::deformable::proj;
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::{Error, Result};

/// Residual-branch output of a cross-attention block: `update` rows are zero
/// for queries without any admissible key, which are flagged in `has_keys`.
#[derive(Debug, Clone)]
pub struct CrossUpdate {
    pub update: Var,
    pub has_keys: Vec<bool>,
}

/// Padded-element bookkeeping of one grouped attention call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupStats {
    pub padded: usize,
    pub naive: usize,
}

fn rows_of(g: &Graph, v: Var, c: usize, what: &str) -> Result<usize> {
    match g.shape(v) {
        [n, cc] if *cc == c => Ok(*n),
        s => Err(Error::Shape(format!("{what}: expected [N, {c}], got {s:?}"))),
    }
}

fn check_streams(g: &Graph, hp: Var, hc: Var, geo: &SceneGeometry) -> Result<usize> {
    let c = *g.shape(hp).last().unwrap_or(&0);
    let np = rows_of(g, hp, c, "BEV stream")?;
    let nc = rows_of(g, hc, c, "image stream")?;
    if np != geo.grid.num_cells() || nc != geo.num_cameras() * geo.pixels_per_camera() {
        return Err(Error::Shape(format!(
            "streams have {np} BEV and {nc} image rows; geometry expects {} and {}",
            geo.grid.num_cells(),
            geo.num_cameras() * geo.pixels_per_camera()
        )));
    }
    Ok(c)
}

fn zero_rows(g: &mut Graph, v: Var, keep: &[bool]) -> Result<Var> {
    let c = *g.shape(v).last().unwrap();
    let m: Vec<f64> = keep.iter().flat_map(|&k| std::iter::repeat(if k { 1.0 } else { 0.0 }).take(c)).collect();
    g.mul_const(v, &m)
}

/// Projected image keys/values sampled at every I2L key position, and the key
/// rows of each BEV query.
fn i2l_keys(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hc: Var,
    geo: &SceneGeometry,
    c: usize,
) -> Result<Option<(Var, Var, Vec<Vec<usize>>)>> {
    let total: usize = geo.i2l.iter().map(Vec::len).sum();
    if total == 0 {
        return Ok(None);
    }
    let mut coords = Vec::with_capacity(total * 2);
    let mut batch = Vec::with_capacity(total);
    let mut nbrs = Vec::with_capacity(geo.i2l.len());
    for keys in &geo.i2l {
        let start = batch.len();
        for k in keys {
            coords.extend_from_slice(&[k.row, k.col]);
            batch.push(k.camera);
        }
        nbrs.push((start..batch.len()).collect());
    }
    let coords = g.constant(Tensor::new(&[total, 2], coords)?);
    let dims = [geo.num_cameras(), geo.feat_h, geo.feat_w, c];
    let sample = |g: &mut Graph, name: &str| -> Result<Var> {
        let m = proj(g, store, &format!("{prefix}.{name}"), hc)?;
        let m = g.reshape(m, &dims)?;
        g.bilinear_sample(m, coords, &batch)
    };
    let k = sample(g, "k")?;
    let v = sample(g, "v")?;
    Ok(Some((k, v, nbrs)))
}

fn empty_update(g: &mut Graph, n: usize, c: usize) -> CrossUpdate {
    CrossUpdate {
        update: g.constant(Tensor::zeros(&[n, c])),
        has_keys: vec![false; n],
    }
}

/// Image-to-LiDAR attention, unbatched reference path: each BEV query attends
/// over the image features sampled at its own keys.
pub fn i2l_update(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hp: Var,
    hc: Var,
    geo: &SceneGeometry,
    heads: usize,
) -> Result<CrossUpdate> {
    let c = check_streams(g, hp, hc, geo)?;
    let n = geo.grid.num_cells();
    let Some((k, v, nbrs)) = i2l_keys(g, store, prefix, hc, geo, c)? else {
        return Ok(empty_update(g, n, c));
    };
    let q = proj(g, store, &format!("{prefix}.q"), hp)?;
    let att = g.ragged_attention(q, k, v, &nbrs, heads)?;
    let out = proj(g, store, &format!("{prefix}.o"), att)?;
    let has_keys: Vec<bool> = nbrs.iter().map(|l| !l.is_empty()).collect();
    let update = zero_rows(g, out, &has_keys)?;
    Ok(CrossUpdate { update, has_keys })
}

/// Image-to-LiDAR attention batched by neighbor-count interval: the queries
/// of interval `(N_i, N_{i+1}]` are padded to `N_{i+1}` keys with the padding
/// masked out.
#[allow(clippy::too_many_arguments)]
pub fn grouped_i2l_update(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hp: Var,
    hc: Var,
    geo: &SceneGeometry,
    intervals: &GroupedIntervals,
    heads: usize,
) -> Result<(CrossUpdate, GroupStats)> {
    let c = check_streams(g, hp, hc, geo)?;
    let n = geo.grid.num_cells();
    let counts = geo.neighbor_counts();
    let stats = GroupStats {
        padded: intervals.padded_count(&counts)?,
        naive: super::config::naive_padded_count(&counts),
    };
    let Some((k, v, nbrs)) = i2l_keys(g, store, prefix, hc, geo, c)? else {
        return Ok((empty_update(g, n, c), stats));
    };
    let q = proj(g, store, &format!("{prefix}.q"), hp)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); intervals.num_intervals()];
    for (i, &cnt) in counts.iter().enumerate() {
        if let Some(b) = intervals.interval_of(cnt)? {
            members[b].push(i);
        }
    }
    let mut acc = g.constant(Tensor::zeros(&[n, c]));
    for (b, qs) in members.iter().enumerate() {
        if qs.is_empty() {
            continue;
        }
        let len = intervals.bounds()[b + 1];
        let mut idx = Vec::with_capacity(qs.len() * len);
        let mut mask = Vec::with_capacity(qs.len() * len);
        for &qi in qs {
            let l = &nbrs[qi];
            for j in 0..len {
                idx.push(*l.get(j).unwrap_or(&l[0]));
                mask.push(j < l.len());
            }
        }
        let qb = g.gather_rows(q, qs)?;
        let qb = g.reshape(qb, &[qs.len(), 1, c])?;
        let kb = g.gather_rows(k, &idx)?;
        let kb = g.reshape(kb, &[qs.len(), len, c])?;
        let vb = g.gather_rows(v, &idx)?;
        let vb = g.reshape(vb, &[qs.len(), len, c])?;
        let ab = g.batched_attention(qb, kb, vb, Some(&mask), heads)?;
        let ab = g.reshape(ab, &[qs.len(), c])?;
        acc = g.scatter_rows(acc, qs, ab)?;
    }
    let out = proj(g, store, &format!("{prefix}.o"), acc)?;
    let has_keys: Vec<bool> = counts.iter().map(|&n| n > 0).collect();
    let update = zero_rows(g, out, &has_keys)?;
    Ok((CrossUpdate { update, has_keys }, stats))
}

/// LiDAR-to-image attention: every image feature pixel attends over the
/// `(2k+1)^2` BEV cells hit by its lifted neighborhood, invalid ones masked.
pub fn l2i_update(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hc: Var,
    hp: Var,
    geo: &SceneGeometry,
    heads: usize,
) -> Result<CrossUpdate> {
    let c = check_streams(g, hp, hc, geo)?;
    let npix = geo.num_cameras() * geo.pixels_per_camera();
    let win = geo.window;
    let mut idx = Vec::with_capacity(npix * win);
    let mut mask = Vec::with_capacity(npix * win);
    for cam in &geo.cameras {
        for nb in &cam.l2i {
            idx.push(if nb.valid { geo.grid.flat(nb.row, nb.col) } else { 0 });
            mask.push(nb.valid);
        }
    }
    if !mask.iter().any(|&m| m) {
        return Ok(empty_update(g, npix, c));
    }
    let has_keys: Vec<bool> = mask.chunks(win).map(|w| w.iter().any(|&m| m)).collect();
    let q = proj(g, store, &format!("{prefix}.q"), hc)?;
    let q = g.reshape(q, &[npix, 1, c])?;
    let k = proj(g, store, &format!("{prefix}.k"), hp)?;
    let k = g.gather_rows(k, &idx)?;
    let k = g.reshape(k, &[npix, win, c])?;
    let v = proj(g, store, &format!("{prefix}.v"), hp)?;
    let v = g.gather_rows(v, &idx)?;
    let v = g.reshape(v, &[npix, win, c])?;
    let att = g.batched_attention(q, k, v, Some(&mask), heads)?;
    let att = g.reshape(att, &[npix, c])?;
    let out = proj(g, store, &format!("{prefix}.o"), att)?;
    let update = zero_rows(g, out, &has_keys)?;
    Ok(CrossUpdate { update, has_keys })
}

/// Enhanced BEV rows: attention output where the query has image keys, the
/// input row otherwise.
pub fn mmri_i2l(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hp: Var,
    hc: Var,
    geo: &SceneGeometry,
    heads: usize,
) -> Result<Var> {
    let u = i2l_update(g, store, prefix, hp, hc, geo, heads)?;
    g.select_rows(&u.has_keys, u.update, hp)
}

/// Grouped counterpart of [`mmri_i2l`], with its padding report.
#[allow(clippy::too_many_arguments)]
pub fn grouped_i2l(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hp: Var,
    hc: Var,
    geo: &SceneGeometry,
    intervals: &GroupedIntervals,
    heads: usize,
) -> Result<(Var, GroupStats)> {
    let (u, stats) = grouped_i2l_update(g, store, prefix, hp, hc, geo, intervals, heads)?;
    Ok((g.select_rows(&u.has_keys, u.update, hp)?, stats))
}

/// Enhanced image rows: attention output where some BEV neighbor is valid,
/// the input row otherwise.
pub fn mmri_l2i(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hc: Var,
    hp: Var,
    geo: &SceneGeometry,
    heads: usize,
) -> Result<Var> {
    let u = l2i_update(g, store, prefix, hc, hp, geo, heads)?;
    g.select_rows(&u.has_keys, u.update, hc)
}
