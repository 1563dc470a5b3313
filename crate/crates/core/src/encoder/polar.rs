//! Column-wise attention between polar BEV rays and image columns.

use super::context::{CameraGeometry, SceneGeometry};
use super::deformable::proj;
use crate::numerics::{sinusoidal, Graph, ParamStore, Tensor, Var};
use crate::{Error, Result};

fn tiled_encoding(len: usize, reps: usize, c: usize) -> Vec<f64> {
    let one: Vec<f64> = (0..len).flat_map(|p| sinusoidal(p as f64, c)).collect();
    one.iter().copied().cycle().take(one.len() * reps).collect()
}

/// Polar-space attention for one camera. Returns ray-major rows
/// `[W_c * R, C]`: ray `i` (feature column `i`) holds `R` radial bins that
/// attended over image column `i` of camera `cam_index` only.
#[allow(clippy::too_many_arguments)]
pub fn polar_columns(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hp: Var,
    hc: Var,
    geo: &SceneGeometry,
    cam_index: usize,
    heads: usize,
) -> Result<Var> {
    let c = *g.shape(hp).last().unwrap_or(&0);
    if g.shape(hp) != [geo.grid.num_cells(), c] || g.shape(hc) != [geo.num_cameras() * geo.pixels_per_camera(), c] {
        return Err(Error::Shape(format!(
            "polar attention streams {:?} / {:?} do not match the scene geometry",
            g.shape(hp),
            g.shape(hc)
        )));
    }
    let cam: &CameraGeometry = geo
        .cameras
        .get(cam_index)
        .ok_or_else(|| Error::OutOfRange(format!("camera {cam_index}")))?;
    let (rb, wc, hcols) = (cam.polar.r_bins, cam.polar.width, geo.feat_h);
    if wc != geo.feat_w {
        return Err(Error::Shape(format!("polar width {wc} vs image feature width {}", geo.feat_w)));
    }
    let map = g.reshape(hp, &[geo.grid.h, geo.grid.w, c])?;
    let coords = g.constant(Tensor::new(&[wc * rb, 2], cam.ray_coords.clone())?);
    let rays = g.bilinear_sample(map, coords, &vec![0; wc * rb])?;
    let rays = g.add_const(rays, &tiled_encoding(rb, wc, c))?;
    let q = proj(g, store, &format!("{prefix}.q"), rays)?;
    let q = g.reshape(q, &[wc, rb, c])?;

    let base = cam_index * geo.pixels_per_camera();
    let col_major: Vec<usize> = (0..wc)
        .flat_map(|i| (0..hcols).map(move |j| base + j * wc + i))
        .collect();
    let cols = g.gather_rows(hc, &col_major)?;
    let cols = g.add_const(cols, &tiled_encoding(hcols, wc, c))?;
    let k = proj(g, store, &format!("{prefix}.k"), cols)?;
    let k = g.reshape(k, &[wc, hcols, c])?;
    let v = proj(g, store, &format!("{prefix}.v"), cols)?;
    let v = g.reshape(v, &[wc, hcols, c])?;
    let att = g.batched_attention(q, k, v, None, heads)?;
    let att = g.reshape(att, &[wc * rb, c])?;
    proj(g, store, &format!("{prefix}.o"), att)
}

/// Polar-ray update of the BEV stream, `[H*W, C]`: per camera, the polar
/// result is read back onto the BEV cells inside that camera's polar support
/// (zero elsewhere) and the cameras are summed.
pub fn polar_ray_attention(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    hp: Var,
    hc: Var,
    geo: &SceneGeometry,
    heads: usize,
) -> Result<Var> {
    let c = *g.shape(hp).last().unwrap_or(&0);
    let n = geo.grid.num_cells();
    let mut parts = Vec::new();
    for (ci, cam) in geo.cameras.iter().enumerate() {
        let polar = polar_columns(g, store, prefix, hp, hc, geo, ci, heads)?;
        if cam.lookup.is_empty() {
            continue;
        }
        let pmap = g.reshape(polar, &[cam.polar.width, cam.polar.r_bins, c])?;
        let coords: Vec<f64> = cam.lookup.iter().flat_map(|&(_, r, col)| [col, r]).collect();
        let coords = g.constant(Tensor::new(&[cam.lookup.len(), 2], coords)?);
        let back = g.bilinear_sample(pmap, coords, &vec![0; cam.lookup.len()])?;
        let zeros = g.constant(Tensor::zeros(&[n, c]));
        let flats: Vec<usize> = cam.lookup.iter().map(|t| t.0).collect();
        parts.push(g.scatter_rows(zeros, &flats, back)?);
    }
    match parts.len() {
        0 => Ok(g.constant(Tensor::zeros(&[n, c]))),
        1 => Ok(parts[0]),
        _ => g.add_n(&parts),
    }
}
