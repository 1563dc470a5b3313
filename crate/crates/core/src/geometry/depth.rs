use crate::{Error, Result};

/// Per-pixel camera depth with a validity mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn empty(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            depth: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then_some(self.depth[i])
    }

    /// Records `depth` at a pixel, keeping the nearer value if already set.
    pub fn splat_min(&mut self, row: usize, col: usize, depth: f64) {
        let i = row * self.width + col;
        if !self.valid[i] || depth < self.depth[i] {
            self.depth[i] = depth;
            self.valid[i] = true;
        }
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn is_dense(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }
}

/// Fills every invalid pixel with the depth of its nearest valid pixel
/// (Euclidean distance; ties go to the smaller row, then the smaller column).
pub fn complete_depth(sparse: &DepthMap) -> Result<DepthMap> {
    complete_depth_bounded(sparse, usize::MAX, 0.0)
}

/// As [`complete_depth`], but pixels with no valid pixel within Chebyshev
/// radius `max_radius` get `fallback`.
pub fn complete_depth_bounded(sparse: &DepthMap, max_radius: usize, fallback: f64) -> Result<DepthMap> {
    if sparse.num_valid() == 0 {
        return Err(Error::Empty("depth map has no valid pixel"));
    }
    let (w, h) = (sparse.width as isize, sparse.height as isize);
    let reach = (w.max(h) as usize).min(max_radius) as isize;
    let mut out = sparse.clone();
    for r in 0..h {
        for c in 0..w {
            let i = (r * w + c) as usize;
            if sparse.valid[i] {
                continue;
            }
            // (squared distance, row, col) of the best candidate so far.
            let mut best: Option<(isize, isize, isize)> = None;
            let mut rad = 1;
            while rad <= reach {
                if let Some((d2, _, _)) = best {
                    if rad * rad > d2 {
                        break;
                    }
                }
                for rr in (r - rad).max(0)..=(r + rad).min(h - 1) {
                    for cc in (c - rad).max(0)..=(c + rad).min(w - 1) {
                        if (rr - r).abs() != rad && (cc - c).abs() != rad {
                            continue;
                        }
                        if !sparse.valid[(rr * w + cc) as usize] {
                            continue;
                        }
                        let cand = ((rr - r).pow(2) + (cc - c).pow(2), rr, cc);
                        if best.map_or(true, |b| cand < b) {
                            best = Some(cand);
                        }
                    }
                }
                rad += 1;
            }
            out.depth[i] = match best {
                Some((_, rr, cc)) => sparse.depth[(rr * w + cc) as usize],
                None => fallback,
            };
            out.valid[i] = true;
        }
    }
    Ok(out)
}
