use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Min-max scaling to `0..=255`; a constant map becomes all zeros.
pub fn normalize_heatmap(map: &[f64]) -> Result<Vec<u8>> {
    if map.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("heatmap".into()));
    }
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(vec![0; map.len()]);
    }
    Ok(map.iter().map(|&x| ((x - lo) / (hi - lo) * 255.0).round() as u8).collect())
}

pub fn write_pgm<W: Write>(w: &mut W, pixels: &[u8], height: usize, width: usize) -> Result<()> {
    if pixels.len() != height * width {
        return Err(Error::Shape(format!("{} pixels for a {height}x{width} image", pixels.len())));
    }
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    Ok(())
}

/// Reads a binary PGM with maxval 255; returns `(height, width, pixels)`.
pub fn read_pgm<R: Read>(r: R) -> Result<(usize, usize, Vec<u8>)> {
    let mut r = BufReader::new(r);
    let mut fields = Vec::new();
    let mut line = String::new();
    while fields.len() < 4 {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("truncated PGM header".into()));
        }
        let body = line.split('#').next().unwrap_or("");
        fields.extend(body.split_whitespace().map(str::to_string));
    }
    if fields[0] != "P5" || fields[3] != "255" || fields.len() != 4 {
        return Err(Error::Format(format!("unsupported PGM header {fields:?}")));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM size {s:?}")));
    let (w, h) = (dim(&fields[1])?, dim(&fields[2])?);
    let mut pixels = vec![0u8; w * h];
    r.read_exact(&mut pixels).map_err(|_| Error::Format("truncated PGM data".into()))?;
    Ok((h, w, pixels))
}

/// Writes an `H x W` map (row 0 first) as an 8-bit grayscale PGM.
pub fn dump_heatmap(map: &[f64], height: usize, width: usize, path: &Path) -> Result<()> {
    let pixels = normalize_heatmap(map)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_pgm(&mut f, &pixels, height, width)?;
    f.flush()?;
    Ok(())
}
