use std::time::Instant;

use crate::encoder::{naive_padded_count, GroupedIntervals};
use crate::numerics::{masked_mha, AttentionConfig, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Outcome of [`bench_grouped`]. Everything but the wall times is a pure
/// function of the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub pillars: usize,
    pub grouped_padded: usize,
    pub naive_padded: usize,
    pub ratio: f64,
    /// Largest key+value buffer alive at once, grouped and naive.
    pub grouped_peak_bytes: usize,
    pub naive_peak_bytes: usize,
    pub grouped_seconds: f64,
    pub naive_seconds: f64,
}

impl BenchReport {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "pillars={}\ngrouped_padded={}\nnaive_padded={}\nratio={}\ngrouped_peak_bytes={}\nnaive_peak_bytes={}\ngrouped_seconds={}\nnaive_seconds={}\n",
            self.pillars,
            self.grouped_padded,
            self.naive_padded,
            self.ratio,
            self.grouped_peak_bytes,
            self.naive_peak_bytes,
            self.grouped_seconds,
            self.naive_seconds
        )
    }
}

/// Parses `"900x4,100x64"` into 900 pillars with 4 neighbors followed by 100
/// pillars with 64.
pub fn parse_distribution(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (n, k) = part
            .split_once('x')
            .ok_or_else(|| Error::InvalidArgument(format!("bad distribution term {part:?}, want <pillars>x<count>")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad number {s:?} in {part:?}")))
        };
        let (n, k) = (parse(n)?, parse(k)?);
        out.extend(std::iter::repeat(k).take(n));
    }
    if out.is_empty() {
        return Err(Error::Empty("neighbor-count distribution"));
    }
    Ok(out)
}

/// Runs masked attention for one padded batch of `n` queries with `width`
/// key slots, of which `counts[i]` are live.
fn run_padded(counts: &[usize], width: usize, att: &AttentionConfig, rng: &mut Rng) -> Result<()> {
    let c = att.model_dim;
    for &n in counts {
        let q = Tensor::new(&[1, c], (0..c).map(|_| rng.normal()).collect())?;
        let k = Tensor::new(&[width, c], (0..width * c).map(|_| rng.normal()).collect())?;
        let mask: Vec<bool> = (0..width).map(|j| j < n).collect();
        masked_mha(&q, &k, &k, &mask, att)?;
    }
    Ok(())
}

/// Padding cost of grouped versus single-width batching of cross-attention
/// keys for pillars with the given neighbor counts. Each of `trials` runs
/// does the padded attention both ways with `channels`-wide random keys.
pub fn bench_grouped(
    counts: &[usize],
    intervals: &GroupedIntervals,
    trials: usize,
    channels: usize,
    heads: usize,
) -> Result<BenchReport> {
    let att = AttentionConfig::new(heads, channels)?;
    let grouped = intervals.padded_count(counts)?;
    let naive = naive_padded_count(counts);
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); intervals.num_intervals()];
    for &n in counts {
        if let Some(i) = intervals.interval_of(n)? {
            buckets[i].push(n);
        }
    }
    let bytes = |rows: usize, width: usize| 2 * rows * width * channels * std::mem::size_of::<f64>();
    let grouped_peak = buckets
        .iter()
        .enumerate()
        .map(|(i, b)| bytes(b.len(), intervals.bounds()[i + 1]))
        .max()
        .unwrap_or(0);
    let live: Vec<usize> = counts.iter().copied().filter(|&n| n > 0).collect();
    let naive_peak = bytes(live.len(), max);

    let mut rng = Rng::new(0);
    let t0 = Instant::now();
    for _ in 0..trials {
        for (i, b) in buckets.iter().enumerate() {
            run_padded(b, intervals.bounds()[i + 1], &att, &mut rng)?;
        }
    }
    let grouped_seconds = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    for _ in 0..trials {
        run_padded(&live, max, &att, &mut rng)?;
    }
    let naive_seconds = t0.elapsed().as_secs_f64();
    Ok(BenchReport {
        pillars: counts.len(),
        grouped_padded: grouped,
        naive_padded: naive,
        ratio: if naive == 0 { 1.0 } else { grouped as f64 / naive as f64 },
        grouped_peak_bytes: grouped_peak,
        naive_peak_bytes: naive_peak,
        grouped_seconds,
        naive_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_terms() {
        assert_eq!(parse_distribution("2x3, 1x5").unwrap(), vec![3, 3, 5]);
        assert!(parse_distribution("2y3").is_err());
        assert!(parse_distribution("").is_err());
    }
}
