//! Dynamic time warping between a performed contour and the tick-expanded score.

use std::io::Write;

use crate::error::{Error, Result};
use crate::signal::resample_step;

/// Monotone alignment from `(0, 0)` to `(L - 1, T - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl WarpPath {
    pub fn transposed(&self) -> WarpPath {
        WarpPath {
            pairs: self.pairs.iter().map(|&(i, j)| (j, i)).collect(),
            total_cost: self.total_cost,
        }
    }

    /// One `<frame> <tick>` line per pair.
    pub fn dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, j) in &self.pairs {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

pub fn abs_cost(p: f64, s: f64) -> f64 {
    (p - s).abs()
}

const START: u8 = 0;
const DIAG: u8 = 1;
const UP: u8 = 2; // step (1, 0)
const LEFT: u8 = 3; // step (0, 1)

/// DTW with absolute-difference cost and no band.
pub fn dtw_align(contour: &[f64], ticks: &[f64]) -> Result<WarpPath> {
    dtw_align_with(contour, ticks, abs_cost, None)
}

/// Allowed columns of row `i` under a Sakoe-Chiba band of `radius` cells around the
/// straight line from `(0, 0)` to `(l - 1, t - 1)`.
fn band_cols(i: usize, l: usize, t: usize, radius: Option<usize>) -> (usize, usize) {
    match radius {
        Some(r) if l > 1 && t > 1 => {
            let centre = i as f64 * (t - 1) as f64 / (l - 1) as f64;
            let lo = (centre - r as f64).ceil().max(0.0) as usize;
            let hi = ((centre + r as f64).floor() as usize).min(t - 1);
            (lo, hi)
        }
        _ => (0, t - 1),
    }
}

/// Globally minimal monotone path under steps (1,0), (0,1), (1,1), unweighted.
/// Equal-cost predecessors resolve as diagonal, then (1,0), then (0,1).
pub fn dtw_align_with<C>(a: &[f64], b: &[f64], cost: C, band: Option<usize>) -> Result<WarpPath>
where
    C: Fn(f64, f64) -> f64,
{
    let (l, t) = (a.len(), b.len());
    if l == 0 || t == 0 {
        return Err(Error::invalid(format!(
            "cannot align empty sequences ({l} x {t})"
        )));
    }
    let mut dirs = vec![START; l * t];
    let mut prev = vec![f64::INFINITY; t];
    let mut cur = vec![f64::INFINITY; t];
    for i in 0..l {
        cur.iter_mut().for_each(|v| *v = f64::INFINITY);
        let (lo, hi) = band_cols(i, l, t, band);
        for j in lo..=hi {
            let c = cost(a[i], b[j]);
            if i == 0 && j == 0 {
                cur[0] = c;
                continue;
            }
            let mut best = f64::INFINITY;
            let mut dir = START;
            if i > 0 && j > 0 && prev[j - 1] < best {
                best = prev[j - 1];
                dir = DIAG;
            }
            if i > 0 && prev[j] < best {
                best = prev[j];
                dir = UP;
            }
            if j > 0 && cur[j - 1] < best {
                best = cur[j - 1];
                dir = LEFT;
            }
            if dir != START {
                cur[j] = best + c;
                dirs[i * t + j] = dir;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let total_cost = prev[t - 1];
    if !total_cost.is_finite() {
        return Err(Error::invalid(format!(
            "no path within band {band:?} for {l} x {t} alignment"
        )));
    }
    let mut pairs = Vec::with_capacity(l + t);
    let (mut i, mut j) = (l - 1, t - 1);
    loop {
        pairs.push((i, j));
        match dirs[i * t + j] {
            DIAG => (i, j) = (i - 1, j - 1),
            UP => i -= 1,
            LEFT => j -= 1,
            _ => break,
        }
    }
    pairs.reverse();
    Ok(WarpPath { pairs, total_cost })
}

/// Per-frame range of aligned score ticks, for constant-time chunk lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTickMap {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl FrameTickMap {
    pub fn new(path: &WarpPath) -> Result<Self> {
        let frames = path.pairs.last().map_or(0, |p| p.0 + 1);
        let mut lo = vec![usize::MAX; frames];
        let mut hi = vec![0; frames];
        for &(i, j) in &path.pairs {
            lo[i] = lo[i].min(j);
            hi[i] = hi[i].max(j);
        }
        if lo.is_empty() || lo.contains(&usize::MAX) {
            return Err(Error::invalid("warp path does not visit every frame"));
        }
        Ok(Self { lo, hi })
    }

    pub fn frames(&self) -> usize {
        self.lo.len()
    }

    /// Ticks aligned to the inclusive frame range `[start, end]`.
    pub fn snippet(&self, start: usize, end: usize) -> Result<(usize, usize)> {
        if start > end || end >= self.lo.len() {
            return Err(Error::invalid(format!(
                "frame range [{start}, {end}] outside path over {} frames",
                self.lo.len()
            )));
        }
        Ok((self.lo[start], self.hi[end]))
    }

    /// Score ticks under contour frames `start..start + n`, resampled to `n` values. A
    /// range running past the last frame is cut at the contour end.
    pub fn score_chunk(&self, ticks: &[f64], start: usize, n: usize) -> Result<Vec<f64>> {
        let start = start.min(self.frames() - 1);
        let end = (start + n).min(self.frames()) - 1;
        let (ts, te) = self.snippet(start, end)?;
        let slice = ticks
            .get(ts..=te)
            .ok_or_else(|| Error::invalid(format!("ticks [{ts}, {te}] outside score")))?;
        resample_step(slice, n)
    }
}

/// Score tick range aligned to contour frames `[start_frame, end_frame]`.
pub fn map_chunk_to_snippet(path: &WarpPath, start_frame: usize, end_frame: usize) -> Result<(usize, usize)> {
    FrameTickMap::new(path)?.snippet(start_frame, end_frame)
}
