//! Pitch-contour and score preprocessing.
//!
//! Pitches are MIDI numbers (69 = A4 = 440 Hz). Unvoiced contour frames and score
//! rests carry the sentinel [`UNVOICED`].

use rand::Rng;

use crate::error::{Error, Result};

/// Analysis frame rate: 44.1 kHz audio with a 256-sample hop.
pub const FRAME_RATE: f64 = 44100.0 / 256.0;

pub const UNVOICED: f64 = 0.0;

/// Largest octave-wrapped distance, in semitones.
pub const MAX_WRAPPED: f64 = 6.0;

/// Smallest distance-matrix resolution accepted.
pub const MIN_RESOLUTION: usize = 16;

/// Frame-rate sequence of (possibly fractional) MIDI pitches.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    frames: Vec<f64>,
    frame_rate: f64,
}

impl PitchContour {
    pub fn new(frames: Vec<f64>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "frame rate {frame_rate} must be positive"
            )));
        }
        if frames.is_empty() {
            return Err(Error::invalid("pitch contour has no frames"));
        }
        if let Some((i, v)) = frames
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v == UNVOICED || (v > 0.0 && v <= 127.0)))
        {
            return Err(Error::invalid(format!(
                "frame {i} has pitch {v}, expected 0 (unvoiced) or (0, 127]"
            )));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames.len() as f64 / self.frame_rate
    }

    /// Frames divided by 127, unvoiced frames staying at 0.
    pub fn normalized(&self) -> Vec<f64> {
        self.frames.iter().map(|&p| normalize_pitch(p)).collect()
    }
}

/// One score event. Pitch 0 is a rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Note {
    pub pitch: u8,
    pub ticks: u32,
}

/// Monophonic reference score as an ordered list of notes.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    notes: Vec<Note>,
    ticks_per_beat: u32,
    tempo_bpm: f64,
}

impl Score {
    pub fn new(notes: Vec<Note>, ticks_per_beat: u32, tempo_bpm: f64) -> Result<Self> {
        if notes.is_empty() {
            return Err(Error::invalid("score has no notes"));
        }
        if let Some(n) = notes.iter().find(|n| n.ticks == 0 || n.pitch > 127) {
            return Err(Error::invalid(format!(
                "invalid note {n:?}: needs pitch 0..=127 and at least one tick"
            )));
        }
        if ticks_per_beat == 0 {
            return Err(Error::invalid("ticks_per_beat must be positive"));
        }
        if !(tempo_bpm > 0.0 && tempo_bpm.is_finite()) {
            return Err(Error::invalid(format!("tempo {tempo_bpm} must be positive")));
        }
        Ok(Self {
            notes,
            ticks_per_beat,
            tempo_bpm,
        })
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn ticks_per_beat(&self) -> u32 {
        self.ticks_per_beat
    }

    pub fn tempo_bpm(&self) -> f64 {
        self.tempo_bpm
    }

    pub fn total_ticks(&self) -> u64 {
        self.notes.iter().map(|n| n.ticks as u64).sum()
    }

    pub fn seconds_per_tick(&self) -> f64 {
        60.0 / (self.tempo_bpm * self.ticks_per_beat as f64)
    }

    pub fn duration_secs(&self) -> f64 {
        self.total_ticks() as f64 * self.seconds_per_tick()
    }
}

/// `69 + 12 log2(f / 440)`; non-positive or non-finite input is unvoiced.
///
/// The exponent of `f` contributes whole octaves exactly and the log-mantissa term is
/// snapped to a 2^-40 grid, so `hz_to_midi(2f) - hz_to_midi(f) == 12.0` holds exactly.
pub fn hz_to_midi(f: f64) -> f64 {
    if !(f > 0.0 && f.is_finite()) {
        return UNVOICED;
    }
    const GRID: f64 = (1u64 << 40) as f64;
    let (mant, exp) = frexp(f);
    let frac = 69.0 + 12.0 * (mant / 440.0).log2();
    12.0 * exp as f64 + (frac * GRID).round() / GRID
}

/// `f = mant * 2^exp` with `mant` in `[1, 2)`, for positive finite `f`.
fn frexp(f: f64) -> (f64, i32) {
    const MANT_MASK: u64 = (1u64 << 52) - 1;
    let (f, bias) = if f < f64::MIN_POSITIVE {
        (f * 2f64.powi(64), -64)
    } else {
        (f, 0)
    };
    let bits = f.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32 - 1023;
    let mant = f64::from_bits((bits & MANT_MASK) | (1023u64 << 52));
    (mant, exp + bias)
}

pub fn normalize_pitch(x: f64) -> f64 {
    x / 127.0
}

/// Whole frames in a chunk of `seconds` at `frame_rate`.
pub fn chunk_len(seconds: f64, frame_rate: f64) -> usize {
    (seconds * frame_rate + 1e-9).floor() as usize
}

/// A contiguous contour excerpt. `padded` marks a contour shorter than the request,
/// zero-filled at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk<T = f64> {
    pub start: usize,
    pub frames: Vec<T>,
    pub padded: bool,
}

/// Excerpt of `n` frames starting at `start`, zero-padded (unvoiced) past the end.
pub fn chunk_at<T: Copy + Default>(frames: &[T], start: usize, n: usize) -> Chunk<T> {
    let start = start.min(frames.len());
    let end = (start + n).min(frames.len());
    let mut out = frames[start..end].to_vec();
    let padded = out.len() < n;
    out.resize(n, T::default());
    Chunk {
        start,
        frames: out,
        padded,
    }
}

/// Start position drawn uniformly from `0..=len - n` (0 when the contour is too short).
pub fn random_start<R: Rng + ?Sized>(len: usize, n: usize, rng: &mut R) -> usize {
    if len <= n {
        0
    } else {
        rng.gen_range(0..=len - n)
    }
}

/// Random excerpt of `seconds` from `contour`.
pub fn chunk_random<R: Rng + ?Sized>(contour: &PitchContour, seconds: f64, rng: &mut R) -> Chunk {
    let n = chunk_len(seconds, contour.frame_rate());
    let start = random_start(contour.len(), n, rng);
    chunk_at(contour.frames(), start, n)
}

/// Nearest-neighbour resampling to `n` values: output `i` takes the input cell whose
/// span contains the centre of output cell `i`, i.e. `seq[floor((i + 1/2) * m / n)]`.
pub fn resample_step<T: Copy>(seq: &[T], n: usize) -> Result<Vec<T>> {
    let m = seq.len();
    if m == 0 {
        return Err(Error::invalid("cannot resample an empty sequence"));
    }
    // floor((2i + 1) m / 2n) in integer arithmetic
    Ok((0..n).map(|i| seq[((2 * i + 1) * m) / (2 * n)]).collect())
}

/// Octave-independent pitch distance `min(m, 12 - m)` with `m = |p - s| mod 12`.
/// Any unvoiced operand gives the maximum, 6.
pub fn wrapped_distance(p: f64, s: f64) -> f64 {
    if p <= UNVOICED || s <= UNVOICED {
        return MAX_WRAPPED;
    }
    let m = (p - s).abs() % 12.0;
    m.min(12.0 - m)
}

/// Each note's pitch repeated once per tick; rests become unvoiced ticks.
pub fn expand_score_to_ticks(score: &Score) -> Vec<f64> {
    let mut out = Vec::with_capacity(score.total_ticks() as usize);
    for n in score.notes() {
        let p = if n.pitch == 0 { UNVOICED } else { n.pitch as f64 };
        out.extend(std::iter::repeat(p).take(n.ticks as usize));
    }
    out
}

/// Square grid of wrapped distances between a contour and a score, scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    resolution: usize,
    cells: Vec<f64>,
}

impl DistanceMatrix {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Row-major cells; rows follow the contour, columns the score.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.resolution + col]
    }
}

/// For each of `n_out` bins spanning `n_in` cells, the overlapping input cells and the
/// fraction of the bin each covers.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|a| {
            let (lo, hi) = (a as f64 * scale, (a + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)) / scale;
                    (overlap > 0.0).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

/// Wrapped-distance matrix between `frames` (rows) and `ticks` (columns), box-filtered
/// to `resolution x resolution` and divided by 6.
pub fn distance_matrix_from_sequences(
    frames: &[f64],
    ticks: &[f64],
    resolution: usize,
) -> Result<DistanceMatrix> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!(
            "distance matrix resolution {resolution} below minimum {MIN_RESOLUTION}"
        )));
    }
    if frames.is_empty() || ticks.is_empty() {
        return Err(Error::invalid(
            "distance matrix needs a non-empty contour and score",
        ));
    }
    let s = resolution;
    let col_w = area_weights(ticks.len(), s);
    let row_w = area_weights(frames.len(), s);

    // Columns first: every frame against each column bin.
    let mut by_col = vec![0.0; frames.len() * s];
    for (i, &p) in frames.iter().enumerate() {
        let row = &mut by_col[i * s..(i + 1) * s];
        for (b, bin) in col_w.iter().enumerate() {
            row[b] = bin.iter().map(|&(j, w)| w * wrapped_distance(p, ticks[j])).sum();
        }
    }
    let mut cells = vec![0.0; s * s];
    for (a, bin) in row_w.iter().enumerate() {
        let out = &mut cells[a * s..(a + 1) * s];
        for &(i, w) in bin {
            for (o, &v) in out.iter_mut().zip(&by_col[i * s..(i + 1) * s]) {
                *o += w * v;
            }
        }
        out.iter_mut().for_each(|v| *v /= MAX_WRAPPED);
    }
    Ok(DistanceMatrix { resolution: s, cells })
}

pub fn build_distance_matrix(
    contour: &PitchContour,
    score: &Score,
    resolution: usize,
) -> Result<DistanceMatrix> {
    distance_matrix_from_sequences(contour.frames(), &expand_score_to_ticks(score), resolution)
}
