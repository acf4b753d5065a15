//! Synthetic assessment data with known ratings.
//!
//! Scores are random diatonic melodies. Performances render a score at the analysis
//! frame rate and degrade it with wrong notes, intonation noise, tempo jitter and
//! onset noise; ratings are closed-form functions of those degradations.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formats;
use crate::manifest::Manifest;
use crate::signal::{Note, PitchContour, Score, FRAME_RATE, UNVOICED};

pub const TICKS_PER_BEAT: u32 = 4;
/// Tick lengths of a sixteenth, eighth and quarter note, with their draw weights.
const DURATIONS: [(u32, f64); 3] = [(1, 0.25), (2, 0.45), (4, 0.30)];
const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const WRONG_NOTE_SHIFTS: [i32; 6] = [-3, -2, -1, 1, 2, 3];
pub const PITCH_RANGE: (u8, u8) = (50, 90);
/// Moving-average length for intonation noise, in frames.
const INTONATION_SMOOTHING: usize = 5;
/// Shortest rendered note, in frames.
const MIN_NOTE_FRAMES: usize = 2;
pub const CONTOUR_QUANTUM: f64 = 1e-4;
pub const DEFAULT_SCORES: usize = 6;
pub const DEFAULT_LABEL_NOISE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Musicality,
    NoteAccuracy,
    RhythmicAccuracy,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [
        Criterion::Musicality,
        Criterion::NoteAccuracy,
        Criterion::RhythmicAccuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Musicality => "musicality",
            Criterion::NoteAccuracy => "note_accuracy",
            Criterion::RhythmicAccuracy => "rhythmic_accuracy",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown criterion {s:?}; expected musicality, note_accuracy or rhythmic_accuracy"
            ))
        })
    }
}

/// Student group. Symphonic scores are longer and denser; middle-school
/// degradations are milder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Middle,
    Symphonic,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::Middle => "middle",
            Band::Symphonic => "symphonic",
        }
    }

    /// Mean recording length in seconds.
    pub fn target_seconds(self) -> f64 {
        match self {
            Band::Middle => 30.0,
            Band::Symphonic => 50.0,
        }
    }

    /// Mean, spread and clamp range of the note count.
    fn note_count(self) -> (f64, f64, usize, usize) {
        match self {
            Band::Middle => (136.0, 12.0, 110, 165),
            Band::Symphonic => (292.0, 25.0, 240, 345),
        }
    }

    /// Lowest note and rhythm rating the degradation sampler aims for.
    pub fn rating_floor(self) -> f64 {
        match self {
            Band::Middle => 0.3,
            Band::Symphonic => 0.2,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "middle" => Ok(Band::Middle),
            "symphonic" => Ok(Band::Symphonic),
            _ => Err(Error::invalid(format!(
                "unknown band {s:?}; expected middle or symphonic"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DegradationParams {
    /// Fraction of notes shifted by 1 to 3 semitones.
    pub wrong_note_rate: f64,
    /// Standard deviation of the smoothed per-frame pitch noise, in semitones.
    pub intonation_std: f64,
    /// Per-note duration multipliers are drawn from `1 ± tempo_jitter`.
    pub tempo_jitter: f64,
    /// Standard deviation of onset displacement, in seconds.
    pub onset_noise: f64,
}

impl DegradationParams {
    pub const MAX_INTONATION_STD: f64 = 3.0;
    pub const MAX_TEMPO_JITTER: f64 = 0.5;
    pub const MAX_ONSET_NOISE: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("wrong_note_rate", self.wrong_note_rate, 1.0),
            ("intonation_std", self.intonation_std, Self::MAX_INTONATION_STD),
            ("tempo_jitter", self.tempo_jitter, Self::MAX_TEMPO_JITTER),
            ("onset_noise", self.onset_noise, Self::MAX_ONSET_NOISE),
        ];
        for (name, v, hi) in checks {
            if !(0.0..=hi).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratings {
    pub musicality: f64,
    pub note_accuracy: f64,
    pub rhythmic_accuracy: f64,
}

impl Ratings {
    pub fn get(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Musicality => self.musicality,
            Criterion::NoteAccuracy => self.note_accuracy,
            Criterion::RhythmicAccuracy => self.rhythmic_accuracy,
        }
    }
}

/// Noise-free ratings for a degradation setting.
pub fn ground_truth_ratings(d: &DegradationParams) -> Ratings {
    let note_accuracy = (-(4.0 * d.wrong_note_rate + 1.5 * d.intonation_std)).exp();
    let rhythmic_accuracy = (-(3.0 * d.tempo_jitter + 8.0 * d.onset_noise)).exp();
    let musicality = 0.4 * note_accuracy + 0.4 * rhythmic_accuracy + 0.2 * (-2.0 * d.intonation_std).exp();
    Ratings {
        musicality,
        note_accuracy,
        rhythmic_accuracy,
    }
}

/// Ratings with independent `N(0, sigma)` noise on each criterion, clamped to `[0, 1]`.
pub fn noisy_ratings<R: Rng + ?Sized>(d: &DegradationParams, sigma: f64, rng: &mut R) -> Ratings {
    let r = ground_truth_ratings(d);
    if sigma <= 0.0 {
        return r;
    }
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let mut jitter = |v: f64| (v + noise.sample(rng)).clamp(0.0, 1.0);
    Ratings {
        musicality: jitter(r.musicality),
        note_accuracy: jitter(r.note_accuracy),
        rhythmic_accuracy: jitter(r.rhythmic_accuracy),
    }
}

/// Spread of each degradation around the share implied by the player's skill.
const SKILL_SPREAD: (f64, f64) = (0.3, 0.7);
/// Log-scale spread of rhythmic skill around note skill.
const RHYTHM_WOBBLE: f64 = 0.15;

/// Degradations driven by one skill level drawn uniformly from `[floor, 1]`: the
/// note rating equals the skill, and the rhythm rating is the skill perturbed by a
/// log-normal factor. Each rating's exponent is then split between its two
/// contributing fields at a ratio drawn from `SKILL_SPREAD`.
pub fn sample_degradation<R: Rng + ?Sized>(band: Band, rng: &mut R) -> DegradationParams {
    let floor = band.rating_floor();
    let skill = rng.gen_range(floor..=1.0f64);
    let wobble: f64 = Normal::new(0.0, RHYTHM_WOBBLE).expect("positive sd").sample(rng);
    let e_note = -skill.ln();
    let e_rhythm = -(skill * wobble.exp()).clamp(floor, 1.0).ln();
    let u = rng.gen_range(SKILL_SPREAD.0..=SKILL_SPREAD.1);
    let v = rng.gen_range(SKILL_SPREAD.0..=SKILL_SPREAD.1);
    let tempo_jitter = (v * e_rhythm / 3.0).min(DegradationParams::MAX_TEMPO_JITTER);
    DegradationParams {
        wrong_note_rate: u * e_note / 4.0,
        intonation_std: (1.0 - u) * e_note / 1.5,
        tempo_jitter,
        onset_noise: (e_rhythm - 3.0 * tempo_jitter) / 8.0,
    }
}

/// Random diatonic melody in a random major key. The tempo is set so the score
/// lasts roughly the band's recording length.
pub fn generate_score<R: Rng + ?Sized>(band: Band, rng: &mut R) -> Score {
    let (mean, sd, lo, hi) = band.note_count();
    let count = (Normal::new(mean, sd).expect("positive sd").sample(rng).round() as i64)
        .clamp(lo as i64, hi as i64) as usize;

    let tonic = rng.gen_range(0..12u8);
    let scale: Vec<u8> = (PITCH_RANGE.0..=PITCH_RANGE.1)
        .filter(|p| MAJOR_SCALE.contains(&((p + 12 - tonic) % 12)))
        .collect();
    let mut idx = rng.gen_range(scale.len() / 3..2 * scale.len() / 3);
    let total_w: f64 = DURATIONS.iter().map(|d| d.1).sum();
    let notes = (0..count)
        .map(|_| {
            let step: i64 = *[-2, -1, -1, 0, 1, 1, 2, 3, -3].choose(rng).expect("non-empty");
            idx = (idx as i64 + step).clamp(0, scale.len() as i64 - 1) as usize;
            let mut r = rng.gen_range(0.0..total_w);
            let ticks = DURATIONS
                .iter()
                .find(|d| {
                    r -= d.1;
                    r < 0.0
                })
                .map_or(DURATIONS[2].0, |d| d.0);
            Note {
                pitch: scale[idx],
                ticks,
            }
        })
        .collect::<Vec<_>>();
    let total_ticks: u32 = notes.iter().map(|n| n.ticks).sum();
    let seconds = band.target_seconds() * rng.gen_range(0.9..1.1);
    let tempo = 60.0 * total_ticks as f64 / (seconds * TICKS_PER_BEAT as f64);
    Score::new(notes, TICKS_PER_BEAT, tempo).expect("generated score is valid")
}

fn quantize(v: f64) -> f64 {
    (v / CONTOUR_QUANTUM).round() * CONTOUR_QUANTUM
}

/// Score played exactly: note `i` fills frames `[round(on_i * fr), round(on_{i+1} * fr))`.
pub fn render_exact(score: &Score) -> PitchContour {
    let spt = score.seconds_per_tick();
    let mut frames = Vec::new();
    let mut tick = 0u64;
    for n in score.notes() {
        let start = (tick as f64 * spt * FRAME_RATE).round() as usize;
        tick += n.ticks as u64;
        let end = (tick as f64 * spt * FRAME_RATE).round() as usize;
        let p = if n.pitch == 0 { UNVOICED } else { n.pitch as f64 };
        frames.extend(std::iter::repeat(p).take(end.saturating_sub(start)));
    }
    if frames.is_empty() {
        frames.push(UNVOICED);
    }
    PitchContour::new(frames, FRAME_RATE).expect("exact rendering is valid")
}

/// Degraded performance of `score`. With all-zero degradations the result equals
/// [`render_exact`].
pub fn render_performance<R: Rng + ?Sized>(
    score: &Score,
    d: &DegradationParams,
    rng: &mut R,
) -> Result<PitchContour> {
    d.validate()?;
    let notes = score.notes();
    let n = notes.len();

    // wrong notes: an exact share of the voiced notes, each moved 1..=3 semitones,
    // preferring pitch classes the piece itself uses so slips stay in key
    let mut pitches: Vec<f64> = notes.iter().map(|nt| nt.pitch as f64).collect();
    let mut voiced: Vec<usize> = (0..n).filter(|&i| notes[i].pitch != 0).collect();
    let mut in_key = [false; 12];
    for &i in &voiced {
        in_key[notes[i].pitch as usize % 12] = true;
    }
    let n_wrong = (d.wrong_note_rate * voiced.len() as f64).round() as usize;
    voiced.shuffle(rng);
    for &i in &voiced[..n_wrong] {
        let p = notes[i].pitch as i32;
        let fits = |s: &i32| (1..=127).contains(&(p + s));
        let mut shifts: Vec<i32> = WRONG_NOTE_SHIFTS
            .iter()
            .copied()
            .filter(|s| fits(s) && in_key[((p + s) % 12) as usize])
            .collect();
        if shifts.is_empty() {
            shifts = WRONG_NOTE_SHIFTS.iter().copied().filter(fits).collect();
        }
        pitches[i] = (p + *shifts.choose(rng).expect("some shift fits")) as f64;
    }

    // note boundaries in seconds, with tempo jitter and onset noise
    let spt = score.seconds_per_tick();
    let mut bounds = Vec::with_capacity(n + 1);
    bounds.push(0.0);
    let mut t = 0.0;
    for nt in notes {
        let mult = if d.tempo_jitter > 0.0 {
            1.0 + rng.gen_range(-d.tempo_jitter..=d.tempo_jitter)
        } else {
            1.0
        };
        t += nt.ticks as f64 * spt * mult;
        bounds.push(t);
    }
    let mut edges: Vec<usize> = bounds
        .iter()
        .map(|&b| (b * FRAME_RATE).round() as usize)
        .collect();
    if d.onset_noise > 0.0 {
        let noise = Normal::new(0.0, d.onset_noise * FRAME_RATE).expect("positive sd");
        for e in edges.iter_mut().take(n).skip(1) {
            *e = (*e as f64 + noise.sample(rng)).round().max(0.0) as usize;
        }
    }
    // keep every note at least MIN_NOTE_FRAMES long
    for i in 1..=n {
        edges[i] = edges[i].max(edges[i - 1] + MIN_NOTE_FRAMES);
    }

    let mut frames = Vec::with_capacity(edges[n]);
    let p_gap = (2.0 * d.tempo_jitter + 5.0 * d.onset_noise).min(1.0);
    for i in 0..n {
        let len = edges[i + 1] - edges[i];
        let start = frames.len();
        frames.extend(std::iter::repeat(pitches[i]).take(len));
        if notes[i].pitch != 0 && i + 1 < n && p_gap > 0.0 && rng.gen_bool(p_gap) {
            let gap = rng.gen_range(1..=4).min(len - 1);
            let end = frames.len();
            frames[end - gap..].iter_mut().for_each(|f| *f = UNVOICED);
        }
        debug_assert!(frames.len() > start);
    }

    if d.intonation_std > 0.0 {
        let white = Normal::new(0.0, 1.0).expect("unit normal");
        let k = INTONATION_SMOOTHING;
        let raw: Vec<f64> = (0..frames.len() + k - 1).map(|_| white.sample(rng)).collect();
        let scale = d.intonation_std / (k as f64).sqrt();
        let mut acc: f64 = raw[..k].iter().sum();
        for (i, f) in frames.iter_mut().enumerate() {
            if i > 0 {
                acc += raw[i + k - 1] - raw[i - 1];
            }
            if *f != UNVOICED {
                *f = (*f + acc * scale).clamp(CONTOUR_QUANTUM, 127.0);
            }
        }
    }
    frames.iter_mut().for_each(|f| *f = quantize(*f));
    PitchContour::new(frames, FRAME_RATE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentRecord {
    pub id: String,
    pub score_id: String,
    pub band: Band,
    pub contour: PitchContour,
    pub ratings: Ratings,
    pub degradation: DegradationParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub band: Band,
    pub scores: usize,
    pub label_noise: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(n: usize, band: Band, seed: u64) -> Self {
        Self {
            n,
            band,
            scores: DEFAULT_SCORES,
            label_noise: DEFAULT_LABEL_NOISE,
            seed,
        }
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("format", "mpa-dataset-1")
            .set("seed", self.seed)
            .set("n", self.n)
            .set("band", self.band)
            .set("scores", self.scores)
            .set("label_noise", self.label_noise)
            .set("frame_rate", FRAME_RATE)
            .set("ticks_per_beat", TICKS_PER_BEAT);
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        Ok(Self {
            n: m.parsed("n")?,
            band: m.parsed("band")?,
            scores: m.parsed("scores")?,
            label_noise: m.parsed("label_noise")?,
            seed: m.parsed("seed")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GeneratorConfig,
    pub scores: Vec<(String, Score)>,
    pub records: Vec<AssessmentRecord>,
}

impl Dataset {
    pub fn score(&self, id: &str) -> Option<&Score> {
        self.scores.iter().find(|(s, _)| s == id).map(|(_, s)| s)
    }

    pub fn score_index(&self, id: &str) -> Option<usize> {
        self.scores.iter().position(|(s, _)| s == id)
    }

    pub fn targets(&self, c: Criterion) -> Vec<f64> {
        self.records.iter().map(|r| r.ratings.get(c)).collect()
    }
}

/// Independent stream `stream` of the generator keyed by `seed`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `cfg.scores` distinct scores and `cfg.n` performances of them. Every record draws
/// from its own random stream, so the output does not depend on thread count.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    if cfg.n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    if cfg.scores == 0 {
        return Err(Error::invalid("dataset needs at least one score"));
    }
    if !(0.0..=0.5).contains(&cfg.label_noise) {
        return Err(Error::invalid(format!(
            "label noise {} outside [0, 0.5]",
            cfg.label_noise
        )));
    }
    let mut score_rng = stream_rng(cfg.seed, 0);
    let mut scores: Vec<(String, Score)> = Vec::with_capacity(cfg.scores);
    while scores.len() < cfg.scores {
        let s = generate_score(cfg.band, &mut score_rng);
        if scores.iter().all(|(_, t)| t.notes() != s.notes()) {
            scores.push((format!("score_{}", scores.len()), s));
        }
    }
    let records = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i as u64 + 1);
            let k = rng.gen_range(0..scores.len());
            let d = sample_degradation(cfg.band, &mut rng);
            let contour = render_performance(&scores[k].1, &d, &mut rng)?;
            let ratings = noisy_ratings(&d, cfg.label_noise, &mut rng);
            Ok(AssessmentRecord {
                id: format!("perf_{i:05}"),
                score_id: scores[k].0.clone(),
                band: cfg.band,
                contour,
                ratings,
                degradation: d,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: cfg.clone(),
        scores,
        records,
    })
}

/// [`generate`] with the default score count and label noise, seeded from `rng`.
pub fn generate_dataset<R: Rng + ?Sized>(n: usize, band: Band, rng: &mut R) -> Result<Dataset> {
    generate(&GeneratorConfig::new(n, band, rng.gen()))
}

/// Index lists into a dataset's records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled 8:1:1 partition of `0..n`.
pub fn split_dataset<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DatasetSplit> {
    if n < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 records to split 8:1:1, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = (0.8 * n as f64).round() as usize;
    let n_val = (0.1 * n as f64).round() as usize;
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(DatasetSplit {
        train: idx,
        validation,
        test,
    })
}

const RECORDS_FILE: &str = "records.txt";
const DEGRADATION_FILE: &str = "degradation.txt";
const MANIFEST_FILE: &str = "manifest";

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes `dir/manifest`, `dir/records.txt`, `dir/degradation.txt`,
/// `dir/scores/<id>.score` and `dir/contours/<id>.contour`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    for sub in ["scores", "contours"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(p.display().to_string(), e))?;
    }
    for (id, s) in &ds.scores {
        formats::write_score(&dir.join("scores").join(format!("{id}.score")), s)?;
    }
    let mut records = String::from("# id score_id band musicality note_accuracy rhythmic_accuracy\n");
    let mut degr = String::from("# id wrong_note_rate intonation_std tempo_jitter onset_noise\n");
    for r in &ds.records {
        formats::write_contour(
            &dir.join("contours").join(format!("{}.contour", r.id)),
            &r.contour,
        )?;
        let q = r.ratings;
        let _ = writeln!(
            records,
            "{} {} {} {} {} {}",
            r.id, r.score_id, r.band, q.musicality, q.note_accuracy, q.rhythmic_accuracy
        );
        let d = r.degradation;
        let _ = writeln!(
            degr,
            "{} {} {} {} {}",
            r.id, d.wrong_note_rate, d.intonation_std, d.tempo_jitter, d.onset_noise
        );
    }
    write(&dir.join(RECORDS_FILE), &records)?;
    write(&dir.join(DEGRADATION_FILE), &degr)?;
    write(&dir.join(MANIFEST_FILE), &ds.config.to_manifest().to_string())
}

fn table(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                msg: format!("expected {columns} fields, got {}", fields.len()),
            });
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

fn num(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.parse().map_err(|e| Error::Parse {
        path: path.into(),
        line,
        msg: format!("bad number {field:?}: {e}"),
    })
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = read(&dir.join(MANIFEST_FILE))?.parse()?;
    let config = GeneratorConfig::from_manifest(&manifest)?;

    let rpath = dir.join(RECORDS_FILE);
    let dpath = dir.join(DEGRADATION_FILE);
    let rows = table(&rpath, 6)?;
    let degr = table(&dpath, 5)?;
    if rows.len() != degr.len() {
        return Err(Error::invalid(format!(
            "{} records but {} degradation rows",
            rows.len(),
            degr.len()
        )));
    }

    let mut scores: Vec<(String, Score)> = Vec::new();
    let mut records = Vec::with_capacity(rows.len());
    for ((ln, f), (dln, g)) in rows.into_iter().zip(degr) {
        if f[0] != g[0] {
            return Err(Error::Parse {
                path: dpath.clone(),
                line: dln,
                msg: format!("row for {} where {} was expected", g[0], f[0]),
            });
        }
        if !scores.iter().any(|(id, _)| *id == f[1]) {
            let s = formats::read_score(&dir.join("scores").join(format!("{}.score", f[1])))?;
            scores.push((f[1].clone(), s));
        }
        let band = f[2].parse().map_err(|e: Error| Error::Parse {
            path: rpath.clone(),
            line: ln,
            msg: e.to_string(),
        })?;
        let ratings = Ratings {
            musicality: num(&rpath, ln, &f[3])?,
            note_accuracy: num(&rpath, ln, &f[4])?,
            rhythmic_accuracy: num(&rpath, ln, &f[5])?,
        };
        let degradation = DegradationParams {
            wrong_note_rate: num(&dpath, dln, &g[1])?,
            intonation_std: num(&dpath, dln, &g[2])?,
            tempo_jitter: num(&dpath, dln, &g[3])?,
            onset_noise: num(&dpath, dln, &g[4])?,
        };
        let contour = formats::read_contour(&dir.join("contours").join(format!("{}.contour", f[0])))?;
        records.push(AssessmentRecord {
            id: f[0].clone(),
            score_id: f[1].clone(),
            band,
            contour,
            ratings,
            degradation,
        });
    }
    // keep generation order of scores (score_0, score_1, ...)
    scores.sort_by_key(|(id, _)| {
        id.rsplit('_')
            .next()
            .and_then(|n| n.parse::<usize>().ok())
            .unwrap_or(usize::MAX)
    });
    Ok(Dataset {
        config,
        scores,
        records,
    })
}
