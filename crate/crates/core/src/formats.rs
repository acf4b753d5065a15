//! Plain-text contour and score files.
//!
//! Contour: header `frame_rate=<real>`, then one pitch per line (0 = unvoiced).
//! Score: header `ticks_per_beat=<int> tempo_bpm=<real>`, then `<midi> <ticks>` per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{Note, PitchContour, Score};

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        msg: msg.into(),
    }
}

/// Value of `key=value` in a whitespace-separated header.
fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    header
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

/// Significant lines with 1-based numbers; blank lines and `#` comments are skipped.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn format_contour(c: &PitchContour) -> String {
    let mut s = format!("frame_rate={}\n", c.frame_rate());
    for v in c.frames() {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn parse_contour(text: &str, origin: &str) -> Result<PitchContour> {
    let mut it = lines(text);
    let (ln, header) = it
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty contour file"))?;
    let rate: f64 = header_value(header, "frame_rate")
        .ok_or_else(|| parse_err(origin, ln, "expected header frame_rate=<real>"))?
        .parse()
        .map_err(|e| parse_err(origin, ln, format!("bad frame_rate: {e}")))?;
    let mut frames = Vec::new();
    for (ln, l) in it {
        let v: f64 = l
            .parse()
            .map_err(|e| parse_err(origin, ln, format!("bad pitch {l:?}: {e}")))?;
        frames.push(v);
    }
    PitchContour::new(frames, rate).map_err(|e| parse_err(origin, 0, e.to_string()))
}

pub fn format_score(score: &Score) -> String {
    let mut s = format!(
        "ticks_per_beat={} tempo_bpm={}\n",
        score.ticks_per_beat(),
        score.tempo_bpm()
    );
    for n in score.notes() {
        let _ = writeln!(s, "{} {}", n.pitch, n.ticks);
    }
    s
}

pub fn parse_score(text: &str, origin: &str) -> Result<Score> {
    let mut it = lines(text);
    let (ln, header) = it
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty score file"))?;
    let tpb: u32 = header_value(header, "ticks_per_beat")
        .ok_or_else(|| parse_err(origin, ln, "header lacks ticks_per_beat=<int>"))?
        .parse()
        .map_err(|e| parse_err(origin, ln, format!("bad ticks_per_beat: {e}")))?;
    let tempo: f64 = header_value(header, "tempo_bpm")
        .ok_or_else(|| parse_err(origin, ln, "header lacks tempo_bpm=<real>"))?
        .parse()
        .map_err(|e| parse_err(origin, ln, format!("bad tempo_bpm: {e}")))?;
    let mut notes = Vec::new();
    for (ln, l) in it {
        let mut f = l.split_whitespace();
        let (Some(p), Some(t), None) = (f.next(), f.next(), f.next()) else {
            return Err(parse_err(
                origin,
                ln,
                format!("expected `<midi> <ticks>`, got {l:?}"),
            ));
        };
        let pitch = p
            .parse()
            .map_err(|e| parse_err(origin, ln, format!("bad pitch {p:?}: {e}")))?;
        let ticks = t
            .parse()
            .map_err(|e| parse_err(origin, ln, format!("bad ticks {t:?}: {e}")))?;
        notes.push(Note { pitch, ticks });
    }
    Score::new(notes, tpb, tempo).map_err(|e| parse_err(origin, 0, e.to_string()))
}

pub fn read_contour(path: &Path) -> Result<PitchContour> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_contour(&text, &path.display().to_string())
}

pub fn read_score(path: &Path) -> Result<Score> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_score(&text, &path.display().to_string())
}

pub fn write_contour(path: &Path, c: &PitchContour) -> Result<()> {
    std::fs::write(path, format_contour(c)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_score(path: &Path, s: &Score) -> Result<()> {
    std::fs::write(path, format_score(s)).map_err(|e| Error::io(path.display().to_string(), e))
}
