//! Flag resolution: command line, then the `--config` file, then built-in defaults.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgMatches, Command};
use mpa_core::Manifest;

/// Settings from a `key=value` config file. Keys are flag names with or without
/// the leading dashes; `-` and `_` are interchangeable.
#[derive(Debug, Default)]
pub struct FileConfig {
    entries: Manifest,
}

impl FileConfig {
    pub fn read(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let raw: Manifest = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        let mut entries = Manifest::new();
        for (k, v) in raw.entries() {
            entries.set(key(k), v);
        }
        Ok(Self { entries })
    }

    fn get(&self, id: &str) -> Option<&str> {
        self.entries.get(&key(id))
    }

    /// Rejects keys that no flag of the running subcommand accepts.
    pub fn check_keys(&self, cmd: &Command) -> Result<()> {
        let known: Vec<String> = cmd.get_arguments().map(|a| key(a.get_id().as_str())).collect();
        for (k, _) in self.entries.entries() {
            if !known.iter().any(|id| id == k) {
                bail!("config key `{k}` is not a flag of this command");
            }
        }
        Ok(())
    }
}

fn key(s: &str) -> String {
    s.trim_start_matches('-').replace('-', "_")
}

fn from_command_line(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

/// `value` if it came from the command line, else the config entry, else `value`
/// (the clap default).
pub fn pick<T>(m: &ArgMatches, cfg: &FileConfig, id: &str, value: T) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    if from_command_line(m, id) {
        return Ok(value);
    }
    match cfg.get(id) {
        Some(raw) => raw
            .parse()
            .map_err(|e| anyhow::anyhow!("config `{}={raw}`: {e}", key(id))),
        None => Ok(value),
    }
}

/// Like [`pick`] for flags without a default.
pub fn pick_opt<T>(cfg: &FileConfig, id: &str, value: Option<T>) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    if value.is_some() {
        return Ok(value);
    }
    cfg.get(id)
        .map(|raw| {
            raw.parse()
                .map_err(|e| anyhow::anyhow!("config `{}={raw}`: {e}", key(id)))
        })
        .transpose()
}

/// Seed list: `3`, `1,4,7` or an inclusive range `0..9`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

impl FromStr for Seeds {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|e| format!("seed range {s:?}: {e}"))?;
            let b: u64 = b.trim().parse().map_err(|e| format!("seed range {s:?}: {e}"))?;
            if b < a {
                return Err(format!("seed range {s:?} is empty"));
            }
            (a..=b).collect()
        } else {
            s.split(',')
                .map(|p| p.trim().parse().map_err(|e| format!("seed {p:?}: {e}")))
                .collect::<std::result::Result<_, _>>()?
        };
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(format!("seed list {s:?} repeats a seed"));
        }
        Ok(Seeds(seeds))
    }
}

impl std::fmt::Display for Seeds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Comma-separated sweep values.
#[derive(Debug, Clone, PartialEq)]
pub struct Values(pub Vec<f64>);

impl FromStr for Values {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("value {p:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("no values".into());
        }
        Ok(Values(v))
    }
}
