//! Output trees for `train` and `sweep`:
//! `<out>/manifest`, `<out>/report.txt`, `<out>/report_rows.tsv`, `<out>/checkpoints/`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use mpa_core::data::load_dataset;
use mpa_core::trainer::{
    run_experiment, sweep_config, sweep_table, ExperimentOutcome, ExperimentReport, SweepKind, TrainConfig,
    TrainData, DEFAULT_MATRIX_CACHE,
};
use mpa_core::{Dataset, Manifest};
use sha2::{Digest, Sha256};

const DATASET_FILES: [&str; 3] = ["manifest", "records.txt", "degradation.txt"];

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// SHA-256 over the dataset's manifest and rating tables.
fn dataset_digest(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in DATASET_FILES {
        let p = dir.join(name);
        let bytes = std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

struct Run {
    dataset_dir: PathBuf,
    digest: String,
    dataset: Dataset,
    started: u64,
}

impl Run {
    fn open(dir: &Path) -> Result<Self> {
        let started = unix_now();
        let digest = dataset_digest(dir)?;
        let dataset = load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
        Ok(Self {
            dataset_dir: dir.to_path_buf(),
            digest,
            dataset,
            started,
        })
    }

    fn manifest(&self, subcommand: &str, seeds: &[u64]) -> Manifest {
        let mut m = Manifest::new();
        let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
        m.set("subcommand", subcommand)
            .set("toolkit_version", env!("CARGO_PKG_VERSION"))
            .set("dataset", self.dataset_dir.display())
            .set("dataset_sha256", &self.digest)
            .set("seeds", seeds.join(","));
        m
    }

    fn finish(&self, mut m: Manifest, out: &Path) -> Result<()> {
        m.set("started_unix", self.started)
            .set("finished_unix", unix_now());
        write(&out.join("manifest"), &m.to_string())
    }
}

fn with_config(m: &mut Manifest, cfg: &TrainConfig) {
    for (k, v) in cfg.to_manifest().entries() {
        m.set(k, v);
    }
}

fn checkpoint_name(cfg: &TrainConfig, seed: u64) -> String {
    format!("{}_{}_{}_seed{seed}.ckpt", cfg.kind, cfg.criterion, cfg.value())
}

/// Report files and checkpoints of one experiment, written into `out`.
fn write_experiment(out: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    let ckpt = out.join("checkpoints");
    create_dir(&ckpt)?;
    let r = &outcome.report;
    for (s, model) in r.seeds.iter().zip(&outcome.models) {
        let p = ckpt.join(checkpoint_name(&r.config, s.seed));
        model
            .save(&p)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn rows_file(reports: &[&ExperimentReport]) -> String {
    let mut s = format!("{}\n", ExperimentReport::ROWS_HEADER);
    for r in reports {
        s.push_str(&r.rows());
    }
    s
}

fn experiment(data: &mut TrainData<'_>, cfg: &TrainConfig, seeds: &[u64]) -> Result<ExperimentOutcome> {
    if let Some(s) = cfg.matrix_resolution {
        data.use_resolution(s, DEFAULT_MATRIX_CACHE)?;
    }
    let split = cfg.split(data.len())?;
    eprintln!("training {} on {} with seeds {seeds:?}", cfg.kind, cfg.criterion);
    Ok(run_experiment(data, &split, cfg, seeds)?)
}

pub fn train(dataset: &Path, configs: &[TrainConfig], seeds: &[u64], out: &Path, nested: bool) -> Result<()> {
    let run = Run::open(dataset)?;
    let mut data = TrainData::new(&run.dataset, configs[0].dtw_band)?;
    create_dir(out)?;
    let mut kinds = Vec::new();
    for cfg in configs {
        let outcome = experiment(&mut data, cfg, seeds)?;
        let dir = if nested {
            out.join(cfg.kind.name())
        } else {
            out.to_path_buf()
        };
        create_dir(&dir)?;
        write_experiment(&dir, &outcome)?;
        write(&dir.join("report.txt"), &outcome.report.text())?;
        write(&dir.join("report_rows.tsv"), &rows_file(&[&outcome.report]))?;
        let mut m = run.manifest("train", seeds);
        with_config(&mut m, cfg);
        run.finish(m, &dir)?;
        println!("{}: median R2 {:.4}", cfg.kind, outcome.report.summary.median);
        kinds.push(cfg.kind.name());
    }
    if nested {
        let mut m = run.manifest("train", seeds);
        m.set("model", "all").set("reports", kinds.join(","));
        run.finish(m, out)?;
    }
    Ok(())
}

pub fn sweep(
    dataset: &Path,
    kind: SweepKind,
    values: &[f64],
    base: &TrainConfig,
    seeds: &[u64],
    out: &Path,
) -> Result<()> {
    let configs = values
        .iter()
        .map(|&v| sweep_config(kind, base, v))
        .collect::<mpa_core::Result<Vec<_>>>()?;
    let run = Run::open(dataset)?;
    let mut data = TrainData::new(&run.dataset, base.dtw_band)?;
    create_dir(out)?;
    let mut outcomes = Vec::new();
    for cfg in &configs {
        let outcome = experiment(&mut data, cfg, seeds)?;
        write_experiment(out, &outcome)?;
        outcomes.push(outcome);
    }
    let reports: Vec<&ExperimentReport> = outcomes.iter().map(|o| &o.report).collect();
    let table = sweep_table(kind, &reports);
    let mut text = table.clone();
    for r in &reports {
        let _ = write!(text, "\n{}", r.text());
    }
    write(&out.join("report.txt"), &text)?;
    write(&out.join("report_rows.tsv"), &rows_file(&reports))?;
    let mut m = run.manifest("sweep", seeds);
    with_config(&mut m, base);
    let vals: Vec<String> = values.iter().map(f64::to_string).collect();
    m.set("sweep", kind).set("values", vals.join(","));
    run.finish(m, out)?;
    print!("{table}");
    Ok(())
}
