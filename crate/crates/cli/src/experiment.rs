use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use riskbo::bench::{fixtures, make_problem};
use riskbo::vucb::{run_env_sampled, run_vucb, InitialObservation, RunTrace, TraceRow};

use crate::spec::{Algorithm, ExperimentSpec};

pub const SPEC_FILE: &str = "spec.toml";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOTDATA_FILE: &str = "plotdata.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn trace_file_name(alg: Algorithm, seed: u64) -> String {
    format!("trace_{alg}_{seed}.jsonl")
}

/// First line of a trace file; every later line is one [`TraceRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub problem: String,
    pub alpha: f64,
    pub standardize: bool,
    pub init: Vec<InitialObservation>,
    pub lv_hit_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub file: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub spec_sha256: String,
    /// Fixture file name to SHA-256.
    pub fixtures: BTreeMap<String, String>,
    /// Output file name to SHA-256.
    pub files: BTreeMap<String, String>,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).with_context(|| format!("reading manifest in {}", dir.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    /// Every declared file exists and matches its hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, hash) in &self.files {
            let bytes = fs::read(dir.join(name)).with_context(|| format!("declared file {name} is missing"))?;
            if &sha256_hex(&bytes) != hash {
                bail!("{name} does not match its recorded hash");
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_trace(path: &Path, alg: Algorithm, trace: &RunTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = TraceHeader {
        algorithm: alg,
        seed: trace.seed,
        problem: trace.problem.clone(),
        alpha: trace.alpha,
        standardize: trace.standardize,
        init: trace.init.clone(),
        lv_hit_rate: trace.lv_hit_rate,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for row in &trace.rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<(TraceHeader, Vec<TraceRow>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().with_context(|| format!("{} is empty", path.display()))??;
    let header: TraceHeader = serde_json::from_str(&first).with_context(|| format!("{}: header", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 2))?);
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub iteration: usize,
    pub algorithm: Algorithm,
    pub median_log10_metric: f64,
    pub p15: f64,
    pub p85: f64,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and 15th/85th percentiles of the log10 metric across seeds,
/// per algorithm and iteration.
pub fn summarize_traces(traces: &[(Algorithm, Vec<TraceRow>)]) -> Vec<SummaryRow> {
    let mut by_alg: BTreeMap<Algorithm, Vec<&[TraceRow]>> = BTreeMap::new();
    for (alg, rows) in traces {
        by_alg.entry(*alg).or_default().push(rows);
    }
    let mut out = Vec::new();
    for (alg, runs) in by_alg {
        let t_max = runs.iter().map(|r| r.len()).min().unwrap_or(0);
        for t in 0..t_max {
            let mut v: Vec<f64> = runs.iter().map(|r| r[t].log10_metric).collect();
            v.sort_by(f64::total_cmp);
            out.push(SummaryRow {
                iteration: runs[0][t].t,
                algorithm: alg,
                median_log10_metric: percentile(&v, 0.5),
                p15: percentile(&v, 0.15),
                p85: percentile(&v, 0.85),
            });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trace_") && n.ends_with(".jsonl"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn record_files(dir: &Path, manifest: &mut Manifest, names: &[String]) -> Result<()> {
    for name in names {
        manifest.files.insert(name.clone(), sha256_hex(&fs::read(dir.join(name))?));
    }
    Ok(())
}

/// Rebuilds `summary.csv` from the trace files in `dir`.
pub fn summarize_dir(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut traces = Vec::new();
    for path in trace_files(dir)? {
        let (header, rows) = read_trace(&path)?;
        traces.push((header.algorithm, rows));
    }
    if traces.is_empty() {
        bail!("no trace files in {}", dir.display());
    }
    let summary = summarize_traces(&traces);
    write_csv(&dir.join(SUMMARY_FILE), &summary)?;
    if let Ok(mut manifest) = Manifest::load(dir) {
        record_files(dir, &mut manifest, &[SUMMARY_FILE.to_string()])?;
        manifest.save(dir)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub algorithm: Algorithm,
    pub iteration: usize,
    pub median: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: SummaryRow = rec.with_context(|| format!("{}: record {}", path.display(), i + 1))?;
        if !(row.p15 <= row.median_log10_metric && row.median_log10_metric <= row.p85) {
            bail!("{}: record {} has its median outside the band", path.display(), i + 1);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reshapes `summary.csv` into `plotdata.csv`: one row per algorithm and
/// iteration with the median line and its 15–85% band.
pub fn plotdata_dir(dir: &Path) -> Result<Vec<PlotRow>> {
    let mut rows: Vec<PlotRow> = read_summary(&dir.join(SUMMARY_FILE))?
        .into_iter()
        .map(|s| PlotRow {
            algorithm: s.algorithm,
            iteration: s.iteration,
            median: s.median_log10_metric,
            band_lo: s.p15,
            band_hi: s.p85,
        })
        .collect();
    rows.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.iteration.cmp(&b.iteration)));
    write_csv(&dir.join(PLOTDATA_FILE), &rows)?;
    if let Ok(mut manifest) = Manifest::load(dir) {
        record_files(dir, &mut manifest, &[PLOTDATA_FILE.to_string()])?;
        manifest.save(dir)?;
    }
    Ok(rows)
}

/// Runs every (algorithm, repeat) pair on a worker pool, then writes the
/// summary and manifest. Failed runs are recorded, not fatal.
pub fn run_experiment(spec: &ExperimentSpec, dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let spec_text = spec.to_toml();
    fs::write(dir.join(SPEC_FILE), &spec_text)?;
    let problem = make_problem(spec.problem, spec.z_mode, spec.alpha)?;
    let algorithms = spec.selected_algorithms();
    let jobs: Vec<(Algorithm, u64)> =
        algorithms.iter().flat_map(|&a| (0..spec.repeats).map(move |r| (a, spec.seed(r)))).collect();
    let workers = spec.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let results: Vec<(RunRecord, Option<Vec<TraceRow>>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(alg, seed)| {
                let cfg = spec.run_config(alg, seed);
                let outcome = match alg {
                    Algorithm::EnvSampled => run_env_sampled(&problem, &cfg, spec.env_samples),
                    _ => run_vucb(&problem, &cfg),
                };
                let name = trace_file_name(alg, seed);
                let written = outcome.map_err(anyhow::Error::from).and_then(|trace| {
                    write_trace(&dir.join(&name), alg, &trace)?;
                    Ok(trace)
                });
                match written {
                    Ok(trace) => {
                        eprintln!("{alg} seed {seed}: done");
                        (RunRecord { algorithm: alg, seed, file: Some(name), error: None }, Some(trace.rows))
                    }
                    Err(e) => {
                        eprintln!("{alg} seed {seed}: {e:#}");
                        (RunRecord { algorithm: alg, seed, file: None, error: Some(format!("{e:#}")) }, None)
                    }
                }
            })
            .collect()
    });
    let traces: Vec<(Algorithm, Vec<TraceRow>)> =
        results.iter().filter_map(|(rec, rows)| rows.clone().map(|r| (rec.algorithm, r))).collect();
    let mut names: Vec<String> = vec![SPEC_FILE.to_string()];
    names.extend(results.iter().filter_map(|(rec, _)| rec.file.clone()));
    if !traces.is_empty() {
        write_csv(&dir.join(SUMMARY_FILE), &summarize_traces(&traces))?;
        names.push(SUMMARY_FILE.to_string());
    }
    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        spec_sha256: sha256_hex(spec_text.as_bytes()),
        fixtures: fixtures::all().iter().map(|(n, c)| (n.to_string(), sha256_hex(c.as_bytes()))).collect(),
        files: BTreeMap::new(),
        runs: results.into_iter().map(|(rec, _)| rec).collect(),
    };
    record_files(dir, &mut manifest, &names)?;
    manifest.save(dir)?;
    Ok(manifest)
}
