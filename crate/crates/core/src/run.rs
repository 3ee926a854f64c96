//! Run configuration files, the run directory and log-driven reports.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{BoundMode, ColoringEnv, EnvError};
use crate::graph::{CommutGraph, Coloring, Scheme};
use crate::hamiltonian::{HamiltonianError, QubitHamiltonian};
use crate::optim::AdamConfig;
use crate::policy::Checkpoint;
use crate::statevector::{ground_state_with, GroundStateOptions, StateError};
use crate::trainer::{
    pareto_front, BackwardMode, InvalidMode, SampleRecord, TopKTracker, TrainConfig, TrainError, TrainSink,
};
use crate::variance::{CovarianceTable, RewardParams, VarianceError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Variance(#[from] VarianceError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RunError {
    pub fn is_numeric(&self) -> bool {
        match self {
            RunError::Train(e) => e.is_numeric(),
            RunError::State(StateError::NoConvergence { .. }) => true,
            RunError::Variance(VarianceError::NegativeVariance(_)) => true,
            _ => false,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Greedy,
    MaxDegree,
    Fixed,
}

/// Flat training configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Path to the `.ham` file, relative to the config file.
    pub hamiltonian: PathBuf,
    pub scheme: Scheme,
    /// Informational, e.g. "jw".
    pub mapping: String,
    pub drop_threshold: f64,
    pub qubit_cap: usize,
    pub total_samples: usize,
    pub n_update: usize,
    pub lr: f64,
    pub lr_log_z: Option<f64>,
    pub warm_start_log_z: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub epsilon: f64,
    pub reward_floor: f64,
    pub bound_mode: BoundKind,
    pub bound_k: Option<u32>,
    /// Seed for the greedy bound; defaults to `seed`.
    pub bound_seed: Option<u64>,
    pub greedy_repeats: usize,
    pub invalid_mode: InvalidMode,
    pub backward_mode: BackwardMode,
    pub emb_d: usize,
    pub hidden_d: usize,
    pub use_weights: bool,
    pub symmetry_breaking: bool,
    pub checkpoint_every: usize,
    pub top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let r = RewardParams::default();
        RunConfig {
            hamiltonian: PathBuf::new(),
            scheme: Scheme::Fc,
            mapping: "jw".into(),
            drop_threshold: 0.0,
            qubit_cap: GroundStateOptions::default().qubit_cap,
            total_samples: t.total_samples,
            n_update: t.n_update,
            lr: t.adam.lr,
            lr_log_z: None,
            warm_start_log_z: t.warm_start_log_z,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            seed: t.seed,
            lambda0: r.lambda0,
            lambda1: r.lambda1,
            epsilon: r.epsilon,
            reward_floor: r.reward_floor,
            bound_mode: BoundKind::Greedy,
            bound_k: None,
            bound_seed: None,
            greedy_repeats: 1,
            invalid_mode: t.invalid_mode,
            backward_mode: t.backward_mode,
            emb_d: t.emb_d,
            hidden_d: t.hidden_d,
            use_weights: t.use_weights,
            symmetry_breaking: t.symmetry_breaking,
            checkpoint_every: t.checkpoint_every,
            top_k: t.top_k,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        if cfg.hamiltonian.as_os_str().is_empty() {
            return Err(RunError::Config("missing `hamiltonian`".into()));
        }
        cfg.train_config(1)?.validate().map_err(|e| RunError::Config(e.to_string()))?;
        cfg.bound()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves the Hamiltonian path against its directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.hamiltonian.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.hamiltonian = dir.join(&cfg.hamiltonian);
            }
        }
        Ok(cfg)
    }

    pub fn bound(&self) -> Result<BoundMode, RunError> {
        match (self.bound_mode, self.bound_k) {
            (BoundKind::Fixed, Some(k)) if k >= 1 => Ok(BoundMode::Fixed(k)),
            (BoundKind::Fixed, _) => Err(RunError::Config("bound_mode = \"fixed\" needs bound_k >= 1".into())),
            (_, Some(_)) => Err(RunError::Config("bound_k is only used with bound_mode = \"fixed\"".into())),
            (BoundKind::MaxDegree, None) => Ok(BoundMode::MaxDegree),
            (BoundKind::Greedy, None) => Ok(BoundMode::Greedy {
                seed: self.bound_seed.unwrap_or(self.seed),
                repeats: self.greedy_repeats.max(1),
            }),
        }
    }

    pub fn reward_params(&self) -> RewardParams {
        RewardParams {
            lambda0: self.lambda0,
            lambda1: self.lambda1,
            epsilon: self.epsilon,
            reward_floor: self.reward_floor,
        }
    }

    pub fn train_config(&self, workers: usize) -> Result<TrainConfig, RunError> {
        Ok(TrainConfig {
            total_samples: self.total_samples,
            n_update: self.n_update,
            adam: AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps },
            lr_log_z: self.lr_log_z,
            warm_start_log_z: self.warm_start_log_z,
            seed: self.seed,
            reward: self.reward_params(),
            invalid_mode: self.invalid_mode,
            backward_mode: self.backward_mode,
            emb_d: self.emb_d,
            hidden_d: self.hidden_d,
            use_weights: self.use_weights,
            symmetry_breaking: self.symmetry_breaking,
            checkpoint_every: self.checkpoint_every,
            top_k: self.top_k,
            workers: workers.max(1),
        })
    }
}

/// A Hamiltonian with its graphs and covariance table, ready for scoring.
pub struct Prepared {
    pub hamiltonian: QubitHamiltonian,
    pub commut: CommutGraph,
    pub complement: CommutGraph,
    pub table: CovarianceTable,
    pub ground_energy: f64,
}

/// Builds both graphs and the covariance table, reusing a cached table
/// from `cache_dir` when its hash matches.
pub fn prepare(
    h: QubitHamiltonian,
    scheme: Scheme,
    qubit_cap: usize,
    cache_dir: Option<&Path>,
) -> Result<Prepared, RunError> {
    let commut = CommutGraph::build(&h, scheme, false);
    let complement = CommutGraph::build(&h, scheme, true);
    let opts = GroundStateOptions { qubit_cap, ..Default::default() };
    let gs = ground_state_with(&h, &opts)?;
    let cache = cache_dir.map(|d| d.join(CovarianceTable::cache_file_name(&h, scheme)));
    let cached = cache.as_ref().filter(|p| p.exists()).and_then(|p| CovarianceTable::load_for(p, &h, scheme).ok());
    let table = match cached {
        Some(t) => t,
        None => {
            let t = CovarianceTable::build(&h, &gs.state, &commut)?;
            if let Some(p) = &cache {
                t.save(p)?;
            }
            t
        }
    };
    Ok(Prepared { hamiltonian: h, commut, complement, table, ground_energy: gs.energy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFiles {
    pub samples: String,
    pub topk: String,
    pub pareto: String,
    pub histogram: String,
    pub checkpoints: String,
}

impl Default for RunFiles {
    fn default() -> Self {
        RunFiles {
            samples: "samples.jsonl".into(),
            topk: "topk.csv".into(),
            pareto: "pareto.csv".into(),
            histogram: "histogram.csv".into(),
            checkpoints: "checkpoints".into(),
        }
    }
}

/// Written once, before training starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub created_unix: u64,
    pub fixture_path: String,
    pub fixture_hash: String,
    pub scheme: Scheme,
    pub mapping: String,
    pub n_qubits: usize,
    pub n_terms: usize,
    pub color_bound: u32,
    pub ground_energy: f64,
    pub config: RunConfig,
    pub train: TrainConfig,
    pub files: RunFiles,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig, train: &TrainConfig, prep: &Prepared, env: &ColoringEnv) -> Self {
        let created_unix =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix,
            fixture_path: cfg.hamiltonian.display().to_string(),
            fixture_hash: prep.hamiltonian.content_hash(),
            scheme: cfg.scheme,
            mapping: cfg.mapping.clone(),
            n_qubits: prep.hamiltonian.n_qubits(),
            n_terms: prep.hamiltonian.n_terms(),
            color_bound: env.k(),
            ground_energy: prep.ground_energy,
            config: cfg.clone(),
            train: train.clone(),
            files: RunFiles::default(),
        }
    }
}

/// Streams samples and checkpoints into a run directory.
pub struct RunDirSink {
    dir: PathBuf,
    samples: BufWriter<File>,
}

impl RunDirSink {
    /// Creates the directory layout and writes the manifest.
    pub fn create(dir: &Path, manifest: &RunManifest) -> Result<Self, RunError> {
        fs::create_dir_all(dir.join(&manifest.files.checkpoints)).map_err(io_err(dir))?;
        let mpath = dir.join("manifest.json");
        fs::write(&mpath, serde_json::to_string_pretty(manifest)?).map_err(io_err(&mpath))?;
        let spath = dir.join(&manifest.files.samples);
        let samples = BufWriter::new(File::create(&spath).map_err(io_err(&spath))?);
        Ok(RunDirSink { dir: dir.to_path_buf(), samples })
    }

    pub fn finish(mut self) -> Result<(), RunError> {
        self.samples.flush().map_err(io_err(&self.dir))
    }
}

impl TrainSink for RunDirSink {
    fn on_sample(&mut self, rec: &SampleRecord) -> Result<(), TrainError> {
        let line = serde_json::to_string(rec).map_err(|e| TrainError::Sink(e.to_string()))?;
        writeln!(self.samples, "{line}").map_err(|e| TrainError::Sink(e.to_string()))
    }

    fn on_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), TrainError> {
        self.samples.flush().map_err(|e| TrainError::Sink(e.to_string()))?;
        let path = self.dir.join("checkpoints").join(format!("ckpt_{}.json", ck.iteration));
        ck.save(&path).map_err(|e| TrainError::Sink(e.to_string()))
    }
}

/// Samples parsed from a JSONL log.
#[derive(Debug, Clone, Default)]
pub struct SampleLog {
    pub samples: Vec<SampleRecord>,
    /// Lines that failed to parse, by 1-based line number.
    pub skipped: Vec<usize>,
}

pub fn read_samples(path: &Path) -> Result<SampleLog, RunError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut log = SampleLog::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SampleRecord>(&line) {
            Ok(r) => log.samples.push(r),
            Err(_) => log.skipped.push(i + 1),
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopKRow {
    pub iter: u64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub best: Option<f64>,
}

/// Replays the log through a top-k tracker, one row per iteration.
pub fn topk_trace(samples: &[SampleRecord], k: usize) -> Vec<TopKRow> {
    let mut tracker = TopKTracker::new(k);
    let mut rows: Vec<TopKRow> = Vec::new();
    for s in samples {
        if let (true, Some(e)) = (s.valid, s.eps2m) {
            tracker.offer_coloring(&Coloring::from_colors(s.colors.clone()), e, s.idx);
        }
        let sum = tracker.summary();
        let row = TopKRow { iter: s.iter, mean: sum.map(|v| v.mean), std: sum.map(|v| v.std), best: sum.map(|v| v.best) };
        match rows.last_mut() {
            Some(last) if last.iter == s.iter => *last = row,
            _ => rows.push(row),
        }
    }
    rows
}

/// Valid samples on the Pareto front, one row per distinct `(ε²M, N_G)`
/// point (first sample index kept).
pub fn pareto_rows(samples: &[SampleRecord]) -> Vec<(f64, usize, u64)> {
    let mut seen = HashSet::new();
    let mut pts = Vec::new();
    for s in samples {
        if let (true, Some(e)) = (s.valid, s.eps2m) {
            if seen.insert((e.to_bits(), s.n_groups)) {
                pts.push((e, s.n_groups, s.idx));
            }
        }
    }
    let coords: Vec<(f64, usize)> = pts.iter().map(|p| (p.0, p.1)).collect();
    pareto_front(&coords).into_iter().map(|i| pts[i]).collect()
}

/// Equal-width histogram of valid `ε²M` values as `(lo, hi, count)`.
pub fn histogram(samples: &[SampleRecord], bins: usize) -> Vec<(f64, f64, usize)> {
    let vals: Vec<f64> = samples.iter().filter(|s| s.valid).filter_map(|s| s.eps2m).collect();
    if vals.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in vals {
        let b = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[b] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn topk_csv(samples: &[SampleRecord], k: usize) -> String {
    let mut out = format!("iter,mean_top{k},std_top{k},best_eps2M\n");
    for r in topk_trace(samples, k) {
        let _ = writeln!(out, "{},{},{},{}", r.iter, opt(r.mean), opt(r.std), opt(r.best));
    }
    out
}

pub fn pareto_csv(samples: &[SampleRecord]) -> String {
    let mut out = String::from("eps2M,n_groups,sample_idx\n");
    for (e, g, i) in pareto_rows(samples) {
        let _ = writeln!(out, "{e},{g},{i}");
    }
    out
}

pub fn histogram_csv(samples: &[SampleRecord], bins: usize) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (lo, hi, c) in histogram(samples, bins) {
        let _ = writeln!(out, "{lo},{hi},{c}");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub n_samples: usize,
    pub n_valid: usize,
    pub skipped_lines: usize,
    pub best: Option<(f64, usize)>,
    pub min_groups: Option<usize>,
    pub final_top_k_mean: Option<f64>,
}

impl ReportSummary {
    pub fn valid_frac(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.n_valid as f64 / self.n_samples as f64
        }
    }
}

/// Regenerates `topk.csv`, `pareto.csv` and `histogram.csv` from `samples.jsonl`.
pub fn write_report(dir: &Path, k: usize, bins: usize) -> Result<ReportSummary, RunError> {
    let files = RunFiles::default();
    let log = read_samples(&dir.join(&files.samples))?;
    let s = &log.samples;
    for (name, body) in
        [(&files.topk, topk_csv(s, k)), (&files.pareto, pareto_csv(s)), (&files.histogram, histogram_csv(s, bins))]
    {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))?;
    }
    let valid: Vec<&SampleRecord> = s.iter().filter(|r| r.valid).collect();
    let best = valid
        .iter()
        .filter_map(|r| r.eps2m.map(|e| (e, r.n_groups)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ReportSummary {
        n_samples: s.len(),
        n_valid: valid.len(),
        skipped_lines: log.skipped.len(),
        best,
        min_groups: valid.iter().map(|r| r.n_groups).min(),
        final_top_k_mean: topk_trace(s, k).last().and_then(|r| r.mean),
    })
}
