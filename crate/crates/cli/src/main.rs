use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use qmg_core::baselines::{rlf_coloring, sorted_insertion};
use qmg_core::env::ColoringEnv;
use qmg_core::graph::{greedy_color_bound_repeated, CommutGraph, Coloring, Scheme};
use qmg_core::hamiltonian::{HamiltonianError, QubitHamiltonian};
use qmg_core::run::{prepare, write_report, RunConfig, RunDirSink, RunError, RunManifest};
use qmg_core::statevector::{ground_state_with, GroundStateOptions, StateError};
use qmg_core::trainer::{TrainError, Trainer};
use qmg_core::variance::{CovarianceTable, RewardEvaluator};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "qmg", version, about = "Measurement grouping for Pauli-sum Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Fc,
    Qwc,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Fc => Scheme::Fc,
            SchemeArg::Qwc => Scheme::Qwc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Si,
    Rlf,
    Greedy,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Si => "si",
            Method::Rlf => "rlf",
            Method::Greedy => "greedy",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print size and degree statistics of a commutativity graph.
    Graph {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long, value_enum, default_value = "fc")]
        scheme: SchemeArg,
        /// Use the complement (anticommutation) graph.
        #[arg(long)]
        complement: bool,
        /// Write the edge list as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group terms with a classical heuristic and score the grouping.
    Baseline {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long, value_enum, default_value = "fc")]
        scheme: SchemeArg,
        #[arg(long, value_enum)]
        method: Method,
        /// Seed for the greedy coloring.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of greedy runs; the fewest colors wins.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Write the grouping JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        qubit_cap: usize,
    },
    /// Compute the ground state and cache the covariance table.
    Oracle {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long, value_enum, default_value = "fc")]
        scheme: SchemeArg,
        /// Cache directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        qubit_cap: usize,
    },
    /// Train the GFlowNet sampler and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Regenerate topk.csv, pareto.csv and histogram.csv from a run's sample log.
    Report {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long)]
        top_k: Option<usize>,
    },
}

fn load_hamiltonian(path: &Path) -> Result<QubitHamiltonian> {
    QubitHamiltonian::load(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_graph(hamiltonian: &Path, scheme: Scheme, complement: bool, out: Option<&Path>) -> Result<()> {
    let h = load_hamiltonian(hamiltonian)?;
    let g = CommutGraph::build(&h, scheme, complement);
    println!(
        "nodes={} edges={} mean_degree={:.2} max_degree={}",
        g.n_nodes(),
        g.n_edges(),
        g.mean_degree(),
        g.max_degree()
    );
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string(&g.to_json())?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_baseline(
    hamiltonian: &Path,
    scheme: Scheme,
    method: Method,
    seed: u64,
    repeats: usize,
    out: Option<&Path>,
    qubit_cap: usize,
) -> Result<()> {
    let h = load_hamiltonian(hamiltonian)?;
    let complement = CommutGraph::build(&h, scheme, true);
    let coloring: Coloring = match method {
        Method::Si => sorted_insertion(&h, scheme),
        Method::Rlf => rlf_coloring(&complement),
        Method::Greedy => greedy_color_bound_repeated(&complement, seed, repeats.max(1)).1,
    };
    if !complement.is_valid(&coloring)? {
        bail!("internal error: {} produced an invalid grouping", method.as_str());
    }
    let groups = coloring.groups()?;
    let doc = json!({
        "method": method.as_str(),
        "scheme": scheme.as_str(),
        "groups": groups,
        "n_groups": groups.len(),
    });
    match out {
        Some(path) => {
            std::fs::write(path, serde_json::to_string(&doc)?).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{doc}"),
    }

    let opts = GroundStateOptions { qubit_cap, ..Default::default() };
    match ground_state_with(&h, &opts) {
        Ok(gs) => {
            let commut = CommutGraph::build(&h, scheme, false);
            let table = CovarianceTable::build(&h, &gs.state, &commut)?;
            let e = table.eps2m(&h.coeffs(), &coloring)?;
            println!("eps2M={e:.6} n_groups={}", groups.len());
        }
        Err(StateError::QubitCap { .. }) => {
            eprintln!("warning: {} qubits exceeds the oracle cap {qubit_cap}; eps2M not computed", h.n_qubits());
            println!("n_groups={}", groups.len());
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn cmd_oracle(hamiltonian: &Path, scheme: Scheme, out: &Path, qubit_cap: usize) -> Result<()> {
    let h = load_hamiltonian(hamiltonian)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let prep = prepare(h, scheme, qubit_cap, Some(out))?;
    let path = out.join(CovarianceTable::cache_file_name(&prep.hamiltonian, scheme));
    println!(
        "energy={:.10} terms={} entries={} cache={}",
        prep.ground_energy,
        prep.hamiltonian.n_terms(),
        prep.table.n_entries(),
        path.display()
    );
    Ok(())
}

fn workers() -> Result<usize> {
    match std::env::var("QMG_WORKERS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("QMG_WORKERS={v} is not a count"))?;
            if n == 0 {
                bail!(RunError::Config("QMG_WORKERS must be at least 1".into()));
            }
            Ok(n)
        }
        Err(_) => Ok(1),
    }
}

fn cmd_train(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let train_cfg = cfg.train_config(workers()?)?;
    let h = QubitHamiltonian::parse_str_with_threshold(
        &std::fs::read_to_string(&cfg.hamiltonian)
            .with_context(|| format!("reading hamiltonian {}", cfg.hamiltonian.display()))?,
        cfg.drop_threshold,
    )?;
    let cache = out.join("cache");
    std::fs::create_dir_all(&cache).with_context(|| format!("creating {}", out.display()))?;
    let prep = prepare(h, cfg.scheme, cfg.qubit_cap, Some(&cache))?;
    let env = ColoringEnv::new(&prep.complement, cfg.bound()?)?.with_symmetry_breaking(cfg.symmetry_breaking);
    let evaluator = RewardEvaluator::new(&prep.hamiltonian, &prep.complement, &prep.table, cfg.reward_params())?;
    let manifest = RunManifest::new(&cfg, &train_cfg, &prep, &env);
    let mut sink = RunDirSink::create(out, &manifest)?;
    eprintln!(
        "training: {} terms, K={}, {} samples, run dir {}",
        prep.hamiltonian.n_terms(),
        env.k(),
        train_cfg.total_samples,
        out.display()
    );
    let mut trainer = Trainer::new(train_cfg.clone(), env.k())?;
    let outcome = trainer.run(&env, &prep.hamiltonian.coeffs(), &evaluator, &mut sink);
    sink.finish()?;
    let outcome = outcome?;
    let report = write_report(out, train_cfg.top_k, 50)?;
    if cfg.lambda0 == 0.0 {
        match report.min_groups {
            Some(g) => println!("min groups={g}"),
            None => println!("min groups=none"),
        }
    }
    match report.best {
        Some((e, g)) => println!("best eps2M={e:.6} groups={g} valid_frac={:.4}", outcome.valid_frac()),
        None => println!("best eps2M=none groups=none valid_frac={:.4}", outcome.valid_frac()),
    }
    Ok(())
}

fn cmd_report(run_dir: &Path, bins: usize, top_k: Option<usize>) -> Result<()> {
    let k = match top_k {
        Some(k) => k,
        None => std::fs::read_to_string(run_dir.join("manifest.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
            .map_or(10, |m| m.train.top_k),
    };
    let s = write_report(run_dir, k, bins)?;
    if s.skipped_lines > 0 {
        eprintln!("warning: skipped {} corrupt line(s) in samples.jsonl", s.skipped_lines);
    }
    let best = s.best.map_or("none".to_string(), |(e, g)| format!("{e:.6} groups={g}"));
    println!(
        "samples={} valid={} skipped={} best eps2M={} mean_top{k}={}",
        s.n_samples,
        s.n_valid,
        s.skipped_lines,
        best,
        s.final_top_k_mean.map_or("none".to_string(), |m| format!("{m:.6}"))
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<RunError>() {
            return match e {
                _ if e.is_numeric() => EXIT_NUMERIC,
                RunError::Io { .. } => EXIT_FAILURE,
                _ => EXIT_CONFIG,
            };
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG };
        }
        if let Some(e) = cause.downcast_ref::<HamiltonianError>() {
            return match e {
                HamiltonianError::Io(_) => EXIT_FAILURE,
                _ => EXIT_CONFIG,
            };
        }
        if let Some(StateError::NoConvergence { .. }) = cause.downcast_ref::<StateError>() {
            return EXIT_NUMERIC;
        }
    }
    EXIT_FAILURE
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Graph { hamiltonian, scheme, complement, out } => {
            cmd_graph(&hamiltonian, scheme.into(), complement, out.as_deref())
        }
        Command::Baseline { hamiltonian, scheme, method, seed, repeats, out, qubit_cap } => {
            cmd_baseline(&hamiltonian, scheme.into(), method, seed, repeats, out.as_deref(), qubit_cap)
        }
        Command::Oracle { hamiltonian, scheme, out, qubit_cap } => cmd_oracle(&hamiltonian, scheme.into(), &out, qubit_cap),
        Command::Train { config, out, seed } => cmd_train(&config, &out, seed),
        Command::Report { run_dir, bins, top_k } => cmd_report(&run_dir, bins, top_k),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
