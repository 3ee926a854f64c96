//! Browser bindings for the demo page. Every entry point takes the text of a
//! `.ham` file and returns a JSON string.

use qmg_core::baselines::{rlf_coloring, sorted_insertion};
use qmg_core::env::{BoundMode, ColoringEnv};
use qmg_core::graph::greedy_color_bound;
use qmg_core::statevector::{ground_state_with, GroundStateOptions};
use qmg_core::optim::AdamConfig;
use qmg_core::trainer::{train, InvalidMode, IterationStats, SampleRecord, TrainConfig, TrainError, TrainSink};
use qmg_core::variance::{CovarianceTable, RewardEvaluator, RewardParams};
use qmg_core::{CommutGraph, QubitHamiltonian, Scheme};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// The browser has to diagonalize in a single thread; keep it small.
pub const DEMO_QUBIT_CAP: usize = 10;

pub const H2_FIXTURE: &str = include_str!("../../core/fixtures/h2_jw.ham");
pub const H4_FIXTURE: &str = include_str!("../../core/fixtures/h4_jw.ham");

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("unknown scheme {0:?} (expected fc or qwc)")]
    Scheme(String),
    #[error("unknown method {0:?} (expected si, rlf or greedy)")]
    Method(String),
    #[error(transparent)]
    Hamiltonian(#[from] qmg_core::hamiltonian::HamiltonianError),
    #[error(transparent)]
    State(#[from] qmg_core::statevector::StateError),
    #[error(transparent)]
    Variance(#[from] qmg_core::variance::VarianceError),
    #[error(transparent)]
    Env(#[from] qmg_core::env::EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn scheme(s: &str) -> Result<Scheme, DemoError> {
    match s {
        "fc" => Ok(Scheme::Fc),
        "qwc" => Ok(Scheme::Qwc),
        _ => Err(DemoError::Scheme(s.into())),
    }
}

fn table_for(h: &QubitHamiltonian, scheme: Scheme) -> Result<CovarianceTable, DemoError> {
    let opts = GroundStateOptions { qubit_cap: DEMO_QUBIT_CAP, ..Default::default() };
    let gs = ground_state_with(h, &opts)?;
    Ok(CovarianceTable::build(h, &gs.state, &CommutGraph::build(h, scheme, false))?)
}

/// Node count, degree statistics and the complement edge list.
pub fn graph_stats_value(ham: &str, scheme_name: &str) -> Result<Value, DemoError> {
    let h = QubitHamiltonian::parse_str(ham)?;
    let comp = CommutGraph::build(&h, scheme(scheme_name)?, true);
    Ok(json!({
        "n_qubits": h.n_qubits(),
        "n_terms": h.n_terms(),
        "labels": h.terms().iter().map(|t| t.word.to_label()).collect::<Vec<_>>(),
        "coeffs": h.coeffs(),
        "edges": comp.edges(),
        "mean_degree": comp.mean_degree(),
        "max_degree": comp.max_degree(),
    }))
}

/// A classical grouping and, when the state fits, its `ε²M`.
pub fn group_value(ham: &str, scheme_name: &str, method: &str, seed: u64) -> Result<Value, DemoError> {
    let h = QubitHamiltonian::parse_str(ham)?;
    let s = scheme(scheme_name)?;
    let comp = CommutGraph::build(&h, s, true);
    let coloring = match method {
        "si" => sorted_insertion(&h, s),
        "rlf" => rlf_coloring(&comp),
        "greedy" => greedy_color_bound(&comp, seed).1,
        _ => return Err(DemoError::Method(method.into())),
    };
    let eps2m = if h.n_qubits() <= DEMO_QUBIT_CAP { Some(table_for(&h, s)?.eps2m(&h.coeffs(), &coloring)?) } else { None };
    Ok(json!({ "colors": coloring.colors(), "n_groups": coloring.n_groups(), "eps2M": eps2m }))
}

#[derive(Default)]
struct Trace {
    points: Vec<Value>,
    best: Option<(f64, usize, Vec<u32>)>,
}

impl TrainSink for Trace {
    fn on_sample(&mut self, rec: &SampleRecord) -> Result<(), TrainError> {
        if let Some(e) = rec.eps2m {
            if self.best.as_ref().is_none_or(|b| (e, rec.n_groups) < (b.0, b.1)) {
                self.best = Some((e, rec.n_groups, rec.colors.clone()));
            }
        }
        Ok(())
    }

    fn on_iteration(&mut self, s: &IterationStats) -> Result<(), TrainError> {
        if let Some(t) = s.top_k {
            self.points.push(json!({ "iter": s.iter, "best": t.best, "mean": t.mean, "valid_frac": s.valid_frac }));
        }
        Ok(())
    }
}

/// Trains a small sampler (same settings as `configs/h4.toml`) and returns the
/// top-k trace and the best grouping.
pub fn sample_value(ham: &str, samples: usize, seed: u64, hidden_d: usize) -> Result<Value, DemoError> {
    let h = QubitHamiltonian::parse_str(ham)?;
    let table = table_for(&h, Scheme::Fc)?;
    let comp = CommutGraph::build(&h, Scheme::Fc, true);
    let cfg = TrainConfig {
        total_samples: samples.max(10),
        hidden_d: hidden_d.max(1),
        seed,
        adam: AdamConfig { lr: 1e-2, ..Default::default() },
        lr_log_z: Some(1.0),
        invalid_mode: InvalidMode::Skip,
        checkpoint_every: 0,
        ..Default::default()
    };
    let env = ColoringEnv::new(&comp, BoundMode::Greedy { seed, repeats: 1 })?;
    let eval = RewardEvaluator::new(&h, &comp, &table, RewardParams::default())?;
    let mut trace = Trace::default();
    let out = train(&cfg, &env, &h.coeffs(), &eval, &mut trace)?;
    Ok(json!({
        "k": env.k(),
        "trace": trace.points,
        "valid_frac": out.valid_frac(),
        "best": trace.best.map(|(e, g, colors)| json!({ "eps2M": e, "n_groups": g, "colors": colors })),
    }))
}

fn to_js(r: Result<Value, DemoError>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn graph_stats(ham: &str, scheme: &str) -> Result<String, JsError> {
    to_js(graph_stats_value(ham, scheme))
}

#[wasm_bindgen]
pub fn group(ham: &str, scheme: &str, method: &str, seed: u32) -> Result<String, JsError> {
    to_js(group_value(ham, scheme, method, seed as u64))
}

#[wasm_bindgen]
pub fn sample(ham: &str, samples: u32, seed: u32, hidden_d: u32) -> Result<String, JsError> {
    to_js(sample_value(ham, samples as usize, seed as u64, hidden_d as usize))
}

#[wasm_bindgen]
pub fn fixture(name: &str) -> Option<String> {
    match name {
        "h2" => Some(H2_FIXTURE.into()),
        "h4" => Some(H4_FIXTURE.into()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h4_stats_match_the_cli() {
        let v = graph_stats_value(H4_FIXTURE, "fc").unwrap();
        assert_eq!(v["n_terms"], 184);
        assert_eq!(v["max_degree"], 84);
        assert!(graph_stats_value(H4_FIXTURE, "xyz").is_err());
    }

    #[test]
    fn h2_groupings_are_scored() {
        for m in ["si", "rlf", "greedy"] {
            let v = group_value(H2_FIXTURE, "fc", m, 0).unwrap();
            assert!((v["eps2M"].as_f64().unwrap() - 0.13645).abs() < 1e-3, "{m}");
        }
        assert!(group_value(H2_FIXTURE, "fc", "dsatur", 0).is_err());
    }

    #[test]
    fn h2_sampler_reaches_the_golden_value() {
        let v = sample_value(H2_FIXTURE, 200, 1, 8).unwrap();
        assert!(!v["trace"].as_array().unwrap().is_empty());
        let best = &v["best"];
        assert!((best["eps2M"].as_f64().unwrap() - 0.13645).abs() < 1e-3);
        assert_eq!(best["colors"].as_array().unwrap().len(), 14);
    }

    #[test]
    fn oversized_states_are_refused() {
        let ham = "qubits: 12\n1.0 Z0\n0.5 X11\n";
        assert!(group_value(ham, "fc", "si", 0).unwrap()["eps2M"].is_null());
        assert!(sample_value(ham, 10, 0, 4).is_err());
    }
}
