//! Fragment variances on an exact ground state, the measurement metric
//! `ε²M = (Σ_α √Var(H_α))²` and the composite reward
//! `R = λ0 / ε²M + λ1 (N_P − N_G)`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CommutGraph, Coloring, GraphError, Scheme};
use crate::hamiltonian::QubitHamiltonian;
use crate::pauli::PauliWord;
use crate::statevector::{StateError, StateVector};

/// Fragment variances down to this value are treated as rounding noise and clamped to 0.
pub const VARIANCE_CLAMP: f64 = -1e-6;
pub const DEFAULT_REWARD_FLOOR: f64 = 1e-12;
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VarianceError {
    #[error("product of terms {0} and {1} has a non-real phase; they do not commute")]
    NonCommutingPair(usize, usize),
    #[error("no covariance entry for terms ({0}, {1}); grouping is not valid for this table")]
    MissingCovariance(usize, usize),
    #[error("fragment variance {0:.3e} is materially negative")]
    NegativeVariance(f64),
    #[error("covariance table was built for a different hamiltonian (hash {found}, expected {expected})")]
    HashMismatch { expected: String, found: String },
    #[error("covariance table scheme {found} does not match {expected}")]
    SchemeMismatch { expected: Scheme, found: Scheme },
    #[error("covariance table has {found} terms, hamiltonian has {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("unsupported cache version {0}")]
    Version(u32),
    #[error("expected the commutativity graph, got its complement")]
    ComplementGraph,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache format error: {0}")]
    Json(#[from] serde_json::Error),
}

/// `⟨P_k⟩` for every term and `Cov(P_k, P_l)` for every commuting pair.
#[derive(Debug, Clone)]
pub struct CovarianceTable {
    n: usize,
    scheme: Scheme,
    hamiltonian_hash: String,
    means: Vec<f64>,
    /// Row-major `n × n`; NaN where the pair does not commute.
    cov: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    hash: String,
    scheme: Scheme,
    n_terms: usize,
    means: Vec<f64>,
    entries: Vec<(usize, usize, f64)>,
}

impl CovarianceTable {
    /// Evaluates the table on `state`. `g` must be the commutativity graph
    /// (not its complement) of `h` for the desired scheme.
    pub fn build(
        h: &QubitHamiltonian,
        state: &StateVector,
        g: &CommutGraph,
    ) -> Result<Self, VarianceError> {
        if g.is_complement() {
            return Err(VarianceError::ComplementGraph);
        }
        let n = h.n_terms();
        let means = h
            .terms()
            .iter()
            .map(|t| state.pauli_expectation(&t.word))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cov = vec![f64::NAN; n * n];
        let mut product_cache: HashMap<PauliWord, f64> = HashMap::new();
        for k in 0..n {
            cov[k * n + k] = 1.0 - means[k] * means[k];
            for &l in g.neighbors(k) {
                let l = l as usize;
                if l < k {
                    continue;
                }
                let (phase, word) = h.term(k).word.multiply_unchecked(&h.term(l).word);
                let sign = phase.as_real().ok_or(VarianceError::NonCommutingPair(k, l))?;
                let expect = match product_cache.get(&word) {
                    Some(&v) => v,
                    None => {
                        let v = state.pauli_expectation(&word)?;
                        product_cache.insert(word, v);
                        v
                    }
                };
                let c = sign * expect - means[k] * means[l];
                cov[k * n + l] = c;
                cov[l * n + k] = c;
            }
        }
        Ok(CovarianceTable { n, scheme: g.scheme(), hamiltonian_hash: h.content_hash(), means, cov })
    }

    pub fn n_terms(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn hamiltonian_hash(&self) -> &str {
        &self.hamiltonian_hash
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.means[k]
    }

    /// `None` when the pair was not tabulated (does not commute).
    pub fn cov(&self, k: usize, l: usize) -> Option<f64> {
        let v = self.cov[k * self.n + l];
        (!v.is_nan()).then_some(v)
    }

    /// Number of stored entries, diagonal included, counting each unordered pair once.
    pub fn n_entries(&self) -> usize {
        (0..self.n).map(|k| (k..self.n).filter(|&l| self.cov(k, l).is_some()).count()).sum()
    }

    /// Rejects tables built for another Hamiltonian or scheme.
    pub fn check_matches(&self, h: &QubitHamiltonian, scheme: Scheme) -> Result<(), VarianceError> {
        let expected = h.content_hash();
        if expected != self.hamiltonian_hash {
            return Err(VarianceError::HashMismatch { expected, found: self.hamiltonian_hash.clone() });
        }
        if scheme != self.scheme {
            return Err(VarianceError::SchemeMismatch { expected: scheme, found: self.scheme });
        }
        if h.n_terms() != self.n {
            return Err(VarianceError::SizeMismatch { expected: h.n_terms(), found: self.n });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, VarianceError> {
        let mut entries = Vec::new();
        for k in 0..self.n {
            for l in k..self.n {
                if let Some(v) = self.cov(k, l) {
                    entries.push((k, l, v));
                }
            }
        }
        let file = CacheFile {
            version: CACHE_VERSION,
            hash: self.hamiltonian_hash.clone(),
            scheme: self.scheme,
            n_terms: self.n,
            means: self.means.clone(),
            entries,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, VarianceError> {
        let file: CacheFile = serde_json::from_str(text)?;
        if file.version != CACHE_VERSION {
            return Err(VarianceError::Version(file.version));
        }
        let n = file.n_terms;
        if file.means.len() != n {
            return Err(VarianceError::SizeMismatch { expected: n, found: file.means.len() });
        }
        let mut cov = vec![f64::NAN; n * n];
        for (k, l, v) in file.entries {
            if k >= n || l >= n {
                return Err(VarianceError::SizeMismatch { expected: n, found: k.max(l) + 1 });
            }
            cov[k * n + l] = v;
            cov[l * n + k] = v;
        }
        Ok(CovarianceTable { n, scheme: file.scheme, hamiltonian_hash: file.hash, means: file.means, cov })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VarianceError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Loads a cached table and checks it against `h` and `scheme`.
    pub fn load_for(
        path: impl AsRef<Path>,
        h: &QubitHamiltonian,
        scheme: Scheme,
    ) -> Result<Self, VarianceError> {
        let table = Self::from_json(&std::fs::read_to_string(path)?)?;
        table.check_matches(h, scheme)?;
        Ok(table)
    }

    /// Cache file name keyed by hamiltonian hash and scheme.
    pub fn cache_file_name(h: &QubitHamiltonian, scheme: Scheme) -> String {
        format!("cov_{}_{}.json", &h.content_hash()[..16], scheme)
    }

    /// `Var(Σ_{k∈group} ω_k P_k)` before clamping.
    pub fn group_variance(&self, coeffs: &[f64], group: &[usize]) -> Result<f64, VarianceError> {
        let mut var = 0.0;
        for &k in group {
            let row = &self.cov[k * self.n..(k + 1) * self.n];
            let mut acc = 0.0;
            for &l in group {
                let c = row[l];
                if c.is_nan() {
                    return Err(VarianceError::MissingCovariance(k, l));
                }
                acc += coeffs[l] * c;
            }
            var += coeffs[k] * acc;
        }
        Ok(var)
    }

    /// Raw (unclamped) variance of each fragment, in group order.
    pub fn fragment_variances(
        &self,
        coeffs: &[f64],
        coloring: &Coloring,
    ) -> Result<Vec<f64>, VarianceError> {
        coloring.groups()?.iter().map(|g| self.group_variance(coeffs, g)).collect()
    }

    /// `ε²M = (Σ_α √Var(H_α))²`, independent of ε.
    pub fn eps2m(&self, coeffs: &[f64], coloring: &Coloring) -> Result<f64, VarianceError> {
        let mut sum = 0.0;
        for v in self.fragment_variances(coeffs, coloring)? {
            if v < VARIANCE_CLAMP {
                return Err(VarianceError::NegativeVariance(v));
            }
            sum += v.max(0.0).sqrt();
        }
        Ok(sum * sum)
    }

    /// `Σ_α ⟨H_α⟩`, the grouped energy without the identity offset.
    pub fn grouped_energy(&self, coeffs: &[f64], coloring: &Coloring) -> Result<f64, VarianceError> {
        let groups = coloring.groups()?;
        Ok(groups.iter().map(|g| g.iter().map(|&k| coeffs[k] * self.means[k]).sum::<f64>()).sum())
    }
}

/// Convenience wrapper: `ε²M` of a coloring.
pub fn eps2m(c: &Coloring, table: &CovarianceTable, h: &QubitHamiltonian) -> Result<f64, VarianceError> {
    table.eps2m(&h.coeffs(), c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub lambda0: f64,
    pub lambda1: f64,
    /// Target accuracy in Hartree; only used to report `M = ε²M / ε²`.
    pub epsilon: f64,
    /// Reward given to invalid terminal states so `log R` stays finite.
    pub reward_floor: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { lambda0: 1e3, lambda1: 0.0, epsilon: 1e-3, reward_floor: DEFAULT_REWARD_FLOOR }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda0 >= 0.0 && self.lambda1 >= 0.0) {
            return Err("lambda0 and lambda1 must be nonnegative".into());
        }
        if self.lambda0 + self.lambda1 <= 0.0 {
            return Err("lambda0 + lambda1 must be positive".into());
        }
        if !(self.epsilon > 0.0) {
            return Err("epsilon must be positive".into());
        }
        if !(self.reward_floor > 0.0) {
            return Err("reward_floor must be positive".into());
        }
        Ok(())
    }

    /// Shot count `M` implied by a measured `ε²M`.
    pub fn measurements(&self, eps2m: f64) -> f64 {
        eps2m / (self.epsilon * self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardOutcome {
    pub reward: f64,
    pub r_m: f64,
    pub r_g: f64,
    pub eps2m: Option<f64>,
    pub n_groups: usize,
    pub valid: bool,
}

impl RewardOutcome {
    pub fn invalid(floor: f64, n_groups: usize) -> Self {
        RewardOutcome { reward: floor, r_m: 0.0, r_g: 0.0, eps2m: None, n_groups, valid: false }
    }
}

/// Smallest `ε²M` used in `1/ε²M`, so exact eigenstate groupings stay finite.
pub const EPS2M_MIN: f64 = 1e-12;

/// Composite reward of a terminal coloring. Invalid colorings get the floor
/// and zeroed components.
pub fn reward(
    c: &Coloring,
    valid: bool,
    table: &CovarianceTable,
    h: &QubitHamiltonian,
    params: &RewardParams,
) -> Result<RewardOutcome, VarianceError> {
    let n_groups = c.n_groups();
    if !valid || !c.is_terminal() {
        return Ok(RewardOutcome::invalid(params.reward_floor, n_groups));
    }
    let e = table.eps2m(&h.coeffs(), c)?;
    Ok(compose(e, n_groups, h.n_terms(), params))
}

pub(crate) fn compose(eps2m: f64, n_groups: usize, n_terms: usize, params: &RewardParams) -> RewardOutcome {
    let r_m = 1.0 / eps2m.max(EPS2M_MIN);
    let r_g = n_terms as f64 - n_groups as f64;
    let reward = (params.lambda0 * r_m + params.lambda1 * r_g).max(params.reward_floor);
    RewardOutcome { reward, r_m, r_g, eps2m: Some(eps2m), n_groups, valid: true }
}

/// Bundles everything needed to score terminal colorings of one Hamiltonian.
#[derive(Debug, Clone)]
pub struct RewardEvaluator<'a> {
    pub graph: &'a CommutGraph,
    pub table: &'a CovarianceTable,
    pub coeffs: Vec<f64>,
    pub params: RewardParams,
}

impl<'a> RewardEvaluator<'a> {
    pub fn new(
        h: &QubitHamiltonian,
        graph: &'a CommutGraph,
        table: &'a CovarianceTable,
        params: RewardParams,
    ) -> Result<Self, VarianceError> {
        table.check_matches(h, graph.scheme())?;
        Ok(RewardEvaluator { graph, table, coeffs: h.coeffs(), params })
    }

    pub fn evaluate(&self, c: &Coloring) -> Result<RewardOutcome, VarianceError> {
        let n_groups = c.n_groups();
        if !c.is_terminal() || !self.graph.is_valid(c)? {
            return Ok(RewardOutcome::invalid(self.params.reward_floor, n_groups));
        }
        let e = self.table.eps2m(&self.coeffs, c)?;
        Ok(compose(e, n_groups, self.coeffs.len(), &self.params))
    }
}
