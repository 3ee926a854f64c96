//! Qubit Hamiltonians `H = c·I + Σ_k ω_k P_k` and the `.ham` text format.
//!
//! ```text
//! # comment
//! qubits: 4
//! -0.0988
//! 0.1712 Z0
//! -0.0454 X0 X1 Y2 Y3
//! ```
//!
//! A line without tokens is the identity and is routed to the energy offset.
//! Repeated words are merged by summing their coefficients.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pauli::{PauliError, PauliWord};

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: coefficient `{text}` is not a real number")]
    NonReal { line: usize, text: String },
    #[error("hamiltonian has no terms")]
    Empty,
    #[error(transparent)]
    Pauli(#[from] PauliError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub word: PauliWord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QubitHamiltonian {
    n_qubits: usize,
    terms: Vec<Term>,
    identity_coeff: f64,
}

impl QubitHamiltonian {
    /// Builds a Hamiltonian, merging duplicates (first appearance keeps its
    /// position), routing identity words to the offset and dropping terms
    /// whose merged `|coeff| < drop_threshold`.
    pub fn from_terms<I>(
        n_qubits: usize,
        terms: I,
        drop_threshold: f64,
    ) -> Result<Self, HamiltonianError>
    where
        I: IntoIterator<Item = (f64, PauliWord)>,
    {
        let mut identity_coeff = 0.0;
        let mut merged: Vec<Term> = Vec::new();
        let mut index: HashMap<PauliWord, usize> = HashMap::new();
        for (coeff, word) in terms {
            if word.n_qubits() != n_qubits {
                return Err(PauliError::QubitMismatch(word.n_qubits(), n_qubits).into());
            }
            if word.is_identity() {
                identity_coeff += coeff;
                continue;
            }
            match index.get(&word) {
                Some(&i) => merged[i].coeff += coeff,
                None => {
                    index.insert(word.clone(), merged.len());
                    merged.push(Term { coeff, word });
                }
            }
        }
        merged.retain(|t| t.coeff.abs() >= drop_threshold);
        Ok(QubitHamiltonian { n_qubits, terms: merged, identity_coeff })
    }

    pub fn parse_str(text: &str) -> Result<Self, HamiltonianError> {
        Self::parse_str_with_threshold(text, 0.0)
    }

    pub fn parse_str_with_threshold(
        text: &str,
        drop_threshold: f64,
    ) -> Result<Self, HamiltonianError> {
        let mut declared: Option<usize> = None;
        let mut raw: Vec<(usize, f64, String)> = Vec::new();
        let mut max_index: Option<usize> = None;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("qubits:") {
                if declared.is_some() || !raw.is_empty() {
                    return Err(HamiltonianError::Parse {
                        line: lineno,
                        msg: "`qubits:` must be the first non-comment line".into(),
                    });
                }
                let n = rest.trim().parse().map_err(|_| HamiltonianError::Parse {
                    line: lineno,
                    msg: format!("bad qubit count `{}`", rest.trim()),
                })?;
                declared = Some(n);
                continue;
            }
            let (coeff_text, tokens) = match line.split_once(char::is_whitespace) {
                Some((c, t)) => (c, t.trim()),
                None => (line, ""),
            };
            let coeff = parse_coeff(coeff_text, lineno)?;
            for tok in tokens.split_whitespace() {
                let idx = tok.get(1..).and_then(|s| s.parse::<usize>().ok());
                if let Some(idx) = idx {
                    max_index = Some(max_index.map_or(idx, |m| m.max(idx)));
                }
            }
            raw.push((lineno, coeff, tokens.to_string()));
        }
        if raw.is_empty() {
            return Err(HamiltonianError::Empty);
        }
        let n_qubits = declared.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
        let mut words = Vec::with_capacity(raw.len());
        for (lineno, coeff, tokens) in raw {
            let word = PauliWord::parse(&tokens, n_qubits).map_err(|e| HamiltonianError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
            words.push((coeff, word));
        }
        let h = Self::from_terms(n_qubits, words, drop_threshold)?;
        if h.terms.is_empty() && h.identity_coeff == 0.0 {
            return Err(HamiltonianError::Empty);
        }
        Ok(h)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HamiltonianError> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: header, identity line (if nonzero), then terms in order,
    /// coefficients with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!("qubits: {}\n", self.n_qubits);
        if self.identity_coeff != 0.0 {
            let _ = writeln!(out, "{:.16e}", self.identity_coeff);
        }
        for t in &self.terms {
            let _ = writeln!(out, "{:.16e} {}", t.coeff, t.word.to_tokens());
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HamiltonianError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// `N_P`, the number of non-identity Pauli words.
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn term(&self, k: usize) -> &Term {
        &self.terms[k]
    }

    pub fn coeffs(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coeff).collect()
    }

    pub fn identity_coeff(&self) -> f64 {
        self.identity_coeff
    }
}

fn parse_coeff(text: &str, line: usize) -> Result<f64, HamiltonianError> {
    if text.contains(['j', 'J']) {
        return Err(HamiltonianError::NonReal { line, text: text.to_string() });
    }
    let v: f64 = text.parse().map_err(|_| HamiltonianError::Parse {
        line,
        msg: format!("bad coefficient `{text}`"),
    })?;
    if !v.is_finite() {
        return Err(HamiltonianError::Parse { line, msg: format!("non-finite coefficient `{text}`") });
    }
    Ok(v)
}
