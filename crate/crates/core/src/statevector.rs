//! Matrix-free statevector kernels: Pauli application, expectation values and
//! an extremal-eigenpair solver for the Hamiltonian ground state.
//!
//! Basis index bit `q` holds qubit `q`. A word `P = i^{n_Y} X^x Z^z` maps
//! `|b⟩` to `i^{n_Y} (-1)^{|z & b|} |b ⊕ x⟩`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hamiltonian::QubitHamiltonian;
use crate::pauli::{Phase, PauliWord};

pub const DEFAULT_QUBIT_CAP: usize = 16;
pub const DENSE_QUBIT_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("{n_qubits} qubits exceeds the cap of {cap}")]
    QubitCap { n_qubits: usize, cap: usize },
    #[error("dimension mismatch: state has {state} qubits, operator has {op}")]
    Dimension { state: usize, op: usize },
    #[error("eigensolver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        StateVector { n_qubits, amps }
    }

    /// Normalizes the given amplitudes.
    pub fn from_amplitudes(n_qubits: usize, mut amps: Vec<Complex64>) -> Self {
        assert_eq!(amps.len(), 1 << n_qubits, "amplitude count must be 2^n");
        let norm = norm(&amps);
        assert!(norm > 0.0, "zero vector");
        amps.iter_mut().for_each(|a| *a /= norm);
        StateVector { n_qubits, amps }
    }

    pub fn random(n_qubits: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1usize << n_qubits)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        Self::from_amplitudes(n_qubits, amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    /// `⟨ψ|P|ψ⟩` as a complex number.
    pub fn pauli_inner(&self, p: &PauliWord) -> Result<Complex64, StateError> {
        if p.n_qubits() != self.n_qubits {
            return Err(StateError::Dimension { state: self.n_qubits, op: p.n_qubits() });
        }
        let (x, z) = (p.x_mask() as usize, p.z_mask() as usize);
        let mut acc = Complex64::new(0.0, 0.0);
        for (b, amp) in self.amps.iter().enumerate() {
            let term = self.amps[b ^ x].conj() * amp;
            if (z & b).count_ones() % 2 == 1 {
                acc -= term;
            } else {
                acc += term;
            }
        }
        Ok(acc * Phase::from_exponent(p.y_count() as i64).as_complex())
    }

    /// `⟨ψ|P|ψ⟩` for a Hermitian word, clamped to `[-1, 1]`.
    pub fn pauli_expectation(&self, p: &PauliWord) -> Result<f64, StateError> {
        let v = self.pauli_inner(p)?;
        debug_assert!(v.im.abs() < 1e-10, "imaginary residue {}", v.im);
        Ok(v.re.clamp(-1.0, 1.0))
    }

    /// `⟨ψ|H|ψ⟩` including the identity offset.
    pub fn energy(&self, h: &QubitHamiltonian) -> Result<f64, StateError> {
        let mut e = h.identity_coeff();
        for t in h.terms() {
            e += t.coeff * self.pauli_inner(&t.word)?.re;
        }
        Ok(e)
    }

    /// `⟨H²⟩ − ⟨H⟩²`.
    pub fn variance(&self, h: &QubitHamiltonian) -> Result<f64, StateError> {
        let mut hpsi = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        apply_hamiltonian(h, &self.amps, &mut hpsi);
        let h2: f64 = hpsi.iter().map(|a| a.norm_sqr()).sum();
        let e = self.energy(h)?;
        Ok(h2 - e * e)
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `out += coeff · P |input⟩`
pub fn apply_pauli_add(p: &PauliWord, coeff: f64, input: &[Complex64], out: &mut [Complex64]) {
    let (x, z) = (p.x_mask() as usize, p.z_mask() as usize);
    let c = Phase::from_exponent(p.y_count() as i64).as_complex() * coeff;
    for (b, amp) in input.iter().enumerate() {
        let v = if (z & b).count_ones() % 2 == 1 { -c * amp } else { c * amp };
        out[b ^ x] += v;
    }
}

/// `out = H |input⟩`
pub fn apply_hamiltonian(h: &QubitHamiltonian, input: &[Complex64], out: &mut [Complex64]) {
    let c = h.identity_coeff();
    for (o, i) in out.iter_mut().zip(input) {
        *o = i * c;
    }
    for t in h.terms() {
        apply_pauli_add(&t.word, t.coeff, input, out);
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateOptions {
    pub qubit_cap: usize,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        GroundStateOptions {
            qubit_cap: DEFAULT_QUBIT_CAP,
            krylov_dim: 80,
            max_restarts: 60,
            tolerance: 1e-9,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub state: StateVector,
    pub residual: f64,
}

pub fn ground_state(h: &QubitHamiltonian) -> Result<GroundState, StateError> {
    ground_state_with(h, &GroundStateOptions::default())
}

/// Restarted Lanczos with full reorthogonalization; each restart begins from
/// the current Ritz vector. Converged when `‖Hψ − Eψ‖ ≤ tolerance`.
pub fn ground_state_with(
    h: &QubitHamiltonian,
    opts: &GroundStateOptions,
) -> Result<GroundState, StateError> {
    let n = h.n_qubits();
    if n > opts.qubit_cap {
        return Err(StateError::QubitCap { n_qubits: n, cap: opts.qubit_cap });
    }
    let dim = 1usize << n;
    let m = opts.krylov_dim.min(dim).max(1);
    let mut start = StateVector::random(n, opts.seed).amps;
    let mut hv = vec![Complex64::new(0.0, 0.0); dim];
    let mut iterations = 0;
    let mut last_residual = f64::INFINITY;

    for _ in 0..=opts.max_restarts {
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        let nv = norm(&start);
        basis.push(start.iter().map(|a| a / nv).collect());
        for j in 0..m {
            iterations += 1;
            apply_hamiltonian(h, &basis[j], &mut hv);
            let mut w = hv.clone();
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // Two passes of Gram-Schmidt against the whole basis.
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let b = norm(&w);
            if j + 1 == m || b < 1e-12 {
                break;
            }
            beta.push(b);
            basis.push(w.into_iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty spectrum");
        let mut ritz = vec![Complex64::new(0.0, 0.0); dim];
        for (i, v) in basis.iter().take(k).enumerate() {
            let s = eig.eigenvectors[(i, imin)];
            ritz.iter_mut().zip(v).for_each(|(r, x)| *r += x * s);
        }
        let rn = norm(&ritz);
        ritz.iter_mut().for_each(|r| *r /= rn);
        apply_hamiltonian(h, &ritz, &mut hv);
        let energy = dot(&ritz, &hv).re;
        let residual =
            hv.iter().zip(&ritz).map(|(a, b)| (a - b * energy).norm_sqr()).sum::<f64>().sqrt();
        last_residual = residual;
        if residual <= opts.tolerance {
            return Ok(GroundState {
                energy,
                state: StateVector { n_qubits: n, amps: ritz },
                residual,
            });
        }
        start = ritz;
    }
    Err(StateError::NoConvergence { residual: last_residual, iterations })
}

/// Dense Hermitian matrix of `H` (reference path, small registers only).
pub fn dense_hamiltonian(h: &QubitHamiltonian) -> Result<DMatrix<Complex64>, StateError> {
    let n = h.n_qubits();
    if n > DENSE_QUBIT_CAP {
        return Err(StateError::QubitCap { n_qubits: n, cap: DENSE_QUBIT_CAP });
    }
    let dim = 1usize << n;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut col = vec![Complex64::new(0.0, 0.0); dim];
    for j in 0..dim {
        let e = StateVector::basis(n, j).amps;
        apply_hamiltonian(h, &e, &mut col);
        for i in 0..dim {
            m[(i, j)] = col[i];
        }
    }
    Ok(m)
}

/// Ground state by dense diagonalization.
pub fn dense_ground_state(h: &QubitHamiltonian) -> Result<GroundState, StateError> {
    let m = dense_hamiltonian(h)?;
    let eig = SymmetricEigen::new(m);
    let (imin, &energy) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let amps: Vec<Complex64> = eig.eigenvectors.column(imin).iter().copied().collect();
    let state = StateVector::from_amplitudes(h.n_qubits(), amps);
    Ok(GroundState { energy, state, residual: 0.0 })
}
